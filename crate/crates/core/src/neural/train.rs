use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    /// Seeds the per-epoch shuffling.
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            batch_size: 256,
            lr: 0.05,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.lr >= 0.0) || !self.lr.is_finite() {
            return Err(Error::Config("learning rate must be non-negative".into()));
        }
        Ok(())
    }

    /// Optimizer steps taken over `n` samples.
    pub fn steps(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size)
    }
}

/// A fresh permutation of `0..n` cut into consecutive batches; the last
/// batch may be short.
pub fn shuffled_batches(n: usize, batch_size: usize, rng: &mut Rng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
}

/// Drive `epochs` passes of shuffled minibatches over `n` samples.
///
/// `step` receives the batch indices and returns the batch's mean loss
/// (measured before the update). The result holds one mean loss per epoch.
pub fn train_epochs<F>(n: usize, cfg: &TrainConfig, mut step: F) -> Result<Vec<f64>>
where
    F: FnMut(&[usize]) -> Result<f64>,
{
    cfg.validate()?;
    if n == 0 {
        return Err(Error::Contract("cannot train on zero samples".into()));
    }
    let mut rng = rng_from_seed(cfg.seed);
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let mut total = 0.0;
        for batch in shuffled_batches(n, cfg.batch_size, &mut rng) {
            let l = step(&batch)?;
            total += l * batch.len() as f64;
        }
        let mean = total / n as f64;
        if !mean.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        history.push(mean);
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batches_cover_everything_once() {
        let mut rng = rng_from_seed(0);
        let b = shuffled_batches(10, 4, &mut rng);
        assert_eq!(b.iter().map(Vec::len).collect::<Vec<_>>(), [4, 4, 2]);
        let mut all: Vec<usize> = b.concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn divergence_reports_epoch() {
        let cfg = TrainConfig {
            epochs: 3,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let mut calls = 0;
        let err = train_epochs(4, &cfg, |_| {
            calls += 1;
            Ok(if calls > 2 { f64::NAN } else { 1.0 })
        })
        .unwrap_err();
        assert!(matches!(err, Error::Diverged { epoch: 2 }));
    }
}
