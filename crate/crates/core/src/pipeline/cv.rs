use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{run_split, ExperimentConfig, RunResult};
use crate::dataset::Dataset;
use crate::error::StageExt;
use crate::evalx::MacroMetrics;
use crate::math::sqrt;
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    /// Fold index of every row of the dataset.
    pub assignments: Vec<usize>,
    pub folds: Vec<RunResult>,
    pub mean: MacroMetrics,
    /// Sample standard deviation across folds.
    pub std: MacroMetrics,
}

/// Stratified fold index for every row: each class is shuffled and dealt
/// round-robin over the folds.
pub fn kfold_assignments(ds: &Dataset, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Config(alloc::format!(
            "k-fold CV needs at least 2 folds, got {folds}"
        )));
    }
    let labels = ds.labels();
    let mut out = vec![0; labels.len()];
    let mut rng = rng_from_seed(seed);
    for (c, name) in ds.schema().label_classes().iter().enumerate() {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        if !members.is_empty() && members.len() < folds {
            return Err(Error::Fold {
                class: name.clone(),
                count: members.len(),
                folds,
            });
        }
        members.shuffle(&mut rng);
        for (j, &i) in members.iter().enumerate() {
            out[i] = j % folds;
        }
    }
    Ok(out)
}

pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, sqrt(var))
}

pub(crate) fn summarize(ms: &[&MacroMetrics]) -> (MacroMetrics, MacroMetrics) {
    let pick = |f: fn(&MacroMetrics) -> f64| mean_std(&ms.iter().map(|m| f(m)).collect::<Vec<_>>());
    let (a, sa) = pick(|m| m.accuracy);
    let (p, sp) = pick(|m| m.precision);
    let (r, sr) = pick(|m| m.recall);
    let (f, sf) = pick(|m| m.f1);
    (
        MacroMetrics {
            accuracy: a,
            precision: p,
            recall: r,
            f1: f,
        },
        MacroMetrics {
            accuracy: sa,
            precision: sp,
            recall: sr,
            f1: sf,
        },
    )
}

/// Stratified k-fold cross-validation. Preprocessing, augmentation and
/// pretraining are fitted inside each fold on its training part only.
pub fn kfold_cv(ds: &Dataset, cfg: &ExperimentConfig, folds: usize) -> Result<CvResult> {
    cfg.validate().stage("config")?;
    let assignments =
        kfold_assignments(ds, folds, derive_seed(cfg.seed, stream::FOLDS)).stage("folds")?;
    let mut results = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..ds.len()).partition(|&i| assignments[i] == f);
        let fold_cfg = ExperimentConfig {
            seed: derive_seed(derive_seed(cfg.seed, stream::FOLDS), f as u64 + 1),
            ..cfg.clone()
        };
        results.push(run_split(ds, &train, &test, &fold_cfg)?.result);
    }
    let macros: Vec<&MacroMetrics> = results.iter().map(|r| &r.metrics.macro_avg).collect();
    let (mean, std) = summarize(&macros);
    Ok(CvResult {
        assignments,
        folds: results,
        mean,
        std,
    })
}
