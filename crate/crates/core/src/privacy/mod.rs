//! DP-SGD: per-sample clipping, Gaussian noise on the clipped sum, and an
//! RDP accountant turning `(q, sigma, steps, delta)` into epsilon.

mod accountant;

use alloc::string::String;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::neural::{sample_gradient, sgd_step, DenseNet, GradientSet, LossSpec, Targets};
use crate::rng::Rng;
use crate::{Error, Result};

pub use accountant::{default_orders, epsilon, rdp_of_step, AccountantState};

/// Slack allowed on the clipped norm before an input counts as unclipped.
pub const CLIP_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DpConfig {
    /// L2 threshold `C` for per-sample gradients.
    pub clip_norm: f64,
    /// Noise standard deviation as a multiple of `clip_norm`.
    pub noise_multiplier: f64,
    pub batch_size: usize,
    pub delta: f64,
    pub epochs: usize,
    /// Seeds the noise stream.
    pub seed: u64,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            clip_norm: 1.0,
            noise_multiplier: 1.0,
            batch_size: 256,
            delta: 1e-5,
            epochs: 50,
            seed: 0,
        }
    }
}

impl DpConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.clip_norm > 0.0) || !self.clip_norm.is_finite() {
            return Err(Error::Config("clip norm must be positive".into()));
        }
        if !(self.noise_multiplier >= 0.0) || !self.noise_multiplier.is_finite() {
            return Err(Error::Config("noise multiplier must be non-negative".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config("delta must lie in (0, 1)".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("DP batch size must be positive".into()));
        }
        Ok(())
    }

    /// Sampling rate `B / N` used for accounting.
    pub fn sampling_rate(&self, n: usize) -> f64 {
        (self.batch_size as f64 / n as f64).min(1.0)
    }

    /// Optimizer steps over `n` samples.
    pub fn steps(&self, n: usize) -> usize {
        self.epochs * n.div_ceil(self.batch_size)
    }
}

/// `g * min(1, C / ||g||)`.
pub fn clip_gradient(g: &GradientSet, clip_norm: f64) -> GradientSet {
    let mut out = g.clone();
    clip_in_place(&mut out, clip_norm);
    out
}

fn clip_in_place(g: &mut GradientSet, clip_norm: f64) {
    let norm = g.l2_norm();
    if norm > clip_norm {
        let factor = clip_norm / norm;
        for v in g.as_mut_slice() {
            *v *= factor;
        }
    }
}

fn add_noise(sum: &mut GradientSet, std: f64, rng: &mut Rng) {
    if std == 0.0 {
        return;
    }
    for v in sum.as_mut_slice() {
        let z: f64 = StandardNormal.sample(rng);
        *v += std * z;
    }
}

/// `(sum of clipped + N(0, sigma^2 C^2 I)) / B` with `B = clipped.len()`.
/// With `sigma = 0` no draws are made and the result is the plain mean.
pub fn noisy_aggregate(
    clipped: &[GradientSet],
    clip_norm: f64,
    sigma: f64,
    rng: &mut Rng,
) -> Result<GradientSet> {
    let first = clipped
        .first()
        .ok_or_else(|| Error::Contract("cannot aggregate an empty batch".into()))?;
    let mut sum = first.clone();
    sum.as_mut_slice().fill(0.0);
    for (i, g) in clipped.iter().enumerate() {
        if !g.is_congruent(first) {
            return Err(Error::Shape {
                expected: first.len(),
                got: g.len(),
            });
        }
        let norm = g.l2_norm();
        if norm > clip_norm + CLIP_SLACK {
            return Err(Error::Contract(alloc::format!(
                "gradient {i} has norm {norm}, above the clip norm {clip_norm}"
            )));
        }
        sum.add_assign(g);
    }
    add_noise(&mut sum, sigma * clip_norm, rng);
    sum.divide(clipped.len() as f64);
    Ok(sum)
}

/// One DP-SGD update on `batch` (row-major, at most `dp.batch_size` rows):
/// per-sample gradients, clipping, noisy aggregation, then an SGD step.
/// Advances `accountant` by one step and returns the batch's mean loss
/// before the update.
///
/// Per-sample gradients are clipped and summed as they are produced, in row
/// order, so the result equals the composition of [`clip_gradient`],
/// [`noisy_aggregate`] and [`sgd_step`].
#[allow(clippy::too_many_arguments)]
pub fn dp_sgd_step(
    net: &mut DenseNet,
    batch: &[f64],
    targets: Targets<'_>,
    spec: &LossSpec,
    dp: &DpConfig,
    lr: f64,
    accountant: &mut AccountantState,
    rng: &mut Rng,
) -> Result<f64> {
    let d = net.input_dim();
    if d == 0 || batch.len() % d != 0 || batch.is_empty() {
        return Err(Error::Shape {
            expected: d,
            got: batch.len(),
        });
    }
    let n = batch.len() / d;
    if n > dp.batch_size {
        return Err(Error::Contract(alloc::format!(
            "batch of {n} rows exceeds the DP batch size {}",
            dp.batch_size
        )));
    }
    let mut sum = GradientSet::zeros_like(net);
    let mut loss = 0.0;
    for i in 0..n {
        let (mut g, l) = sample_gradient(net, &batch[i * d..(i + 1) * d], targets.get(i, net.output_dim()), spec)?;
        clip_in_place(&mut g, dp.clip_norm);
        sum.add_assign(&g);
        loss += l;
    }
    add_noise(&mut sum, dp.noise_multiplier * dp.clip_norm, rng);
    sum.divide(n as f64);
    sgd_step(net, &sum, lr)?;
    accountant.step();
    Ok(loss / n as f64)
}

/// What a DP training run spent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrivacyReport {
    #[serde(rename = "C")]
    pub clip_norm: f64,
    pub sigma: f64,
    #[serde(rename = "B")]
    pub batch_size: usize,
    #[serde(rename = "N")]
    pub n_samples: usize,
    pub q: f64,
    pub steps: usize,
    pub delta: f64,
    pub epsilon: f64,
    pub minimizing_order: f64,
    pub accounting_method: String,
    pub notes: Vec<String>,
}

pub const ACCOUNTING_METHOD: &str =
    "RDP, Poisson-subsampled Gaussian (integer-order binomial bound, interpolated fractional orders)";

impl PrivacyReport {
    pub fn from_accountant(dp: &DpConfig, n_samples: usize, acc: &AccountantState) -> Result<Self> {
        let (eps, order) = epsilon(acc, dp.delta)?;
        Ok(Self {
            clip_norm: dp.clip_norm,
            sigma: dp.noise_multiplier,
            batch_size: dp.batch_size,
            n_samples,
            q: acc.sampling_rate(),
            steps: acc.steps(),
            delta: dp.delta,
            epsilon: eps,
            minimizing_order: order,
            accounting_method: ACCOUNTING_METHOD.into(),
            notes: alloc::vec![
                "accounting assumes Poisson sampling at rate q = B/N; training uses shuffled fixed-size batches".into()
            ],
        })
    }

    /// Epsilon a run of `dp` over `n_samples` rows would spend, without
    /// training.
    pub fn projected(dp: &DpConfig, n_samples: usize) -> Result<Self> {
        dp.validate()?;
        let mut acc = AccountantState::new(dp.sampling_rate(n_samples), dp.noise_multiplier)?;
        acc.advance(dp.steps(n_samples));
        Self::from_accountant(dp, n_samples, &acc)
    }
}
