//! One-dimensional Gaussian mixtures fitted by expectation-maximization.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::math::{exp, ln, log_sum_exp, sqrt, LN_2PI};
use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

/// Standard deviations never drop below this.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// `p(x) = sum_k weight_k * N(x | mean_k, std_k^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    weights: Vec<f64>,
    means: Vec<f64>,
    stds: Vec<f64>,
}

impl GmmModel {
    pub fn new(weights: Vec<f64>, means: Vec<f64>, stds: Vec<f64>) -> Result<Self> {
        let k = weights.len();
        if k == 0 || means.len() != k || stds.len() != k {
            return Err(Error::Config(
                "mixture needs matching, non-empty weight/mean/std lists".into(),
            ));
        }
        if stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::Config("mixture stds must be positive".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::Config("mixture weights must be non-negative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("mixture weights sum to {total}")));
        }
        Ok(Self {
            weights,
            means,
            stds,
        })
    }

    pub fn n_components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn stds(&self) -> &[f64] {
        &self.stds
    }

    pub fn density(&self, x: f64) -> f64 {
        self.weights
            .iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((w, m), s)| w * exp(normal_log_pdf(x, *m, *s)))
            .sum()
    }

    fn component_log_terms(&self, x: f64, out: &mut [f64]) {
        for k in 0..self.weights.len() {
            out[k] = ln(self.weights[k]) + normal_log_pdf(x, self.means[k], self.stds[k]);
        }
    }

    /// Total log-likelihood of `values`.
    pub fn log_likelihood(&self, values: &[f64]) -> f64 {
        let mut terms = vec![0.0; self.n_components()];
        values
            .iter()
            .map(|&x| {
                self.component_log_terms(x, &mut terms);
                log_sum_exp(&terms)
            })
            .sum()
    }

    /// Draw a component by weight, then a normal value from it.
    pub fn sample(&self, rng: &mut Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut k = self.n_components() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                k = i;
                break;
            }
        }
        Normal::new(self.means[k], self.stds[k])
            .expect("validated std")
            .sample(rng)
    }
}

fn normal_log_pdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -0.5 * (LN_2PI + z * z) - ln(std)
}

/// Mixture density at `x`.
pub fn gmm_density(m: &GmmModel, x: f64) -> f64 {
    m.density(x)
}

/// Result of [`fit_gmm_traced`]: the model plus the log-likelihood after
/// every EM iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: GmmModel,
    pub log_likelihoods: Vec<f64>,
}

pub fn fit_gmm(values: &[f64], k: usize, max_iter: usize, tol: f64, seed: u64) -> Result<GmmModel> {
    fit_gmm_traced(values, k, max_iter, tol, seed).map(|f| f.model)
}

/// EM for a 1-D mixture.
///
/// Means start from a k-means++ pick over the distinct values, stds from
/// the pooled std, weights uniform. If there are fewer distinct values than
/// `k`, `k` is reduced with a warning.
pub fn fit_gmm_traced(
    values: &[f64],
    k: usize,
    max_iter: usize,
    tol: f64,
    seed: u64,
) -> Result<GmmFit> {
    if k == 0 {
        return Err(Error::Config("mixture needs at least one component".into()));
    }
    if values.is_empty() {
        return Err(Error::Fit("cannot fit a mixture to zero values".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite value in mixture data".into()));
    }
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let k = if distinct.len() < k {
        log::warn!(
            "only {} distinct values; reducing mixture components from {k}",
            distinct.len()
        );
        distinct.len()
    } else {
        k
    };

    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let pooled = sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n)
        .max(SIGMA_FLOOR);
    let mut model = GmmModel {
        weights: vec![1.0 / k as f64; k],
        means: kmeans_pp(&distinct, k, &mut rng_from_seed(seed)),
        stds: vec![pooled; k],
    };

    let mut resp = vec![0.0; values.len() * k];
    let mut terms = vec![0.0; k];
    let mut history = Vec::new();
    let mut prev = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        // E-step
        for (i, &x) in values.iter().enumerate() {
            model.component_log_terms(x, &mut terms);
            let lse = log_sum_exp(&terms);
            for c in 0..k {
                resp[i * k + c] = exp(terms[c] - lse);
            }
        }
        // M-step
        for c in 0..k {
            let nk: f64 = (0..values.len()).map(|i| resp[i * k + c]).sum();
            if nk <= f64::MIN_POSITIVE {
                model.weights[c] = 0.0;
                continue;
            }
            let mu = values
                .iter()
                .enumerate()
                .map(|(i, x)| resp[i * k + c] * x)
                .sum::<f64>()
                / nk;
            let var = values
                .iter()
                .enumerate()
                .map(|(i, x)| resp[i * k + c] * (x - mu) * (x - mu))
                .sum::<f64>()
                / nk;
            model.weights[c] = nk / n;
            model.means[c] = mu;
            model.stds[c] = sqrt(var).max(SIGMA_FLOOR);
        }
        let total: f64 = model.weights.iter().sum();
        for w in &mut model.weights {
            *w /= total;
        }
        let ll = model.log_likelihood(values);
        if !ll.is_finite() {
            return Err(Error::Numeric("mixture log-likelihood is not finite".into()));
        }
        history.push(ll);
        if (ll - prev).abs() < tol {
            break;
        }
        prev = ll;
    }
    Ok(GmmFit {
        model,
        log_likelihoods: history,
    })
}

fn kmeans_pp(distinct: &[f64], k: usize, rng: &mut Rng) -> Vec<f64> {
    let mut centers = vec![distinct[rng.random_range(0..distinct.len())]];
    while centers.len() < k {
        let d2: Vec<f64> = distinct
            .iter()
            .map(|x| {
                centers
                    .iter()
                    .map(|c| (x - c) * (x - c))
                    .fold(f64::INFINITY, f64::min)
            })
            .collect();
        let total: f64 = d2.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = d2.iter().rposition(|&d| d > 0.0).expect("k <= distinct values");
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 && u < d {
                pick = i;
                break;
            }
            u -= d;
        }
        centers.push(distinct[pick]);
    }
    centers
}
