use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::math::{ln, powf};
use crate::{Error, Result};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before logs.
pub const PROB_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    /// Expects softmax outputs and class targets.
    CrossEntropy,
    /// `-(1 - p_t)^gamma * log(p_t)` on softmax outputs.
    Focal,
    /// Mean squared error over output dimensions.
    Mse,
    /// Binary cross-entropy averaged over output dimensions; expects
    /// sigmoid outputs.
    Bce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossSpec {
    pub kind: LossKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub focal_gamma: Option<f64>,
}

impl Default for LossSpec {
    fn default() -> Self {
        Self::new(LossKind::CrossEntropy)
    }
}

/// Target of a single sample.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    Class(usize),
    Values(&'a [f64]),
}

/// Targets of a batch; `Values` is row-major with the output dimension as
/// stride.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes(&'a [usize]),
    Values(&'a [f64]),
}

impl<'a> Targets<'a> {
    pub(crate) fn get(&self, i: usize, out_dim: usize) -> Target<'a> {
        match *self {
            Targets::Classes(c) => Target::Class(c[i]),
            Targets::Values(v) => Target::Values(&v[i * out_dim..(i + 1) * out_dim]),
        }
    }

    pub(crate) fn len(&self, out_dim: usize) -> usize {
        match *self {
            Targets::Classes(c) => c.len(),
            Targets::Values(v) => v.len() / out_dim.max(1),
        }
    }
}

fn clamp_p(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

impl LossSpec {
    pub fn new(kind: LossKind) -> Self {
        Self {
            kind,
            class_weights: None,
            focal_gamma: None,
        }
    }

    pub fn focal(gamma: f64) -> Self {
        Self {
            kind: LossKind::Focal,
            class_weights: None,
            focal_gamma: Some(gamma),
        }
    }

    pub fn with_class_weights(mut self, weights: Vec<f64>) -> Self {
        self.class_weights = Some(weights);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(w) = &self.class_weights {
            if w.iter().any(|&x| !(x > 0.0) || !x.is_finite()) {
                return Err(Error::Config("class weights must be positive and finite".into()));
            }
        }
        if let Some(g) = self.focal_gamma {
            if !(g >= 0.0) || !g.is_finite() {
                return Err(Error::Config("focal gamma must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn gamma(&self) -> f64 {
        self.focal_gamma.unwrap_or(2.0)
    }

    fn weight(&self, class: usize) -> f64 {
        self.class_weights
            .as_ref()
            .and_then(|w| w.get(class).copied())
            .unwrap_or(1.0)
    }

    fn class_target(&self, target: Target<'_>, out_dim: usize) -> Result<usize> {
        match target {
            Target::Class(c) if c < out_dim => Ok(c),
            Target::Class(c) => Err(Error::Contract(format!(
                "target class {c} out of range for {out_dim} outputs"
            ))),
            Target::Values(_) => Err(Error::Contract(
                "cross-entropy and focal losses need class targets".into(),
            )),
        }
    }

    fn dense_target(target: Target<'_>, out_dim: usize) -> Result<Vec<f64>> {
        match target {
            Target::Values(v) if v.len() == out_dim => Ok(v.to_vec()),
            Target::Values(v) => Err(Error::Shape {
                expected: out_dim,
                got: v.len(),
            }),
            Target::Class(c) if c < out_dim => {
                let mut v = vec![0.0; out_dim];
                v[c] = 1.0;
                Ok(v)
            }
            Target::Class(c) => Err(Error::Contract(format!("target class {c} out of range"))),
        }
    }

    /// Unaveraged loss of one sample.
    pub fn sample_loss(&self, out: &[f64], target: Target<'_>) -> Result<f64> {
        check_finite(out)?;
        let d = out.len();
        Ok(match self.kind {
            LossKind::CrossEntropy => {
                let t = self.class_target(target, d)?;
                self.weight(t) * -ln(clamp_p(out[t]))
            }
            LossKind::Focal => {
                let t = self.class_target(target, d)?;
                let p = clamp_p(out[t]);
                self.weight(t) * powf(1.0 - p, self.gamma()) * -ln(p)
            }
            LossKind::Mse => {
                let y = Self::dense_target(target, d)?;
                out.iter().zip(&y).map(|(o, t)| (t - o) * (t - o)).sum::<f64>() / d as f64
            }
            LossKind::Bce => {
                let y = Self::dense_target(target, d)?;
                bce(&y, out)
            }
        })
    }

    /// Gradient of [`LossSpec::sample_loss`] with respect to the network
    /// output (post-activation).
    pub fn output_grad(&self, out: &[f64], target: Target<'_>) -> Result<Vec<f64>> {
        check_finite(out)?;
        let d = out.len();
        let mut g = vec![0.0; d];
        match self.kind {
            LossKind::CrossEntropy => {
                let t = self.class_target(target, d)?;
                g[t] = -self.weight(t) / clamp_p(out[t]);
            }
            LossKind::Focal => {
                let t = self.class_target(target, d)?;
                let p = clamp_p(out[t]);
                let gamma = self.gamma();
                let mut dp = -powf(1.0 - p, gamma) / p;
                if gamma != 0.0 {
                    dp += gamma * powf(1.0 - p, gamma - 1.0) * ln(p);
                }
                g[t] = self.weight(t) * dp;
            }
            LossKind::Mse => {
                let y = Self::dense_target(target, d)?;
                for j in 0..d {
                    g[j] = 2.0 * (out[j] - y[j]) / d as f64;
                }
            }
            LossKind::Bce => {
                let y = Self::dense_target(target, d)?;
                for j in 0..d {
                    let q = clamp_p(out[j]);
                    g[j] = (q - y[j]) / (q * (1.0 - q)) / d as f64;
                }
            }
        }
        Ok(g)
    }
}

/// Mean over dimensions of the binary cross-entropy between `m` and the
/// clamped predictions `m_hat`.
pub(crate) fn bce(m: &[f64], m_hat: &[f64]) -> f64 {
    let d = m.len();
    let total: f64 = m
        .iter()
        .zip(m_hat)
        .map(|(&y, &q)| {
            let q = clamp_p(q);
            -(y * ln(q) + (1.0 - y) * ln(1.0 - q))
        })
        .sum();
    total / d as f64
}

pub(crate) fn check_finite(v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in loss input".into()));
    }
    Ok(())
}

/// Mean per-sample loss over a batch of outputs (`B x out_dim`, row-major).
pub fn loss(spec: &LossSpec, outputs: &[f64], out_dim: usize, targets: Targets<'_>) -> Result<f64> {
    if out_dim == 0 || outputs.len() % out_dim != 0 {
        return Err(Error::Shape {
            expected: out_dim,
            got: outputs.len(),
        });
    }
    let n = outputs.len() / out_dim;
    if targets.len(out_dim) != n {
        return Err(Error::Shape {
            expected: n,
            got: targets.len(out_dim),
        });
    }
    if n == 0 {
        return Err(Error::Contract("loss of an empty batch".into()));
    }
    let mut total = 0.0;
    for (i, out) in outputs.chunks_exact(out_dim).enumerate() {
        total += spec.sample_loss(out, targets.get(i, out_dim))?;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::net::softmax_into;
    use proptest::prelude::*;

    #[test]
    fn perfect_prediction_is_near_zero() {
        let l = loss(&LossSpec::default(), &[0.0, 1.0, 0.0], 3, Targets::Classes(&[1])).unwrap();
        assert!(l <= 1e-11, "{l}");
    }

    #[test]
    fn bce_half() {
        let spec = LossSpec::new(LossKind::Bce);
        let l = spec.sample_loss(&[0.5], Target::Values(&[1.0])).unwrap();
        assert!((l - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn nan_is_numeric_error() {
        let e = loss(&LossSpec::default(), &[f64::NAN, 1.0], 2, Targets::Classes(&[0]));
        assert!(matches!(e, Err(Error::Numeric(_))));
    }

    #[test]
    fn class_weights_rescale() {
        let spec = LossSpec::default().with_class_weights(vec![1.0, 3.0]);
        let base = LossSpec::default().sample_loss(&[0.4, 0.6], Target::Class(1)).unwrap();
        let w = spec.sample_loss(&[0.4, 0.6], Target::Class(1)).unwrap();
        assert!((w - 3.0 * base).abs() < 1e-15);
        assert!(LossSpec::default().with_class_weights(vec![0.0]).validate().is_err());
    }

    #[test]
    fn mse_value() {
        let spec = LossSpec::new(LossKind::Mse);
        let l = spec.sample_loss(&[1.0, 0.0], Target::Values(&[0.0, 0.0])).unwrap();
        assert_eq!(l, 0.5);
    }

    proptest! {
        #[test]
        fn focal_gamma_zero_is_cross_entropy(
            z in proptest::collection::vec(-8.0f64..8.0, 4),
            t in 0usize..4,
        ) {
            let mut p = vec![0.0; 4];
            softmax_into(&z, &mut p);
            let ce = LossSpec::default().sample_loss(&p, Target::Class(t)).unwrap();
            let fl = LossSpec::focal(0.0).sample_loss(&p, Target::Class(t)).unwrap();
            prop_assert!((ce - fl).abs() <= 1e-12);
            let gce = LossSpec::default().output_grad(&p, Target::Class(t)).unwrap();
            let gfl = LossSpec::focal(0.0).output_grad(&p, Target::Class(t)).unwrap();
            for (a, b) in gce.iter().zip(&gfl) {
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }

        #[test]
        fn losses_are_non_negative(
            z in proptest::collection::vec(-8.0f64..8.0, 3),
            t in 0usize..3,
        ) {
            let mut p = vec![0.0; 3];
            softmax_into(&z, &mut p);
            for spec in [LossSpec::default(), LossSpec::focal(2.0), LossSpec::new(LossKind::Mse), LossSpec::new(LossKind::Bce)] {
                prop_assert!(spec.sample_loss(&p, Target::Class(t)).unwrap() >= 0.0);
            }
        }
    }
}
