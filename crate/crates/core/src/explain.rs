//! Permutation-sampling Shapley attributions of a classifier's pre-softmax
//! logits, and mean-|phi| global feature rankings.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_split_indices, FeatureMatrix};
use crate::neural::DenseNet;
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

/// Largest feature count for which every permutation is enumerated.
pub const MAX_EXHAUSTIVE_FEATURES: usize = 9;

/// Anything that maps a feature vector to per-class logits.
pub trait Scorer {
    fn n_inputs(&self) -> usize;
    fn scores(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Scorer for DenseNet {
    fn n_inputs(&self) -> usize {
        self.input_dim()
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "class")]
pub enum ShapTarget {
    /// Always explain this class's logit.
    Class(usize),
    /// Explain the logit of each row's predicted class.
    Predicted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapConfig {
    pub n_permutations: usize,
    /// Enumerate all `d!` orderings instead of sampling.
    pub exhaustive: bool,
    /// Reference rows that absent features are drawn from.
    pub background: Vec<Vec<f64>>,
    pub target: ShapTarget,
    pub seed: u64,
}

impl ShapConfig {
    pub fn new(background: Vec<Vec<f64>>, n_permutations: usize, seed: u64) -> Self {
        Self {
            n_permutations,
            exhaustive: false,
            background,
            target: ShapTarget::Predicted,
            seed,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if self.background.is_empty() {
            return Err(Error::Config("SHAP background is empty".into()));
        }
        if let Some(b) = self.background.iter().find(|b| b.len() != d) {
            return Err(Error::Shape {
                expected: d,
                got: b.len(),
            });
        }
        if self.exhaustive {
            if d > MAX_EXHAUSTIVE_FEATURES {
                return Err(Error::Config(alloc::format!(
                    "exhaustive permutations need at most {MAX_EXHAUSTIVE_FEATURES} features, got {d}"
                )));
            }
        } else if self.n_permutations == 0 {
            return Err(Error::Config("n_permutations must be at least 1".into()));
        }
        Ok(())
    }
}

fn next_permutation(p: &mut [usize]) -> bool {
    let n = p.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && p[i - 1] >= p[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while p[j] <= p[i - 1] {
        j -= 1;
    }
    p.swap(i - 1, j);
    p[i..].reverse();
    true
}

fn all_permutations(d: usize) -> Vec<Vec<usize>> {
    let mut p: Vec<usize> = (0..d).collect();
    let mut out = vec![p.clone()];
    while next_permutation(&mut p) {
        out.push(p.clone());
    }
    out
}

fn finite(v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numeric("model output is not finite".into()))
    }
}

/// Shapley values of `f` at `x`, averaged over permutations and every
/// background row. `seed` drives the permutation draws.
///
/// Each (permutation, background) pair walks from the background row to `x`
/// one feature at a time, so the attributions of a row always sum to
/// `f(x) - mean_b f(b)`.
pub fn shapley_row<F>(f: F, x: &[f64], cfg: &ShapConfig, seed: u64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    let d = x.len();
    cfg.validate(d)?;
    let perms = if cfg.exhaustive {
        all_permutations(d)
    } else {
        let mut rng = rng_from_seed(seed);
        (0..cfg.n_permutations)
            .map(|_| {
                let mut p: Vec<usize> = (0..d).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect()
    };
    let mut phi = vec![0.0; d];
    let mut z = vec![0.0; d];
    for perm in &perms {
        for b in &cfg.background {
            z.copy_from_slice(b);
            let mut prev = finite(f(&z)?)?;
            for &j in perm {
                z[j] = x[j];
                let cur = finite(f(&z)?)?;
                phi[j] += cur - prev;
                prev = cur;
            }
        }
    }
    let n = (perms.len() * cfg.background.len()) as f64;
    for v in &mut phi {
        *v /= n;
    }
    Ok(phi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attribution {
    /// Row-major `n_rows x n_features`.
    pub phi: Vec<f64>,
    pub n_rows: usize,
    pub feature_names: Vec<String>,
    /// Class whose logit was explained, per row.
    pub targets: Vec<usize>,
    /// Mean target logit over the background, per row.
    pub base_values: Vec<f64>,
    /// Target logit at the explained row.
    pub outputs: Vec<f64>,
}

impl Attribution {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_features();
        &self.phi[i * d..(i + 1) * d]
    }

    /// Rows whose explained class is `class`.
    pub fn for_class(&self, class: usize) -> Attribution {
        let keep: Vec<usize> = (0..self.n_rows).filter(|&i| self.targets[i] == class).collect();
        Attribution {
            phi: keep.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            n_rows: keep.len(),
            feature_names: self.feature_names.clone(),
            targets: keep.iter().map(|&i| self.targets[i]).collect(),
            base_values: keep.iter().map(|&i| self.base_values[i]).collect(),
            outputs: keep.iter().map(|&i| self.outputs[i]).collect(),
        }
    }

    /// CSV with one column per feature and one line per row.
    pub fn to_csv(&self) -> String {
        let mut s = self.feature_names.join(",");
        s.push('\n');
        for i in 0..self.n_rows {
            let line: Vec<String> = self.row(i).iter().map(|v| alloc::format!("{v:.17e}")).collect();
            s.push_str(&line.join(","));
            s.push('\n');
        }
        s
    }
}

/// Attribution of one row; `seed` is the row's own stream.
pub fn attribute_row<M: Scorer + ?Sized>(
    model: &M,
    x: &[f64],
    cfg: &ShapConfig,
    seed: u64,
) -> Result<(usize, f64, f64, Vec<f64>)> {
    if x.len() != model.n_inputs() {
        return Err(Error::Shape {
            expected: model.n_inputs(),
            got: x.len(),
        });
    }
    let out = model.scores(x)?;
    let target = match cfg.target {
        ShapTarget::Class(c) if c < out.len() => c,
        ShapTarget::Class(c) => {
            return Err(Error::Config(alloc::format!("SHAP target class {c} out of range")));
        }
        ShapTarget::Predicted => crate::neural::argmax(&out),
    };
    let mut base = 0.0;
    for b in &cfg.background {
        base += finite(model.scores(b)?[target])?;
    }
    base /= cfg.background.len().max(1) as f64;
    let phi = shapley_row(|z| Ok(model.scores(z)?[target]), x, cfg, seed)?;
    Ok((target, base, out[target], phi))
}

/// Per-row Shapley values of the target logit. Row `i` uses seed
/// `derive_seed(cfg.seed, i)`.
pub fn attribute<M: Scorer + ?Sized>(model: &M, x: &FeatureMatrix, cfg: &ShapConfig) -> Result<Attribution> {
    let rows: Result<Vec<_>> = (0..x.n_rows())
        .map(|i| attribute_row(model, x.row(i), cfg, derive_seed(cfg.seed, i as u64)))
        .collect();
    collect_attribution(rows?, x.feature_names().to_vec())
}

/// Assemble per-row results (in row order) into an [`Attribution`].
pub fn collect_attribution(
    rows: Vec<(usize, f64, f64, Vec<f64>)>,
    feature_names: Vec<String>,
) -> Result<Attribution> {
    let mut attr = Attribution {
        phi: Vec::with_capacity(rows.len() * feature_names.len()),
        n_rows: rows.len(),
        feature_names,
        targets: Vec::with_capacity(rows.len()),
        base_values: Vec::with_capacity(rows.len()),
        outputs: Vec::with_capacity(rows.len()),
    };
    for (t, b, o, phi) in rows {
        if phi.len() != attr.feature_names.len() {
            return Err(Error::Shape {
                expected: attr.feature_names.len(),
                got: phi.len(),
            });
        }
        attr.targets.push(t);
        attr.base_values.push(b);
        attr.outputs.push(o);
        attr.phi.extend(phi);
    }
    Ok(attr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    pub mean_abs_phi: f64,
    pub rank: usize,
}

/// Mean `|phi|` per feature, largest first; ties keep feature order.
pub fn global_importance(attr: &Attribution) -> Result<Vec<FeatureImportance>> {
    if attr.n_rows == 0 {
        return Err(Error::Contract("no attributions to rank".into()));
    }
    let d = attr.n_features();
    let mut means = vec![0.0; d];
    for i in 0..attr.n_rows {
        for (m, v) in means.iter_mut().zip(attr.row(i)) {
            *m += v.abs();
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    for m in &mut means {
        *m /= attr.n_rows as f64;
    }
    order.sort_by(|&a, &b| means[b].total_cmp(&means[a]));
    Ok(order
        .iter()
        .enumerate()
        .map(|(r, &j)| FeatureImportance {
            feature: attr.feature_names[j].clone(),
            mean_abs_phi: means[j],
            rank: r + 1,
        })
        .collect())
}

/// Up to `n` rows drawn per class in proportion to class size.
pub fn sample_background(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    n: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if x.n_rows() == 0 || n == 0 {
        return Err(Error::Config("background needs at least one row".into()));
    }
    if n >= x.n_rows() {
        return Ok(x.rows().map(<[f64]>::to_vec).collect());
    }
    let f = n as f64 / x.n_rows() as f64;
    let (_, picked) = stratified_split_indices(labels, n_classes, f, seed)?;
    Ok(picked.iter().map(|&i| x.row(i).to_vec()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{init_net, Activation};
    use proptest::prelude::*;

    /// Coalition-formula Shapley values with `v(S)` the background mean of
    /// `f` on `x` restricted to `S`.
    fn brute_force(f: &dyn Fn(&[f64]) -> f64, x: &[f64], bg: &[Vec<f64>]) -> Vec<f64> {
        let d = x.len();
        let fact = |n: usize| (1..=n).product::<usize>() as f64;
        let v = |mask: usize| {
            bg.iter()
                .map(|b| {
                    let z: Vec<f64> = (0..d).map(|j| if mask >> j & 1 == 1 { x[j] } else { b[j] }).collect();
                    f(&z)
                })
                .sum::<f64>()
                / bg.len() as f64
        };
        (0..d)
            .map(|j| {
                let mut s = 0.0;
                for mask in 0..(1usize << d) {
                    if mask >> j & 1 == 1 {
                        continue;
                    }
                    let k = mask.count_ones() as usize;
                    let w = fact(k) * fact(d - k - 1) / fact(d);
                    s += w * (v(mask | 1 << j) - v(mask));
                }
                s
            })
            .collect()
    }

    fn exhaustive(bg: Vec<Vec<f64>>) -> ShapConfig {
        ShapConfig {
            exhaustive: true,
            ..ShapConfig::new(bg, 1, 0)
        }
    }

    #[test]
    fn permutation_enumeration() {
        assert_eq!(all_permutations(3).len(), 6);
        assert_eq!(all_permutations(4).len(), 24);
        assert_eq!(all_permutations(1), vec![vec![0]]);
    }

    #[test]
    fn constant_model() {
        let cfg = ShapConfig::new(vec![vec![0.3, 0.1, 0.9]], 20, 1);
        let phi = shapley_row(|_| Ok(4.2), &[1.0, 2.0, 3.0], &cfg, 5).unwrap();
        assert_eq!(phi, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn linear_model_closed_form() {
        let w = [0.5, -1.5, 2.0, 0.25];
        let x = [1.0, 0.2, -0.7, 3.0];
        let b = vec![0.1, 0.4, 0.3, -1.0];
        let f = |z: &[f64]| z.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>();
        let brute = brute_force(&f, &x, &[b.clone()]);
        for n_perm in [1, 3, 50] {
            let phi = shapley_row(|z| Ok(f(z)), &x, &ShapConfig::new(vec![b.clone()], n_perm, 0), 9).unwrap();
            for j in 0..4 {
                let want = w[j] * (x[j] - b[j]);
                assert!((phi[j] - want).abs() < 1e-12);
                assert!((brute[j] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn exhaustive_matches_brute_force() {
        let f = |z: &[f64]| libm::sin(z[0] * z[1]) + z[2] * z[2] * z[0] - libm::exp(0.3 * z[1]);
        let x = [0.9, -0.4, 1.3];
        let bg = vec![vec![0.0, 0.1, -0.2], vec![0.5, 0.5, 0.5], vec![-1.0, 2.0, 0.3]];
        let phi = shapley_row(|z| Ok(f(z)), &x, &exhaustive(bg.clone()), 0).unwrap();
        let want = brute_force(&f, &x, &bg);
        for j in 0..3 {
            assert!((phi[j] - want[j]).abs() <= 1e-10);
        }
        let total: f64 = phi.iter().sum();
        let base = bg.iter().map(|b| f(b)).sum::<f64>() / 3.0;
        assert!((total - (f(&x) - base)).abs() <= 1e-10);
    }

    #[test]
    fn symmetry_and_dummy() {
        let f = |z: &[f64]| (z[0] + z[1]) * (z[0] + z[1]) + z[2];
        let x = [0.7, 0.7, 0.2, 5.0];
        let bg = vec![vec![0.1, 0.1, 0.0, 1.0], vec![0.3, 0.3, 0.9, -2.0]];
        let phi = shapley_row(|z| Ok(f(z)), &x, &exhaustive(bg), 0).unwrap();
        assert!((phi[0] - phi[1]).abs() <= 1e-12);
        assert_eq!(phi[3], 0.0);
    }

    #[test]
    fn non_finite_output() {
        let cfg = ShapConfig::new(vec![vec![0.0]], 2, 0);
        assert!(matches!(shapley_row(|_| Ok(f64::NAN), &[1.0], &cfg, 0), Err(Error::Numeric(_))));
    }

    #[test]
    fn exhaustive_limit() {
        let cfg = exhaustive(vec![vec![0.0; 12]]);
        assert!(shapley_row(|_| Ok(0.0), &[0.0; 12], &cfg, 0).is_err());
    }

    fn toy_model() -> (DenseNet, FeatureMatrix, ShapConfig) {
        let net = init_net(&[4, 6, 3], &[Activation::Relu, Activation::Softmax], 2).unwrap();
        let rows: Vec<Vec<f64>> = (0..5).map(|i| (0..4).map(|j| ((i * 4 + j) as f64 * 0.37) % 1.0).collect()).collect();
        let x = FeatureMatrix::from_rows_unnamed(&rows, 4).unwrap();
        let cfg = ShapConfig::new(rows[..3].to_vec(), 30, 11);
        (net, x, cfg)
    }

    #[test]
    fn attribute_is_deterministic_and_efficient() {
        let (net, x, cfg) = toy_model();
        let a = attribute(&net, &x, &cfg).unwrap();
        assert_eq!(a, attribute(&net, &x, &cfg).unwrap());
        for i in 0..a.n_rows {
            let s: f64 = a.row(i).iter().sum();
            assert!((s - (a.outputs[i] - a.base_values[i])).abs() < 1e-10);
            let logits = net.logits(x.row(i)).unwrap();
            assert_eq!(a.targets[i], crate::neural::argmax(&logits));
        }
        let (t, _, _, phi) = attribute_row(&net, x.row(2), &cfg, derive_seed(11, 2)).unwrap();
        assert_eq!(phi, a.row(2));
        assert_eq!(t, a.targets[2]);
    }

    #[test]
    fn fixed_class_target() {
        let (net, x, mut cfg) = toy_model();
        cfg.target = ShapTarget::Class(1);
        let a = attribute(&net, &x, &cfg).unwrap();
        assert!(a.targets.iter().all(|&t| t == 1));
        assert_eq!(a.for_class(1).n_rows, 5);
        assert_eq!(a.for_class(0).n_rows, 0);
    }

    #[test]
    fn importance_hand_case() {
        let attr = Attribution {
            phi: vec![1.0, -3.0, -2.0, 0.5],
            n_rows: 2,
            feature_names: vec!["a".into(), "b".into()],
            targets: vec![0, 0],
            base_values: vec![0.0, 0.0],
            outputs: vec![0.0, 0.0],
        };
        let g = global_importance(&attr).unwrap();
        assert_eq!(g[0].feature, "b");
        assert_eq!(g[0].mean_abs_phi, 1.75);
        assert_eq!(g[1].mean_abs_phi, 1.5);
        assert_eq!((g[0].rank, g[1].rank), (1, 2));
    }

    #[test]
    fn importance_ties_keep_index_order() {
        let attr = Attribution {
            phi: vec![0.0; 6],
            n_rows: 2,
            feature_names: vec!["a".into(), "b".into(), "c".into()],
            targets: vec![0, 0],
            base_values: vec![0.0, 0.0],
            outputs: vec![0.0, 0.0],
        };
        let names: Vec<String> = global_importance(&attr).unwrap().into_iter().map(|f| f.feature).collect();
        assert_eq!(names, ["a", "b", "c"]);
    }

    #[test]
    fn background_sampling() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let labels: Vec<usize> = (0..100).map(|i| usize::from(i >= 80)).collect();
        let x = FeatureMatrix::from_rows_unnamed(&rows, 1).unwrap();
        let bg = sample_background(&x, &labels, 2, 10, 3).unwrap();
        assert_eq!(bg.len(), 10);
        assert_eq!(bg.iter().filter(|r| r[0] >= 80.0).count(), 2);
        assert_eq!(sample_background(&x, &labels, 2, 500, 3).unwrap().len(), 100);
    }

    proptest! {
        #[test]
        fn sampled_efficiency_holds(seed in any::<u64>(), n_perm in 1usize..6) {
            let (net, x, mut cfg) = toy_model();
            cfg.n_permutations = n_perm;
            cfg.seed = seed;
            let a = attribute(&net, &x, &cfg).unwrap();
            for i in 0..a.n_rows {
                let s: f64 = a.row(i).iter().sum();
                prop_assert!((s - (a.outputs[i] - a.base_values[i])).abs() < 1e-10);
            }
        }
    }
}
