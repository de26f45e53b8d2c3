use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::rng::{rng_from_seed, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoteConfig {
    pub k_neighbors: usize,
    /// Rows the class should have after oversampling.
    pub target_count: usize,
    pub seed: u64,
    /// Duplicate a lone row instead of failing when a class has one sample.
    #[serde(default)]
    pub allow_duplication: bool,
}

impl Default for SmoteConfig {
    fn default() -> Self {
        Self {
            k_neighbors: 5,
            target_count: 500,
            seed: 0,
            allow_duplication: false,
        }
    }
}

/// Where a synthetic row came from: `seed + lambda * (neighbor - seed)`.
/// Indices refer to rows of the minority input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoteSample {
    pub seed_row: usize,
    pub neighbor_row: usize,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SmoteOutput {
    /// Synthetic rows, row-major.
    pub rows: Vec<f64>,
    pub n_cols: usize,
    pub provenance: Vec<SmoteSample>,
}

impl SmoteOutput {
    pub fn n_rows(&self) -> usize {
        self.provenance.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.n_cols..(i + 1) * self.n_cols]
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Indices of the `k` nearest other rows of each row (Euclidean, ties by
/// index).
pub fn nearest_neighbors(rows: &[&[f64]], k: usize) -> Vec<Vec<usize>> {
    (0..rows.len())
        .map(|i| {
            let mut others: Vec<(f64, usize)> = (0..rows.len())
                .filter(|&j| j != i)
                .map(|j| (sq_dist(rows[i], rows[j]), j))
                .collect();
            others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            others.into_iter().take(k).map(|(_, j)| j).collect()
        })
        .collect()
}

/// Oversample one class to `cfg.target_count` rows by interpolating each
/// seed row (taken round-robin) toward a random one of its `k` nearest
/// neighbors, with `lambda ~ U[0, 1)`.
pub fn smote(minority: &[&[f64]], cfg: &SmoteConfig) -> Result<SmoteOutput> {
    smote_with(minority, cfg, |rng| rng.random::<f64>())
}

pub(crate) fn smote_with(
    minority: &[&[f64]],
    cfg: &SmoteConfig,
    mut draw_lambda: impl FnMut(&mut Rng) -> f64,
) -> Result<SmoteOutput> {
    let n = minority.len();
    if cfg.target_count < n {
        return Err(Error::Config(alloc::format!(
            "target count {} is below the current class size {n}",
            cfg.target_count
        )));
    }
    if cfg.k_neighbors == 0 {
        return Err(Error::Config("k_neighbors must be at least 1".into()));
    }
    let n_cols = minority.first().map_or(0, |r| r.len());
    let needed = cfg.target_count - n;
    let mut out = SmoteOutput {
        rows: Vec::with_capacity(needed * n_cols),
        n_cols,
        provenance: Vec::with_capacity(needed),
    };
    if needed == 0 {
        return Ok(out);
    }
    if n == 0 || (n == 1 && !cfg.allow_duplication) {
        return Err(Error::SmoteTooFewRows { rows: n });
    }
    if n == 1 {
        log::warn!("SMOTE on a single row: duplicating it {needed} times");
        for _ in 0..needed {
            out.rows.extend_from_slice(minority[0]);
            out.provenance.push(SmoteSample {
                seed_row: 0,
                neighbor_row: 0,
                lambda: 0.0,
            });
        }
        return Ok(out);
    }
    let k = cfg.k_neighbors.min(n - 1);
    let neighbors = nearest_neighbors(minority, k);
    let mut rng = rng_from_seed(cfg.seed);
    for s in 0..needed {
        let i = s % n;
        let nn = neighbors[i][rng.random_range(0..k)];
        let lambda = draw_lambda(&mut rng);
        let (a, b) = (minority[i], minority[nn]);
        out.rows
            .extend(a.iter().zip(b).map(|(x, y)| x + lambda * (y - x)));
        out.provenance.push(SmoteSample {
            seed_row: i,
            neighbor_row: nn,
            lambda,
        });
    }
    Ok(out)
}
