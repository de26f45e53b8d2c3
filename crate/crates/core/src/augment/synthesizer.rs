use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::gmm::{fit_gmm, GmmModel};
use crate::dataset::{FeatureBlock, FeatureMatrix};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

const EM_MAX_ITER: usize = 200;
const EM_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BlockModel {
    Numeric {
        column: usize,
        gmm: GmmModel,
    },
    Categorical {
        start: usize,
        frequencies: Vec<f64>,
    },
}

/// Generative model of one class in encoded feature space: a Gaussian
/// mixture per numeric column and an empirical frequency table per one-hot
/// block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSynthesizer {
    pub class: usize,
    pub n_cols: usize,
    pub blocks: Vec<BlockModel>,
}

/// Fit a synthesizer to the rows of one class (`rows` carries the layout).
pub fn fit_class_synthesizer(
    rows: &FeatureMatrix,
    class: usize,
    k_per_feature: usize,
    seed: u64,
) -> Result<ClassSynthesizer> {
    if rows.n_rows() == 0 {
        return Err(Error::Fit("synthesizer needs at least one row".into()));
    }
    let mut blocks = Vec::with_capacity(rows.layout().len());
    for (b, block) in rows.layout().iter().enumerate() {
        match *block {
            FeatureBlock::Numeric { column } => {
                let values: Vec<f64> = rows.rows().map(|r| r[column]).collect();
                let gmm = fit_gmm(
                    &values,
                    k_per_feature,
                    EM_MAX_ITER,
                    EM_TOL,
                    derive_seed(seed, b as u64),
                )?;
                blocks.push(BlockModel::Numeric { column, gmm });
            }
            FeatureBlock::OneHot { start, width } => {
                let mut counts = vec![0.0; width];
                for r in rows.rows() {
                    let block = &r[start..start + width];
                    let (arg, max) = block
                        .iter()
                        .enumerate()
                        .fold((0, 0.0), |acc, (i, &v)| if v > acc.1 { (i, v) } else { acc });
                    if max > 0.0 {
                        counts[arg] += 1.0;
                    }
                }
                let total: f64 = counts.iter().sum();
                let frequencies = if total > 0.0 {
                    counts.iter().map(|c| c / total).collect()
                } else {
                    vec![1.0 / width as f64; width]
                };
                blocks.push(BlockModel::Categorical { start, frequencies });
            }
        }
    }
    Ok(ClassSynthesizer {
        class,
        n_cols: rows.n_cols(),
        blocks,
    })
}

/// Draw `n` rows (row-major). Numeric values are clipped to `[0, 1]`;
/// every one-hot block receives exactly one 1.
pub fn sample_synthesizer(s: &ClassSynthesizer, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng_from_seed(seed);
    let mut out = vec![0.0; n * s.n_cols];
    for row in out.chunks_exact_mut(s.n_cols.max(1)).take(n) {
        for block in &s.blocks {
            match block {
                BlockModel::Numeric { column, gmm } => {
                    row[*column] = gmm.sample(&mut rng).clamp(0.0, 1.0);
                }
                BlockModel::Categorical { start, frequencies } => {
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut pick = frequencies.len() - 1;
                    for (i, f) in frequencies.iter().enumerate() {
                        acc += f;
                        if u < acc {
                            pick = i;
                            break;
                        }
                    }
                    row[start + pick] = 1.0;
                }
            }
        }
    }
    out
}
