//! Rare-class augmentation: SMOTE interpolation or a per-class mixture
//! synthesizer, merged back into the training set.

mod gmm;
mod smote;
mod synthesizer;

use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, FeatureMatrix};
use crate::rng::{derive_seed, rng_from_seed};
use crate::{Error, Result};

pub use gmm::{fit_gmm, fit_gmm_traced, gmm_density, GmmFit, GmmModel, SIGMA_FLOOR};
pub use smote::{nearest_neighbors, smote, SmoteConfig, SmoteOutput, SmoteSample};
pub use synthesizer::{fit_class_synthesizer, sample_synthesizer, BlockModel, ClassSynthesizer};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentMethod {
    None,
    Smote,
    Gmm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub method: AugmentMethod,
    /// Rows each rare class is raised to.
    pub target_count: usize,
    /// Classes with fewer rows than this are rare.
    pub rare_class_threshold: usize,
    pub k_neighbors: usize,
    /// Mixture components per numeric feature for the GMM synthesizer.
    pub gmm_components: usize,
    pub allow_duplication: bool,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            method: AugmentMethod::Smote,
            target_count: 500,
            rare_class_threshold: 500,
            k_neighbors: 5,
            gmm_components: 5,
            allow_duplication: false,
            seed: 0,
        }
    }
}

/// Where a row of an augmented set came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowOrigin {
    /// Row `index` of the input matrix, unchanged.
    Original { index: usize },
    /// SMOTE row between input rows `seed_row` and `neighbor_row`.
    Smote {
        class: usize,
        seed_row: usize,
        neighbor_row: usize,
        lambda: f64,
    },
    /// Row drawn from the class synthesizer.
    Gmm { class: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Augmented {
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub origins: Vec<RowOrigin>,
}

impl Augmented {
    pub fn n_synthetic(&self) -> usize {
        self.origins
            .iter()
            .filter(|o| !matches!(o, RowOrigin::Original { .. }))
            .count()
    }
}

/// Raise every class with `0 < count < rare_class_threshold` to
/// `target_count` rows, then shuffle originals and synthetic rows together
/// (seeded). Classes are processed in ascending index order.
pub fn augment_dataset(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    cfg: &AugmentConfig,
) -> Result<Augmented> {
    if x.n_rows() == 0 {
        return Err(Error::Contract("cannot augment an empty training set".into()));
    }
    if labels.len() != x.n_rows() {
        return Err(Error::Shape {
            expected: x.n_rows(),
            got: labels.len(),
        });
    }
    let d = x.n_cols();
    let mut data = x.data().to_vec();
    let mut out_labels = labels.to_vec();
    let mut origins: Vec<RowOrigin> =
        (0..x.n_rows()).map(|index| RowOrigin::Original { index }).collect();

    if cfg.method != AugmentMethod::None {
        let counts = class_counts(labels, n_classes);
        for (class, &count) in counts.iter().enumerate() {
            if count == 0 || count >= cfg.rare_class_threshold || count >= cfg.target_count {
                continue;
            }
            let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
            let seed = derive_seed(cfg.seed, class as u64);
            let needed = cfg.target_count - count;
            match cfg.method {
                AugmentMethod::Smote => {
                    let rows: Vec<&[f64]> = members.iter().map(|&i| x.row(i)).collect();
                    let smote_cfg = SmoteConfig {
                        k_neighbors: cfg.k_neighbors,
                        target_count: cfg.target_count,
                        seed,
                        allow_duplication: cfg.allow_duplication,
                    };
                    let out = smote(&rows, &smote_cfg)?;
                    data.extend_from_slice(&out.rows);
                    origins.extend(out.provenance.iter().map(|p| RowOrigin::Smote {
                        class,
                        seed_row: members[p.seed_row],
                        neighbor_row: members[p.neighbor_row],
                        lambda: p.lambda,
                    }));
                }
                AugmentMethod::Gmm => {
                    let class_rows = x.select_rows(&members);
                    let synth = fit_class_synthesizer(&class_rows, class, cfg.gmm_components, seed)?;
                    data.extend(sample_synthesizer(&synth, needed, derive_seed(seed, u64::MAX)));
                    origins.extend((0..needed).map(|_| RowOrigin::Gmm { class }));
                }
                AugmentMethod::None => unreachable!(),
            }
            out_labels.extend(core::iter::repeat_n(class, needed));
        }
    }

    let n = out_labels.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_from_seed(cfg.seed));
    let mut shuffled = Vec::with_capacity(n * d);
    for &i in &order {
        shuffled.extend_from_slice(&data[i * d..(i + 1) * d]);
    }
    Ok(Augmented {
        features: x.with_rows(shuffled, n)?,
        labels: order.iter().map(|&i| out_labels[i]).collect(),
        origins: order.iter().map(|&i| origins[i]).collect(),
    })
}
