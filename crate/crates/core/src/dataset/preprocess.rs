use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ColumnRole, Dataset, FeatureBlock, FeatureMatrix, Value};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ColumnTransform {
    /// Min-max scaling into `[0, 1]`.
    Numeric { name: String, min: f64, max: f64 },
    /// One-hot over the categories observed at fit time, sorted.
    Categorical {
        name: String,
        categories: Vec<String>,
    },
}

impl ColumnTransform {
    fn name(&self) -> &str {
        match self {
            ColumnTransform::Numeric { name, .. } | ColumnTransform::Categorical { name, .. } => {
                name
            }
        }
    }

    fn width(&self) -> usize {
        match self {
            ColumnTransform::Numeric { .. } => 1,
            ColumnTransform::Categorical { categories, .. } => categories.len(),
        }
    }
}

/// Fitted encoding from schema rows to a numeric [`FeatureMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessor {
    columns: Vec<ColumnTransform>,
    output_dim: usize,
}

/// Fit min/max statistics and one-hot layouts on `train` only.
pub fn fit_preprocessor(train: &Dataset) -> Result<Preprocessor> {
    if train.is_empty() {
        return Err(Error::Fit("cannot fit a preprocessor on an empty dataset".into()));
    }
    let mut columns = Vec::new();
    for (j, col) in train.schema().feature_columns().enumerate() {
        let transform = match col.role {
            ColumnRole::Numeric => {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                for row in train.rows() {
                    if let Value::Num(v) = row[j] {
                        min = min.min(v);
                        max = max.max(v);
                    }
                }
                ColumnTransform::Numeric {
                    name: col.name.clone(),
                    min,
                    max,
                }
            }
            _ => {
                let categories: BTreeSet<&str> = train
                    .rows()
                    .iter()
                    .filter_map(|row| match &row[j] {
                        Value::Cat(s) => Some(s.as_str()),
                        Value::Num(_) => None,
                    })
                    .collect();
                ColumnTransform::Categorical {
                    name: col.name.clone(),
                    categories: categories.into_iter().map(String::from).collect(),
                }
            }
        };
        columns.push(transform);
    }
    let output_dim = columns.iter().map(ColumnTransform::width).sum();
    Ok(Preprocessor {
        columns,
        output_dim,
    })
}

impl Preprocessor {
    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn columns(&self) -> &[ColumnTransform] {
        &self.columns
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names = Vec::with_capacity(self.output_dim);
        for c in &self.columns {
            match c {
                ColumnTransform::Numeric { name, .. } => names.push(name.clone()),
                ColumnTransform::Categorical { name, categories } => {
                    names.extend(categories.iter().map(|v| format!("{name}={v}")))
                }
            }
        }
        names
    }

    pub fn layout(&self) -> Vec<FeatureBlock> {
        let mut start = 0;
        let mut layout = Vec::with_capacity(self.columns.len());
        for c in &self.columns {
            layout.push(match c {
                ColumnTransform::Numeric { .. } => FeatureBlock::Numeric { column: start },
                ColumnTransform::Categorical { categories, .. } => FeatureBlock::OneHot {
                    start,
                    width: categories.len(),
                },
            });
            start += c.width();
        }
        layout
    }

    /// Encode `ds`. Numeric values are min-max scaled and clamped to
    /// `[0, 1]` (constant columns map to 0); unseen categories produce an
    /// all-zero block.
    pub fn apply(&self, ds: &Dataset) -> Result<FeatureMatrix> {
        let cols: Vec<_> = ds.schema().feature_columns().collect();
        let matches = cols.len() == self.columns.len()
            && cols.iter().zip(&self.columns).all(|(c, t)| {
                c.name == t.name()
                    && matches!(
                        (c.role, t),
                        (ColumnRole::Numeric, ColumnTransform::Numeric { .. })
                            | (ColumnRole::Categorical, ColumnTransform::Categorical { .. })
                    )
            });
        if !matches {
            return Err(Error::Schema(
                "dataset schema does not match the fitted preprocessor".into(),
            ));
        }
        let mut data = Vec::with_capacity(ds.len() * self.output_dim);
        for row in ds.rows() {
            for (cell, t) in row.iter().zip(&self.columns) {
                match (cell, t) {
                    (Value::Num(v), ColumnTransform::Numeric { min, max, .. }) => {
                        data.push(scale(*v, *min, *max));
                    }
                    (Value::Cat(s), ColumnTransform::Categorical { categories, .. }) => {
                        let hit = categories.binary_search_by(|c| c.as_str().cmp(s)).ok();
                        data.extend((0..categories.len()).map(|k| {
                            if Some(k) == hit {
                                1.0
                            } else {
                                0.0
                            }
                        }));
                    }
                    _ => unreachable!("roles checked above"),
                }
            }
        }
        FeatureMatrix::new(data, ds.len(), self.feature_names(), self.layout())
    }
}

/// Free-function form of [`Preprocessor::apply`].
pub fn apply_preprocessor(p: &Preprocessor, ds: &Dataset) -> Result<FeatureMatrix> {
    p.apply(ds)
}

fn scale(v: f64, min: f64, max: f64) -> f64 {
    if max > min {
        ((v - min) / (max - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}
