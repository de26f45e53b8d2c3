use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How a source column maps onto matrix columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureBlock {
    Numeric { column: usize },
    OneHot { start: usize, width: usize },
}

impl FeatureBlock {
    pub fn columns(self) -> core::ops::Range<usize> {
        match self {
            FeatureBlock::Numeric { column } => column..column + 1,
            FeatureBlock::OneHot { start, width } => start..start + width,
        }
    }
}

/// Dense row-major `N x d` matrix of encoded features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    n_rows: usize,
    n_cols: usize,
    feature_names: Vec<String>,
    layout: Vec<FeatureBlock>,
}

impl FeatureMatrix {
    pub fn new(
        data: Vec<f64>,
        n_rows: usize,
        feature_names: Vec<String>,
        layout: Vec<FeatureBlock>,
    ) -> Result<Self> {
        let n_cols = feature_names.len();
        if data.len() != n_rows * n_cols {
            return Err(Error::Shape {
                expected: n_rows * n_cols,
                got: data.len(),
            });
        }
        let covered: usize = layout.iter().map(|b| b.columns().len()).sum();
        if covered != n_cols {
            return Err(Error::Shape {
                expected: n_cols,
                got: covered,
            });
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
            feature_names,
            layout,
        })
    }

    /// A matrix with generic names (`f0`, `f1`, ...) and an all-numeric
    /// layout. Useful for latent representations.
    pub fn from_rows_unnamed(rows: &[Vec<f64>], n_cols: usize) -> Result<Self> {
        let names = (0..n_cols).map(|j| alloc::format!("f{j}")).collect();
        let layout = (0..n_cols).map(|column| FeatureBlock::Numeric { column }).collect();
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for r in rows {
            if r.len() != n_cols {
                return Err(Error::Shape {
                    expected: n_cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Self::new(data, rows.len(), names, layout)
    }

    /// Same names and layout as `self`, different rows.
    pub fn with_rows(&self, data: Vec<f64>, n_rows: usize) -> Result<Self> {
        Self::new(data, n_rows, self.feature_names.clone(), self.layout.clone())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn layout(&self) -> &[FeatureBlock] {
        &self.layout
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty slice with n_cols == 0 would panic
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self {
            data,
            n_rows: indices.len(),
            n_cols: self.n_cols,
            feature_names: self.feature_names.clone(),
            layout: self.layout.clone(),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.feature_names.iter().position(|n| n == name)
    }
}
