//! Schema-typed traffic records and their conversion to numeric features.

mod matrix;
mod preprocess;
mod split;
mod synth;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use matrix::{FeatureBlock, FeatureMatrix};
pub use preprocess::{apply_preprocessor, fit_preprocessor, ColumnTransform, Preprocessor};
pub use split::{stratified_split, stratified_split_indices};
pub use synth::{
    synth_class_counts, synth_ecu_like, synth_schema, SynthConfig, ECU_CLASS_NAMES, RARE_CLASS,
    RARE_INDICATOR_FEATURE,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnRole {
    Numeric,
    Categorical,
    Label,
    Ignore,
}

impl ColumnRole {
    pub fn is_feature(self) -> bool {
        matches!(self, ColumnRole::Numeric | ColumnRole::Categorical)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub role: ColumnRole,
}

impl Column {
    pub fn new(name: impl Into<String>, role: ColumnRole) -> Self {
        Self {
            name: name.into(),
            role,
        }
    }
}

/// Column roles plus the ordered class names of the label column.
///
/// Deserialization validates the invariants: exactly one label column, at
/// least one feature column, unique class names.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SchemaDef")]
pub struct Schema {
    columns: Vec<Column>,
    label_classes: Vec<String>,
}

#[derive(Deserialize)]
struct SchemaDef {
    columns: Vec<Column>,
    label_classes: Vec<String>,
}

impl TryFrom<SchemaDef> for Schema {
    type Error = Error;

    fn try_from(def: SchemaDef) -> Result<Self> {
        Schema::new(def.columns, def.label_classes)
    }
}

impl Schema {
    pub fn new(columns: Vec<Column>, label_classes: Vec<String>) -> Result<Self> {
        let labels = columns
            .iter()
            .filter(|c| c.role == ColumnRole::Label)
            .count();
        if labels != 1 {
            return Err(Error::Schema(format!(
                "expected exactly one label column, found {labels}"
            )));
        }
        if !columns.iter().any(|c| c.role.is_feature()) {
            return Err(Error::Schema("no feature columns".into()));
        }
        let mut names = BTreeSet::new();
        for c in &columns {
            if !names.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        if label_classes.is_empty() {
            return Err(Error::Schema("label_classes is empty".into()));
        }
        let mut seen = BTreeSet::new();
        for class in &label_classes {
            if !seen.insert(class.as_str()) {
                return Err(Error::Schema(format!("duplicate class name `{class}`")));
            }
        }
        Ok(Self {
            columns,
            label_classes,
        })
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn label_classes(&self) -> &[String] {
        &self.label_classes
    }

    pub fn n_classes(&self) -> usize {
        self.label_classes.len()
    }

    pub fn label_column(&self) -> &Column {
        self.columns
            .iter()
            .find(|c| c.role == ColumnRole::Label)
            .expect("validated schema has a label column")
    }

    /// Feature columns in declaration order; this is the layout of every
    /// [`Dataset`] row.
    pub fn feature_columns(&self) -> impl Iterator<Item = &Column> {
        self.columns.iter().filter(|c| c.role.is_feature())
    }

    pub fn n_features(&self) -> usize {
        self.feature_columns().count()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.label_classes.iter().position(|c| c == name)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Value {
    Num(f64),
    Cat(String),
}

/// Labeled records conforming to a [`Schema`].
///
/// Each row holds the feature cells in [`Schema::feature_columns`] order.
/// `row_ids` tag every row with its position in the originally loaded data
/// and survive splitting, which lets callers prove that test rows never
/// reach a fitting stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    schema: Schema,
    rows: Vec<Vec<Value>>,
    labels: Vec<usize>,
    row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(schema: Schema, rows: Vec<Vec<Value>>, labels: Vec<usize>) -> Result<Self> {
        let row_ids = (0..rows.len()).collect();
        Self::with_row_ids(schema, rows, labels, row_ids)
    }

    pub fn with_row_ids(
        schema: Schema,
        rows: Vec<Vec<Value>>,
        labels: Vec<usize>,
        row_ids: Vec<usize>,
    ) -> Result<Self> {
        if rows.len() != labels.len() || rows.len() != row_ids.len() {
            return Err(Error::Shape {
                expected: rows.len(),
                got: labels.len().min(row_ids.len()),
            });
        }
        let kinds: Vec<ColumnRole> = schema.feature_columns().map(|c| c.role).collect();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != kinds.len() {
                return Err(Error::Schema(format!(
                    "row {i} has {} feature cells, schema declares {}",
                    row.len(),
                    kinds.len()
                )));
            }
            for (cell, role) in row.iter().zip(&kinds) {
                let ok = matches!(
                    (cell, role),
                    (Value::Num(_), ColumnRole::Numeric) | (Value::Cat(_), ColumnRole::Categorical)
                );
                if !ok {
                    return Err(Error::Schema(format!("row {i} does not match column roles")));
                }
            }
        }
        let k = schema.n_classes();
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= k) {
            return Err(Error::Label {
                row: i,
                value: l.to_string(),
            });
        }
        Ok(Self {
            schema,
            rows,
            labels,
            row_ids,
        })
    }

    /// Build a dataset from textual records (e.g. CSV) whose columns are
    /// named by `header`. Ignored columns are skipped, label strings are
    /// mapped through the schema's class list.
    pub fn from_text_records<I, R, S>(schema: Schema, header: &[S], records: I) -> Result<Self>
    where
        I: IntoIterator<Item = R>,
        R: AsRef<[S]>,
        S: AsRef<str>,
    {
        let position = |name: &str| header.iter().position(|h| h.as_ref().trim() == name);
        let mut feature_pos = Vec::new();
        for col in schema.feature_columns() {
            let p = position(&col.name)
                .ok_or_else(|| Error::Schema(format!("missing column `{}`", col.name)))?;
            feature_pos.push((p, col));
        }
        let label_name = &schema.label_column().name;
        let label_pos = position(label_name)
            .ok_or_else(|| Error::Schema(format!("missing label column `{label_name}`")))?;

        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (i, record) in records.into_iter().enumerate() {
            let record = record.as_ref();
            if record.len() != header.len() {
                return Err(Error::Parse {
                    row: i,
                    column: String::new(),
                    message: format!("expected {} fields, found {}", header.len(), record.len()),
                });
            }
            let mut row = Vec::with_capacity(feature_pos.len());
            for &(p, col) in &feature_pos {
                let raw = record[p].as_ref().trim();
                let cell = match col.role {
                    ColumnRole::Numeric => Value::Num(raw.parse::<f64>().map_err(|e| {
                        Error::Parse {
                            row: i,
                            column: col.name.clone(),
                            message: format!("`{raw}`: {e}"),
                        }
                    })?),
                    _ => Value::Cat(raw.to_string()),
                };
                if let Value::Num(v) = cell {
                    if !v.is_finite() {
                        return Err(Error::Parse {
                            row: i,
                            column: col.name.clone(),
                            message: format!("`{raw}` is not finite"),
                        });
                    }
                }
                row.push(cell);
            }
            let raw_label = record[label_pos].as_ref().trim();
            let label = schema.class_index(raw_label).ok_or_else(|| Error::Label {
                row: i,
                value: raw_label.to_string(),
            })?;
            rows.push(row);
            labels.push(label);
        }
        Self::new(schema, rows, labels)
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &[Vec<Value>] {
        &self.rows
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_classes(&self) -> usize {
        self.schema.n_classes()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        class_counts(&self.labels, self.n_classes())
    }

    /// Rows at `indices`, in that order, keeping their ids.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            schema: self.schema.clone(),
            rows: indices.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            row_ids: indices.iter().map(|&i| self.row_ids[i]).collect(),
        }
    }

    /// Render one row back to text cells in full schema column order
    /// (ignored columns are empty).
    pub fn text_record(&self, i: usize) -> Vec<String> {
        let mut features = self.rows[i].iter();
        self.schema
            .columns()
            .iter()
            .map(|c| match c.role {
                ColumnRole::Label => self.schema.label_classes()[self.labels[i]].clone(),
                ColumnRole::Ignore => String::new(),
                _ => match features.next().expect("row conforms to schema") {
                    Value::Num(v) => format!("{v}"),
                    Value::Cat(s) => s.clone(),
                },
            })
            .collect()
    }
}

pub(crate) fn class_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut counts = alloc::vec![0; k];
    for &l in labels {
        counts[l] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    pub(crate) fn tiny_schema() -> Schema {
        Schema::new(
            vec![
                Column::new("frame_len", ColumnRole::Numeric),
                Column::new("dst_mac", ColumnRole::Categorical),
                Column::new("label", ColumnRole::Label),
            ],
            vec!["benign".into(), "deauth".into()],
        )
        .unwrap()
    }

    #[test]
    fn parses_three_rows() {
        let header = ["frame_len", "dst_mac", "label"];
        let records = [
            ["60", "ff:ff:ff:ff:ff:ff", "benign"],
            ["1514", "7a:ad:8f:23:25:a7", "deauth"],
            ["98", "ff:ff:ff:ff:ff:ff", "benign"],
        ];
        let ds = Dataset::from_text_records(tiny_schema(), &header, &records).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.schema().n_features(), 2);
        assert_eq!(ds.labels(), &[0, 1, 0]);
        assert_eq!(ds.rows()[1][0], Value::Num(1514.0));
    }

    #[test]
    fn unknown_label_is_label_error() {
        let header = ["frame_len", "dst_mac", "label"];
        let records = [["60", "aa", "Tello API Exploit"]];
        let err = Dataset::from_text_records(tiny_schema(), &header, &records).unwrap_err();
        assert!(matches!(err, Error::Label { row: 0, .. }), "{err}");
    }

    #[test]
    fn missing_column_is_schema_error() {
        let header = ["frame_len", "label"];
        let records = [["60", "benign"]];
        let err = Dataset::from_text_records(tiny_schema(), &header, &records).unwrap_err();
        assert!(matches!(err, Error::Schema(_)));
    }

    #[test]
    fn bad_numeric_reports_row() {
        let header = ["frame_len", "dst_mac", "label"];
        let records = [["60", "a", "benign"], ["sixty", "a", "benign"]];
        let err = Dataset::from_text_records(tiny_schema(), &header, &records).unwrap_err();
        assert!(matches!(err, Error::Parse { row: 1, .. }), "{err}");
    }

    #[test]
    fn ignored_columns_are_skipped() {
        let schema = Schema::new(
            vec![
                Column::new("ts", ColumnRole::Ignore),
                Column::new("frame_len", ColumnRole::Numeric),
                Column::new("label", ColumnRole::Label),
            ],
            vec!["a".into()],
        )
        .unwrap();
        let ds = Dataset::from_text_records(schema, &["ts", "frame_len", "label"], &[["x", "5", "a"]])
            .unwrap();
        assert_eq!(ds.rows()[0], vec![Value::Num(5.0)]);
        assert_eq!(ds.text_record(0), vec!["", "5", "a"]);
    }

    #[test]
    fn schema_invariants() {
        let two_labels = Schema::new(
            vec![
                Column::new("a", ColumnRole::Label),
                Column::new("b", ColumnRole::Label),
                Column::new("c", ColumnRole::Numeric),
            ],
            vec!["x".into()],
        );
        assert!(two_labels.is_err());
        let dup_class = Schema::new(
            vec![
                Column::new("a", ColumnRole::Label),
                Column::new("c", ColumnRole::Numeric),
            ],
            vec!["x".into(), "x".into()],
        );
        assert!(dup_class.is_err());
        let no_features = Schema::new(
            vec![
                Column::new("a", ColumnRole::Label),
                Column::new("c", ColumnRole::Ignore),
            ],
            vec!["x".into()],
        );
        assert!(no_features.is_err());
    }
}
