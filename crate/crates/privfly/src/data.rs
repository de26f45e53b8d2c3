//! CSV and JSON ingestion and export.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::Path;

use privfly_core::dataset::{synth_ecu_like, Dataset, FeatureBlock, FeatureMatrix, Schema};
use privfly_core::pipeline::{DataSource, ExperimentConfig};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::{Error, Result};

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    serde_json::from_str(&text).map_err(Error::json(path))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(Error::json(path))?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
    }
    fs::write(path, text).map_err(Error::io(path))
}

pub fn load_schema(path: &Path) -> Result<Schema> {
    read_json(path)
}

/// Read a headered CSV under `schema`. Columns are matched by name, so
/// extra columns and any column order are accepted.
pub fn load_csv(path: &Path, schema: &Schema) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(Error::csv(path))?;
    let header: Vec<String> = reader
        .headers()
        .map_err(Error::csv(path))?
        .iter()
        .map(str::to_string)
        .collect();
    let records = reader
        .records()
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(Error::csv(path))?;
    let records: Vec<Vec<&str>> = records.iter().map(|r| r.iter().collect()).collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    Ok(Dataset::from_text_records(schema.clone(), &header, records)?)
}

/// Write `ds` as CSV in full schema column order.
pub fn save_dataset_csv(path: &Path, ds: &Dataset) -> Result<()> {
    let mut w = csv_writer(path)?;
    let names: Vec<&str> = ds.schema().columns().iter().map(|c| c.name.as_str()).collect();
    w.write_record(&names).map_err(Error::csv(path))?;
    for i in 0..ds.len() {
        w.write_record(ds.text_record(i)).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Resolve the configured data source.
pub fn resolve_dataset(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synth(s) => Ok(synth_ecu_like(s).map_err(|e| e.in_stage("data"))?),
        DataSource::Csv { path, schema } => load_csv(Path::new(path), schema),
    }
}

fn csv_writer(path: &Path) -> Result<csv::Writer<BufWriter<File>>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir).map_err(Error::io(dir))?;
        }
    }
    let file = File::create(path).map_err(Error::io(path))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Feature names as header, one line per row.
pub fn write_matrix_csv(path: &Path, x: &FeatureMatrix) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(x.feature_names()).map_err(Error::csv(path))?;
    for row in x.rows() {
        w.write_record(row.iter().map(|&v| fmt_f64(v))).map_err(Error::csv(path))?;
    }
    w.flush().map_err(Error::io(path))
}

/// Group `name=value` columns that share a source name into one-hot blocks.
pub fn layout_from_names(names: &[String]) -> Vec<FeatureBlock> {
    let source = |n: &str| n.split_once('=').map(|(s, _)| s.to_string());
    let mut layout = Vec::new();
    let mut j = 0;
    while j < names.len() {
        match source(&names[j]) {
            Some(src) => {
                let width = names[j..]
                    .iter()
                    .take_while(|n| source(n).as_deref() == Some(src.as_str()))
                    .count();
                layout.push(FeatureBlock::OneHot { start: j, width });
                j += width;
            }
            None => {
                layout.push(FeatureBlock::Numeric { column: j });
                j += 1;
            }
        }
    }
    layout
}

pub fn read_matrix_csv(path: &Path) -> Result<FeatureMatrix> {
    let mut reader = csv::Reader::from_path(path).map_err(Error::csv(path))?;
    let names: Vec<String> = reader
        .headers()
        .map_err(Error::csv(path))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut data = Vec::new();
    let mut n_rows = 0;
    for (i, rec) in reader.records().enumerate() {
        let rec = rec.map_err(Error::csv(path))?;
        for (j, cell) in rec.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|e| privfly_core::Error::Parse {
                row: i,
                column: names.get(j).cloned().unwrap_or_default(),
                message: format!("`{cell}`: {e}"),
            })?;
            data.push(v);
        }
        n_rows += 1;
    }
    let layout = layout_from_names(&names);
    Ok(FeatureMatrix::new(data, n_rows, names, layout)?)
}

/// Class indices, one per line under a `label` header.
pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::with_capacity(labels.len() * 2 + 6);
    text.push_str("label\n");
    for l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    write_text(path, &text)
}

pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(Error::io(path))?;
    text.lines()
        .skip(1)
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            l.trim().parse().map_err(|e| {
                privfly_core::Error::Parse {
                    row: i,
                    column: "label".into(),
                    message: format!("`{l}`: {e}"),
                }
                .into()
            })
        })
        .collect()
}
