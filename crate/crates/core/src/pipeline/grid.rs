use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use super::cv::{mean_std, summarize};
use super::{run_dataset, ExperimentConfig, RunResult};
use crate::augment::AugmentMethod;
use crate::dataset::Dataset;
use crate::evalx::MacroMetrics;
use crate::rng::{derive_seed, stream};
use crate::vime::VimeConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridMethod {
    /// DP classifier on the preprocessed features.
    DpDnn,
    /// SMOTE, VIME pretraining, DP classifier.
    PrivflySmote,
    /// Mixture synthesizer, VIME pretraining, DP classifier.
    PrivflyGmm,
}

impl GridMethod {
    pub fn name(self) -> &'static str {
        match self {
            GridMethod::DpDnn => "dp_dnn",
            GridMethod::PrivflySmote => "privfly_smote",
            GridMethod::PrivflyGmm => "privfly_gmm",
        }
    }

    /// `base` with this method's stages switched on and noise `sigma`.
    pub fn configure(self, base: &ExperimentConfig, sigma: f64) -> ExperimentConfig {
        let mut cfg = base.clone();
        let mut dp = base.dp.clone().unwrap_or_default();
        dp.noise_multiplier = sigma;
        cfg.dp = Some(dp);
        match self {
            GridMethod::DpDnn => {
                cfg.augment.method = AugmentMethod::None;
                cfg.vime = None;
            }
            GridMethod::PrivflySmote | GridMethod::PrivflyGmm => {
                cfg.augment.method = if self == GridMethod::PrivflySmote {
                    AugmentMethod::Smote
                } else {
                    AugmentMethod::Gmm
                };
                if cfg.vime.is_none() {
                    cfg.vime = Some(VimeConfig::default());
                }
            }
        }
        cfg
    }
}

impl FromStr for GridMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "dp_dnn" => Ok(GridMethod::DpDnn),
            "privfly_smote" => Ok(GridMethod::PrivflySmote),
            "privfly_gmm" => Ok(GridMethod::PrivflyGmm),
            other => Err(Error::Config(format!("unknown grid method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    /// Position in the (noise, method) grid; identical across seeds.
    pub index: usize,
    pub sigma: f64,
    pub method: GridMethod,
    /// Entry of the seed list this cell belongs to.
    pub seed: u64,
    pub config: ExperimentConfig,
}

/// Cells in table order: noise multipliers outermost, then methods, then
/// seeds. Each cell's master seed is derived from its list seed and grid
/// index.
pub fn grid_cells(
    base: &ExperimentConfig,
    noise: &[f64],
    methods: &[GridMethod],
    seeds: &[u64],
) -> Result<Vec<GridCell>> {
    if noise.is_empty() || methods.is_empty() || seeds.is_empty() {
        return Err(Error::Config(
            "grid needs at least one noise multiplier, method and seed".into(),
        ));
    }
    let mut cells = Vec::new();
    for (si, &sigma) in noise.iter().enumerate() {
        for (mi, &method) in methods.iter().enumerate() {
            let index = si * methods.len() + mi;
            for &seed in seeds {
                let mut config = method.configure(base, sigma);
                config.seed = derive_seed(derive_seed(seed, stream::CELL), index as u64);
                cells.push(GridCell {
                    index,
                    sigma,
                    method,
                    seed,
                    config,
                });
            }
        }
    }
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub sigma: f64,
    pub method: GridMethod,
    /// Mean over the successful cells.
    pub epsilon: Option<f64>,
    pub accuracy: Option<MeanStd>,
    pub precision: Option<MeanStd>,
    pub recall: Option<MeanStd>,
    pub f1: Option<MeanStd>,
    pub n_ok: usize,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellOutcome {
    pub cell: GridCell,
    pub result: Option<RunResult>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub cells: Vec<CellOutcome>,
    pub rows: Vec<GridRow>,
}

fn ms(mean: f64, std: f64) -> MeanStd {
    MeanStd { mean, std }
}

/// Group per-cell outcomes into one row per (noise, method).
pub fn assemble_grid(cells: Vec<GridCell>, results: Vec<Result<RunResult>>) -> GridResult {
    let cells: Vec<CellOutcome> = cells
        .into_iter()
        .zip(results)
        .map(|(cell, r)| match r {
            Ok(result) => CellOutcome {
                cell,
                result: Some(result),
                error: None,
            },
            Err(e) => CellOutcome {
                cell,
                result: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    let mut rows: Vec<GridRow> = Vec::new();
    let mut start = 0;
    while start < cells.len() {
        let index = cells[start].cell.index;
        let end = start + cells[start..].iter().take_while(|c| c.cell.index == index).count();
        let group = &cells[start..end];
        let ok: Vec<&RunResult> = group.iter().filter_map(|c| c.result.as_ref()).collect();
        let eps: Vec<f64> = ok
            .iter()
            .filter_map(|r| r.privacy.as_ref().map(|p| p.epsilon))
            .collect();
        let macros: Vec<&MacroMetrics> = ok.iter().map(|r| &r.metrics.macro_avg).collect();
        let (mean, std) = summarize(&macros);
        let some = |m: f64, s: f64| if ok.is_empty() { None } else { Some(ms(m, s)) };
        rows.push(GridRow {
            sigma: group[0].cell.sigma,
            method: group[0].cell.method,
            epsilon: if eps.is_empty() { None } else { Some(mean_std(&eps).0) },
            accuracy: some(mean.accuracy, std.accuracy),
            precision: some(mean.precision, std.precision),
            recall: some(mean.recall, std.recall),
            f1: some(mean.f1, std.f1),
            n_ok: ok.len(),
            errors: group.iter().filter_map(|c| c.error.clone()).collect(),
        });
        start = end;
    }
    GridResult { cells, rows }
}

/// Run every cell in order and assemble the table. Cell failures are
/// recorded, not propagated.
pub fn grid(
    ds: &Dataset,
    base: &ExperimentConfig,
    noise: &[f64],
    methods: &[GridMethod],
    seeds: &[u64],
) -> Result<GridResult> {
    let cells = grid_cells(base, noise, methods, seeds)?;
    let results = cells
        .iter()
        .map(|c| run_dataset(ds, &c.config).map(|o| o.result))
        .collect();
    Ok(assemble_grid(cells, results))
}

fn pct(v: Option<MeanStd>, with_std: bool) -> String {
    match v {
        None => "-".into(),
        Some(m) if with_std => format!("{:.2} +/- {:.2}", m.mean * 100.0, m.std * 100.0),
        Some(m) => format!("{:.2}", m.mean * 100.0),
    }
}

impl GridResult {
    /// Aligned text table: noise multiplier, epsilon, method and macro
    /// metrics in percent (mean +/- std when several seeds ran).
    pub fn to_table(&self) -> String {
        let with_std = self.rows.iter().any(|r| r.n_ok > 1);
        let header = [
            "noise multiplier",
            "epsilon",
            "method",
            "accuracy",
            "precision",
            "recall",
            "f1",
        ];
        let mut lines: Vec<[String; 7]> = Vec::new();
        for r in &self.rows {
            lines.push([
                format!("{}", r.sigma),
                r.epsilon.map_or("-".into(), |e| format!("{e:.2}")),
                r.method.name().into(),
                pct(r.accuracy, with_std),
                pct(r.precision, with_std),
                pct(r.recall, with_std),
                pct(r.f1, with_std),
            ]);
        }
        let mut widths = header.map(str::len);
        for l in &lines {
            for (w, c) in widths.iter_mut().zip(l) {
                *w = (*w).max(c.len());
            }
        }
        let mut s = String::new();
        let row = |s: &mut String, cells: &[&str]| {
            let parts: Vec<String> = cells
                .iter()
                .zip(&widths)
                .map(|(c, w)| format!("{c:<w$}"))
                .collect();
            let _ = writeln!(s, "{}", parts.join("  ").trim_end());
        };
        row(&mut s, &header);
        for (l, r) in lines.iter().zip(&self.rows) {
            let cells: Vec<&str> = l.iter().map(String::as_str).collect();
            row(&mut s, &cells);
            for e in &r.errors {
                let _ = writeln!(s, "  ERROR: {e}");
            }
        }
        s
    }
}
