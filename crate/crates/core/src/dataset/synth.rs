//! Seeded generator of ECU-IoFT-like traffic for desk-scale experiments.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Column, ColumnRole, Dataset, Schema, Value};
use crate::math::round;
use crate::rng::rng_from_seed;
use crate::{Error, Result};

pub const ECU_CLASS_NAMES: [&str; 4] = [
    "Benign",
    "WPA2-PSK WiFi Cracking",
    "WiFi Deauthentication",
    "Tello API Exploit",
];

/// Index of the rare class in [`ECU_CLASS_NAMES`].
pub const RARE_CLASS: usize = 3;

/// Encoded feature name of the source address that only the rare class
/// emits (present when [`SynthConfig::rare_indicator`] is on).
pub const RARE_INDICATOR_FEATURE: &str = "ip_src=192.168.10.1";

const RARE_IP: &str = "192.168.10.1";
const COMMON_IPS: [&str; 4] = ["192.168.10.2", "192.168.10.3", "0.0.0.0", "192.168.10.4"];

const NUMERIC_NAMES: [&str; 8] = [
    "frame_len",
    "frame_time_delta",
    "radiotap_dbm_antsignal",
    "wlan_duration",
    "data_len",
    "wlan_seq",
    "radiotap_datarate",
    "frame_time_relative",
];

const CATEGORICAL: [(&str, [&str; 5]); 3] = [
    (
        "wlan_da",
        [
            "ff:ff:ff:ff:ff:ff",
            "60:60:1f:3a:11:02",
            "7a:ad:8f:23:25:a7",
            "d8:3a:dd:41:0c:9e",
            "01:00:5e:00:00:fb",
        ],
    ),
    (
        "wlan_sa",
        [
            "60:60:1f:3a:11:02",
            "7a:ad:8f:23:25:a7",
            "d8:3a:dd:41:0c:9e",
            "a4:5e:60:e1:2b:7c",
            "00:1a:2b:3c:4d:5e",
        ],
    ),
    ("wlan_fc_subtype", ["0", "4", "8", "12", "40"]),
];

/// Probability that a class emits its preferred category.
const PREFERRED_P: f64 = 0.6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub n_rows: usize,
    /// One probability per class in [`ECU_CLASS_NAMES`] order.
    pub class_proportions: Vec<f64>,
    pub n_numeric: usize,
    pub n_categorical: usize,
    /// Scale of the per-class mean offsets of numeric features, in units of
    /// the within-class standard deviation.
    pub shift: f64,
    /// Emit an `ip_src` column whose value `192.168.10.1` marks the rare
    /// class.
    pub rare_indicator: bool,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n_rows: 5000,
            class_proportions: vec![0.45, 0.41, 0.1395, 0.0005],
            n_numeric: 8,
            n_categorical: 3,
            shift: 1.0,
            rare_indicator: true,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        if self.class_proportions.len() != ECU_CLASS_NAMES.len() {
            return Err(Error::Config(format!(
                "expected {} class proportions, got {}",
                ECU_CLASS_NAMES.len(),
                self.class_proportions.len()
            )));
        }
        if self.class_proportions.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Config("class proportions must be non-negative".into()));
        }
        let total: f64 = self.class_proportions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "class proportions sum to {total}, expected 1"
            )));
        }
        if self.n_rows < ECU_CLASS_NAMES.len() {
            return Err(Error::Config(format!(
                "need at least {} rows for one row per class",
                ECU_CLASS_NAMES.len()
            )));
        }
        if self.n_numeric + self.n_categorical == 0 && !self.rare_indicator {
            return Err(Error::Config("generator needs at least one feature".into()));
        }
        if !self.shift.is_finite() {
            return Err(Error::Config("shift must be finite".into()));
        }
        Ok(())
    }
}

/// Rows per class: `max(1, round(n * p_c))`, then the largest class absorbs
/// whatever is needed to make the total exactly `n_rows`.
pub fn synth_class_counts(cfg: &SynthConfig) -> Result<Vec<usize>> {
    cfg.validate()?;
    let n = cfg.n_rows;
    let mut counts: Vec<usize> = cfg
        .class_proportions
        .iter()
        .map(|p| (round(n as f64 * p) as usize).max(1))
        .collect();
    let total: usize = counts.iter().sum();
    let largest = (0..counts.len())
        .max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a)))
        .expect("four classes");
    if total > n {
        let excess = total - n;
        if counts[largest] <= excess {
            return Err(Error::Config("cannot keep one row per class".into()));
        }
        counts[largest] -= excess;
    } else {
        counts[largest] += n - total;
    }
    Ok(counts)
}

fn numeric_name(j: usize) -> String {
    NUMERIC_NAMES
        .get(j)
        .map(|s| s.to_string())
        .unwrap_or_else(|| format!("num_{j}"))
}

fn categorical_vocab(j: usize) -> (String, Vec<String>) {
    match CATEGORICAL.get(j) {
        Some((name, values)) => (name.to_string(), values.iter().map(|v| v.to_string()).collect()),
        None => (
            format!("cat_{j}"),
            (0..5).map(|v| format!("v{v}")).collect(),
        ),
    }
}

/// The schema the generator emits for `cfg`.
pub fn synth_schema(cfg: &SynthConfig) -> Schema {
    let mut columns = Vec::new();
    for j in 0..cfg.n_numeric {
        columns.push(Column::new(numeric_name(j), ColumnRole::Numeric));
    }
    for j in 0..cfg.n_categorical {
        columns.push(Column::new(categorical_vocab(j).0, ColumnRole::Categorical));
    }
    if cfg.rare_indicator {
        columns.push(Column::new("ip_src", ColumnRole::Categorical));
    }
    columns.push(Column::new("label", ColumnRole::Label));
    Schema::new(
        columns,
        ECU_CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
    )
    .expect("generator schema is valid")
}

/// Generate a labeled dataset with four separable classes.
///
/// Numeric features are unit-variance Gaussians around per-class centers
/// drawn as `shift * N(0, 1)`. Categorical columns emit a class-preferred
/// value with probability 0.6 and a uniform value otherwise. The optional
/// `ip_src` column carries an address seen only in rare-class traffic.
pub fn synth_ecu_like(cfg: &SynthConfig) -> Result<Dataset> {
    let counts = synth_class_counts(cfg)?;
    let schema = synth_schema(cfg);
    let mut rng = rng_from_seed(cfg.seed);
    let k = counts.len();

    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            (0..cfg.n_numeric)
                .map(|_| cfg.shift * Distribution::<f64>::sample(&StandardNormal, &mut rng))
                .collect::<Vec<f64>>()
        })
        .collect();
    let vocabs: Vec<Vec<String>> = (0..cfg.n_categorical).map(|j| categorical_vocab(j).1).collect();

    let mut rows = Vec::with_capacity(cfg.n_rows);
    let mut labels = Vec::with_capacity(cfg.n_rows);
    for (class, &count) in counts.iter().enumerate() {
        for _ in 0..count {
            let mut row = Vec::with_capacity(schema.n_features());
            for center in &centers[class] {
                let noise: f64 = StandardNormal.sample(&mut rng);
                row.push(Value::Num(center + noise));
            }
            for (j, vocab) in vocabs.iter().enumerate() {
                let preferred = (class + j) % vocab.len();
                let pick = if rng.random::<f64>() < PREFERRED_P {
                    preferred
                } else {
                    rng.random_range(0..vocab.len())
                };
                row.push(Value::Cat(vocab[pick].clone()));
            }
            if cfg.rare_indicator {
                let ip = if class == RARE_CLASS {
                    RARE_IP
                } else {
                    let preferred = class % COMMON_IPS.len();
                    if rng.random::<f64>() < PREFERRED_P {
                        COMMON_IPS[preferred]
                    } else {
                        COMMON_IPS[rng.random_range(0..COMMON_IPS.len())]
                    }
                };
                row.push(Value::Cat(ip.to_string()));
            }
            rows.push(row);
            labels.push(class);
        }
    }

    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.shuffle(&mut rng);
    let mut slots: Vec<Option<Vec<Value>>> = rows.into_iter().map(Some).collect();
    let rows = order
        .iter()
        .map(|&i| slots[i].take().expect("each row taken once"))
        .collect();
    let labels = order.iter().map(|&i| labels[i]).collect();
    Dataset::new(schema, rows, labels)
}
