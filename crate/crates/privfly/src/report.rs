//! Results directories and trained-model bundles.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use privfly_core::dataset::Preprocessor;
use privfly_core::pipeline::{Classifier, ExperimentConfig, RunResult, TrainedModel};
use privfly_core::rng::stream;
use privfly_core::vime::VimeConfig;
use sha2::{Digest, Sha256};

use crate::checkpoint::{load_checkpoint, load_encoder, save_checkpoint, save_encoder};
use crate::data::{fmt_f64, read_json, write_json, write_text};
use crate::{Error, Result};

/// First 16 hex digits of the SHA-256 of the compact config JSON.
pub fn config_hash(cfg: &ExperimentConfig) -> String {
    let json = serde_json::to_vec(cfg).expect("config serializes");
    let digest = Sha256::digest(&json);
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Metrics table followed by the privacy line, if any.
pub fn run_table(r: &RunResult) -> String {
    let mut s = r.metrics.to_table();
    if let Some(p) = &r.privacy {
        let _ = writeln!(
            s,
            "epsilon {:.4} (delta {}, sigma {}, q {:.6}, steps {})",
            p.epsilon, p.delta, p.sigma, p.q, p.steps
        );
    }
    let _ = writeln!(
        s,
        "train rows {} (synthetic {}), test rows {}",
        r.n_train, r.n_synthetic, r.n_test
    );
    s
}

fn history_csv(r: &RunResult) -> String {
    let mut s = String::from("epoch,pretrain_loss,train_loss\n");
    let n = r.pretrain_history.len().max(r.train_history.len());
    let cell = |h: &[f64], i: usize| h.get(i).map_or(String::new(), |&v| fmt_f64(v));
    for i in 0..n {
        let _ = writeln!(
            s,
            "{},{},{}",
            i + 1,
            cell(&r.pretrain_history, i),
            cell(&r.train_history, i)
        );
    }
    s
}

/// Write `out/run_<hash>/` and return its path.
///
/// Besides the summary files the directory holds `result.json` (the full
/// result, the only file with a wall-clock field), `history.csv` and, when
/// explanations ran, `shap_values.csv`. A trained model goes to `model/`.
pub fn write_run_dir(out: &Path, r: &RunResult, model: Option<&TrainedModel>) -> Result<PathBuf> {
    let dir = out.join(format!("run_{}", config_hash(&r.config)));
    fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    write_json(&dir.join("config.json"), &r.config)?;
    write_json(&dir.join("metrics.json"), &r.metrics)?;
    write_text(&dir.join("confusion.csv"), &r.confusion.to_csv())?;
    write_json(&dir.join("privacy.json"), &r.privacy)?;
    let summary = r.explanation.as_ref().map(|e| {
        serde_json::json!({
            "explained_quantity": e.explained_quantity,
            "global": e.importance,
            "per_class": e.per_class,
        })
    });
    write_json(&dir.join("shap_summary.json"), &summary)?;
    if let Some(e) = &r.explanation {
        write_text(&dir.join("shap_values.csv"), &e.attribution.to_csv())?;
    }
    write_text(&dir.join("table.txt"), &run_table(r))?;
    write_text(&dir.join("history.csv"), &history_csv(r))?;
    write_json(&dir.join("result.json"), r)?;
    if let Some(m) = model {
        save_model(&dir.join("model"), m, &r.config)?;
    }
    Ok(dir)
}

/// `preprocessor.json`, `classes.json`, `config.json`, `head.ckpt` and,
/// with pretraining, `encoder.ckpt` + `encoder.json`.
pub fn save_model(dir: &Path, m: &TrainedModel, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).map_err(Error::io(dir))?;
    write_json(&dir.join("preprocessor.json"), &m.preprocessor)?;
    write_json(&dir.join("classes.json"), &m.class_names)?;
    write_json(&dir.join("config.json"), cfg)?;
    save_checkpoint(&dir.join("head.ckpt"), &m.classifier.head, Some(cfg.stage_seed(stream::INIT, 0)))?;
    if let (Some(enc), Some(v)) = (&m.classifier.encoder, &cfg.vime) {
        let vcfg = VimeConfig {
            seed: cfg.stage_seed(stream::PRETRAIN, v.seed),
            ..v.clone()
        };
        save_encoder(dir, "encoder", enc, &vcfg)?;
    }
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<(TrainedModel, ExperimentConfig)> {
    let preprocessor: Preprocessor = read_json(&dir.join("preprocessor.json"))?;
    let class_names: Vec<String> = read_json(&dir.join("classes.json"))?;
    let cfg: ExperimentConfig = read_json(&dir.join("config.json"))?;
    let (_, head) = load_checkpoint(&dir.join("head.ckpt"))?;
    let encoder = if dir.join("encoder.ckpt").exists() {
        Some(load_encoder(dir, "encoder")?.0)
    } else {
        None
    };
    Ok((
        TrainedModel {
            preprocessor,
            classifier: Classifier { encoder, head },
            class_names,
        },
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use privfly_core::dataset::SynthConfig;
    use privfly_core::neural::TrainConfig;
    use privfly_core::pipeline::{load_synthetic, run_dataset, DataSource};

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            data: DataSource::Synth(SynthConfig {
                n_rows: 300,
                class_proportions: vec![0.4, 0.3, 0.25, 0.05],
                ..SynthConfig::default()
            }),
            hidden_dims: vec![8],
            train: TrainConfig {
                epochs: 2,
                ..TrainConfig::default()
            },
            vime: Some(VimeConfig {
                encoder_dims: vec![8, 4],
                epochs: 1,
                ..VimeConfig::default()
            }),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn hash_depends_on_config() {
        let a = small();
        let mut b = small();
        assert_eq!(config_hash(&a), config_hash(&b));
        b.seed = 1;
        assert_ne!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 16);
    }

    #[test]
    fn run_dir_layout_and_model_reload() {
        let cfg = small();
        let ds = load_synthetic(&cfg).unwrap();
        let out = run_dataset(&ds, &cfg).unwrap();
        let tmp = tempfile::tempdir().unwrap();
        let dir = write_run_dir(tmp.path(), &out.result, Some(&out.model)).unwrap();
        for f in ["config.json", "metrics.json", "confusion.csv", "privacy.json", "shap_summary.json", "table.txt"] {
            assert!(dir.join(f).is_file(), "{f}");
        }
        let echoed: ExperimentConfig = read_json(&dir.join("config.json")).unwrap();
        assert_eq!(echoed, cfg);
        let (model, _) = load_model(&dir.join("model")).unwrap();
        assert_eq!(model, out.model);
    }
}
