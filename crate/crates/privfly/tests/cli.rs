use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use privfly_core::dataset::SynthConfig;
use privfly_core::neural::TrainConfig;
use privfly_core::pipeline::{DataSource, ExperimentConfig};
use privfly_core::privacy::DpConfig;
use privfly_core::vime::VimeConfig;

fn privfly(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privfly"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn small_config(dir: &Path) -> PathBuf {
    let cfg = ExperimentConfig {
        data: DataSource::Synth(SynthConfig {
            n_rows: 400,
            class_proportions: vec![0.4, 0.3, 0.25, 0.05],
            ..SynthConfig::default()
        }),
        hidden_dims: vec![16],
        train: TrainConfig {
            epochs: 3,
            batch_size: 32,
            ..TrainConfig::default()
        },
        ..ExperimentConfig::default()
    };
    let p = dir.join("cfg.json");
    fs::write(&p, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    p
}

fn only_run_dir(out: &Path) -> PathBuf {
    let dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("run_"))
        .collect();
    assert_eq!(dirs.len(), 1, "{dirs:?}");
    dirs[0].clone()
}

#[test]
fn unknown_flag_is_usage_error() {
    let o = privfly(&["train", "--bogus", "--out", "x"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("Usage"), "{}", stderr(&o));
    let o = privfly(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("precedence"));
}

#[test]
fn synth_data_writes_csv_and_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d");
    let o = privfly(&["synth-data", "--rows", "5000", "--seed", "7", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("Tello API Exploit"));
    let schema = privfly::data::load_schema(&out.join("schema.json")).unwrap();
    let ds = privfly::data::load_csv(&out.join("data.csv"), &schema).unwrap();
    assert_eq!(ds.len(), 5000);
    assert_eq!(ds.class_counts()[3], 3);

    let again = tmp.path().join("e");
    privfly(&["synth-data", "--rows", "5000", "--seed", "7", "--out", again.to_str().unwrap()]);
    assert_eq!(fs::read(out.join("data.csv")).unwrap(), fs::read(again.join("data.csv")).unwrap());
}

#[test]
fn train_writes_run_dir_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("a");
    let o = privfly(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "3",
        "--sigma",
        "1.0",
        "--vime",
        "--epochs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("accuracy") && text.contains("epsilon"), "{text}");
    let run = only_run_dir(&out);
    let files = ["config.json", "metrics.json", "confusion.csv", "privacy.json", "shap_summary.json", "table.txt"];
    for f in files {
        assert!(run.join(f).is_file(), "{f}");
    }
    let echoed: ExperimentConfig =
        serde_json::from_str(&fs::read_to_string(run.join("config.json")).unwrap()).unwrap();
    assert_eq!(echoed.seed, 3);
    assert_eq!(echoed.dp.as_ref().unwrap().epochs, 2);
    assert!(echoed.vime.is_some());

    let out2 = tmp.path().join("b");
    let o = privfly(&[
        "train",
        "--config",
        run.join("config.json").to_str().unwrap(),
        "--out",
        out2.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run2 = only_run_dir(&out2);
    assert_eq!(run.file_name(), run2.file_name());
    for f in files.iter().chain(&["history.csv"]) {
        assert_eq!(fs::read(run.join(f)).unwrap(), fs::read(run2.join(f)).unwrap(), "{f}");
    }
    for f in ["head.ckpt", "encoder.ckpt", "encoder.json", "preprocessor.json"] {
        assert_eq!(
            fs::read(run.join("model").join(f)).unwrap(),
            fs::read(run2.join("model").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn zero_noise_is_numeric_error_naming_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let o = privfly(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--sigma",
        "0",
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("config"), "{}", stderr(&o));
}

#[test]
fn bad_csv_is_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let schema = tmp.path().join("s.json");
    fs::write(
        &schema,
        r#"{"columns":[{"name":"frame_len","role":"numeric"},{"name":"label","role":"label"}],
            "label_classes":["Benign","Attack"]}"#,
    )
    .unwrap();
    let data = tmp.path().join("d.csv");
    fs::write(&data, "frame_len,label\n1,Benign\n2,Tello API Exploit\n").unwrap();
    let o = privfly(&[
        "train",
        "--data",
        data.to_str().unwrap(),
        "--schema",
        schema.to_str().unwrap(),
        "--out",
        tmp.path().join("o").to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Tello API Exploit"), "{}", stderr(&o));
}

#[test]
fn stage_commands_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path().join("data");
    let p = tmp.path().join("pre");
    let a = tmp.path().join("aug");
    let v = tmp.path().join("vime");
    let s = |p: &Path| p.to_str().unwrap().to_string();

    assert_eq!(privfly(&["synth-data", "--rows", "600", "--out", &s(&d)]).status.code(), Some(0));
    let o = privfly(&[
        "preprocess",
        "--data",
        &s(&d.join("data.csv")),
        "--schema",
        &s(&d.join("schema.json")),
        "--seed",
        "1",
        "--out",
        &s(&p),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("feature dim"));

    let o = privfly(&[
        "augment",
        "--features",
        &s(&p.join("train_features.csv")),
        "--labels",
        &s(&p.join("train_labels.csv")),
        "--method",
        "gmm",
        "--target-count",
        "50",
        "--threshold",
        "50",
        "--allow-duplication",
        "--out",
        &s(&a),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let labels = privfly::data::read_labels(&a.join("labels.csv")).unwrap();
    assert!(labels.iter().filter(|&&l| l == 3).count() >= 50);
    assert!(a.join("provenance.json").is_file());

    let o = privfly(&[
        "pretrain",
        "--features",
        &s(&a.join("features.csv")),
        "--epochs",
        "2",
        "--seed",
        "4",
        "--out",
        &s(&v),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (enc, side) = privfly::checkpoint::load_encoder(&v, "encoder").unwrap();
    assert_eq!(side.latent_dim, VimeConfig::default().latent_dim());
    assert_eq!(side.pretrain_seed, 4);
    assert_eq!(enc.output_dim(), 64);
}

#[test]
fn evaluate_and_explain_a_saved_model() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("run");
    let o = privfly(&["train", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let run = only_run_dir(&out);
    let model = run.join("model");

    let ev = tmp.path().join("ev");
    let o = privfly(&["evaluate", "--model", model.to_str().unwrap(), "--out", ev.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(fs::read(ev.join("metrics.json")).unwrap(), fs::read(run.join("metrics.json")).unwrap());

    let ex = tmp.path().join("ex");
    let o = privfly(&[
        "explain",
        "--model",
        model.to_str().unwrap(),
        "--rows-per-class",
        "2",
        "--background-rows",
        "10",
        "--permutations",
        "4",
        "--jobs",
        "2",
        "--out",
        ex.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).starts_with("rank"));
    let csv = fs::read_to_string(ex.join("shap_values.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 8);
}

#[test]
fn grid_table_has_one_row_per_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg: ExperimentConfig =
        serde_json::from_str(&fs::read_to_string(small_config(tmp.path())).unwrap()).unwrap();
    cfg.dp = Some(DpConfig {
        epochs: 1,
        batch_size: 32,
        ..DpConfig::default()
    });
    cfg.vime = Some(VimeConfig {
        encoder_dims: vec![8, 4],
        epochs: 1,
        ..VimeConfig::default()
    });
    cfg.augment.target_count = 60;
    cfg.augment.rare_class_threshold = 60;
    let p = tmp.path().join("grid.json");
    fs::write(&p, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = tmp.path().join("g");
    let o = privfly(&[
        "grid",
        "--config",
        p.to_str().unwrap(),
        "--noise",
        "5,3,1,0.5,0.2",
        "--methods",
        "dp_dnn,privfly_smote",
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let table = fs::read_to_string(out.join("table.txt")).unwrap();
    assert_eq!(table, stdout(&o));
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 11);
    assert!(lines[0].starts_with("noise multiplier"));
    let eps: Vec<f64> = lines[1..]
        .iter()
        .filter(|l| l.contains("dp_dnn"))
        .map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(eps.windows(2).all(|w| w[0] < w[1]), "{eps:?}");

    let o = privfly(&["grid", "--methods", "sgd", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn cv_reports_folds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("cv");
    let o = privfly(&["cv", "--config", cfg.to_str().unwrap(), "--folds", "3", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t = stdout(&o);
    assert_eq!(t.lines().count(), 1 + 3 + 2);
    assert!(out.join("cv.json").is_file());

    let o = privfly(&["cv", "--rows", "5000", "--folds", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("Tello API Exploit"), "{}", stderr(&o));
}
