use super::*;
use crate::dataset::{Column, ColumnRole, Value, RARE_CLASS};
use alloc::string::ToString;
use std::collections::BTreeSet;

fn small_synth(n_rows: usize, proportions: [f64; 4]) -> SynthConfig {
    SynthConfig {
        n_rows,
        class_proportions: proportions.to_vec(),
        ..SynthConfig::default()
    }
}

fn quick(cfg: ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Synth(small_synth(400, [0.4, 0.3, 0.25, 0.05])),
        hidden_dims: vec![16],
        train: TrainConfig {
            epochs: 5,
            batch_size: 32,
            ..TrainConfig::default()
        },
        ..cfg
    }
}

fn quick_vime() -> VimeConfig {
    VimeConfig {
        encoder_dims: vec![16, 8],
        epochs: 3,
        ..VimeConfig::default()
    }
}

fn quick_dp(sigma: f64) -> DpConfig {
    DpConfig {
        noise_multiplier: sigma,
        batch_size: 32,
        epochs: 3,
        ..DpConfig::default()
    }
}

fn full(sigma: f64) -> ExperimentConfig {
    quick(ExperimentConfig {
        augment: AugmentConfig {
            method: AugmentMethod::Smote,
            target_count: 60,
            rare_class_threshold: 60,
            ..AugmentConfig::default()
        },
        vime: Some(quick_vime()),
        dp: Some(quick_dp(sigma)),
        ..ExperimentConfig::default()
    })
}

#[test]
fn minimal_path_has_no_privacy_report() {
    let r = run(&quick(ExperimentConfig::default())).unwrap();
    assert!(r.privacy.is_none());
    assert!(r.pretrain_history.is_empty());
    assert_eq!(r.train_history.len(), 5);
    assert_eq!(r.confusion.total() as usize, r.n_test);
    assert_eq!(r.n_synthetic, 0);
}

#[test]
fn full_path_reports_epsilon_and_no_leakage() {
    let cfg = full(1.0);
    let ds = load_synthetic(&cfg).unwrap();
    let out = run_dataset(&ds, &cfg).unwrap();
    let p = out.result.privacy.as_ref().unwrap();
    assert!(p.epsilon.is_finite() && p.epsilon > 0.0);
    assert_eq!(p.steps, 3 * out.result.n_train.div_ceil(32));
    assert!(p.notes.iter().any(|n| n.contains("not differentially private")));
    assert!(out.result.n_synthetic > 0);
    assert_eq!(out.result.pretrain_history.len(), 3);
    assert!(out.model.classifier.encoder.is_some());

    let t = &out.trace;
    let test: BTreeSet<usize> = t.test_rows.iter().copied().collect();
    for stage in [&t.train_rows, &t.preprocessor_rows, &t.augment_rows, &t.pretrain_rows, &t.classifier_rows] {
        assert!(!stage.is_empty());
        assert!(stage.iter().all(|r| !test.contains(r)));
    }
    assert_eq!(t.train_rows.len() + t.test_rows.len(), ds.len());
}

#[test]
fn gmm_rows_trace_to_their_class() {
    let mut cfg = full(1.0);
    cfg.augment.method = AugmentMethod::Gmm;
    let ds = load_synthetic(&cfg).unwrap();
    let out = run_dataset(&ds, &cfg).unwrap();
    let test: BTreeSet<usize> = out.trace.test_rows.iter().copied().collect();
    assert!(out.trace.augment_rows.iter().all(|r| !test.contains(r)));
    assert!(out.result.n_synthetic > 0);
}

#[test]
fn config_echo_reruns_bitwise() {
    let first = run(&full(0.7)).unwrap();
    let again = run(&first.config).unwrap();
    assert_eq!(first, again);
}

#[test]
fn zero_noise_is_rejected_with_stage() {
    let err = run(&full(0.0)).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "config", .. }));
    assert_eq!(err.kind(), crate::ErrorKind::Numeric);
}

#[test]
fn stage_errors_are_tagged() {
    let mut cfg = quick(ExperimentConfig {
        augment: AugmentConfig {
            method: AugmentMethod::Smote,
            ..AugmentConfig::default()
        },
        ..ExperimentConfig::default()
    });
    cfg.data = DataSource::Synth(small_synth(400, [0.5, 0.3, 0.198, 0.002]));
    let err = run(&cfg).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "augment", .. }), "{err}");
}

#[test]
fn explanation_covers_every_present_class() {
    let cfg = quick(ExperimentConfig {
        explain: Some(ExplainConfig {
            rows_per_class: 2,
            background_rows: 10,
            n_permutations: 4,
            target: ShapTarget::Predicted,
        }),
        ..ExperimentConfig::default()
    });
    let r = run(&cfg).unwrap();
    let e = r.explanation.unwrap();
    assert_eq!(e.attribution.n_rows, 8);
    assert_eq!(e.importance.len(), e.attribution.n_features());
    assert_eq!(e.per_class.len(), 4);
    for i in 0..e.attribution.n_rows {
        let s: f64 = e.attribution.row(i).iter().sum();
        assert!((s - (e.attribution.outputs[i] - e.attribution.base_values[i])).abs() < 1e-9);
    }
}

#[test]
fn kfold_partitions_and_is_deterministic() {
    let cfg = quick(ExperimentConfig::default());
    let ds = load_synthetic(&cfg).unwrap();
    let a = kfold_assignments(&ds, 5, 3).unwrap();
    assert_eq!(a, kfold_assignments(&ds, 5, 3).unwrap());
    assert!(a.iter().all(|&f| f < 5));
    for c in 0..4 {
        let per_fold: Vec<usize> = (0..5)
            .map(|f| (0..ds.len()).filter(|&i| a[i] == f && ds.labels()[i] == c).count())
            .collect();
        let (lo, hi) = (per_fold.iter().min().unwrap(), per_fold.iter().max().unwrap());
        assert!(hi - lo <= 1);
    }
    let cv = kfold_cv(&ds, &cfg, 3).unwrap();
    assert_eq!(cv.folds.len(), 3);
    let tested: usize = cv.folds.iter().map(|r| r.n_test).sum();
    assert_eq!(tested, ds.len());
    assert!(cv.mean.accuracy > 0.0 && cv.std.accuracy >= 0.0);
}

#[test]
fn kfold_names_small_class() {
    let cfg = quick(ExperimentConfig::default());
    let ds = synth_ecu_like(&SynthConfig::default()).unwrap();
    match kfold_cv(&ds, &cfg, 5).unwrap_err() {
        Error::Stage { stage: "folds", source } => match *source {
            Error::Fold { class, count, folds } => {
                assert_eq!(class, crate::dataset::ECU_CLASS_NAMES[RARE_CLASS]);
                assert_eq!((count, folds), (3, 5));
            }
            e => panic!("{e}"),
        },
        e => panic!("{e}"),
    }
}

#[test]
fn grid_layout_and_epsilon_order() {
    let mut base = full(1.0);
    base.vime = Some(VimeConfig {
        epochs: 1,
        ..quick_vime()
    });
    base.dp = Some(DpConfig {
        epochs: 1,
        ..quick_dp(1.0)
    });
    let ds = load_synthetic(&base).unwrap();
    let noise = [5.0, 3.0, 1.0, 0.5, 0.2];
    let methods = [GridMethod::DpDnn, GridMethod::PrivflySmote];
    let g = grid(&ds, &base, &noise, &methods, &[1]).unwrap();
    assert_eq!(g.rows.len(), 10);
    assert!(g.rows.iter().all(|r| r.errors.is_empty()));
    for m in methods {
        let eps: Vec<f64> = g.rows.iter().filter(|r| r.method == m).map(|r| r.epsilon.unwrap()).collect();
        assert!(eps.windows(2).all(|w| w[0] < w[1]), "{eps:?}");
    }
    let table = g.to_table();
    assert_eq!(table.lines().count(), 11);
    assert!(table.starts_with("noise multiplier"));
}

#[test]
fn grid_keeps_failed_cells() {
    let mut base = full(1.0);
    base.data = DataSource::Synth(small_synth(400, [0.5, 0.3, 0.198, 0.002]));
    base.dp = Some(DpConfig {
        epochs: 1,
        ..quick_dp(1.0)
    });
    let ds = load_synthetic(&base).unwrap();
    let g = grid(&ds, &base, &[1.0], &[GridMethod::DpDnn, GridMethod::PrivflySmote], &[0]).unwrap();
    assert_eq!(g.rows[0].n_ok, 1);
    assert_eq!(g.rows[1].n_ok, 0);
    assert_eq!(g.rows[1].errors.len(), 1);
    assert!(g.to_table().contains("ERROR"));
}

#[test]
fn grid_seeds_are_per_cell() {
    let base = full(1.0);
    let cells = grid_cells(&base, &[1.0, 2.0], &[GridMethod::DpDnn], &[7, 8]).unwrap();
    assert_eq!(cells.len(), 4);
    let seeds: BTreeSet<u64> = cells.iter().map(|c| c.config.seed).collect();
    assert_eq!(seeds.len(), 4);
    assert_eq!(cells[0].index, cells[1].index);
    assert!(grid_cells(&base, &[], &[GridMethod::DpDnn], &[0]).is_err());
}

fn separable() -> Dataset {
    let schema = Schema::new(
        vec![
            Column::new("a", ColumnRole::Numeric),
            Column::new("b", ColumnRole::Numeric),
            Column::new("label", ColumnRole::Label),
        ],
        vec!["neg".to_string(), "pos".to_string()],
    )
    .unwrap();
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..200 {
        let t = i as f64 / 200.0;
        let c = i % 2;
        let offset = if c == 0 { -1.0 } else { 1.0 };
        rows.push(vec![Value::Num(t), Value::Num(offset + 0.3 * (t - 0.5))]);
        labels.push(c);
    }
    Dataset::new(schema, rows, labels).unwrap()
}

#[test]
fn logreg_separates_and_is_flat() {
    let ds = separable();
    let cfg = ExperimentConfig {
        train: TrainConfig {
            epochs: 50,
            batch_size: 16,
            lr: 0.5,
            seed: 0,
        },
        vime: Some(quick_vime()),
        ..ExperimentConfig::default()
    };
    let out = baseline_logreg(&ds, &cfg).unwrap();
    assert_eq!(out.model.classifier.head.layer_dims(), [2, 2]);
    assert!(out.model.classifier.encoder.is_none());
    assert!(out.result.metrics.macro_avg.accuracy >= 0.95);
    assert_eq!(out.result, baseline_logreg(&ds, &cfg).unwrap().result);
}

#[test]
fn trained_model_evaluates_raw_rows() {
    let cfg = quick(ExperimentConfig::default());
    let ds = load_synthetic(&cfg).unwrap();
    let out = run_dataset(&ds, &cfg).unwrap();
    let test = ds.subset(&out.trace.test_rows);
    let (cm, m) = out.model.evaluate(&test).unwrap();
    assert_eq!(cm, out.result.confusion);
    assert_eq!(m, out.result.metrics);
}

#[test]
fn per_class_selection() {
    let labels = [0, 1, 1, 1, 0, 2, 1];
    let picked = select_per_class(&labels, 3, 2, 0);
    assert_eq!(picked.len(), 5);
    assert!(picked.windows(2).all(|w| w[0] < w[1]));
    assert!(picked.contains(&5));
}
