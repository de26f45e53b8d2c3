use privfly_core::augment::AugmentMethod;
use privfly_core::dataset::{SynthConfig, RARE_CLASS};
use privfly_core::neural::TrainConfig;
use privfly_core::pipeline::{
    grid, load_synthetic, run, run_dataset, DataSource, ExperimentConfig, GridMethod,
};
use privfly_core::privacy::{AccountantState, DpConfig};
use privfly_core::vime::VimeConfig;
use privfly_core::ErrorKind;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        data: DataSource::Synth(SynthConfig {
            n_rows: 600,
            class_proportions: vec![0.5, 0.3, 0.18, 0.02],
            ..SynthConfig::default()
        }),
        hidden_dims: vec![16],
        train: TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        },
        vime: Some(VimeConfig {
            encoder_dims: vec![16, 8],
            epochs: 2,
            ..VimeConfig::default()
        }),
        dp: Some(DpConfig {
            epochs: 2,
            batch_size: 64,
            noise_multiplier: 1.0,
            ..DpConfig::default()
        }),
        ..ExperimentConfig::default()
    }
}

#[test]
fn privfly_run_is_reproducible() {
    let cfg = GridMethod::PrivflySmote.configure(&small(), 1.0);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.config, cfg);
    assert_eq!(a.pretrain_history.len(), 2);
    assert_eq!(a.train_history.len(), 2);
}

#[test]
fn smote_raises_the_rare_class_in_training_only() {
    let mut cfg = GridMethod::PrivflySmote.configure(&small(), 1.0);
    cfg.augment.rare_class_threshold = 50;
    let ds = load_synthetic(&cfg).unwrap();
    let out = run_dataset(&ds, &cfg).unwrap();
    let r = &out.result;
    assert_eq!(cfg.augment.method, AugmentMethod::Smote);
    let rare_total = ds.class_counts()[RARE_CLASS];
    let rare_test = r.confusion.counts()[RARE_CLASS].iter().sum::<u64>() as usize;
    assert_eq!(r.n_synthetic, cfg.augment.target_count - (rare_total - rare_test));
    assert_eq!(r.n_test + r.n_train, ds.len() + r.n_synthetic);
    assert!(out.trace.test_rows.iter().all(|i| !out.trace.pretrain_rows.contains(i)));
}

#[test]
fn reported_epsilon_matches_a_fresh_accountant() {
    let cfg = GridMethod::DpDnn.configure(&small(), 2.0);
    let r = run(&cfg).unwrap();
    let p = r.privacy.unwrap();
    let mut acc = AccountantState::new(p.q, p.sigma).unwrap();
    acc.advance(p.steps);
    let (eps, order) = privfly_core::privacy::epsilon(&acc, p.delta).unwrap();
    assert_eq!(p.epsilon, eps);
    assert_eq!(p.minimizing_order, order);
    assert_eq!(p.steps, 2 * r.n_train.div_ceil(64));
}

#[test]
fn grid_epsilon_falls_with_noise() {
    let cfg = small();
    let ds = load_synthetic(&cfg).unwrap();
    let g = grid(&ds, &cfg, &[4.0, 1.0, 0.5], &[GridMethod::DpDnn], &[0]).unwrap();
    let eps: Vec<f64> = g.rows.iter().map(|r| r.epsilon.unwrap()).collect();
    assert!(eps.windows(2).all(|w| w[0] < w[1]), "{eps:?}");
}

#[test]
fn zero_noise_is_a_config_error() {
    let mut cfg = small();
    cfg.dp.as_mut().unwrap().noise_multiplier = 0.0;
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Numeric);
}
