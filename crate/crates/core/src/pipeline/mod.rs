//! The end-to-end experiment: split, preprocess, augment, pretrain,
//! (DP-)train, evaluate and explain, plus k-fold CV and the noise grid.

mod cv;
mod grid;

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_dataset, AugmentConfig, AugmentMethod, RowOrigin};
use crate::dataset::{
    fit_preprocessor, stratified_split_indices, synth_ecu_like, Dataset, FeatureMatrix,
    Preprocessor, Schema, SynthConfig,
};
use crate::error::StageExt;
use crate::evalx::{confusion_matrix_named, metrics, ConfusionMatrix, MetricsReport};
use crate::explain::{
    attribute, global_importance, sample_background, Attribution, FeatureImportance, Scorer,
    ShapConfig, ShapTarget,
};
use crate::neural::{
    argmax, init_net, mean_gradient, sgd_step, train_epochs, Activation, DenseNet, LossSpec,
    Targets, TrainConfig,
};
use crate::privacy::{dp_sgd_step, AccountantState, DpConfig, PrivacyReport};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::vime::{encode, pretrain, VimeConfig};
use crate::{Error, Result};

pub use cv::{kfold_assignments, kfold_cv, CvResult};
pub use grid::{
    assemble_grid, grid, grid_cells, CellOutcome, GridCell, GridMethod, GridResult, GridRow, MeanStd,
};

/// Where the rows come from. CSV sources are resolved by the caller; see
/// [`run_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthConfig),
    Csv { path: String, schema: Schema },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExplainConfig {
    /// Test rows explained per class (fewer if the class is smaller).
    pub rows_per_class: usize,
    pub background_rows: usize,
    pub n_permutations: usize,
    pub target: ShapTarget,
}

impl Default for ExplainConfig {
    fn default() -> Self {
        Self {
            rows_per_class: 10,
            background_rows: 100,
            n_permutations: 100,
            target: ShapTarget::Predicted,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub test_fraction: f64,
    pub augment: AugmentConfig,
    /// `None` trains the classifier on the preprocessed features directly.
    pub vime: Option<VimeConfig>,
    /// `None` trains without privacy. When set, its batch size and epochs
    /// replace those of `train`.
    pub dp: Option<DpConfig>,
    pub loss: LossSpec,
    pub hidden_dims: Vec<usize>,
    pub train: TrainConfig,
    pub explain: Option<ExplainConfig>,
    /// Master seed. Every stage mixes it with the stage's own seed field.
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::Synth(SynthConfig::default()),
            test_fraction: 0.3,
            augment: AugmentConfig {
                method: AugmentMethod::None,
                ..AugmentConfig::default()
            },
            vime: None,
            dp: None,
            loss: LossSpec::default(),
            hidden_dims: vec![128, 64],
            train: TrainConfig::default(),
            explain: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config("test fraction must lie in (0, 1)".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        self.train.validate()?;
        self.loss.validate()?;
        if let Some(v) = &self.vime {
            v.validate()?;
        }
        if let Some(dp) = &self.dp {
            dp.validate()?;
            if dp.noise_multiplier == 0.0 {
                return Err(Error::InfiniteEpsilon);
            }
        }
        if let Some(e) = &self.explain {
            if e.background_rows == 0 || e.n_permutations == 0 {
                return Err(Error::Config(
                    "explanation needs background rows and permutations".into(),
                ));
            }
        }
        Ok(())
    }

    /// Seed of a stage: the master seed split by `stream`, mixed with the
    /// stage config's own seed.
    pub fn stage_seed(&self, stream: u64, own: u64) -> u64 {
        derive_seed(derive_seed(self.seed, stream), own)
    }

    /// Flat softmax regression: no hidden layers, no pretraining, no DP.
    pub fn logreg(&self) -> Self {
        Self {
            hidden_dims: Vec::new(),
            vime: None,
            dp: None,
            loss: LossSpec::default(),
            ..self.clone()
        }
    }
}

/// Frozen encoder (if pretrained) followed by the classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    pub encoder: Option<DenseNet>,
    pub head: DenseNet,
}

impl Classifier {
    fn embed(&self, x: &[f64]) -> Result<Vec<f64>> {
        match &self.encoder {
            Some(e) => e.predict(x),
            None => Ok(x.to_vec()),
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.head.logits(&self.embed(x)?)
    }

    pub fn predict_class(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.logits(x)?))
    }

    pub fn predict_all(&self, x: &FeatureMatrix) -> Result<Vec<usize>> {
        x.rows().map(|r| self.predict_class(r)).collect()
    }
}

impl Scorer for Classifier {
    fn n_inputs(&self) -> usize {
        match &self.encoder {
            Some(e) => e.input_dim(),
            None => self.head.input_dim(),
        }
    }

    fn scores(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.logits(x)
    }
}

/// Everything needed to score new raw rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub preprocessor: Preprocessor,
    pub classifier: Classifier,
    pub class_names: Vec<String>,
}

impl TrainedModel {
    pub fn evaluate(&self, ds: &Dataset) -> Result<(ConfusionMatrix, MetricsReport)> {
        let x = self.preprocessor.apply(ds)?;
        let pred = self.classifier.predict_all(&x)?;
        let cm = confusion_matrix_named(ds.labels(), &pred, self.class_names.clone())?;
        let m = metrics(&cm)?;
        Ok((cm, m))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub attribution: Attribution,
    pub importance: Vec<FeatureImportance>,
    /// Ranking over the rows explained for each class, in class order.
    pub per_class: Vec<Vec<FeatureImportance>>,
    pub explained_quantity: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub privacy: Option<PrivacyReport>,
    pub pretrain_history: Vec<f64>,
    pub train_history: Vec<f64>,
    pub n_train: usize,
    pub n_synthetic: usize,
    pub n_test: usize,
    pub explanation: Option<Explanation>,
    pub config: ExperimentConfig,
    /// Filled in by front ends that can read a clock.
    pub wall_clock_secs: Option<f64>,
}

/// Which original rows each stage saw. Synthetic rows are listed by the
/// original rows they were derived from.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunTrace {
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub preprocessor_rows: Vec<usize>,
    pub augment_rows: Vec<usize>,
    pub pretrain_rows: Vec<usize>,
    pub classifier_rows: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub result: RunResult,
    pub model: TrainedModel,
    pub trace: RunTrace,
}

/// Generate the configured synthetic data. CSV sources need a loader with
/// file access and are rejected here.
pub fn load_synthetic(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.data {
        DataSource::Synth(s) => synth_ecu_like(s).stage("data"),
        DataSource::Csv { path, .. } => Err(Error::Config(alloc::format!(
            "CSV source `{path}` must be loaded by the caller"
        )))
        .stage("data"),
    }
}

/// Run the configured experiment on synthetic data.
pub fn run(cfg: &ExperimentConfig) -> Result<RunResult> {
    let ds = load_synthetic(cfg)?;
    Ok(run_dataset(&ds, cfg)?.result)
}

/// Run the configured experiment on `ds` with a stratified split.
pub fn run_dataset(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate().stage("config")?;
    let (train, test) = split_indices(ds, cfg)?;
    run_split(ds, &train, &test, cfg)
}

/// The train/test partition [`run_dataset`] uses for `cfg`.
pub fn split_indices(ds: &Dataset, cfg: &ExperimentConfig) -> Result<(Vec<usize>, Vec<usize>)> {
    stratified_split_indices(
        ds.labels(),
        ds.n_classes(),
        cfg.test_fraction,
        derive_seed(cfg.seed, stream::SPLIT),
    )
    .stage("split")
}

/// Background rows and the test rows to explain, as the pipeline picks
/// them. `x_train` is the preprocessed training part before augmentation.
pub fn explain_inputs(
    x_train: &FeatureMatrix,
    train_labels: &[usize],
    test_labels: &[usize],
    n_classes: usize,
    e: &ExplainConfig,
    seed: u64,
) -> Result<(ShapConfig, Vec<usize>)> {
    let background = sample_background(
        x_train,
        train_labels,
        n_classes,
        e.background_rows,
        derive_seed(seed, stream::BACKGROUND),
    )?;
    let rows = select_per_class(
        test_labels,
        n_classes,
        e.rows_per_class,
        derive_seed(seed, stream::EXPLAIN),
    );
    let shap = ShapConfig {
        n_permutations: e.n_permutations,
        exhaustive: false,
        background,
        target: e.target,
        seed: derive_seed(seed, stream::EXPLAIN),
    };
    Ok((shap, rows))
}

fn origin_sources(o: &RowOrigin, train_rows: &[usize]) -> Vec<usize> {
    match *o {
        RowOrigin::Original { index } => vec![train_rows[index]],
        RowOrigin::Smote {
            seed_row,
            neighbor_row,
            ..
        } => vec![train_rows[seed_row], train_rows[neighbor_row]],
        RowOrigin::Gmm { .. } => Vec::new(),
    }
}

/// Every stage on a given train/test partition of `ds`.
pub fn run_split(
    ds: &Dataset,
    train: &[usize],
    test: &[usize],
    cfg: &ExperimentConfig,
) -> Result<RunOutput> {
    cfg.validate().stage("config")?;
    let k = ds.n_classes();
    let class_names = ds.schema().label_classes().to_vec();
    let train_ds = ds.subset(train);
    let test_ds = ds.subset(test);
    let mut trace = RunTrace {
        train_rows: train.to_vec(),
        test_rows: test.to_vec(),
        preprocessor_rows: train.to_vec(),
        ..RunTrace::default()
    };

    let pre = fit_preprocessor(&train_ds).stage("preprocess")?;
    let x_train = pre.apply(&train_ds).stage("preprocess")?;
    let x_test = pre.apply(&test_ds).stage("preprocess")?;

    let aug_cfg = AugmentConfig {
        seed: cfg.stage_seed(stream::AUGMENT, cfg.augment.seed),
        ..cfg.augment.clone()
    };
    let aug = augment_dataset(&x_train, train_ds.labels(), k, &aug_cfg).stage("augment")?;
    let mut gmm_classes: Vec<usize> = Vec::new();
    let mut fit_rows: Vec<usize> = Vec::new();
    for o in &aug.origins {
        fit_rows.extend(origin_sources(o, train));
        if let RowOrigin::Gmm { class } = o {
            gmm_classes.push(*class);
        }
    }
    gmm_classes.sort_unstable();
    gmm_classes.dedup();
    for c in gmm_classes {
        fit_rows.extend(train.iter().copied().filter(|&r| ds.labels()[r] == c));
    }
    fit_rows.sort_unstable();
    fit_rows.dedup();
    trace.augment_rows = fit_rows.clone();

    let mut pretrain_history = Vec::new();
    let encoder = match &cfg.vime {
        Some(v) => {
            let vcfg = VimeConfig {
                seed: cfg.stage_seed(stream::PRETRAIN, v.seed),
                ..v.clone()
            };
            let (model, hist) = pretrain(&aug.features, &vcfg).stage("pretrain")?;
            pretrain_history = hist;
            trace.pretrain_rows = fit_rows.clone();
            Some(model.into_encoder())
        }
        None => None,
    };
    let (z_train, z_test) = match &encoder {
        Some(e) => (
            encode(e, &aug.features).stage("pretrain")?,
            encode(e, &x_test).stage("pretrain")?,
        ),
        None => (aug.features.clone(), x_test.clone()),
    };
    trace.classifier_rows = fit_rows;

    let (head, train_history, privacy) =
        train_classifier(&z_train, &aug.labels, k, cfg).stage("train")?;
    let privacy = privacy.map(|mut p| {
        if cfg.vime.is_some() {
            p.notes
                .push("VIME pretraining is not differentially private".into());
        }
        p
    });
    let classifier = Classifier { encoder, head };

    let pred: Vec<usize> = z_test
        .rows()
        .map(|r| classifier.head.predict_class(r))
        .collect::<Result<_>>()
        .stage("evaluate")?;
    let confusion =
        confusion_matrix_named(test_ds.labels(), &pred, class_names.clone()).stage("evaluate")?;
    let report = metrics(&confusion).stage("evaluate")?;

    let explanation = match &cfg.explain {
        Some(e) => {
            let (shap, rows) =
                explain_inputs(&x_train, train_ds.labels(), test_ds.labels(), k, e, cfg.seed)
                    .stage("explain")?;
            let attribution =
                attribute(&classifier, &x_test.select_rows(&rows), &shap).stage("explain")?;
            Some(summarize_attribution(attribution, k).stage("explain")?)
        }
        None => None,
    };

    let result = RunResult {
        metrics: report,
        confusion,
        privacy,
        pretrain_history,
        train_history,
        n_train: aug.labels.len(),
        n_synthetic: aug.n_synthetic(),
        n_test: test.len(),
        explanation,
        config: cfg.clone(),
        wall_clock_secs: None,
    };
    Ok(RunOutput {
        result,
        model: TrainedModel {
            preprocessor: pre,
            classifier,
            class_names,
        },
        trace,
    })
}

/// Train a fresh classifier head on `x`, privately if `cfg.dp` is set.
pub fn train_classifier(
    x: &FeatureMatrix,
    labels: &[usize],
    n_classes: usize,
    cfg: &ExperimentConfig,
) -> Result<(DenseNet, Vec<f64>, Option<PrivacyReport>)> {
    let mut dims = vec![x.n_cols()];
    dims.extend_from_slice(&cfg.hidden_dims);
    dims.push(n_classes);
    let mut acts = vec![Activation::Relu; cfg.hidden_dims.len()];
    acts.push(Activation::Softmax);
    let mut net = init_net(&dims, &acts, cfg.stage_seed(stream::INIT, 0))?;
    let n = x.n_rows();
    let d = x.n_cols();
    let gather = |batch: &[usize]| {
        let mut rows = Vec::with_capacity(batch.len() * d);
        let mut ys = Vec::with_capacity(batch.len());
        for &i in batch {
            rows.extend_from_slice(x.row(i));
            ys.push(labels[i]);
        }
        (rows, ys)
    };
    let shuffle_seed = cfg.stage_seed(stream::SHUFFLE, cfg.train.seed);
    match &cfg.dp {
        None => {
            let tc = TrainConfig {
                seed: shuffle_seed,
                ..cfg.train.clone()
            };
            let hist = train_epochs(n, &tc, |batch| {
                let (rows, ys) = gather(batch);
                let (g, l) = mean_gradient(&net, &rows, Targets::Classes(&ys), &cfg.loss)?;
                sgd_step(&mut net, &g, tc.lr)?;
                Ok(l)
            })?;
            Ok((net, hist, None))
        }
        Some(dp) => {
            let tc = TrainConfig {
                epochs: dp.epochs,
                batch_size: dp.batch_size,
                lr: cfg.train.lr,
                seed: shuffle_seed,
            };
            let mut acc = AccountantState::new(dp.sampling_rate(n), dp.noise_multiplier)?;
            let mut noise = rng_from_seed(cfg.stage_seed(stream::NOISE, dp.seed));
            let hist = train_epochs(n, &tc, |batch| {
                let (rows, ys) = gather(batch);
                dp_sgd_step(
                    &mut net,
                    &rows,
                    Targets::Classes(&ys),
                    &cfg.loss,
                    dp,
                    tc.lr,
                    &mut acc,
                    &mut noise,
                )
            })?;
            let report = if acc.steps() > 0 {
                Some(PrivacyReport::from_accountant(dp, n, &acc)?)
            } else {
                None
            };
            Ok((net, hist, report))
        }
    }
}

/// Up to `per_class` indices of each class, seeded, in ascending order.
pub fn select_per_class(
    labels: &[usize],
    n_classes: usize,
    per_class: usize,
    seed: u64,
) -> Vec<usize> {
    let mut rng = rng_from_seed(seed);
    let mut out = Vec::new();
    for c in 0..n_classes {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
        members.shuffle(&mut rng);
        members.truncate(per_class);
        out.extend(members);
    }
    out.sort_unstable();
    out
}

/// Global and per-class rankings for an attribution.
pub fn summarize_attribution(attribution: Attribution, k: usize) -> Result<Explanation> {
    let importance = global_importance(&attribution)?;
    let per_class = (0..k)
        .map(|c| {
            let a = attribution.for_class(c);
            if a.n_rows == 0 {
                Ok(Vec::new())
            } else {
                global_importance(&a)
            }
        })
        .collect::<Result<_>>()?;
    Ok(Explanation {
        attribution,
        importance,
        per_class,
        explained_quantity: "pre-softmax logit of the target class".into(),
    })
}

/// Zero-hidden-layer softmax regression through the same evaluation path.
pub fn baseline_logreg(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunOutput> {
    run_dataset(ds, &cfg.logreg())
}

#[cfg(test)]
mod tests;
