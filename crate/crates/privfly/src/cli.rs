//! The `privfly` command line.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use privfly_core::augment::{augment_dataset, AugmentConfig, AugmentMethod};
use privfly_core::dataset::{fit_preprocessor, synth_class_counts, synth_ecu_like, synth_schema, SynthConfig};
use privfly_core::explain::ShapTarget;
use privfly_core::pipeline::{
    kfold_cv, split_indices, DataSource, ExperimentConfig, ExplainConfig, GridMethod,
};
use privfly_core::privacy::DpConfig;
use privfly_core::vime::{encode, pretrain, VimeConfig};

use crate::checkpoint::save_encoder;
use crate::data::{
    fmt_f64, load_csv, load_schema, read_json, read_labels, read_matrix_csv, resolve_dataset,
    save_dataset_csv, write_json, write_labels, write_matrix_csv, write_text,
};
use crate::parallel::{explain_model, grid_parallel, run_timed};
use crate::report::{load_model, run_table, write_run_dir};
use crate::{Error, Result};

const PRECEDENCE: &str = "\
Configuration precedence: built-in defaults, then the --config file, then
command-line flags. Flags always win, and the effective configuration is
echoed to config.json so any run can be repeated from that file alone.

Exit status: 0 success, 1 usage error, 2 data error, 3 numeric or training
error.";

#[derive(Debug, Parser)]
#[command(name = "privfly", version, about = "Rare-attack intrusion detection with DP-SGD, masked-feature pretraining and Shapley attribution", after_help = PRECEDENCE)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Master seed; overrides the config file.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AugmentArg {
    None,
    Smote,
    Gmm,
}

impl From<AugmentArg> for AugmentMethod {
    fn from(a: AugmentArg) -> Self {
        match a {
            AugmentArg::None => AugmentMethod::None,
            AugmentArg::Smote => AugmentMethod::Smote,
            AugmentArg::Gmm => AugmentMethod::Gmm,
        }
    }
}

/// Experiment configuration: a JSON file plus overriding flags.
#[derive(Debug, Args, Default)]
pub struct ExperimentArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// CSV data file; replaces the configured data source.
    #[arg(long, requires = "schema")]
    pub data: Option<PathBuf>,
    /// Schema JSON for --data.
    #[arg(long, requires = "data")]
    pub schema: Option<PathBuf>,
    /// Rows of synthetic data.
    #[arg(long, conflicts_with = "data")]
    pub rows: Option<usize>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long, value_enum)]
    pub augment: Option<AugmentArg>,
    /// Rows each rare class is raised to.
    #[arg(long)]
    pub target_count: Option<usize>,
    /// Enable masked-feature pretraining.
    #[arg(long)]
    pub vime: bool,
    #[arg(long, conflicts_with = "vime")]
    pub no_vime: bool,
    /// Noise multiplier; enables DP-SGD.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, conflicts_with = "sigma")]
    pub no_dp: bool,
    /// Hidden layer widths, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Option<Vec<usize>>,
    /// Classifier epochs (plain and DP training).
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    /// Attach Shapley explanations of test rows.
    #[arg(long)]
    pub explain: bool,
}

impl ExperimentArgs {
    pub fn resolve(&self, seed: Option<u64>) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => read_json(p)?,
            None => ExperimentConfig::default(),
        };
        if let (Some(data), Some(schema)) = (&self.data, &self.schema) {
            cfg.data = DataSource::Csv {
                path: data.display().to_string(),
                schema: load_schema(schema)?,
            };
        }
        if let Some(n) = self.rows {
            match &mut cfg.data {
                DataSource::Synth(s) => s.n_rows = n,
                DataSource::Csv { .. } => {
                    return Err(Error::Usage("--rows only applies to synthetic data".into()))
                }
            }
        }
        if let Some(f) = self.test_fraction {
            cfg.test_fraction = f;
        }
        if let Some(a) = self.augment {
            cfg.augment.method = a.into();
        }
        if let Some(t) = self.target_count {
            cfg.augment.target_count = t;
        }
        if self.vime && cfg.vime.is_none() {
            cfg.vime = Some(VimeConfig::default());
        }
        if self.no_vime {
            cfg.vime = None;
        }
        if let Some(s) = self.sigma {
            cfg.dp.get_or_insert_with(DpConfig::default).noise_multiplier = s;
        }
        if self.no_dp {
            cfg.dp = None;
        }
        if let Some(h) = &self.hidden {
            cfg.hidden_dims = h.clone();
        }
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
            if let Some(dp) = &mut cfg.dp {
                dp.epochs = e;
            }
        }
        if let Some(lr) = self.lr {
            cfg.train.lr = lr;
        }
        if self.explain && cfg.explain.is_none() {
            cfg.explain = Some(ExplainConfig::default());
        }
        if let Some(s) = seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic ECU-IoFT-like dataset (CSV + schema JSON).
    SynthData {
        /// Generator configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        rows: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Split, fit the preprocessor on the training part and export matrices.
    Preprocess {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Raise rare classes of a feature matrix with SMOTE or the mixture
    /// synthesizer.
    Augment {
        /// Feature matrix CSV.
        #[arg(long)]
        features: PathBuf,
        /// Label CSV (class indices).
        #[arg(long)]
        labels: PathBuf,
        #[arg(long, value_enum, default_value = "smote")]
        method: AugmentArg,
        #[arg(long, default_value_t = 500)]
        target_count: usize,
        #[arg(long, default_value_t = 500)]
        threshold: usize,
        #[arg(long, default_value_t = 5)]
        k_neighbors: usize,
        /// Duplicate a lone sample instead of failing.
        #[arg(long)]
        allow_duplication: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Self-supervised masked-feature pretraining of an encoder.
    Pretrain {
        #[arg(long)]
        features: PathBuf,
        /// Pretraining configuration JSON.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        mask_prob: Option<f64>,
        #[arg(long)]
        alpha: Option<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured experiment and write a results directory.
    Train {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a saved model on the test split of its configuration, or on
    /// every row of --data.
    Evaluate {
        /// The `model/` directory of a run.
        #[arg(long)]
        model: PathBuf,
        #[arg(long, requires = "schema")]
        data: Option<PathBuf>,
        #[arg(long, requires = "data")]
        schema: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Shapley attribution of a saved model on its test split.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, default_value_t = 10)]
        rows_per_class: usize,
        #[arg(long, default_value_t = 100)]
        background_rows: usize,
        #[arg(long, default_value_t = 100)]
        permutations: usize,
        /// Class index whose logit is explained; the predicted class if
        /// omitted.
        #[arg(long)]
        target: Option<usize>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Noise-multiplier grid over methods and seeds.
    Grid {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, value_delimiter = ',', default_value = "5,3,1,0.5,0.2")]
        noise: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "dp_dnn,privfly_smote,privfly_gmm")]
        methods: Vec<GridMethod>,
        /// Seed list; defaults to the master seed alone.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Stratified k-fold cross-validation.
    Cv {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, default_value_t = 5)]
        folds: usize,
        #[command(flatten)]
        common: Common,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SynthData { .. } => "synth-data",
            Command::Preprocess { .. } => "preprocess",
            Command::Augment { .. } => "augment",
            Command::Pretrain { .. } => "pretrain",
            Command::Train { .. } => "train",
            Command::Evaluate { .. } => "evaluate",
            Command::Explain { .. } => "explain",
            Command::Grid { .. } => "grid",
            Command::Cv { .. } => "cv",
        }
    }
}

/// Parse `args` (program name first), run, and return the exit status.
/// The human-readable report goes to `stdout`, diagnostics to stderr.
pub fn main_with<I, T>(args: I, stdout: &mut dyn std::io::Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let name = cli.command.name();
    match execute(cli.command) {
        Ok(text) => {
            let _ = stdout.write_all(text.as_bytes());
            0
        }
        Err(e) => {
            eprintln!("privfly {name}: {e}");
            e.exit_code()
        }
    }
}

/// Run one command and return its stdout text.
pub fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::SynthData { config, rows, common } => synth_data(config, rows, &common),
        Command::Preprocess { exp, common } => preprocess(&exp, &common),
        Command::Augment {
            features,
            labels,
            method,
            target_count,
            threshold,
            k_neighbors,
            allow_duplication,
            common,
        } => {
            let cfg = AugmentConfig {
                method: method.into(),
                target_count,
                rare_class_threshold: threshold,
                k_neighbors,
                allow_duplication,
                seed: common.seed.unwrap_or(0),
                ..AugmentConfig::default()
            };
            augment(&features, &labels, &cfg, &common.out)
        }
        Command::Pretrain {
            features,
            config,
            epochs,
            mask_prob,
            alpha,
            common,
        } => {
            let mut cfg: VimeConfig = match config {
                Some(p) => read_json(&p)?,
                None => VimeConfig::default(),
            };
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(p) = mask_prob {
                cfg.mask_prob = p;
            }
            if let Some(a) = alpha {
                cfg.alpha = a;
            }
            if let Some(s) = common.seed {
                cfg.seed = s;
            }
            pretrain_cmd(&features, &cfg, &common.out)
        }
        Command::Train { exp, common } => {
            let cfg = exp.resolve(common.seed)?;
            let ds = resolve_dataset(&cfg)?;
            let out = run_timed(&ds, &cfg)?;
            let dir = write_run_dir(&common.out, &out.result, Some(&out.model))?;
            Ok(format!("{}results {}\n", run_table(&out.result), dir.display()))
        }
        Command::Evaluate {
            model,
            data,
            schema,
            common,
        } => evaluate(&model, data.as_deref().zip(schema.as_deref()), &common),
        Command::Explain {
            model,
            rows_per_class,
            background_rows,
            permutations,
            target,
            jobs,
            common,
        } => {
            let e = ExplainConfig {
                rows_per_class,
                background_rows,
                n_permutations: permutations,
                target: target.map_or(ShapTarget::Predicted, ShapTarget::Class),
            };
            explain(&model, &e, jobs, &common)
        }
        Command::Grid {
            exp,
            noise,
            methods,
            seeds,
            jobs,
            common,
        } => {
            let cfg = exp.resolve(common.seed)?;
            let seeds = seeds.unwrap_or_else(|| vec![cfg.seed]);
            let ds = resolve_dataset(&cfg)?;
            let g = grid_parallel(&ds, &cfg, &noise, &methods, &seeds, jobs)?;
            let table = g.to_table();
            write_json(&common.out.join("config.json"), &cfg)?;
            write_json(&common.out.join("grid.json"), &g)?;
            write_text(&common.out.join("table.txt"), &table)?;
            Ok(table)
        }
        Command::Cv { exp, folds, common } => {
            let cfg = exp.resolve(common.seed)?;
            let ds = resolve_dataset(&cfg)?;
            let cv = kfold_cv(&ds, &cfg, folds)?;
            let mut table = String::from("fold  accuracy  precision  recall     f1\n");
            let row = |s: &mut String, name: &str, m: &privfly_core::evalx::MacroMetrics| {
                let _ = writeln!(
                    s,
                    "{name:<4}  {:>8.2}  {:>9.2}  {:>6.2}  {:>5.2}",
                    m.accuracy * 100.0,
                    m.precision * 100.0,
                    m.recall * 100.0,
                    m.f1 * 100.0
                );
            };
            for (i, f) in cv.folds.iter().enumerate() {
                row(&mut table, &(i + 1).to_string(), &f.metrics.macro_avg);
            }
            row(&mut table, "mean", &cv.mean);
            row(&mut table, "std", &cv.std);
            write_json(&common.out.join("config.json"), &cfg)?;
            write_json(&common.out.join("cv.json"), &cv)?;
            write_text(&common.out.join("table.txt"), &table)?;
            Ok(table)
        }
    }
}

fn synth_data(config: Option<PathBuf>, rows: Option<usize>, common: &Common) -> Result<String> {
    let mut cfg: SynthConfig = match config {
        Some(p) => read_json(&p)?,
        None => SynthConfig::default(),
    };
    if let Some(n) = rows {
        cfg.n_rows = n;
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let ds = synth_ecu_like(&cfg)?;
    save_dataset_csv(&common.out.join("data.csv"), &ds)?;
    write_json(&common.out.join("schema.json"), &synth_schema(&cfg))?;
    write_json(&common.out.join("synth_config.json"), &cfg)?;
    let mut s = String::from("class                    rows\n");
    for (name, n) in ds.schema().label_classes().iter().zip(synth_class_counts(&cfg)?) {
        let _ = writeln!(s, "{name:<23}  {n:>5}");
    }
    Ok(s)
}

fn preprocess(exp: &ExperimentArgs, common: &Common) -> Result<String> {
    let cfg = exp.resolve(common.seed)?;
    let ds = resolve_dataset(&cfg)?;
    let (train, test) = split_indices(&ds, &cfg)?;
    let (train_ds, test_ds) = (ds.subset(&train), ds.subset(&test));
    let stage = |e: privfly_core::Error| e.in_stage("preprocess");
    let pre = fit_preprocessor(&train_ds).map_err(stage)?;
    let x_train = pre.apply(&train_ds).map_err(stage)?;
    let x_test = pre.apply(&test_ds).map_err(stage)?;
    let out = &common.out;
    write_matrix_csv(&out.join("train_features.csv"), &x_train)?;
    write_labels(&out.join("train_labels.csv"), train_ds.labels())?;
    write_matrix_csv(&out.join("test_features.csv"), &x_test)?;
    write_labels(&out.join("test_labels.csv"), test_ds.labels())?;
    write_json(&out.join("preprocessor.json"), &pre)?;
    write_json(&out.join("config.json"), &cfg)?;
    Ok(format!(
        "train rows {}, test rows {}, feature dim {}\n",
        x_train.n_rows(),
        x_test.n_rows(),
        pre.output_dim()
    ))
}

fn augment(features: &Path, labels: &Path, cfg: &AugmentConfig, out: &Path) -> Result<String> {
    let x = read_matrix_csv(features)?;
    let y = read_labels(labels)?;
    let k = y.iter().max().map_or(0, |m| m + 1);
    let aug = augment_dataset(&x, &y, k, cfg).map_err(|e| e.in_stage("augment"))?;
    write_matrix_csv(&out.join("features.csv"), &aug.features)?;
    write_labels(&out.join("labels.csv"), &aug.labels)?;
    write_json(&out.join("provenance.json"), &aug.origins)?;
    write_json(&out.join("augment_config.json"), cfg)?;
    let before = counts(&y, k);
    let after = counts(&aug.labels, k);
    let mut s = String::from("class  before  after\n");
    for c in 0..k {
        let _ = writeln!(s, "{c:>5}  {:>6}  {:>5}", before[c], after[c]);
    }
    let _ = writeln!(s, "synthetic rows {}", aug.n_synthetic());
    Ok(s)
}

fn counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &l in labels {
        c[l] += 1;
    }
    c
}

fn pretrain_cmd(features: &Path, cfg: &VimeConfig, out: &Path) -> Result<String> {
    let x = read_matrix_csv(features)?;
    let (model, hist) = pretrain(&x, cfg).map_err(|e| e.in_stage("pretrain"))?;
    let encoder = model.into_encoder();
    let z = encode(&encoder, &x).map_err(|e| e.in_stage("pretrain"))?;
    save_encoder(out, "encoder", &encoder, cfg)?;
    write_json(&out.join("vime_config.json"), cfg)?;
    write_matrix_csv(&out.join("latent.csv"), &z)?;
    let mut s = String::from("epoch,loss\n");
    for (i, l) in hist.iter().enumerate() {
        let _ = writeln!(s, "{},{}", i + 1, fmt_f64(*l));
    }
    write_text(&out.join("history.csv"), &s)?;
    let first = hist.first().copied().unwrap_or(f64::NAN);
    let last = hist.last().copied().unwrap_or(f64::NAN);
    Ok(format!(
        "epochs {}, loss {:.6} -> {:.6}, latent dim {}\n",
        hist.len(),
        first,
        last,
        encoder.output_dim()
    ))
}

fn evaluate(model_dir: &Path, data: Option<(&Path, &Path)>, common: &Common) -> Result<String> {
    let (model, cfg) = load_model(model_dir)?;
    let ds = match data {
        Some((d, s)) => load_csv(d, &load_schema(s)?)?,
        None => {
            let ds = resolve_dataset(&cfg)?;
            let (_, test) = split_indices(&ds, &cfg)?;
            ds.subset(&test)
        }
    };
    let (cm, report) = model.evaluate(&ds).map_err(|e| e.in_stage("evaluate"))?;
    write_json(&common.out.join("metrics.json"), &report)?;
    write_text(&common.out.join("confusion.csv"), &cm.to_csv())?;
    let table = report.to_table();
    write_text(&common.out.join("table.txt"), &table)?;
    Ok(table)
}

fn explain(model_dir: &Path, e: &ExplainConfig, jobs: usize, common: &Common) -> Result<String> {
    let (model, cfg) = load_model(model_dir)?;
    let ds = resolve_dataset(&cfg)?;
    let seed = common.seed.unwrap_or(cfg.seed);
    let ex = explain_model(&ds, &model, &cfg, e, seed, jobs)?;
    write_text(&common.out.join("shap_values.csv"), &ex.attribution.to_csv())?;
    write_json(
        &common.out.join("shap_summary.json"),
        &serde_json::json!({
            "explained_quantity": ex.explained_quantity,
            "global": ex.importance,
            "per_class": ex.per_class,
        }),
    )?;
    let mut s = String::from("rank  mean |phi|  feature\n");
    for f in ex.importance.iter().take(10) {
        let _ = writeln!(s, "{:>4}  {:>10.6}  {}", f.rank, f.mean_abs_phi, f.feature);
    }
    write_text(&common.out.join("table.txt"), &s)?;
    Ok(s)
}
