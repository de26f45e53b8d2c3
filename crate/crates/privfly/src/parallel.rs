//! Thread-parallel drivers for the grid and for Shapley attribution.
//!
//! Every unit of work owns seeds derived from its index, so results are
//! identical for any worker count.

use std::time::Instant;

use privfly_core::dataset::{Dataset, FeatureMatrix};
use privfly_core::explain::{attribute_row, collect_attribution, Attribution, Scorer, ShapConfig};
use privfly_core::pipeline::{
    assemble_grid, explain_inputs, grid_cells, run_dataset, split_indices, summarize_attribution,
    ExperimentConfig, ExplainConfig, Explanation, GridMethod, GridResult, RunOutput, TrainedModel,
};
use privfly_core::rng::derive_seed;
use rayon::prelude::*;

use crate::{Error, Result};

fn pool(jobs: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {jobs} worker threads: {e}")))
}

/// [`run_dataset`] with the wall-clock field filled in.
pub fn run_timed(ds: &Dataset, cfg: &ExperimentConfig) -> Result<RunOutput> {
    let t0 = Instant::now();
    let mut out = run_dataset(ds, cfg)?;
    out.result.wall_clock_secs = Some(t0.elapsed().as_secs_f64());
    Ok(out)
}

/// The noise grid with cells spread over `jobs` threads.
pub fn grid_parallel(
    ds: &Dataset,
    base: &ExperimentConfig,
    noise: &[f64],
    methods: &[GridMethod],
    seeds: &[u64],
    jobs: usize,
) -> Result<GridResult> {
    let cells = grid_cells(base, noise, methods, seeds)?;
    let results = pool(jobs)?.install(|| {
        cells
            .par_iter()
            .map(|c| {
                log::info!("grid cell {} sigma {} {} seed {}", c.index, c.sigma, c.method.name(), c.seed);
                run_dataset(ds, &c.config).map(|o| o.result)
            })
            .collect()
    });
    Ok(assemble_grid(cells, results))
}

/// Per-row Shapley values with rows spread over `jobs` threads. Row `i`
/// uses seed `derive_seed(cfg.seed, i)`, as the serial path does.
pub fn attribute_parallel<M: Scorer + Sync + ?Sized>(
    model: &M,
    x: &FeatureMatrix,
    cfg: &ShapConfig,
    jobs: usize,
) -> Result<Attribution> {
    let rows = pool(jobs)?.install(|| {
        (0..x.n_rows())
            .into_par_iter()
            .map(|i| attribute_row(model, x.row(i), cfg, derive_seed(cfg.seed, i as u64)))
            .collect::<privfly_core::Result<Vec<_>>>()
    })?;
    Ok(collect_attribution(rows, x.feature_names().to_vec())?)
}

/// Explain a trained model on the test part of `ds` under the split of
/// `cfg`. With `seed == cfg.seed` this reproduces the pipeline's own
/// explain stage.
pub fn explain_model(
    ds: &Dataset,
    model: &TrainedModel,
    cfg: &ExperimentConfig,
    e: &ExplainConfig,
    seed: u64,
    jobs: usize,
) -> Result<Explanation> {
    let stage = |err: privfly_core::Error| err.in_stage("explain");
    let (train, test) = split_indices(ds, cfg)?;
    let (train_ds, test_ds) = (ds.subset(&train), ds.subset(&test));
    let x_train = model.preprocessor.apply(&train_ds).map_err(stage)?;
    let x_test = model.preprocessor.apply(&test_ds).map_err(stage)?;
    let k = ds.n_classes();
    let (shap, rows) =
        explain_inputs(&x_train, train_ds.labels(), test_ds.labels(), k, e, seed).map_err(stage)?;
    let attribution = attribute_parallel(&model.classifier, &x_test.select_rows(&rows), &shap, jobs)?;
    Ok(summarize_attribution(attribution, k).map_err(stage)?)
}
