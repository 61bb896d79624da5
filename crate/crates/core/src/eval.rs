//! Batch evaluation and the ablation harness.

use serde::Serialize;

use crate::aggregator::{AblationMode, FinalOutput, Pipeline};
use crate::backend::ModelBackend;
use crate::config::PipelineConfig;
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::kb::KbStore;
use crate::metrics::{compute_metrics, format_table, Metrics};

/// Predictions and metrics for one mode over one test set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub mode: AblationMode,
    pub metrics: Metrics,
    pub outputs: Vec<FinalOutput>,
}

fn with_jobs<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(0) => Err(Error::Config("jobs must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|pool| pool.install(f))
            .map_err(|e| Error::Config(format!("cannot start worker pool: {e}"))),
    }
}

/// Runs every test sample through the pipeline in `mode`. The first failing
/// sample aborts the evaluation with its (stage-tagged) error.
pub fn evaluate(
    test: &Dataset,
    store: &KbStore,
    backend: &dyn ModelBackend,
    pipeline: &Pipeline,
    mode: AblationMode,
    jobs: Option<usize>,
) -> Result<Evaluation> {
    if test.is_empty() {
        return Err(Error::EmptyEvaluation);
    }
    let results = with_jobs(jobs, || pipeline.run_batch(&test.samples, store, backend, mode))?;
    let outputs = results.into_iter().collect::<Result<Vec<_>>>()?;
    let pairs: Vec<_> = test
        .samples
        .iter()
        .zip(&outputs)
        .map(|(p, o)| (p.gold_label.expect("dataset samples carry gold labels"), o.label))
        .collect();
    Ok(Evaluation {
        mode,
        metrics: compute_metrics(&pairs)?,
        outputs,
    })
}

pub fn run_ablation(
    test: &Dataset,
    store: &KbStore,
    backend: &dyn ModelBackend,
    config: &PipelineConfig,
    mode: AblationMode,
) -> Result<Metrics> {
    let pipeline = Pipeline::new(config.clone())?;
    Ok(evaluate(test, store, backend, &pipeline, mode, None)?.metrics)
}

/// Evaluates each mode in turn.
pub fn run_ablations(
    test: &Dataset,
    store: &KbStore,
    backend: &dyn ModelBackend,
    pipeline: &Pipeline,
    modes: &[AblationMode],
    jobs: Option<usize>,
) -> Result<Vec<Evaluation>> {
    modes
        .iter()
        .map(|&m| evaluate(test, store, backend, pipeline, m, jobs))
        .collect()
}

/// Results table with one row per evaluation, labelled by ablation variant.
pub fn ablation_table(evals: &[Evaluation]) -> String {
    let rows: Vec<(String, Metrics)> = evals
        .iter()
        .map(|e| (e.mode.row_label().to_string(), e.metrics.clone()))
        .collect();
    format_table(&rows)
}

/// JSON report: `{"dataset", "results": [{"mode", "row", ...metrics}]}`.
pub fn ablation_json(dataset: &str, evals: &[Evaluation]) -> serde_json::Value {
    let results: Vec<serde_json::Value> = evals
        .iter()
        .map(|e| {
            let mut v = e.metrics.to_json();
            v["mode"] = e.mode.name().into();
            v["row"] = e.mode.row_label().into();
            v
        })
        .collect();
    serde_json::json!({ "dataset": dataset, "results": results })
}
