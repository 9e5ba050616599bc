use std::path::Path;

use serde::Serialize;
use w1ot::MetricsReport;

use crate::commands::{emit_json, load_dataset};
use crate::config::RunConfig;
use crate::CliError;

#[derive(Serialize)]
struct EvaluationWithBaseline {
    prediction: MetricsReport,
    identity: MetricsReport,
}

pub fn run(
    pred: &Path,
    target: &Path,
    source: Option<&Path>,
    config: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let pred_ds = load_dataset(pred)?;
    let target_ds = load_dataset(target)?;
    let scales = &cfg.metrics.mmd_scales;

    let prediction =
        MetricsReport::data_metrics(pred_ds.features(), target_ds.features(), scales, cfg.seed)?;
    match source {
        Some(src_path) => {
            // Identity baseline: the untransformed source against the target.
            let source_ds = load_dataset(src_path)?;
            let identity = MetricsReport::data_metrics(
                source_ds.features(),
                target_ds.features(),
                scales,
                cfg.seed,
            )?;
            emit_json(&EvaluationWithBaseline { prediction, identity }, out)
        }
        None => emit_json(&prediction, out),
    }
}
