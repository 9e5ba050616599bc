use std::path::Path;

use serde_json::json;
use w1ot::lipschitz::DomainBox;
use w1ot::metrics::{gradient_norm_stats, monotonicity_violation_rate};

use crate::checkpoint::Checkpoint;
use crate::commands::load_dataset;
use crate::CliError;

pub fn run(model: &Path, data: &Path, pairs: usize, seed: u64) -> Result<(), CliError> {
    if pairs == 0 {
        return Err(CliError::usage("audit needs --pairs >= 1"));
    }
    let ckpt = Checkpoint::load(model)?;
    let map = ckpt.rebuild_map()?;
    let ds = load_dataset(data)?;
    if ds.dim() != map.input_dim() {
        return Err(CliError::usage(format!(
            "data has {} features but the model expects {}",
            ds.dim(),
            map.input_dim()
        )));
    }

    let domain = DomainBox::from_data(ds.features());
    let lipschitz = map.potential().lipschitz_audit(&domain, pairs, seed)?;
    let (g_mean, g_min, g_max) = gradient_norm_stats(map.potential(), ds.features())?;
    let cos_tol = ckpt.run_config.metrics.monotonicity_cos_tol;
    let mono = monotonicity_violation_rate(&map, ds.features(), pairs, seed, cos_tol)?;

    let line = json!({
        "lipschitz_max_ratio": lipschitz,
        "grad_norm_mean": g_mean,
        "grad_norm_min": g_min,
        "grad_norm_max": g_max,
        "monotonicity_violation_rate": mono,
        "monotonicity_cos_tol": cos_tol,
        "pairs": pairs,
        "seed": seed,
    });
    println!("{line}");
    Ok(())
}
