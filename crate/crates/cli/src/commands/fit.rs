use std::path::Path;
use std::time::Instant;

use serde_json::json;
use w1ot::{train_potential, train_stepsize, FitResult, TransportMap};

use crate::checkpoint::Checkpoint;
use crate::commands::load_dataset;
use crate::config::RunConfig;
use crate::CliError;

pub fn run(
    source: &Path,
    target: &Path,
    config: Option<&Path>,
    out: &Path,
    history: Option<&Path>,
) -> Result<(), CliError> {
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.validate()?;
    let src = load_dataset(source)?;
    let tgt = load_dataset(target)?;
    if src.dim() != tgt.dim() {
        return Err(CliError::usage(format!(
            "source has {} features, target has {}",
            src.dim(),
            tgt.dim()
        )));
    }

    eprintln!(
        "fitting: {} source rows, {} target rows, {} features",
        src.n_samples(),
        tgt.n_samples(),
        src.dim()
    );
    let net_cfg = cfg.network_config();

    let t0 = Instant::now();
    let (potential, dual_history) =
        train_potential(&src, &tgt, &net_cfg, &cfg.dual_config()).map_err(CliError::from)?;
    let dual_seconds = t0.elapsed().as_secs_f64();
    eprintln!(
        "dual stage done in {dual_seconds:.1}s, final dual estimate {:.6}",
        dual_history.final_dual()
    );

    let t1 = Instant::now();
    let (stepsize, discriminator, gan_history) =
        train_stepsize(&potential, &src, &tgt, &net_cfg.hidden, &cfg.gan_config())
            .map_err(CliError::from)?;
    let gan_seconds = t1.elapsed().as_secs_f64();
    eprintln!("gan stage done in {gan_seconds:.1}s");

    let fit = FitResult {
        map: TransportMap::new(potential, stepsize)?,
        discriminator,
        dual_history,
        gan_history,
    };

    if let Some(dir) = history {
        std::fs::create_dir_all(dir)
            .map_err(|e| CliError::usage(format!("cannot create {}: {e}", dir.display())))?;
        fit.dual_history.write_csv(&dir.join("dual_history.csv"))?;
        fit.gan_history.write_csv(&dir.join("gan_history.csv"))?;
    }

    let ckpt = Checkpoint::from_fit(&cfg, &fit);
    ckpt.save(out)?;

    let line = json!({
        "final_dual_estimate": fit.dual_history.final_dual(),
        "dual_seconds": dual_seconds,
        "gan_seconds": gan_seconds,
        "checkpoint": out.display().to_string(),
    });
    println!("{line}");
    Ok(())
}
