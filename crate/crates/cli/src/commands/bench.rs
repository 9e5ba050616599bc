use std::fmt::Write;
use std::path::Path;
use std::time::Instant;

use w1ot::data::write_atomic;
use w1ot::rng::seeded_rng;
use w1ot::{train_potential, Dataset, Tensor};

use crate::config::RunConfig;
use crate::CliError;

/// Times the dual stage on synthetic Gaussian pairs of each dimension and
/// emits `dim,ms_per_1000_iters` CSV rows.
pub fn run(
    dims: &[usize],
    iters: usize,
    n: usize,
    config: Option<&Path>,
    out: Option<&Path>,
) -> Result<(), CliError> {
    if dims.is_empty() {
        return Err(CliError::usage("bench needs at least one dimension"));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(CliError::usage("bench dimensions must be positive"));
    }
    if iters == 0 || n == 0 {
        return Err(CliError::usage("bench needs --iters >= 1 and --n >= 1"));
    }
    let cfg = match config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut dual_cfg = cfg.dual_config();
    dual_cfg.iterations = iters;
    let net_cfg = cfg.network_config();

    let mut csv = String::from("dim,ms_per_1000_iters\n");
    for &dim in dims {
        let names: Vec<String> = (0..dim).map(|i| format!("f{i}")).collect();
        let mut rng = seeded_rng(cfg.seed, w1ot::rng::stream::DATA_SOURCE);
        let src = Dataset::new("bench_source", Tensor::normal(n, dim, 0.0, 1.0, &mut rng), names.clone())?;
        let mut rng = seeded_rng(cfg.seed, w1ot::rng::stream::DATA_TARGET);
        let mut tgt_feats = Tensor::normal(n, dim, 0.0, 1.0, &mut rng);
        // Shift the first coordinate so the two clouds are separated.
        for i in 0..n {
            let v = tgt_feats.get(i, 0) + 2.0;
            tgt_feats.set(i, 0, v);
        }
        let tgt = Dataset::new("bench_target", tgt_feats, names)?;

        eprintln!("bench dim {dim}: {iters} dual iterations...");
        let t0 = Instant::now();
        let (_, _) = train_potential(&src, &tgt, &net_cfg, &dual_cfg).map_err(CliError::from)?;
        let ms_per_1000 = t0.elapsed().as_secs_f64() * 1e3 / iters as f64 * 1000.0;
        eprintln!("bench dim {dim}: {ms_per_1000:.1} ms per 1000 iterations");
        writeln!(csv, "{dim},{ms_per_1000}").expect("string write");
    }

    match out {
        Some(path) => write_atomic(path, csv.as_bytes())?,
        None => print!("{csv}"),
    }
    Ok(())
}
