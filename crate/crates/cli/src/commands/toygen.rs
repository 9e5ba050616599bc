use std::path::Path;

use serde_json::json;
use w1ot::data::{gen_bookshelf, gen_circles, gen_moons, gen_swiss_roll, write_atomic, write_csv};
use w1ot::Dataset;

use crate::{CliError, ToyKind};

pub fn run(
    dataset: ToyKind,
    n: usize,
    seed: u64,
    noise: Option<f64>,
    out: &Path,
) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::usage("toygen needs n >= 1"));
    }
    if let Some(v) = noise {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(CliError::usage(format!("noise must be non-negative, got {v}")));
        }
    }
    let (source, target, meta) = match dataset {
        ToyKind::Bookshelf => {
            let (s, t) = gen_bookshelf(n, seed)?;
            let meta = json!({
                "dataset": "bookshelf", "n": n, "seed": seed,
                "source_x": [0.0, 1.0], "target_x": [2.0, 3.0], "y_std": 0.001,
            });
            (s, t, meta)
        }
        ToyKind::Circles => {
            let noise = noise.unwrap_or(0.02);
            let (s, t) = gen_circles(n, noise, seed)?;
            let meta = json!({
                "dataset": "circles", "n": n, "seed": seed, "noise": noise,
                "radii": [0.5, 1.0], "source_scale": 1.0, "target_scale": 2.0,
            });
            (s, t, meta)
        }
        ToyKind::SwissRoll => {
            let (s, t) = gen_swiss_roll(n, seed)?;
            let meta = json!({
                "dataset": "swiss_roll", "n": n, "seed": seed,
                "t_range": [1.5 * std::f64::consts::PI, 4.5 * std::f64::consts::PI],
                "noise": 0.05, "scale": 0.1,
            });
            (s, t, meta)
        }
        ToyKind::Moons => {
            let noise = noise.unwrap_or(0.05);
            let (s, t) = gen_moons(n, noise, seed)?;
            let meta = json!({
                "dataset": "moons", "n": n, "seed": seed, "noise": noise,
                "source": "upper moon", "target": "lower moon",
            });
            (s, t, meta)
        }
    };

    std::fs::create_dir_all(out)
        .map_err(|e| CliError::usage(format!("cannot create {}: {e}", out.display())))?;
    write_csv(&source, &out.join("source.csv"))?;
    write_csv(&target, &out.join("target.csv"))?;
    write_labels(&source, &out.join("source_labels.csv"))?;
    write_labels(&target, &out.join("target_labels.csv"))?;
    let meta_text = serde_json::to_string_pretty(&meta)
        .map_err(|e| CliError::usage(format!("cannot serialize meta: {e}")))?;
    write_atomic(&out.join("meta.json"), meta_text.as_bytes())?;
    eprintln!("wrote {}", out.display());
    Ok(())
}

/// Generator class labels are audit metadata; written out of band when present.
fn write_labels(ds: &Dataset, path: &Path) -> Result<(), CliError> {
    if let Some(labels) = ds.labels() {
        let mut text = String::from("label\n");
        for l in labels {
            text.push_str(&l.to_string());
            text.push('\n');
        }
        write_atomic(path, text.as_bytes())?;
    }
    Ok(())
}
