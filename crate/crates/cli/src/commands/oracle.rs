use std::fmt::Write;
use std::path::Path;

use serde_json::json;
use w1ot::data::write_atomic;
use w1ot::{dual_estimate, w1_matching};

use crate::checkpoint::Checkpoint;
use crate::commands::load_dataset;
use crate::CliError;

pub fn run(
    source: &Path,
    target: &Path,
    model: Option<&Path>,
    assignment_out: Option<&Path>,
) -> Result<(), CliError> {
    let src = load_dataset(source)?;
    let tgt = load_dataset(target)?;
    let matching = w1_matching(src.features(), tgt.features())?;

    let mut line = json!({
        "w1": matching.cost,
        "n": src.n_samples(),
    });
    if let Some(model_path) = model {
        let ckpt = Checkpoint::load(model_path)?;
        let potential = ckpt.rebuild_potential()?;
        let dual = dual_estimate(&potential, src.features(), tgt.features())?;
        line["dual_estimate"] = json!(dual);
        line["dual_gap"] = json!(matching.cost - dual);
    }

    if let Some(path) = assignment_out {
        let mut text = String::from("source_index,target_index\n");
        for (i, &j) in matching.assignment.iter().enumerate() {
            writeln!(text, "{i},{j}").expect("string write");
        }
        write_atomic(path, text.as_bytes())?;
    }
    println!("{line}");
    Ok(())
}
