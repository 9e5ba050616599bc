use std::path::Path;

use w1ot::data::write_atomic;

use crate::commands::load_dataset;
use crate::plot::scatter_svg;
use crate::CliError;

pub fn run(
    source: &Path,
    target: &Path,
    pred: Option<&Path>,
    rays: bool,
    out: &Path,
) -> Result<(), CliError> {
    let src = load_dataset(source)?;
    let tgt = load_dataset(target)?;
    let pred_ds = pred.map(load_dataset).transpose()?;
    let svg = scatter_svg(
        src.features(),
        tgt.features(),
        pred_ds.as_ref().map(|d| d.features()),
        rays,
    )?;
    write_atomic(out, svg.as_bytes())?;
    eprintln!("wrote {}", out.display());
    Ok(())
}
