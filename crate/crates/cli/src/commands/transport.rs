use std::path::Path;

use w1ot::data::write_csv;
use w1ot::Dataset;

use crate::checkpoint::Checkpoint;
use crate::commands::load_dataset;
use crate::CliError;

pub fn run(model: &Path, input: &Path, out: &Path) -> Result<(), CliError> {
    let ckpt = Checkpoint::load(model)?;
    let map = ckpt.rebuild_map()?;
    let data = load_dataset(input)?;
    if data.dim() != map.input_dim() {
        return Err(CliError::usage(format!(
            "input has {} features but the model expects {}",
            data.dim(),
            map.input_dim()
        )));
    }
    let transported = map.transport(data.features())?;
    let result = Dataset::new(
        format!("{}_transported", data.name()),
        transported,
        data.feature_names().to_vec(),
    )?;
    write_csv(&result, out)?;
    eprintln!("wrote {} rows to {}", result.n_samples(), out.display());
    Ok(())
}
