//! One module per subcommand.

pub mod audit;
pub mod bench;
pub mod evaluate;
pub mod fit;
pub mod oracle;
pub mod plot_cmd;
pub mod toygen;
pub mod transport;

use std::path::Path;

use crate::CliError;
use w1ot::Dataset;

/// Loads a CSV dataset, mapping failures to usage errors (exit 2).
pub fn load_dataset(path: &Path) -> Result<Dataset, CliError> {
    Ok(w1ot::data::load_csv(path)?)
}

/// Writes pretty JSON atomically and echoes the compact form to stdout.
pub fn emit_json<T: serde::Serialize>(value: &T, out: &Path) -> Result<(), CliError> {
    let pretty = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::usage(format!("cannot serialize output: {e}")))?;
    w1ot::data::write_atomic(out, pretty.as_bytes())?;
    let compact = serde_json::to_string(value)
        .map_err(|e| CliError::usage(format!("cannot serialize output: {e}")))?;
    println!("{compact}");
    Ok(())
}
