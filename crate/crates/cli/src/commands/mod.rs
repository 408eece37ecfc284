pub mod evaluate;
pub mod predict;
pub mod prepare;
pub mod topn;
pub mod train;

use std::fs;
use std::path::Path;

use crate::error::CliError;

pub(crate) fn ensure_file(path: &Path) -> Result<(), CliError> {
    if !path.is_file() {
        return Err(CliError::Data(format!("{}: no such file", path.display())));
    }
    Ok(())
}

pub(crate) fn ensure_out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
