use std::fs;
use std::path::Path;

use crate::scalar::Scalar;

use super::{ClassifierError, LinearModel};

/// Writes the model as JSON. Floats use the shortest representation that
/// parses back to the identical value.
pub fn save_model<T: Scalar>(model: &LinearModel<T>, path: &Path) -> Result<(), ClassifierError> {
    let json = serde_json::to_string_pretty(model)
        .map_err(|e| ClassifierError::ModelFormat(e.to_string()))?;
    crate::util::write_atomic(path, json.as_bytes())?;
    Ok(())
}

pub fn load_model<T: Scalar>(path: &Path) -> Result<LinearModel<T>, ClassifierError> {
    let bytes = fs::read(path)?;
    let model: LinearModel<T> =
        serde_json::from_slice(&bytes).map_err(|e| ClassifierError::ModelFormat(e.to_string()))?;
    model.validate()?;
    Ok(model)
}
