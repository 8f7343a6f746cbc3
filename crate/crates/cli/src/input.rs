use std::path::Path;

use menger_core::generators::GeneratorSpec;
use menger_core::measure::WeightedPlanarMeasure;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::report::{CliError, Stage};

pub struct Loaded {
    pub measure: WeightedPlanarMeasure,
    /// `source`, `sha256` and `atoms`, for the report.
    pub info: Value,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// A CSV path if one exists, otherwise a generator spec. Relative paths
/// are taken from `base`.
pub fn load(source: &str, base: Option<&Path>) -> Result<Loaded, CliError> {
    let path = match base {
        Some(b) if Path::new(source).is_relative() => b.join(source),
        _ => Path::new(source).to_path_buf(),
    };
    let (measure, bytes) = if path.is_file() {
        let bytes = std::fs::read(&path).map_err(|e| CliError::bad_input("input", format!("{}: {e}", path.display())))?;
        let m = WeightedPlanarMeasure::read_csv(bytes.as_slice()).stage("input")?;
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        (m.with_name(name), bytes)
    } else {
        let spec: GeneratorSpec = source.parse().map_err(|e| {
            CliError::bad_input("input", format!("{source:?} is neither a file nor a generator: {e}"))
        })?;
        let m = spec.generate().stage("gen")?;
        let bytes = m.to_csv_string().into_bytes();
        (m, bytes)
    };
    let info = json!({
        "source": source,
        "sha256": sha256_hex(&bytes),
        "atoms": measure.len(),
    });
    Ok(Loaded { measure, info })
}
