use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

/// Reads a parameter map from a JSON file.
///
/// Either a flat `{ "p": 0.25, ... }` object or a manifest written by a
/// previous run, in which case its `parameters` are used and its `command`
/// must match.
pub fn load(path: &Path, command: &str) -> Result<Map<String, Value>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("{}: not valid JSON: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Validation(format!("{}: expected a JSON object", path.display())));
    };
    if let Some(Value::Object(params)) = map.remove("parameters") {
        match map.get("command").and_then(Value::as_str) {
            Some(c) if c != command => {
                return Err(CliError::Validation(format!("manifest is for `{c}`, not `{command}`")))
            }
            _ => return Ok(params),
        }
    }
    Ok(map)
}

/// Overlays explicitly given flags onto the config map.
pub fn merge<A: Serialize + DeserializeOwned>(flags: &A, config: Option<Map<String, Value>>) -> Result<A, CliError> {
    let Value::Object(given) = serde_json::to_value(flags).expect("flags serialize") else {
        unreachable!("argument structs serialize to objects")
    };
    let mut merged = config.unwrap_or_default();
    merged.extend(given.into_iter().filter(|(_, v)| !v.is_null()));
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Validation(format!("config: {e}")))
}
