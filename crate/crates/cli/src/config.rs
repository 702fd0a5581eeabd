//! Settings come from three layers: defaults, a config file with `[run]`,
//! `[input]` and one section per subcommand, and command-line flags, which
//! win. A JSON report is also accepted as a config file; its embedded
//! `config` is used.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::CliError;

pub fn load_file(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let value = if path.extension().is_some_and(|e| e == "json") {
        let v: Value = serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        match v {
            Value::Object(mut m) if m.contains_key("config") => m.remove("config").unwrap_or_default(),
            other => other,
        }
    } else {
        let t: toml::Table = toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| CliError::Config(e.to_string()))?
    };
    if !value.is_object() {
        return Err(CliError::Config(format!("{}: expected a table", path.display())));
    }
    Ok(value)
}

/// Flags set on the command line, laid over the file section. Unset flags
/// (`None`, or `false` for switches) leave the file value in place.
pub fn resolve<T: Serialize + DeserializeOwned>(flags: &T, file: Option<&Value>, section: &str) -> Result<T, CliError> {
    let mut merged = match file.and_then(|f| f.get(section)) {
        Some(Value::Object(m)) => m.clone(),
        Some(_) => return Err(CliError::Config(format!("config section [{section}] must be a table"))),
        None => Map::new(),
    };
    let Value::Object(top) = serde_json::to_value(flags).map_err(|e| CliError::Config(e.to_string()))? else {
        unreachable!("settings serialize to objects")
    };
    for (k, v) in top {
        if !matches!(v, Value::Null | Value::Bool(false)) {
            merged.insert(k, v);
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| CliError::Config(format!("[{section}]: {e}")))
}
