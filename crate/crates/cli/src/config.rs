use std::fs;
use std::path::Path;

use clap::parser::ValueSource;
use clap::ArgMatches;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::exit::CliError;

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

/// Resolved configuration of one run, written next to its artifacts.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest<C> {
    pub schema_version: u32,
    pub command: String,
    pub tool_version: String,
    pub config: C,
}

impl<C: Serialize> Manifest<C> {
    pub fn new(command: &str, config: C) -> Self {
        Self {
            schema_version: MANIFEST_SCHEMA_VERSION,
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config,
        }
    }
}

/// Parses a kebab-case enum value through its serde representation.
pub fn kebab<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(Value::String(s.into())).map_err(|_| format!("invalid value {s:?}"))
}

/// Reads a config file: either a flat object of option values or a manifest
/// written by a previous run of the same command.
fn read_config(path: &Path, command: &str) -> Result<Map<String, Value>, CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| {
        CliError::Usage(format!("config {} is not valid JSON: {e}", path.display()))
    })?;
    let Value::Object(mut map) = value else {
        return Err(CliError::Usage(format!(
            "config {} must be a JSON object",
            path.display()
        )));
    };
    if let Some(Value::String(cmd)) = map.get("command") {
        if cmd != command {
            return Err(CliError::Usage(format!(
                "config {} is a manifest for `{cmd}`, not `{command}`",
                path.display()
            )));
        }
        return match map.remove("config") {
            Some(Value::Object(inner)) => Ok(inner),
            _ => Err(CliError::Usage(format!(
                "manifest {} has no config object",
                path.display()
            ))),
        };
    }
    Ok(map)
}

/// Applies config-file values to every option not given on the command line.
pub fn resolve<A>(
    args: A,
    matches: &ArgMatches,
    config: Option<&Path>,
    command: &str,
) -> Result<A, CliError>
where
    A: Serialize + DeserializeOwned,
{
    let Some(path) = config else {
        return Ok(args);
    };
    let file = read_config(path, command)?;
    let Value::Object(mut merged) = serde_json::to_value(&args).expect("arguments serialize")
    else {
        unreachable!("argument structs serialize to objects");
    };
    for (key, value) in file {
        if !merged.contains_key(&key) {
            return Err(CliError::Usage(format!(
                "unknown option {key:?} in config {}",
                path.display()
            )));
        }
        let from_flag = matches!(matches.value_source(&key), Some(ValueSource::CommandLine));
        if !from_flag {
            merged.insert(key, value);
        }
    }
    serde_json::from_value(Value::Object(merged))
        .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))
}
