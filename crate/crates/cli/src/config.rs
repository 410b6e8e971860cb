//! Layered configuration: defaults < preset < file < command-line overrides.

use std::fs;
use std::path::Path;

use mmgt_core::harness::{Preset, TrainConfig};
use mmgt_core::{Error, Result};
use toml::{Table, Value};

/// Reads a config file.
pub fn read_config_file(path: &Path) -> Result<Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
        path: path.to_path_buf(),
        detail: e.to_string(),
    })?;
    flatten_sections(table, path)
}

/// Merges the keys of top-level tables (sections) into one flat namespace.
pub fn flatten_sections(table: Table, origin: &Path) -> Result<Table> {
    let mut flat = Table::new();
    for (key, value) in table {
        match value {
            Value::Table(section) => {
                for (k, v) in section {
                    insert_unique(&mut flat, k, v, origin)?;
                }
            }
            v => insert_unique(&mut flat, key, v, origin)?,
        }
    }
    Ok(flat)
}

fn insert_unique(flat: &mut Table, key: String, value: Value, path: &Path) -> Result<()> {
    if flat.contains_key(&key) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            detail: format!("key {key:?} set more than once"),
        });
    }
    flat.insert(key, value);
    Ok(())
}

/// Parses `key=value`; the value is read as a TOML literal, falling back to
/// a bare string.
pub fn parse_override(text: &str) -> Result<(String, Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::config(format!("override {text:?} is not key=value")))?;
    let key = key.trim();
    if key.is_empty() {
        return Err(Error::config(format!("override {text:?} has an empty key")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()));
    Ok((key.to_string(), value))
}

fn preset_of(layer: &Table) -> Result<Option<Preset>> {
    match layer.get("preset") {
        None => Ok(None),
        Some(Value::String(s)) => Preset::parse(s).map(Some),
        Some(v) => Err(Error::config(format!("preset must be a string, got {v}"))),
    }
}

/// Resolves the final config. The preset is taken from the highest layer
/// that names one and installs its hyperparameters below the file layer.
pub fn resolve_config(file: Option<&Table>, overrides: &[(String, Value)]) -> Result<TrainConfig> {
    let override_table: Table = overrides.iter().cloned().collect();
    let preset = match preset_of(&override_table)? {
        Some(p) => p,
        None => file.map(preset_of).transpose()?.flatten().unwrap_or(Preset::Abide),
    };
    let base = Value::try_from(TrainConfig::preset(preset)).map_err(|e| Error::config(e.to_string()))?;
    let Value::Table(mut merged) = base else {
        return Err(Error::config("config did not serialise to a table"));
    };
    for layer in file.into_iter().chain(std::iter::once(&override_table)) {
        for (k, v) in layer {
            merged.insert(k.clone(), v.clone());
        }
    }
    let config: TrainConfig = Value::Table(merged).try_into().map_err(|e: toml::de::Error| Error::config(e.message().to_string()))?;
    config.validate()?;
    Ok(config)
}
