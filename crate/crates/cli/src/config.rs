//! `--config` files: a JSON object with one optional section per command.
//!
//! Precedence: command-line flag, then environment, then config file, then
//! built-in default. Keys use the flag names with `_` for `-`.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

pub const SECTIONS: [&str; 5] = ["fit-reference", "simulate", "cohort", "analyze", "serve"];

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConfigFile {
    sections: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let Value::Object(sections) = serde_json::from_str(text)? else {
            bail!("top level must be a JSON object keyed by command");
        };
        for (key, value) in &sections {
            if !SECTIONS.contains(&key.as_str()) {
                bail!("unknown section '{key}'; expected one of {}", SECTIONS.join(", "));
            }
            if !value.is_object() {
                bail!("section '{key}' must be an object");
            }
        }
        Ok(Self { sections })
    }

    /// Overlays the flags that were given onto `section` of the file.
    pub fn merge<T: Serialize + DeserializeOwned>(&self, section: &str, cli: &T) -> Result<T> {
        let mut merged = match self.sections.get(section) {
            Some(Value::Object(m)) => m.clone(),
            _ => Map::new(),
        };
        let Value::Object(given) = serde_json::to_value(cli)? else {
            bail!("arguments must serialize to an object");
        };
        for (key, value) in given {
            let unset = match &value {
                Value::Null | Value::Bool(false) => true,
                Value::Array(a) => a.is_empty(),
                _ => false,
            };
            if !unset {
                merged.insert(key, value);
            }
        }
        serde_json::from_value(Value::Object(merged)).with_context(|| format!("config section '{section}'"))
    }
}
