//! Flat `key = value` settings shared by config files and run manifests.
//!
//! A config file sets any subset of a command's keys; command-line flags
//! override it. Every run writes the fully resolved settings plus a few
//! derived entries (model hash, schedule indices, ...) as its manifest.
//! Feeding a manifest back through `--config` reproduces the run, and the
//! derived entries are checked against what the run derives again.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{CliError, Result};

/// Keys the tool derives itself; a config may carry them (a manifest does)
/// but they must match.
pub const DERIVED_KEYS: [&str; 9] = [
    "command",
    "data_id",
    "dim",
    "input_id",
    "methods.resolved",
    "model_id",
    "reveal",
    "schedule.indices",
    "version",
];

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<String, String>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    /// Blank lines and lines starting with `#` are skipped.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::format(path, format!("line {}: expected 'key = value'", lineno + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(CliError::format(path, format!("line {}: empty key", lineno + 1)));
            }
            if values.insert(key.to_string(), value.trim().to_string()).is_some() {
                return Err(CliError::format(path, format!("line {}: duplicate key '{key}'", lineno + 1)));
            }
        }
        Ok(Self { values })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn render(&self) -> String {
        self.values.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    pub fn set(&mut self, key: &str, value: impl Display) {
        self.values.insert(key.to_string(), value.to_string());
    }

    /// Sets `key` when `value` is given, keeping any earlier value otherwise.
    pub fn set_opt<T: Display>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.set(key, v);
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn contains(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn remove(&mut self, key: &str) -> Option<String> {
        self.values.remove(key)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.values.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| CliError::usage(format!("invalid value for '{key}': '{v}'")))
            })
            .transpose()
    }

    pub fn parsed_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parsed(key)?.unwrap_or(default))
    }

    pub fn required(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| CliError::usage(format!("missing required setting '{key}'")))
    }

    /// Comma-separated list; empty entries are rejected.
    pub fn list(&self, key: &str) -> Result<Option<Vec<String>>> {
        self.get(key)
            .map(|v| {
                let items: Vec<String> = v.split(',').map(|s| s.trim().to_string()).collect();
                if items.iter().any(String::is_empty) {
                    Err(CliError::usage(format!("'{key}' must be a non-empty comma-separated list")))
                } else {
                    Ok(items)
                }
            })
            .transpose()
    }

    /// Rejects keys outside `allowed` and [`DERIVED_KEYS`].
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for key in self.values.keys() {
            if !allowed.contains(&key.as_str()) && !DERIVED_KEYS.contains(&key.as_str()) {
                return Err(CliError::usage(format!("unknown setting '{key}'")));
            }
        }
        Ok(())
    }

    /// Splits off the derived entries, leaving only inputs.
    pub fn take_derived(&mut self) -> Settings {
        let mut derived = Settings::new();
        for key in DERIVED_KEYS {
            if let Some(v) = self.values.remove(key) {
                derived.values.insert(key.to_string(), v);
            }
        }
        derived
    }

    /// Every entry of `self` must agree with `actual`; `version` is
    /// informational and skipped.
    pub fn check_against(&self, actual: &Settings) -> Result<()> {
        for (key, expected) in self.iter() {
            if key == "version" {
                continue;
            }
            match actual.get(key) {
                Some(found) if found == expected => {}
                found => {
                    return Err(CliError::usage(format!(
                        "manifest mismatch for '{key}': config has '{expected}', this run has '{}'",
                        found.unwrap_or("<unset>")
                    )))
                }
            }
        }
        Ok(())
    }

    pub fn extend(&mut self, other: &Settings) {
        for (k, v) in other.iter() {
            self.set(k, v);
        }
    }
}

pub fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}
