//! Setting resolution: command-line flags win over values replayed from a
//! `--config` manifest, which win over built-in defaults. Every resolved
//! value is recorded for the run manifest.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{CliError, CliResult};
use crate::manifest::RunManifest;

#[derive(Debug, Default)]
pub struct Settings {
    file: Vec<(String, String)>,
    resolved: Vec<(String, String)>,
}

fn flag_name(key: &str) -> String {
    format!("--{}", key.replace('_', "-"))
}

impl Settings {
    /// Loads replayed values from a manifest written by the same command.
    pub fn load(config: Option<&Path>, command: &str) -> CliResult<Self> {
        let Some(path) = config else {
            return Ok(Self::default());
        };
        let manifest = RunManifest::read(path)?;
        if manifest.command != command {
            return Err(CliError::Usage(format!(
                "{} is a `{}` manifest, not `{command}`",
                path.display(),
                manifest.command
            )));
        }
        Ok(Self {
            file: manifest.config,
            resolved: Vec::new(),
        })
    }

    fn replayed(&self, key: &str) -> Option<&str> {
        self.file.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn record(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.resolved.push((key.into(), value.into()));
    }

    pub fn opt<T>(&mut self, key: &str, flag: Option<T>) -> CliResult<Option<T>>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        let value = match flag {
            Some(v) => Some(v),
            None => match self.replayed(key) {
                Some(raw) => Some(raw.parse::<T>().map_err(|e| {
                    CliError::Usage(format!("invalid value `{raw}` for {} in config: {e}", flag_name(key)))
                })?),
                None => None,
            },
        };
        if let Some(v) = &value {
            self.record(key, v.to_string());
        }
        Ok(value)
    }

    pub fn get<T>(&mut self, key: &str, flag: Option<T>, default: Option<T>) -> CliResult<T>
    where
        T: FromStr + Display,
        T::Err: Display,
    {
        match self.opt(key, flag)? {
            Some(v) => Ok(v),
            None => {
                let v = default.ok_or_else(|| CliError::Usage(format!("missing required {}", flag_name(key))))?;
                self.record(key, v.to_string());
                Ok(v)
            }
        }
    }

    pub fn opt_path(&mut self, key: &str, flag: Option<PathBuf>) -> Option<PathBuf> {
        let value = flag.or_else(|| self.replayed(key).map(PathBuf::from));
        if let Some(p) = &value {
            self.record(key, p.display().to_string());
        }
        value
    }

    pub fn path(&mut self, key: &str, flag: Option<PathBuf>) -> CliResult<PathBuf> {
        self.opt_path(key, flag)
            .ok_or_else(|| CliError::Usage(format!("missing required {}", flag_name(key))))
    }

    /// A boolean switch; an absent switch falls back to the config value.
    pub fn switch(&mut self, key: &str, flag: bool) -> CliResult<bool> {
        self.get(key, flag.then_some(true), Some(false))
    }

    /// Repeatable path flag, stored as `key.0`, `key.1`, ...
    pub fn paths(&mut self, key: &str, flags: Vec<PathBuf>) -> Vec<PathBuf> {
        let values: Vec<PathBuf> = if flags.is_empty() {
            (0..)
                .map_while(|i| self.replayed(&format!("{key}.{i}")).map(PathBuf::from))
                .collect()
        } else {
            flags
        };
        for (i, p) in values.iter().enumerate() {
            self.record(format!("{key}.{i}"), p.display().to_string());
        }
        values
    }

    /// Replayed entries under `prefix`, with the prefix stripped.
    pub fn prefixed(&self, prefix: &str) -> Vec<(String, String)> {
        self.file
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|k| (k.to_string(), v.clone())))
            .collect()
    }

    pub fn into_config(self) -> Vec<(String, String)> {
        self.resolved
    }
}
