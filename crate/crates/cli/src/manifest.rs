//! Run manifests: the command, every resolved setting and the digests of
//! all files read and written.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FileRecord {
    pub role: String,
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(|e| CliError::file(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: &str, config: Vec<(String, String)>) -> Self {
        Self {
            command: command.to_string(),
            version: TOOL_VERSION.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn record(role: &str, path: &Path) -> CliResult<FileRecord> {
        Ok(FileRecord {
            role: role.to_string(),
            path: path.to_path_buf(),
            sha256: sha256_file(path)?,
        })
    }

    pub fn input(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.inputs.push(Self::record(role, path)?);
        Ok(())
    }

    pub fn output(&mut self, role: &str, path: &Path) -> CliResult<()> {
        self.outputs.push(Self::record(role, path)?);
        Ok(())
    }

    pub fn config_value(&self, key: &str) -> Option<&str> {
        self.config.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "command={}", self.command);
        let _ = writeln!(out, "version={}", self.version);
        for (k, v) in &self.config {
            let _ = writeln!(out, "config.{k}={v}");
        }
        for (kind, files) in [("input", &self.inputs), ("output", &self.outputs)] {
            for f in files {
                let _ = writeln!(out, "{kind}.{}.path={}", f.role, f.path.display());
                let _ = writeln!(out, "{kind}.{}.sha256={}", f.role, f.sha256);
            }
        }
        out
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let mut manifest = Self::new("", Vec::new());
        manifest.version.clear();
        let mut pending: Vec<(bool, String, Option<PathBuf>, Option<String>)> = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| CliError::Usage(format!("manifest line {}: expected key=value", i + 1)))?;
            if key == "command" {
                manifest.command = value.to_string();
            } else if key == "version" {
                manifest.version = value.to_string();
            } else if let Some(k) = key.strip_prefix("config.") {
                manifest.config.push((k.to_string(), value.to_string()));
            } else if let Some((is_input, rest)) = key
                .strip_prefix("input.")
                .map(|r| (true, r))
                .or_else(|| key.strip_prefix("output.").map(|r| (false, r)))
            {
                let (role, field) = rest
                    .rsplit_once('.')
                    .ok_or_else(|| CliError::Usage(format!("manifest line {}: malformed file key", i + 1)))?;
                let slot = match pending.iter_mut().find(|p| p.0 == is_input && p.1 == role) {
                    Some(slot) => slot,
                    None => {
                        pending.push((is_input, role.to_string(), None, None));
                        pending.last_mut().expect("just pushed")
                    }
                };
                match field {
                    "path" => slot.2 = Some(PathBuf::from(value)),
                    "sha256" => slot.3 = Some(value.to_string()),
                    _ => {
                        return Err(CliError::Usage(format!(
                            "manifest line {}: unknown field `{field}`",
                            i + 1
                        )))
                    }
                }
            } else {
                return Err(CliError::Usage(format!("manifest line {}: unknown key `{key}`", i + 1)));
            }
        }
        if manifest.command.is_empty() {
            return Err(CliError::Usage("manifest has no `command` entry".into()));
        }
        for (is_input, role, path, sha) in pending {
            let (Some(path), Some(sha256)) = (path, sha) else {
                return Err(CliError::Usage(format!("manifest file entry `{role}` is incomplete")));
            };
            let record = FileRecord { role, path, sha256 };
            if is_input {
                manifest.inputs.push(record);
            } else {
                manifest.outputs.push(record);
            }
        }
        Ok(manifest)
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        fs::write(path, self.to_text()).map_err(|e| CliError::file(path, e))
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path).map_err(|e| CliError::file(path, e))?;
        Self::parse(&text)
    }
}

/// Default manifest location for a primary output file.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    output.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip() {
        let mut m = RunManifest::new(
            "synth",
            vec![("seed".into(), "7".into()), ("out".into(), "c.csv".into())],
        );
        m.inputs.push(FileRecord {
            role: "profile".into(),
            path: "p.txt".into(),
            sha256: "ab".into(),
        });
        m.outputs.push(FileRecord {
            role: "corpus".into(),
            path: "dir/c.csv".into(),
            sha256: "cd".into(),
        });
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
        assert_eq!(m.config_value("seed"), Some("7"));
        assert!(RunManifest::parse("config.seed=1\n").is_err());
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(
            manifest_path_for(Path::new("a/b.csv")),
            PathBuf::from("a/b.csv.manifest")
        );
    }
}
