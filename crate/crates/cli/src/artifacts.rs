//! Loading inputs and writing outputs. Every file written records the tool
//! version and the hash of the scenario it was produced from.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use genmarket_core::{GdnParams, Scenario, VERSION};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

pub struct Loaded {
    pub scenario: Scenario,
    pub hash: String,
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parses JSON, reporting the path of the offending field on failure.
pub fn parse_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        let message = if field == "." {
            e.inner().to_string()
        } else {
            format!("field `{field}`: {}", e.inner())
        };
        CliError::Parse {
            path: path.to_path_buf(),
            message,
        }
    })
}

pub fn load_scenario(path: &Path) -> Result<Loaded> {
    let scenario: Scenario = parse_json(path)?;
    scenario.validate_dynamics()?;
    let hash = hex::encode(Sha256::digest(scenario.canonical_json().as_bytes()));
    Ok(Loaded { scenario, hash })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub tool_version: String,
    pub scenario_hash: String,
    pub seed: u64,
    pub best_epoch: usize,
    pub heldout_max_w2: f64,
    #[serde(flatten)]
    pub params: GdnParams,
}

pub fn load_checkpoint(path: &Path, loaded: &Loaded) -> Result<Checkpoint> {
    let ck: Checkpoint = parse_json(path)?;
    if ck.scenario_hash != loaded.hash {
        return Err(CliError::Usage(format!(
            "{} was fitted on a different scenario (hash {}, expected {})",
            path.display(),
            ck.scenario_hash,
            loaded.hash
        )));
    }
    ck.params.validate()?;
    if ck.params.state_dim() != loaded.scenario.dimension {
        return Err(CliError::Usage(format!(
            "{}: network dimension {} does not match the scenario's {}",
            path.display(),
            ck.params.state_dim(),
            loaded.scenario.dimension
        )));
    }
    Ok(ck)
}

pub struct OutDir {
    root: PathBuf,
    hash: String,
}

impl OutDir {
    pub fn new(root: PathBuf, hash: &str) -> Result<Self> {
        fs::create_dir_all(&root).map_err(|e| CliError::io(&root, e))?;
        Ok(Self {
            root,
            hash: hash.to_string(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Writes `{"tool_version", "scenario_hash", ...body}` as pretty JSON.
    pub fn write_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let mut value = serde_json::json!({
            "tool_version": VERSION,
            "scenario_hash": self.hash,
        });
        let body = serde_json::to_value(body).expect("artifact serializes");
        match body {
            serde_json::Value::Object(map) => value.as_object_mut().unwrap().extend(map),
            other => {
                value["data"] = other;
            }
        }
        let mut text = serde_json::to_string_pretty(&value).expect("artifact serializes");
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    pub fn write_raw_json<T: Serialize>(&self, name: &str, body: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(body).expect("artifact serializes");
        text.push('\n');
        let path = self.path(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }

    /// CSV preceded by `# key: value` comment lines.
    pub fn write_csv<R: Serialize>(
        &self,
        name: &str,
        notes: &[(&str, String)],
        header: &[String],
        rows: impl IntoIterator<Item = R>,
    ) -> Result<PathBuf> {
        let path = self.path(name);
        let io = |e: std::io::Error| CliError::io(&path, e);
        let mut buf = Vec::new();
        writeln!(buf, "# tool_version: {VERSION}").map_err(io)?;
        writeln!(buf, "# scenario_hash: {}", self.hash).map_err(io)?;
        for (k, v) in notes {
            writeln!(buf, "# {k}: {v}").map_err(io)?;
        }
        {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(&mut buf);
            let csv_err = |e: csv::Error| CliError::Usage(format!("{}: {e}", path.display()));
            w.write_record(header).map_err(csv_err)?;
            for row in rows {
                w.serialize(row).map_err(csv_err)?;
            }
            w.flush().map_err(io)?;
        }
        fs::write(&path, buf).map_err(io)?;
        Ok(path)
    }
}
