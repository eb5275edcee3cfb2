//! Layered run configuration: built-in defaults, then an optional TOML or
//! JSON file, then command-line flags. Unknown keys are rejected at every
//! layer.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

/// Relative `--out` paths are placed under this directory when it is set.
pub const OUT_ROOT_ENV: &str = "FRAGVQA_OUT_ROOT";
pub const EFFECTIVE_CONFIG_FILE: &str = "effective_config.json";

pub struct Resolved<T> {
    pub config: T,
    pub value: Value,
    /// SHA-256 of the canonical (sorted-key, compact) JSON of `value`.
    pub hash: String,
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

fn read_file(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let parse_err = |message: String| CliError::Parse {
        path: path.to_path_buf(),
        message,
    };
    let value = match path.extension().and_then(|e| e.to_str()) {
        Some("toml") => {
            let t: toml::Value = toml::from_str(&text).map_err(|e| parse_err(e.to_string()))?;
            serde_json::to_value(t).map_err(|e| parse_err(e.to_string()))?
        }
        Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string()))?,
        _ => return Err(parse_err("config files must end in .toml or .json".into())),
    };
    if !value.is_object() {
        return Err(parse_err("top level must be a table of keys".into()));
    }
    Ok(value)
}

pub fn config_hash(value: &Value) -> String {
    hex::encode(Sha256::digest(value.to_string().as_bytes()))
}

/// Resolves defaults ← `file` ← `flags`. Flags that serialize to null were
/// not given and leave the lower layers alone.
pub fn resolve<T>(file: Option<&Path>, flags: &impl Serialize) -> Result<Resolved<T>>
where
    T: Serialize + DeserializeOwned + Default,
{
    let mut value = serde_json::to_value(T::default()).expect("defaults serialize");
    if let Some(path) = file {
        let layer = read_file(path)?;
        serde_json::from_value::<T>(layer.clone()).map_err(|e| CliError::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        merge(&mut value, layer);
    }
    let mut flags = serde_json::to_value(flags).expect("flags serialize");
    if let Value::Object(m) = &mut flags {
        m.retain(|_, v| !v.is_null());
    }
    merge(&mut value, flags);
    let config: T = serde_json::from_value(value.clone()).map_err(|e| CliError::Usage(e.to_string()))?;
    // re-serialize so the emitted form and hash are canonical
    let value = serde_json::to_value(&config).expect("config serializes");
    Ok(Resolved {
        hash: config_hash(&value),
        config,
        value,
    })
}

/// Logs the effective config on stderr and, given an output directory,
/// writes it next to the run's artifacts.
pub fn emit<T>(command: &str, resolved: &Resolved<T>, out: Option<&Path>) -> Result<()> {
    let record = serde_json::json!({
        "command": command,
        "config_hash": resolved.hash,
        "config": resolved.value,
    });
    eprintln!("effective config: {record}");
    if let Some(dir) = out {
        let path = dir.join(EFFECTIVE_CONFIG_FILE);
        let text = serde_json::to_string_pretty(&record).expect("serializable");
        std::fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    }
    Ok(())
}

/// Applies the output-root override, refuses a non-empty directory unless
/// `force`, and creates it.
pub fn prepare_out(out: &Path, force: bool) -> Result<PathBuf> {
    let out = match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if out.is_relative() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    };
    if out.exists() {
        let mut entries = std::fs::read_dir(&out).map_err(|e| CliError::io(&out, e))?;
        if entries.next().is_some() && !force {
            return Err(CliError::OutputExists(out));
        }
    }
    std::fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    Ok(out)
}

/// Wraps a report so it carries the hash of the config that produced it.
#[derive(Serialize)]
pub struct Artifact<'a, R: Serialize> {
    pub config_hash: &'a str,
    #[serde(flatten)]
    pub report: &'a R,
}

pub fn write_artifact<R: Serialize>(path: &Path, hash: &str, report: &R) -> Result<()> {
    let text = serde_json::to_string_pretty(&Artifact {
        config_hash: hash,
        report,
    })
    .expect("serializable");
    std::fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

pub fn artifact_json<R: Serialize>(hash: &str, report: &R) -> String {
    serde_json::to_string_pretty(&Artifact {
        config_hash: hash,
        report,
    })
    .expect("serializable")
}
