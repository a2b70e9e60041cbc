//! Reproducible file-based pipeline: every stage reads artifacts from
//! directories written by earlier stages and writes its own directory with a
//! `manifest.json` recording the tool version and a hash of the configuration.

mod discover;
mod evaluate;
mod preprocess;
mod report;
mod simulate;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub use discover::{
    read_discovery, read_tokens, run_discover, ContextSource, DiscoverConfig, DiscoverMethod, Discovery, DiscoverySummary,
};
pub use evaluate::{run_evaluate, EvalMethod, EvaluateConfig, EvaluateOutput, RealEvalConfig};
pub use preprocess::{read_segments, run_preprocess, PreprocessConfig};
pub use report::report;
pub use simulate::{run_simulate, SimulateConfig};

pub const TOOL_NAME: &str = "motif-forge";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MANIFEST_FILE: &str = "manifest.json";
pub const CACHE_ENV: &str = "MOTIF_FORGE_CACHE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_hash: String,
    pub config: serde_json::Value,
}

/// Hex SHA-256 of the canonical JSON form of `config` (object keys sorted).
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let canonical = serde_json::to_string(&serde_json::to_value(config)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

pub fn manifest_for<T: Serialize>(command: &str, config: &T) -> Result<Manifest> {
    Ok(Manifest {
        tool: TOOL_NAME.into(),
        version: TOOL_VERSION.into(),
        command: command.into(),
        config_hash: config_hash(config)?,
        config: serde_json::to_value(config)?,
    })
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    read_json(&dir.join(MANIFEST_FILE))
}

/// Claims `dir` for a run. An existing directory is accepted only if it is
/// empty or was produced by the same command with the same configuration.
pub fn prepare_output_dir(dir: &Path, manifest: &Manifest) -> Result<()> {
    if dir.exists() {
        let mpath = dir.join(MANIFEST_FILE);
        if mpath.exists() {
            let old = read_manifest(dir)?;
            if old.command != manifest.command || old.config_hash != manifest.config_hash {
                return Err(Error::Config(format!(
                    "{} already holds `{}` output with config hash {}; refusing to write config hash {}",
                    dir.display(),
                    old.command,
                    &old.config_hash[..12.min(old.config_hash.len())],
                    &manifest.config_hash[..12]
                )));
            }
        } else if fs::read_dir(dir).map_err(|e| Error::io(dir, e))?.next().is_some() {
            return Err(Error::Config(format!(
                "{} is not empty and has no {MANIFEST_FILE}; refusing to write into it",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(&dir.join(MANIFEST_FILE), manifest)
}

/// Default output directory `<cache>/<command>-<hash prefix>`, where the cache
/// root is `$MOTIF_FORGE_CACHE` or `.motif-forge-cache`.
pub fn default_output_dir(command: &str, hash: &str) -> PathBuf {
    let root = std::env::var_os(CACHE_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(".motif-forge-cache"));
    root.join(format!("{command}-{}", &hash[..12.min(hash.len())]))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_bytes(path, text.as_bytes())
}

/// Reads JSON; a missing file is a [`Error::MissingArtifact`].
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Serde(format!("{}: {e}", path.display())))
}

/// Parses a TOML or JSON (by extension) configuration document.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::Config(format!("config file {} does not exist", path.display())));
    }
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
