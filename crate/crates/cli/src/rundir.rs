//! Run directory: lockfile, archived config and stamped artifacts.
//!
//! Every JSON artifact carries `config_hash` and `seed` at the top level.
//! Binary artifacts get a `<file>.meta.json` sidecar with the same stamp.

use std::fs::{self, OpenOptions};
use std::io::{ErrorKind, Write};
use std::path::{Path, PathBuf};

use grbm_core::checkpoint::write_atomic;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};

use crate::config::RunConfig;
use crate::error::CliError;

/// Relative `--out` paths resolve under this directory when it is set.
pub const OUT_ROOT_ENV: &str = "GRBM_OUT_ROOT";

pub const LOCK_FILE: &str = ".lock";
pub const CONFIG_FILE: &str = "config.resolved";
pub const HASH_FILE: &str = "config.sha256";

pub fn resolve_out(out: &Path) -> PathBuf {
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if out.is_relative() && !root.is_empty() => PathBuf::from(root).join(out),
        _ => out.to_path_buf(),
    }
}

/// Exclusive hold on a run directory; released on drop.
#[derive(Debug)]
pub struct Lock {
    path: PathBuf,
}

impl Lock {
    pub fn acquire(dir: &Path) -> Result<Lock, CliError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Lock { path })
            }
            Err(e) if e.kind() == ErrorKind::AlreadyExists => Err(CliError::Other(format!(
                "{} is locked by another command ({}); remove the file if that process is gone",
                dir.display(),
                path.display()
            ))),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for Lock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug)]
pub struct RunDir {
    root: PathBuf,
    config: RunConfig,
    hash: String,
    _lock: Lock,
}

impl RunDir {
    /// Locks `root` and archives `config` there, replacing any previous one.
    pub fn fresh(root: &Path, config: &RunConfig) -> Result<RunDir, CliError> {
        let lock = Lock::acquire(root)?;
        let hash = config.hash();
        write_atomic(&root.join(CONFIG_FILE), config.render().as_bytes())?;
        write_atomic(&root.join(HASH_FILE), format!("{hash}\n").as_bytes())?;
        Ok(RunDir {
            root: root.to_path_buf(),
            config: config.clone(),
            hash,
            _lock: lock,
        })
    }

    /// Locks `root` and loads the config archived by an earlier command.
    pub fn existing(root: &Path) -> Result<RunDir, CliError> {
        let path = root.join(CONFIG_FILE);
        if !path.exists() {
            return Err(CliError::MissingArtifact(format!(
                "{} not found; run `grbm train` or `grbm pipeline` with --out {} first",
                path.display(),
                root.display()
            )));
        }
        let lock = Lock::acquire(root)?;
        let config = RunConfig::load(&path)?;
        Ok(RunDir {
            root: root.to_path_buf(),
            hash: config.hash(),
            config,
            _lock: lock,
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn hash(&self) -> &str {
        &self.hash
    }

    pub fn seed(&self) -> u64 {
        self.config.seed()
    }

    /// Identifier written into the checkpoint manifest.
    pub fn run_id(&self) -> String {
        format!("{}-seed{}", &self.hash[..16], self.seed())
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// `value` as a JSON object with the config hash and seed added.
    pub fn stamp<T: Serialize>(&self, value: &T) -> Value {
        let mut map = match serde_json::to_value(value).expect("artifact serializes") {
            Value::Object(map) => map,
            other => {
                let mut map = Map::new();
                map.insert("value".into(), other);
                map
            }
        };
        map.insert("config_hash".into(), Value::from(self.hash.as_str()));
        map.insert("seed".into(), Value::from(self.seed()));
        Value::Object(map)
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(&self.stamp(value)).expect("artifact serializes");
        text.push('\n');
        self.write_text(name, &text)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&path, text.as_bytes())?;
        Ok(())
    }

    /// Writes the stamp sidecar of a binary artifact.
    pub fn write_sidecar<T: Serialize>(&self, name: &str, extra: &T) -> Result<(), CliError> {
        self.write_json(&format!("{name}.meta.json"), extra)
    }

    /// Reads a stamped artifact written by `producer`, rejecting one from another config.
    pub fn read_json<T: DeserializeOwned>(&self, name: &str, producer: &str) -> Result<T, CliError> {
        let path = self.path(name);
        let missing = |why: String| {
            CliError::MissingArtifact(format!("{} {why}; run `grbm {producer}` first", path.display()))
        };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == ErrorKind::NotFound => return Err(missing("not found".into())),
            Err(e) => return Err(e.into()),
        };
        let value: Value =
            serde_json::from_slice(&bytes).map_err(|e| missing(format!("is unreadable ({e})")))?;
        if value.get("config_hash").and_then(Value::as_str) != Some(self.hash.as_str()) {
            return Err(missing("was produced under a different config".into()));
        }
        serde_json::from_value(value).map_err(|e| missing(format!("is malformed ({e})")))
    }
}
