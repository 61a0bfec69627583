//! Output directory handling and the per-run `run.json` record.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use mdr_core::ingest::atomic_write;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_FILE: &str = "run.json";

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Collects the files a command read and wrote, then writes `run.json`.
pub struct RunRecord {
    out: PathBuf,
    command: &'static str,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunRecord {
    pub fn new(out: &Path, command: &'static str) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(|e| CliError::Data(e.into()))?;
        Ok(Self {
            out: out.to_path_buf(),
            command,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Hashes an input file. Missing files are reported with their path.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let bytes = fs::read(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => CliError::Data(mdr_core::Error::MissingFile(path.to_path_buf())),
            _ => CliError::Data(e.into()),
        })?;
        self.inputs.insert(path.display().to_string(), sha256(&bytes));
        Ok(())
    }

    /// Atomically writes `bytes` to `<out>/<name>` and records its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        atomic_write(&self.path(name), bytes).map_err(CliError::Data)?;
        self.outputs.insert(name.to_string(), sha256(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.into()))?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Records a file some core routine already wrote under the output dir.
    pub fn written(&mut self, name: &str) -> Result<(), CliError> {
        let bytes = fs::read(self.path(name)).map_err(|e| CliError::Data(e.into()))?;
        self.outputs.insert(name.to_string(), sha256(&bytes));
        Ok(())
    }

    pub fn finish<T: Serialize>(mut self, config: &T) -> Result<(), CliError> {
        #[derive(Serialize)]
        struct Run<'a, T> {
            command: &'a str,
            version: &'a str,
            config: &'a T,
            inputs: &'a BTreeMap<String, String>,
            outputs: &'a BTreeMap<String, String>,
        }
        let outputs = std::mem::take(&mut self.outputs);
        let run = Run {
            command: self.command,
            version: env!("CARGO_PKG_VERSION"),
            config,
            inputs: &self.inputs,
            outputs: &outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&run).map_err(|e| CliError::Data(e.into()))?;
        bytes.push(b'\n');
        atomic_write(&self.path(RUN_FILE), &bytes).map_err(CliError::Data)
    }
}
