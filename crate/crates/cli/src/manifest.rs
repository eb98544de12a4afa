//! Per-command run record: the effective config, content hashes of every
//! input and output file, and wall-clock timings. Written atomically so a
//! crashed run never leaves a truncated manifest behind.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};
use strand_core::Error;

use crate::config::RunConfig;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments beyond the config file itself.
    pub args: BTreeMap<String, String>,
    /// Stage name to wall-clock seconds.
    pub timings: BTreeMap<String, f64>,
    /// File path to SHA-256 of its content at read time.
    pub inputs: BTreeMap<String, String>,
    /// File path to SHA-256 of its content at write time.
    pub outputs: BTreeMap<String, String>,
    /// The fully resolved configuration the command ran with.
    pub config: RunConfig,
}

impl RunManifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            args: BTreeMap::new(),
            timings: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            config: config.clone(),
        }
    }

    pub fn arg(&mut self, key: &str, value: impl ToString) {
        self.args.insert(key.to_string(), value.to_string());
    }

    pub fn time(&mut self, stage: &str, seconds: f64) {
        self.timings.insert(stage.to_string(), seconds);
    }

    pub fn input(&mut self, path: &Path) -> Result<(), Error> {
        let digest = sha256_file(path)?;
        self.inputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), Error> {
        let digest = sha256_file(path)?;
        self.outputs.insert(path.display().to_string(), digest);
        Ok(())
    }

    /// Write `<dir>/<command>_manifest.toml` via a temp file and rename.
    pub fn write(&self, dir: &Path) -> Result<PathBuf, Error> {
        let text = toml::to_string_pretty(self)
            .map_err(|e| Error::Usage(format!("manifest serialization: {e}")))?;
        let path = dir.join(format!("{}_manifest.toml", self.command));
        let tmp = dir.join(format!(".{}_manifest.toml.tmp", self.command));
        std::fs::write(&tmp, text)?;
        std::fs::rename(&tmp, &path)?;
        Ok(path)
    }
}

pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    Ok(format!("{:x}", hasher.finalize()))
}
