//! Run manifests: everything needed to audit a run and to repeat it.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use wacm_core::imaging::write_atomic;
use wacm_core::sampler::SamplerConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: digest(&bytes),
        })
    }

    fn verify(&self) -> Result<()> {
        let now = Self::of(&self.path)?;
        if now.sha256 != self.sha256 {
            bail!(
                "{} changed since the manifest was written (sha256 {} vs {})",
                self.path.display(),
                now.sha256,
                self.sha256
            );
        }
        Ok(())
    }
}

pub fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Fully resolved arguments; feeding them back reproduces the run.
    pub args: serde_json::Value,
    pub seed: Option<u64>,
    pub config: Option<SamplerConfig>,
    pub config_file: Option<FileRecord>,
    pub schedule: Option<Vec<f64>>,
    pub model: Option<FileRecord>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    pub results: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, args: &impl Serialize) -> Result<Self> {
        Ok(Self {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            args: serde_json::to_value(args)?,
            seed: None,
            config: None,
            config_file: None,
            schedule: None,
            model: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            results: serde_json::Value::Null,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    /// Arguments of a recorded run of `command`, after checking that its
    /// inputs are unchanged.
    pub fn replay_args<A: serde::de::DeserializeOwned>(&self, command: &str) -> Result<A> {
        if self.command != command {
            bail!("manifest records a `{}` run, not `{command}`", self.command);
        }
        for f in self.inputs.iter().chain(&self.model) {
            f.verify()?;
        }
        serde_json::from_value(self.args.clone()).context("manifest arguments")
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    /// Runs `f` and records its wall-clock time under `phase`.
    pub fn timed<T>(&mut self, phase: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.insert(phase.to_string(), start.elapsed().as_secs_f64());
        out
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(digest(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn replay_rejects_changed_inputs() {
        let dir = tempfile::tempdir().unwrap();
        let f = dir.path().join("a.txt");
        std::fs::write(&f, "one").unwrap();
        let mut m = RunManifest::new("dwt", &serde_json::json!({})).unwrap();
        m.input(&f).unwrap();
        assert!(m.replay_args::<serde_json::Value>("dwt").is_ok());
        assert!(m.replay_args::<serde_json::Value>("idwt").is_err());
        std::fs::write(&f, "two").unwrap();
        assert!(m.replay_args::<serde_json::Value>("dwt").is_err());
    }
}
