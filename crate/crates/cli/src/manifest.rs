use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub id: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ArtifactInfo {
    pub file: String,
    pub module: String,
    pub operation: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub version: String,
    pub seed: u64,
    pub samples: usize,
    pub wall_clock_seconds: f64,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<ArtifactInfo>,
    pub config: RunConfig,
}

impl RunManifest {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

pub fn config_hash(cfg: &RunConfig) -> String {
    let digest = Sha256::digest(cfg.canonical_json().as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects the outputs of one command; everything reaches the disk in
/// [`Run::finish`], from a single thread.
pub struct Run {
    command: String,
    cfg: RunConfig,
    started: Instant,
    files: Vec<(ArtifactInfo, Vec<u8>)>,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
}

impl Run {
    pub fn new(command: &str, cfg: &RunConfig) -> Run {
        Run {
            command: command.to_string(),
            cfg: cfg.clone(),
            started: Instant::now(),
            files: vec![],
            checks: vec![],
            warnings: vec![],
        }
    }

    pub fn check(&mut self, id: impl Into<String>, pass: bool, detail: impl Into<String>) {
        self.checks.push(Check { id: id.into(), pass, detail: detail.into() });
    }

    pub fn warn(&mut self, msg: impl Into<String>) {
        self.warnings.push(msg.into());
    }

    pub fn artifact(&mut self, file: &str, module: &str, operation: &str, bytes: impl Into<Vec<u8>>) {
        let info = ArtifactInfo { file: file.to_string(), module: module.to_string(), operation: operation.to_string() };
        self.files.push((info, bytes.into()));
    }

    pub fn json(&mut self, file: &str, module: &str, operation: &str, value: &impl Serialize) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Runtime(e.to_string()))?;
        self.artifact(file, module, operation, text);
        Ok(())
    }

    pub fn dir(&self) -> PathBuf {
        self.cfg.output_dir.join(&self.command)
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let dir = self.dir();
        std::fs::create_dir_all(&dir).map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
        let mut artifacts = vec![];
        for (info, bytes) in self.files {
            write(&dir.join(&info.file), &bytes)?;
            artifacts.push(info);
        }
        let manifest = RunManifest {
            command: self.command,
            config_hash: config_hash(&self.cfg),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed: self.cfg.seed,
            samples: self.cfg.samples,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            checks: self.checks,
            warnings: self.warnings,
            artifacts,
            config: self.cfg,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
        write(&dir.join("manifest.json"), text.as_bytes())?;
        Ok(manifest)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}
