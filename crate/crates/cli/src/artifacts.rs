//! Versioned output directories and the run manifest.
//!
//! Every run writes into a fresh `NNN`-suffixed directory so reruns never
//! silently overwrite, and every artifact path is declared in
//! `manifest.json`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliResult;

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub artifacts: Vec<String>,
}

pub struct RunDir {
    root: PathBuf,
    command: String,
    artifacts: Vec<String>,
}

impl RunDir {
    /// Create `{base}/{prefix}_NNN` with the smallest unused counter.
    pub fn create(base: &Path, prefix: &str, command: &str) -> CliResult<Self> {
        fs::create_dir_all(base)?;
        for counter in 1..10_000u32 {
            let candidate = base.join(format!("{}_{:03}", prefix, counter));
            if !candidate.exists() {
                fs::create_dir(&candidate)?;
                return Ok(RunDir {
                    root: candidate,
                    command: command.to_string(),
                    artifacts: Vec::new(),
                });
            }
        }
        Err(crate::CliError::Other(format!(
            "no free run directory under {}",
            base.display()
        )))
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Declare and return an artifact path inside the run directory.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.root.join(name)
    }

    pub fn write_manifest(&self) -> CliResult<()> {
        let manifest = Manifest {
            command: self.command.clone(),
            artifacts: self.artifacts.clone(),
        };
        let path = self.root.join("manifest.json");
        fs::write(&path, serde_json::to_string_pretty(&manifest).expect("serializable"))?;
        Ok(())
    }
}
