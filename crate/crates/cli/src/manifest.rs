use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Complete,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub experiment: String,
    pub config_hash: String,
    pub seed: u64,
    pub tool_version: String,
    pub status: RunStatus,
    /// Set when the run failed; outputs listed are then partial.
    pub error: Option<String>,
    pub outputs: Vec<OutputFile>,
    pub wall_clock_secs: f64,
    /// The fully resolved config, loadable with `--config` as is.
    pub config: ExperimentConfig,
}

/// Writes files into the output directory and records them.
#[derive(Debug)]
pub struct OutputDir {
    /// `None` discards writes.
    root: Option<PathBuf>,
    written: Vec<OutputFile>,
    started: Instant,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|source| CliError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        Ok(Self {
            root: Some(root.to_path_buf()),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    /// A sink for library callers that only want in-memory results.
    pub fn detached() -> Self {
        Self {
            root: None,
            written: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn root(&self) -> Option<&Path> {
        self.root.as_deref()
    }

    pub fn outputs(&self) -> &[OutputFile] {
        &self.written
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let Some(root) = &self.root else {
            return Ok(());
        };
        write_atomic(&root.join(name), bytes)?;
        self.written.retain(|o| o.path != name);
        self.written.push(OutputFile {
            path: name.to_string(),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    /// Writes the manifest last; it is itself not listed among the outputs.
    pub fn finish(
        self,
        config: &ExperimentConfig,
        result: &Result<()>,
    ) -> Result<RunManifest> {
        let root = self.root;
        let manifest = RunManifest {
            experiment: config
                .experiment
                .map(|k| k.to_string())
                .unwrap_or_default(),
            config_hash: config.hash(),
            seed: config.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            status: if result.is_ok() {
                RunStatus::Complete
            } else {
                RunStatus::Failed
            },
            error: result.as_ref().err().map(|e| e.to_string()),
            outputs: self.written,
            wall_clock_secs: self.started.elapsed().as_secs_f64(),
            config: config.clone(),
        };
        if let Some(root) = &root {
            let json = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
            write_atomic(&root.join(MANIFEST_FILE), &json)?;
        }
        Ok(manifest)
    }
}

/// Write to a sibling temporary file, then rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}
