use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{ExperimentConfig, RunError};

/// One named assertion of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        }
    }
}

/// A file to be written under the output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputFile {
    pub name: String,
    pub contents: String,
}

/// Everything an experiment produces, before it touches the disk.
#[derive(Debug, Clone)]
pub struct Execution {
    pub files: Vec<OutputFile>,
    pub checks: Vec<Check>,
    pub summary: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub version: String,
    pub wall_time_seconds: f64,
    pub checks: Vec<Check>,
    pub outputs: Vec<OutputDigest>,
    pub summary: serde_json::Value,
}

impl RunManifest {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Comment block that opens every output file.
pub fn header(config: &ExperimentConfig, prefix: &str) -> String {
    let mut h = format!("{prefix} oriented-walk {}\n", env!("CARGO_PKG_VERSION"));
    for line in config.echo().lines() {
        h.push_str(prefix);
        h.push(' ');
        h.push_str(line);
        h.push('\n');
    }
    h
}

fn io_err(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(super) fn write(
    config: &ExperimentConfig,
    execution: Execution,
    wall_time_seconds: f64,
) -> Result<RunManifest, RunError> {
    std::fs::create_dir_all(&config.out).map_err(io_err(&config.out))?;
    let mut outputs = Vec::new();
    for file in &execution.files {
        let path = config.out.join(&file.name);
        std::fs::write(&path, &file.contents).map_err(io_err(&path))?;
        outputs.push(OutputDigest {
            sha256: hex::encode(Sha256::digest(file.contents.as_bytes())),
            path,
        });
    }
    let manifest = RunManifest {
        config: config.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds,
        checks: execution.checks,
        outputs,
        summary: execution.summary,
    };
    let path = config.out.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}
