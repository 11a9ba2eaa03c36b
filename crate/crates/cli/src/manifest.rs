//! Run manifests: which command ran, on what inputs, producing what.

use condrec_core::hash::Fnv1a64;
use serde::Serialize;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub fnv1a64: String,
}

/// Written atomically at the end of every run.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    pub wall_ms: u64,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> std::io::Result<()> {
        let mut file = std::fs::File::open(path)?;
        let mut hasher = Fnv1a64::new();
        let mut buffer = [0u8; 64 * 1024];
        loop {
            let n = file.read(&mut buffer)?;
            if n == 0 {
                break;
            }
            hasher.update(&buffer[..n]);
        }
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            fnv1a64: format!("{:016x}", hasher.finish()),
        });
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Write `manifest.json` under `out_dir` via a temp file and rename.
    pub fn write(self, out_dir: &Path) -> std::io::Result<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: self.config,
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_ms: self.started.elapsed().as_millis() as u64,
        };
        let body = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let final_path = out_dir.join("manifest.json");
        let tmp_path = out_dir.join("manifest.json.tmp");
        std::fs::write(&tmp_path, body)?;
        std::fs::rename(&tmp_path, &final_path)?;
        Ok(final_path)
    }
}

/// Atomic write helper for primary outputs.
pub fn write_atomic(path: &Path, contents: &str) -> std::io::Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("out")
    ));
    std::fs::write(&tmp, contents)?;
    std::fs::rename(&tmp, path)
}
