use std::path::{Path, PathBuf};

use fleetgrid::corpus::ScenarioConfig;
use fleetgrid::{Error, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
struct FileEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Versions {
    fleetgrid: &'static str,
    manifest: u32,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    command: String,
    seed: u64,
    scale: f64,
    preset: Option<u8>,
    config: ScenarioConfig,
    inputs: Vec<FileEntry>,
    outputs: Vec<FileEntry>,
    versions: Versions,
}

fn digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(format!("{:x}", Sha256::digest(&bytes)))
}

fn entries(files: &[PathBuf], relative_to: Option<&Path>) -> Result<Vec<FileEntry>> {
    let mut out = Vec::new();
    for f in files {
        let shown = relative_to.and_then(|r| f.strip_prefix(r).ok()).unwrap_or(f);
        out.push(FileEntry {
            path: shown.to_string_lossy().replace('\\', "/"),
            sha256: digest(f)?,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Every regular file below `dir`, except an existing manifest.
pub fn files_below(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        let rd = std::fs::read_dir(&d).map_err(|e| Error::Io { path: d.clone(), source: e })?;
        for entry in rd {
            let p = entry.map_err(|e| Error::Io { path: d.clone(), source: e })?.path();
            if p.is_dir() {
                stack.push(p);
            } else if p.file_name().is_some_and(|n| n != "manifest.json") {
                out.push(p);
            }
        }
    }
    out.sort();
    Ok(out)
}

impl Manifest {
    pub fn new(command: &str, seed: u64, scale: f64, preset: Option<u8>, config: ScenarioConfig) -> Self {
        Manifest {
            command: command.to_string(),
            seed,
            scale,
            preset,
            config,
            inputs: Vec::new(),
            outputs: Vec::new(),
            versions: Versions {
                fleetgrid: env!("CARGO_PKG_VERSION"),
                manifest: 1,
            },
        }
    }

    /// Records input files by their path as given and their content hash.
    pub fn inputs(&mut self, files: &[PathBuf]) -> Result<()> {
        self.inputs = entries(files, None)?;
        Ok(())
    }

    /// Hashes every output below `out` and writes `out/manifest.json`.
    pub fn write(mut self, out: &Path) -> Result<()> {
        self.outputs = entries(&files_below(out)?, Some(out))?;
        let path = out.join("manifest.json");
        let text = serde_json::to_string_pretty(&self).map_err(|e| Error::InvalidInput(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })
    }
}
