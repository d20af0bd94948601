use std::io::Read;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::PipelineError;

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Inputs: as resolved from the config. Outputs: relative to the
    /// manifest's directory.
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub manifest_version: u32,
    pub command: String,
    pub tool_version: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub config: serde_json::Value,
    pub seeds: Vec<(String, u64)>,
}

pub fn sha256_file(path: &Path) -> Result<String, PipelineError> {
    let mut file = std::fs::File::open(path).map_err(|e| PipelineError::Input {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = file.read(&mut buf).map_err(|e| PipelineError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

impl Manifest {
    pub fn new(command: &str, config: serde_json::Value) -> Self {
        Manifest {
            manifest_version: MANIFEST_VERSION,
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            inputs: vec![],
            outputs: vec![],
            config,
            seeds: vec![],
        }
    }

    /// Inputs are recorded by absolute path, or relative to the manifest
    /// when they live beside it.
    pub fn input(&mut self, path: &Path) -> Result<(), PipelineError> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileHash {
            path: std::fs::canonicalize(path).unwrap_or_else(|_| path.to_path_buf()),
            sha256,
        });
        Ok(())
    }

    pub fn output(&mut self, dir: &Path, name: &Path) -> Result<(), PipelineError> {
        self.outputs.push(FileHash {
            path: name.to_path_buf(),
            sha256: sha256_file(&dir.join(name))?,
        });
        Ok(())
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        let mut m = self.clone();
        if let Some(dir) = path.parent().and_then(|d| std::fs::canonicalize(d).ok()) {
            for f in &mut m.inputs {
                if let Ok(rel) = f.path.strip_prefix(&dir) {
                    f.path = rel.to_path_buf();
                }
            }
        }
        let mut text = serde_json::to_string_pretty(&m).expect("manifest serializes");
        text.push('\n');
        std::fs::write(path, text).map_err(|source| PipelineError::Output {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn read(path: &Path) -> Result<Manifest, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Input {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        serde_json::from_str(&text).map_err(|e| PipelineError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }
}

/// Recomputes every recorded hash. Returns the manifest on success.
pub fn verify_manifest(path: &Path) -> Result<Manifest, PipelineError> {
    let manifest = Manifest::read(path)?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let check = |f: &FileHash, full: PathBuf| -> Result<(), PipelineError> {
        let actual = sha256_file(&full).map_err(|e| PipelineError::Manifest {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if actual != f.sha256 {
            return Err(PipelineError::Manifest {
                path: path.to_path_buf(),
                message: format!("{} changed (recorded {}, found {actual})", full.display(), f.sha256),
            });
        }
        Ok(())
    };
    for f in &manifest.inputs {
        check(f, dir.join(&f.path))?;
    }
    for f in &manifest.outputs {
        check(f, dir.join(&f.path))?;
    }
    Ok(manifest)
}
