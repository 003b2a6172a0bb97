use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

/// Output directory that records every file it writes. Files land under a
/// temporary name first and are renamed into place.
pub struct OutDir {
    root: PathBuf,
    written: Vec<FileRecord>,
}

impl OutDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutDir { root: root.to_path_buf(), written: Vec::new() })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let dest = self.root.join(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        {
            let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
            f.write_all(bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, &dest).with_context(|| format!("renaming into {}", dest.display()))?;
        self.written.retain(|r| r.path != name);
        self.written.push(FileRecord { path: name.to_string(), sha256: sha256_hex(bytes) });
        Ok(dest)
    }

    /// Render with `f` into memory, then write atomically.
    pub fn write_with(&mut self, name: &str, f: impl FnOnce(&mut Vec<u8>) -> driftctl::Result<()>) -> Result<PathBuf> {
        let mut buf = Vec::new();
        f(&mut buf)?;
        self.write(name, &buf)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn outputs(&self) -> Vec<FileRecord> {
        self.written.clone()
    }
}

/// Everything needed to re-run a command: the effective configuration
/// (after command-line overrides), the hashes of every input and output.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: u64,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub config: Option<Value>,
    pub overrides: Value,
    pub inputs: Vec<FileRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_sha256: Option<String>,
    pub outputs: Vec<FileRecord>,
    pub summary: Value,
}

impl Manifest {
    pub fn new(command: &str, seed: u64) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            seed,
            config_path: None,
            config_sha256: None,
            config: None,
            overrides: Value::Object(Default::default()),
            inputs: Vec::new(),
            model_sha256: None,
            outputs: Vec::new(),
            summary: Value::Null,
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<String> {
        let sha256 = sha256_file(path)?;
        self.inputs.push(FileRecord { path: path.display().to_string(), sha256: sha256.clone() });
        Ok(sha256)
    }

    /// Written last so that its presence marks a finished directory.
    pub fn finish(mut self, out: &mut OutDir) -> Result<()> {
        self.outputs = out.outputs();
        out.write_json("manifest.json", &self)?;
        Ok(())
    }
}
