//! `<command>.run.toml`: what a command read, what it wrote, and digests of both.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::{CmdResult, Failure};

pub fn file_name(command: &str) -> String {
    format!("{command}.run.toml")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    /// Digest of the configuration file, or of the primary input when there is none.
    pub config_digest: String,
    pub inputs: Vec<FileDigest>,
    /// Paths relative to the output directory.
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn digest_file(path: &Path) -> CmdResult<String> {
    let bytes = fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    Ok(sha256_hex(&bytes))
}

impl RunManifest {
    pub fn new(command: &str, config: &Path) -> CmdResult<Self> {
        Ok(RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_digest: digest_file(config)?,
            inputs: Vec::new(),
            outputs: Vec::new(),
        })
    }

    pub fn input(&mut self, path: &Path) -> CmdResult<()> {
        self.inputs.push(FileDigest { path: path.display().to_string(), sha256: digest_file(path)? });
        Ok(())
    }

    pub fn output(&mut self, out_dir: &Path, path: &Path) -> CmdResult<()> {
        let rel = path.strip_prefix(out_dir).unwrap_or(path);
        self.outputs.push(FileDigest { path: rel.display().to_string(), sha256: digest_file(path)? });
        Ok(())
    }

    pub fn write(&self, out_dir: &Path) -> CmdResult<PathBuf> {
        let text = toml::to_string(self).expect("manifest serializes");
        let path = out_dir.join(file_name(&self.command));
        fs::write(&path, text).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}
