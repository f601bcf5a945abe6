//! Provenance header embedded in every artifact: command, config hash,
//! input digests, seeds and output paths.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::MANIFEST_MARK;
use crate::error::{Error, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// SHA-256 of the JSON serialization of `config`.
pub fn config_hash<T: Serialize>(config: &T) -> Result<String> {
    let json = serde_json::to_vec(config).map_err(|e| Error::Serde(e.to_string()))?;
    Ok(sha256_hex(&json))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub inputs: Vec<InputDigest>,
    pub seeds: Vec<u64>,
    pub outputs: Vec<PathBuf>,
}

impl RunManifest {
    pub fn new(command: impl Into<String>, config_hash: impl Into<String>, seeds: Vec<u64>) -> Self {
        RunManifest {
            command: command.into(),
            config_hash: config_hash.into(),
            seeds,
            ..Default::default()
        }
    }

    /// Records `path` with its current digest.
    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let sha256 = file_digest(path)?;
        self.inputs.push(InputDigest {
            path: path.to_path_buf(),
            sha256,
        });
        Ok(())
    }

    pub fn add_output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    /// Fails if any input changed since it was recorded.
    pub fn verify_inputs(&self) -> Result<()> {
        for input in &self.inputs {
            let now = file_digest(&input.path)?;
            if now != input.sha256 {
                return Err(Error::InvalidArgument(format!(
                    "{} changed during the run (digest {} != {})",
                    input.path.display(),
                    now,
                    input.sha256
                )));
            }
        }
        Ok(())
    }

    /// `#%<TAB>key<TAB>value` lines.
    pub fn lines(&self) -> Vec<String> {
        let mut out = vec![
            format!("{MANIFEST_MARK}\tcommand\t{}", self.command.replace(['\t', '\n'], " ")),
            format!("{MANIFEST_MARK}\tconfig_sha256\t{}", self.config_hash),
        ];
        for input in &self.inputs {
            out.push(format!("{MANIFEST_MARK}\tinput\t{}\t{}", input.path.display(), input.sha256));
        }
        let seeds: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
        out.push(format!("{MANIFEST_MARK}\tseeds\t{}", seeds.join(",")));
        for output in &self.outputs {
            out.push(format!("{MANIFEST_MARK}\toutput\t{}", output.display()));
        }
        out
    }

    /// The manifest lines followed by `body`.
    pub fn wrap(&self, body: &str) -> String {
        let mut out = self.lines().join("\n");
        out.push('\n');
        out.push_str(body);
        out
    }
}
