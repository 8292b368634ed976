//! Run manifests: every command that writes files also records what it ran,
//! what it read (with digests), and what it produced, so the run can be
//! replayed byte-for-byte with `nbmf rerun`.

use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Canonical flag list with every default resolved; `rerun` replays
    /// `nbmf <command> <argv...>` verbatim.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub inputs: Vec<InputDigest>,
    pub outputs: Vec<String>,
    /// Informational only; never compared across runs.
    pub wall_time_seconds: f64,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let mut reader = BufReader::new(File::open(path).map_err(|e| {
        CliError::runtime(format!("cannot read {}: {e}", path.display()))
    })?);
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = reader.read(&mut buf).map_err(CliError::from_io)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(format!("{:x}", hasher.finalize()))
}

pub struct ManifestBuilder {
    command: String,
    argv: Vec<String>,
    seed: Option<u64>,
    inputs: Vec<InputDigest>,
    outputs: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(command: &str, argv: Vec<String>) -> Self {
        Self {
            command: command.to_string(),
            argv,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = Some(seed);
        self
    }

    pub fn input(mut self, path: &Path) -> Result<Self, CliError> {
        self.inputs.push(InputDigest {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(self)
    }

    pub fn output(mut self, path: &Path) -> Self {
        self.outputs.push(path.to_path_buf());
        self
    }

    pub fn write(self, manifest_path: &Path) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command,
            argv: self.argv,
            seed: self.seed,
            inputs: self.inputs,
            outputs: self
                .outputs
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            wall_time_seconds: self.started.elapsed().as_secs_f64(),
        };
        let mut file = File::create(manifest_path).map_err(CliError::from_io)?;
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::runtime(format!("manifest serialization failed: {e}")))?;
        file.write_all(text.as_bytes()).map_err(CliError::from_io)?;
        file.write_all(b"\n").map_err(CliError::from_io)?;
        Ok(())
    }
}

pub fn read_manifest(path: &Path) -> Result<RunManifest, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::usage(format!("cannot open manifest {}: {e}", path.display())))?;
    serde_json::from_reader(BufReader::new(file))
        .map_err(|e| CliError::usage(format!("malformed manifest {}: {e}", path.display())))
}
