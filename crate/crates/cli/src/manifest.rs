use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use redupgan::Error;

use crate::error::CliResult;
use crate::experiment::{ExperimentConfig, FILE_NAME};

pub const FILE: &str = "run_manifest.json";

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub version: &'static str,
    pub seed: u64,
    pub config_sha256: String,
    /// `(path, sha256)` of every input file.
    pub inputs: Vec<(String, String)>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&std::fs::read(path).map_err(|e| Error::io(path, e))?))
}

/// Writes `experiment.cfg` and `run_manifest.json` into `out`.
pub fn write(out: &Path, command: &str, cfg: &ExperimentConfig, inputs: &[&Path]) -> CliResult<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let text = cfg.render();
    let cfg_path = out.join(FILE_NAME);
    std::fs::write(&cfg_path, &text).map_err(|e| Error::io(&cfg_path, e))?;
    let inputs = inputs
        .iter()
        .map(|p| Ok((p.display().to_string(), file_sha256(p)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let m = RunManifest {
        command: command.to_string(),
        argv: std::env::args().collect(),
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_sha256: sha256_hex(text.as_bytes()),
        inputs,
    };
    let path = out.join(FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&m).map_err(Error::from)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(())
}
