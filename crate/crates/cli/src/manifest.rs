use std::fs;
use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// Written as `manifest.json` next to every run's outputs.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// The effective configuration, overrides applied, as written to the output directory.
    pub config_file: String,
    pub config_sha256: String,
    pub seed: u64,
    pub snr_db: Vec<f64>,
    pub methods: Vec<String>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &'static str, config_text: &str, seed: u64, snr_db: Vec<f64>, methods: Vec<String>) -> Self {
        Manifest {
            tool: "ncdoa",
            version: env!("CARGO_PKG_VERSION"),
            command,
            config_file: "config.toml".into(),
            config_sha256: sha256_hex(config_text),
            seed,
            snr_db,
            methods,
            artifacts: Vec::new(),
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        fs::write(dir.join("manifest.json"), text + "\n")
    }
}

pub fn sha256_hex(text: &str) -> String {
    format!("{:x}", Sha256::digest(text.as_bytes()))
}
