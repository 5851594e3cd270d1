use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use dolly_core::config::RunConfig;
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Record of one command invocation, written into its output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Command-line arguments without the program name and `--out`.
    pub args: Vec<String>,
    pub seeds: Vec<u64>,
    pub code_version: String,
    pub output_dir: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    /// Fully resolved configuration after profile, file and flag merging.
    pub config: RunConfig,
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let text = toml::to_string(self).context("serialising manifest")?;
        let path = dir.join(MANIFEST_FILE);
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = if dir.is_dir() { dir.join(MANIFEST_FILE) } else { dir.to_path_buf() };
        let text = std::fs::read_to_string(&path).map_err(|e| dolly_core::Error::io(&path, e))?;
        toml::from_str(&text).map_err(|e| dolly_core::Error::Config(format!("{}: {e}", path.display())).into())
    }
}

/// Drops `--out <dir>` / `--out=<dir>` from an argument list.
pub fn strip_out(args: &[String]) -> Vec<String> {
    let mut out = Vec::with_capacity(args.len());
    let mut skip = false;
    for a in args {
        if skip {
            skip = false;
            continue;
        }
        if a == "--out" {
            skip = true;
            continue;
        }
        if a.starts_with("--out=") {
            continue;
        }
        out.push(a.clone());
    }
    out
}
