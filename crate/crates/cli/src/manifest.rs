use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use vrfam_core::config::KeyValues;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Serialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

pub fn digest_file(path: &Path) -> Result<FileDigest> {
    let mut f = fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    let mut bytes = 0u64;
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(FileDigest { path: path.to_path_buf(), bytes, sha256: format!("{:x}", hasher.finalize()) })
}

/// Record of one command invocation, written before work starts and
/// rewritten when it ends.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub status: String,
    pub config_hash: String,
    /// Fully resolved settings; the same pairs are in `config.txt`.
    pub config: BTreeMap<String, String>,
    pub inputs: Vec<FileDigest>,
    pub artifacts: Vec<FileDigest>,
    pub started_at: String,
    pub finished_at: Option<String>,
    /// Wall-clock seconds per phase.
    pub timings: BTreeMap<String, f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    #[serde(skip)]
    dir: PathBuf,
    #[serde(skip)]
    clock: Option<(String, Instant)>,
}

impl RunManifest {
    pub fn begin(dir: &Path, command: &str, config: &KeyValues, config_hash: &str, inputs: &[PathBuf]) -> Result<Self> {
        let m = Self {
            tool: "vrfam",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            status: "running".into(),
            config_hash: config_hash.to_string(),
            config: config.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
            inputs: inputs.iter().map(|p| digest_file(p)).collect::<Result<_>>()?,
            artifacts: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
            timings: BTreeMap::new(),
            warnings: Vec::new(),
            dir: dir.to_path_buf(),
            clock: None,
        };
        fs::write(dir.join(CONFIG_FILE), config.to_text())?;
        m.write()?;
        Ok(m)
    }

    /// Starts timing a phase, closing the previous one.
    pub fn phase(&mut self, name: &str) {
        self.end_phase();
        self.clock = Some((name.to_string(), Instant::now()));
    }

    fn end_phase(&mut self) {
        if let Some((name, t)) = self.clock.take() {
            self.timings.insert(name, t.elapsed().as_secs_f64());
        }
    }

    pub fn warn(&mut self, msg: String) {
        log::warn!("{msg}");
        self.warnings.push(msg);
    }

    pub fn write(&self) -> Result<()> {
        let path = self.dir.join(MANIFEST_FILE);
        fs::write(&path, serde_json::to_vec_pretty(self)?).with_context(|| format!("writing {}", path.display()))
    }

    pub fn finish(mut self, status: &str, artifacts: &[PathBuf]) -> Result<()> {
        self.end_phase();
        self.status = status.to_string();
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.artifacts = artifacts.iter().map(|p| digest_file(p)).collect::<Result<_>>()?;
        self.write()
    }
}

/// Creates `<out>/<name>` or, by default, `<out>/<UTC timestamp>-<hash>`
/// (suffixed when that already exists).
pub fn create_run_dir(out: &Path, name: Option<&str>, config_hash: &str) -> Result<PathBuf> {
    let base = match name {
        Some(n) => out.join(n),
        None => out.join(format!("{}-{}", chrono::Utc::now().format("%Y%m%dT%H%M%SZ"), &config_hash[..config_hash.len().min(12)])),
    };
    let mut dir = base.clone();
    let mut i = 1;
    while dir.exists() && name.is_none() {
        dir = PathBuf::from(format!("{}-{i}", base.display()));
        i += 1;
    }
    fs::create_dir_all(&dir).with_context(|| format!("creating run directory {}", dir.display()))?;
    Ok(dir)
}
