use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::RunConfig;
use crate::seed::stream;
use crate::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_META_FILE: &str = "run_meta.json";

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::Usage(format!("not a file path: {}", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    result.map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut text = String::with_capacity(lines.iter().map(|l| l.len() + 1).sum());
    for l in lines {
        text.push_str(l);
        text.push('\n');
    }
    write_atomic(path, text.as_bytes())
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Format(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format(e.to_string()))?;
    write_atomic(path, &bytes)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct SeedInfo {
    pub master: u64,
    /// How sub-seeds are derived from the master seed.
    pub rule: String,
    pub streams: Vec<(String, u64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
pub struct Manifest {
    pub command: String,
    pub algorithm: String,
    pub road: u8,
    pub config_sha256: String,
    pub code_version: String,
    pub seeds: SeedInfo,
    pub config: RunConfig,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, artifacts: Vec<String>) -> Result<Self> {
        Ok(Manifest {
            command: command.into(),
            algorithm: cfg.algorithm.name().into(),
            road: cfg.road,
            config_sha256: sha256_hex(cfg.to_toml()?.as_bytes()),
            code_version: env!("CARGO_PKG_VERSION").into(),
            seeds: SeedInfo {
                master: cfg.seed,
                rule: "derive(master, stream, index) = splitmix64(splitmix64(splitmix64(master) ^ stream) ^ index)"
                    .into(),
                streams: vec![
                    ("episode".into(), stream::EPISODE),
                    ("agent".into(), stream::AGENT),
                    ("network".into(), stream::NETWORK),
                    ("policy".into(), stream::POLICY),
                    ("eval".into(), stream::EVAL),
                ],
            },
            config: cfg.clone(),
            artifacts,
        })
    }
}

fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Wall-clock bookkeeping kept out of the deterministic artifacts.
#[derive(Debug, Clone, Serialize)]
pub struct RunMeta {
    pub started_unix: f64,
    pub finished_unix: f64,
}

pub struct Clock(f64);

impl Clock {
    pub fn start() -> Self {
        Clock(unix_now())
    }

    pub fn finish(self, out: &Path) -> Result<()> {
        write_json(
            &out.join(RUN_META_FILE),
            &RunMeta {
                started_unix: self.0,
                finished_unix: unix_now(),
            },
        )
    }
}

pub fn relative(out: &Path, p: &Path) -> String {
    p.strip_prefix(out).unwrap_or(p).display().to_string()
}

pub fn ensure_dir(p: &Path) -> Result<PathBuf> {
    fs::create_dir_all(p).map_err(|e| Error::io(p, e))?;
    Ok(p.to_path_buf())
}
