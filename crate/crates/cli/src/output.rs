//! Run manifest and atomic file writes.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use cesdetect::montecarlo::{CSV_HEADER, ROC_HEADER, SCHEMA_VERSION};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const CALIBRATION_HEADER: [&str; 5] =
    ["detector", "nominal_pfa", "empirical_threshold", "asymptotic_threshold", "relative_gap"];

pub fn version() -> String {
    match option_env!("CESDETECT_GIT_DESCRIBE") {
        Some(d) if !d.is_empty() => d.to_string(),
        _ => format!("v{}", env!("CARGO_PKG_VERSION")),
    }
}

/// SHA-256 over the config schema version and every CSV header.
pub fn schema_hash() -> String {
    let mut h = Sha256::new();
    h.update(format!("schema_version={SCHEMA_VERSION}\n"));
    for header in [&CSV_HEADER[..], &ROC_HEADER[..], &CALIBRATION_HEADER[..]] {
        h.update(header.join(","));
        h.update("\n");
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Running,
    Ok,
    Partial,
    Failed,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_path: Option<PathBuf>,
    pub output_dir: PathBuf,
    pub version: String,
    pub timestamp: String,
    pub seed: Option<u64>,
    pub workers: usize,
    pub schema_hash: String,
    pub status: Status,
    pub wall_time_s: Option<f64>,
    pub message: Option<String>,
    pub files: Vec<String>,
}

/// Output directory plus the manifest that tracks what was written to it.
pub struct RunDir {
    dir: PathBuf,
    pub manifest: RunManifest,
}

impl RunDir {
    /// Creates the directory and writes the manifest with status `running`.
    pub fn create(dir: &Path, subcommand: &str, config_path: Option<&Path>, seed: Option<u64>, workers: usize) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let manifest = RunManifest {
            subcommand: subcommand.into(),
            config_path: config_path.map(Path::to_path_buf),
            output_dir: dir.to_path_buf(),
            version: version(),
            timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            seed,
            workers,
            schema_hash: schema_hash(),
            status: Status::Running,
            wall_time_s: None,
            message: None,
            files: Vec::new(),
        };
        let run = Self { dir: dir.to_path_buf(), manifest };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> io::Result<()> {
        let json = serde_json::to_vec_pretty(&self.manifest).map_err(io::Error::other)?;
        write_atomic(&self.dir.join("manifest.json"), &json)
    }

    /// Writes `name` through a temporary file and records it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> io::Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.manifest.files.push(name.to_string());
        Ok(())
    }

    pub fn finish(mut self, status: Status, wall_time_s: Option<f64>, message: Option<String>) -> io::Result<()> {
        self.manifest.status = status;
        self.manifest.wall_time_s = wall_time_s;
        self.manifest.message = message;
        self.write_manifest()
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)
}
