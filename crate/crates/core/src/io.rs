//! Result persistence: atomic file writes, content hashes and run manifests.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const TOOL: &str = env!("CARGO_PKG_NAME");
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes through a sibling temporary file and a rename, so readers never
/// observe a half-written file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| Error::InvalidArgument(format!("not a file path: {}", path.display())))?;
    let tmp: PathBuf = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

/// In-memory set of output files, written only once everything succeeded.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Bundle {
    pub files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn add(&mut self, name: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.files.push((name.into(), bytes.into()));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.add(name, text);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&[u8]> {
        self.files.iter().find(|(n, _)| n == name).map(|(_, b)| b.as_slice())
    }

    pub fn names(&self) -> Vec<&str> {
        self.files.iter().map(|(n, _)| n.as_str()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub name: String,
    pub sha256: String,
    pub bytes: usize,
}

/// Provenance record written next to every result set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_seconds: f64,
    pub threads: usize,
    pub config: serde_json::Value,
    pub files: Vec<FileEntry>,
}

pub const MANIFEST_NAME: &str = "manifest.json";

impl Manifest {
    pub fn new(config: serde_json::Value, config_hash: String, seed: u64, wall: f64, bundle: &Bundle) -> Self {
        Self {
            tool: TOOL.into(),
            version: VERSION.into(),
            config_hash,
            seed,
            wall_time_seconds: wall,
            threads: rayon::current_num_threads(),
            config,
            files: bundle
                .files
                .iter()
                .map(|(name, b)| FileEntry {
                    name: name.clone(),
                    sha256: sha256_hex(b),
                    bytes: b.len(),
                })
                .collect(),
        }
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

/// Writes every file of `bundle` and then the manifest into `dir`.
pub fn write_bundle(dir: &Path, bundle: &Bundle, manifest: &Manifest) -> Result<()> {
    for (name, bytes) in &bundle.files {
        atomic_write(&dir.join(name), bytes)?;
    }
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    atomic_write(&dir.join(MANIFEST_NAME), text.as_bytes())
}

/// Files listed in a manifest whose content no longer matches its hash.
pub fn verify_bundle(dir: &Path, manifest: &Manifest) -> Result<Vec<String>> {
    let mut bad = Vec::new();
    for entry in &manifest.files {
        match fs::read(dir.join(&entry.name)) {
            Ok(b) if sha256_hex(&b) == entry.sha256 => {}
            _ => bad.push(entry.name.clone()),
        }
    }
    Ok(bad)
}

/// Shortest round-trip decimal representation, stable across runs.
pub fn fmt_f64(x: f64) -> String {
    if x.is_finite() {
        format!("{x:e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

/// CSV table with a fixed header.
#[derive(Clone, Debug, PartialEq)]
pub struct Csv {
    out: String,
    columns: usize,
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Self {
            out: format!("{}\n", header.join(",")),
            columns: header.len(),
        }
    }

    pub fn row(&mut self, cells: &[String]) {
        debug_assert_eq!(cells.len(), self.columns);
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.out.into_bytes()
    }
}
