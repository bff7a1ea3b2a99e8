//! Replay manifests: `key=value` lines describing a run.
//!
//! Lines starting with `timing.` vary between runs; every other line is a
//! pure function of the inputs and settings.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

pub struct Manifest {
    entries: Vec<(String, String)>,
    timings: Vec<(String, f64)>,
    stage: Option<(String, Instant)>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        let mut m = Self {
            entries: Vec::new(),
            timings: Vec::new(),
            stage: None,
        };
        m.set("command", command);
        m.set("version", env!("CARGO_PKG_VERSION"));
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        let value = value.to_string().replace('\n', " ");
        match self.entries.iter_mut().find(|(k, _)| k == key) {
            Some(entry) => entry.1 = value,
            None => self.entries.push((key.to_string(), value)),
        }
    }

    pub fn hash_input(&mut self, key: &str, path: &Path) -> Result<()> {
        let digest = hash_path(path)?;
        self.set(&format!("input.{key}"), path.display());
        self.set(&format!("sha256.{key}"), digest);
        Ok(())
    }

    /// Closes the running stage, if any, and starts timing `name`.
    pub fn stage(&mut self, name: &str) {
        self.finish_stage();
        self.stage = Some((name.to_string(), Instant::now()));
    }

    fn finish_stage(&mut self) {
        if let Some((name, start)) = self.stage.take() {
            self.timings.push((name, start.elapsed().as_secs_f64()));
        }
    }

    pub fn render(&mut self) -> String {
        self.finish_stage();
        let mut out = String::new();
        for (k, v) in &self.entries {
            let _ = writeln!(out, "{k}={v}");
        }
        for (k, secs) in &self.timings {
            let _ = writeln!(out, "timing.{k}={secs:.6}");
        }
        out
    }

    pub fn write(&mut self, path: &Path) -> Result<()> {
        let text = self.render();
        fs::write(path, text).with_context(|| format!("writing manifest {}", path.display()))
    }
}

/// Manifest location for an output: inside it for directories, next to it
/// for files.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("manifest.txt")
    } else {
        let mut name = out.as_os_str().to_owned();
        name.push(".manifest.txt");
        PathBuf::from(name)
    }
}

/// SHA-256 of a file, or of a directory's regular files in name order
/// (each contributing its name, length and bytes).
pub fn hash_path(path: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .with_context(|| format!("listing {}", path.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        files.sort();
        for file in files {
            let bytes = fs::read(&file).with_context(|| format!("reading {}", file.display()))?;
            let name = file.file_name().unwrap_or_default().to_string_lossy().into_owned();
            hasher.update(name.as_bytes());
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(&bytes);
        }
    } else {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        hasher.update(&bytes);
    }
    Ok(format!("{:x}", hasher.finalize()))
}
