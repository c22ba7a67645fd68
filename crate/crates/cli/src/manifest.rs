//! Append-only run records: one `[run]` block of key=value lines per
//! invocation, written next to the command's outputs.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use sha2::{Digest, Sha256};

use crate::CliError;

pub fn digest_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub struct Manifest {
    path: PathBuf,
    lines: Vec<(String, String)>,
    started: Instant,
}

impl Manifest {
    /// Records for `command`, to be appended to `path`.
    pub fn new(path: impl Into<PathBuf>, command: &str) -> Self {
        let mut m = Manifest {
            path: path.into(),
            lines: Vec::new(),
            started: Instant::now(),
        };
        m.set("command", command);
        m
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.lines.push((key.to_string(), value.to_string()));
    }

    pub fn input(&mut self, name: &str, path: &Path) -> Result<(), CliError> {
        self.set(&format!("input.{name}"), path.display());
        self.set(&format!("input.{name}.sha256"), digest_file(path)?);
        Ok(())
    }

    pub fn output(&mut self, name: &str, path: &Path) {
        self.set(&format!("output.{name}"), path.display());
    }

    pub fn config(&mut self, kv: &str) {
        for line in kv.lines() {
            if let Some((k, v)) = line.split_once('=') {
                self.set(&format!("config.{k}"), v);
            }
        }
    }

    pub fn write(mut self) -> Result<PathBuf, CliError> {
        let secs = self.started.elapsed().as_secs_f64();
        self.set("wall_time_s", format!("{secs:.3}"));
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        let mut block = String::from("[run]\n");
        for (k, v) in &self.lines {
            block.push_str(&format!("{k}={v}\n"));
        }
        block.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| CliError::io(&self.path, e))?;
        f.write_all(block.as_bytes()).map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

/// `<output>.manifest`, beside the output it describes.
pub fn beside(output: &Path) -> PathBuf {
    let mut name = output.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest");
    output.with_file_name(name)
}
