use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use crate::Failure;

/// Six significant digits for terminal tables.
pub fn sig6(v: f64) -> String {
    if !v.is_finite() {
        return v.to_string();
    }
    if v == 0.0 {
        return "0".into();
    }
    let e = v.abs().log10().floor() as i32;
    if (-4..6).contains(&e) {
        format!("{:.*}", (5 - e) as usize, v)
    } else {
        format!("{v:.5e}")
    }
}

pub fn sig6_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".into(), sig6)
}

/// Collects the files a command writes and records them in `manifest.json`.
pub struct Outputs {
    dir: PathBuf,
    written: Vec<String>,
    started: Instant,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self, Failure> {
        fs::create_dir_all(dir).map_err(|e| Failure::Input(format!("cannot create output directory {}: {e}", dir.display())))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            started: Instant::now(),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.display().to_string());
        p
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), Failure> {
        let path = self.path(name);
        let mut text = serde_json::to_string_pretty(value).map_err(|e| Failure::Input(e.to_string()))?;
        text.push('\n');
        fs::write(&path, text).map_err(|e| write_error(&path, e))
    }

    pub fn csv(&mut self, name: &str, header: &[String], rows: &[Vec<String>]) -> Result<(), Failure> {
        let path = self.path(name);
        let mut w = csv::Writer::from_path(&path).map_err(|e| write_error(&path, e))?;
        w.write_record(header).map_err(|e| write_error(&path, e))?;
        for r in rows {
            w.write_record(r).map_err(|e| write_error(&path, e))?;
        }
        w.flush().map_err(|e| write_error(&path, e))
    }

    /// Writes `manifest.json` last so that it lists everything else.
    pub fn finish(mut self, command: &str, input: &str, seed: Option<u64>, config: Value) -> Result<(), Failure> {
        let manifest_path = self.dir.join("manifest.json");
        self.written.push(manifest_path.display().to_string());
        let manifest = serde_json::json!({
            "command": command,
            "input": input,
            "seed": seed,
            "config": config,
            "outputs": self.written,
            "wall_time_seconds": self.started.elapsed().as_secs_f64(),
        });
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| Failure::Input(e.to_string()))?;
        text.push('\n');
        fs::write(&manifest_path, text).map_err(|e| write_error(&manifest_path, e))
    }
}

fn write_error(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Input(format!("cannot write {}: {e}", path.display()))
}

/// Shortest text that reads back as the same number.
pub fn full(v: f64) -> String {
    v.to_string()
}
