//! Output bundles: every file is written to a temporary name and renamed into
//! place, with the manifest last.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use semiblind::io::write_matrix;
use semiblind::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

pub struct Bundle {
    files: Vec<(String, Vec<u8>)>,
}

impl Bundle {
    pub fn new() -> Self {
        Self { files: Vec::new() }
    }

    pub fn matrix(&mut self, name: &str, m: &DMatrix<f64>) -> Result<()> {
        let mut buf = Vec::new();
        write_matrix(&mut buf, m)?;
        self.files.push((name.into(), buf));
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut buf = serde_json::to_vec_pretty(value)?;
        buf.push(b'\n');
        self.files.push((name.into(), buf));
        Ok(())
    }

    pub fn bytes(&mut self, name: &str, data: Vec<u8>) {
        self.files.push((name.into(), data));
    }

    pub fn names(&self) -> Vec<String> {
        self.files.iter().map(|(n, _)| n.clone()).collect()
    }

    /// Writes every file and then `manifest.json`. Wall-clock time is the only
    /// manifest field that varies between identical runs.
    pub fn write(self, out: &Path, mut manifest: Manifest) -> Result<()> {
        fs::create_dir_all(out)?;
        manifest.outputs = self.names();
        for (name, data) in &self.files {
            write_atomic(&out.join(name), data)?;
        }
        let mut doc = serde_json::to_vec_pretty(&manifest.to_json())?;
        doc.push(b'\n');
        write_atomic(&out.join("manifest.json"), &doc)
    }
}

fn write_atomic(path: &Path, data: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    fs::write(&tmp, data)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

pub struct Manifest {
    pub command: &'static str,
    pub seed: Option<u64>,
    pub config: Value,
    pub inputs: Value,
    pub result: Value,
    pub outputs: Vec<String>,
    pub started: Instant,
}

impl Manifest {
    pub fn new(command: &'static str, seed: Option<u64>, config: impl Serialize) -> Result<Self> {
        Ok(Self {
            command,
            seed,
            config: serde_json::to_value(config)?,
            inputs: json!({}),
            result: json!({}),
            outputs: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, key: &str, path: &Path) {
        self.inputs[key] = json!(path.display().to_string());
    }

    fn to_json(&self) -> Value {
        json!({
            "command": self.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "config": self.config,
            "inputs": self.inputs,
            "outputs": self.outputs,
            "result": self.result,
            "wall_clock_seconds": self.started.elapsed().as_secs_f64(),
        })
    }
}

pub fn require_out(out: &Option<PathBuf>) -> Result<&Path> {
    out.as_deref().ok_or_else(|| Error::InvalidArgument("--out is required for this command".into()))
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}
