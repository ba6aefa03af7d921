//! Artifact files written by `run` and read back by `summarize`.

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// One computed number. Wallclock times live in `timings.json` so that
/// `results.json` is byte-identical across reruns of exact suites.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Record {
    pub model: String,
    pub rho: Option<f64>,
    #[serde(rename = "L")]
    pub l: Option<u64>,
    pub d: usize,
    pub quantity: String,
    pub value: f64,
    pub residual: Option<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Timing {
    pub step: String,
    pub wallclock: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Invariant {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub kind: String,
    pub model: String,
    pub pass: bool,
    pub invariants: Vec<Invariant>,
    pub artifacts: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";
pub const RESULTS: &str = "results.json";
pub const TIMINGS: &str = "timings.json";
pub const FAILURES: &str = "failures.json";

/// Collects everything an experiment produces before it is flushed to disk.
pub struct Sink {
    pub model: String,
    pub d: usize,
    pub records: Vec<Record>,
    pub invariants: Vec<Invariant>,
    pub timings: Vec<Timing>,
    /// Extra files: name and contents.
    pub files: Vec<(String, Vec<u8>)>,
}

impl Sink {
    pub fn new(model: String, d: usize) -> Self {
        Sink { model, d, records: Vec::new(), invariants: Vec::new(), timings: Vec::new(), files: Vec::new() }
    }

    pub fn record(&mut self, rho: Option<f64>, l: Option<u64>, quantity: impl Into<String>, value: f64, residual: Option<f64>) {
        self.records.push(Record { model: self.model.clone(), rho, l, d: self.d, quantity: quantity.into(), value, residual });
    }

    pub fn check(&mut self, name: impl Into<String>, pass: bool, detail: impl Into<String>) {
        let inv = Invariant { name: name.into(), pass, detail: detail.into() };
        log::info!("{} {}: {}", if inv.pass { "PASS" } else { "FAIL" }, inv.name, inv.detail);
        self.invariants.push(inv);
    }

    pub fn time<T>(&mut self, step: impl Into<String>, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.timings.push(Timing { step: step.into(), wallclock: start.elapsed().as_secs_f64() });
        out
    }

    pub fn file(&mut self, name: impl Into<String>, contents: Vec<u8>) {
        self.files.push((name.into(), contents));
    }

    pub fn csv<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        self.file(name, w.into_inner().context("flushing csv")?);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.file(name, bytes);
        Ok(())
    }

    pub fn pass(&self) -> bool {
        self.invariants.iter().all(|i| i.pass)
    }

    /// Write every artifact into `dir` and return the manifest.
    pub fn flush(mut self, kind: &str, dir: &Path) -> Result<Manifest> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let records = std::mem::take(&mut self.records);
        self.json(RESULTS, &records)?;
        let timings = std::mem::take(&mut self.timings);
        self.json(TIMINGS, &timings)?;
        let failed: Vec<&Invariant> = self.invariants.iter().filter(|i| !i.pass).collect();
        let failures = if failed.is_empty() { None } else { Some(serde_json::to_vec_pretty(&failed)?) };
        let stale = dir.join(FAILURES);
        if stale.exists() {
            fs::remove_file(&stale)?;
        }
        if let Some(mut f) = failures {
            f.push(b'\n');
            self.file(FAILURES, f);
        }
        let mut artifacts: Vec<String> = self.files.iter().map(|f| f.0.clone()).collect();
        artifacts.push(MANIFEST.into());
        artifacts.sort();
        let manifest = Manifest { kind: kind.into(), model: self.model.clone(), pass: self.pass(), invariants: self.invariants.clone(), artifacts };
        for (name, bytes) in &self.files {
            write(&dir.join(name), bytes)?;
        }
        let mut m = serde_json::to_vec_pretty(&manifest)?;
        m.push(b'\n');
        write(&dir.join(MANIFEST), &m)?;
        Ok(manifest)
    }
}

fn write(path: &PathBuf, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}
