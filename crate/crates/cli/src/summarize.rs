//! Human-readable report of an artifact directory.

use crate::artifacts::{Manifest, MANIFEST};
use anyhow::{bail, Context, Result};
use kawasaki_core::hydro::{fit_slope, is_strictly_decreasing, sup_over_checkpoints, HydroRow};
use serde::Deserialize;
use std::fmt::Write;
use std::path::Path;

#[derive(Deserialize)]
struct DualityRow {
    #[serde(rename = "L")]
    l: u64,
    rho: f64,
    cbar: f64,
    cbar_star: f64,
    gap: f64,
}

pub fn summarize(dir: &Path) -> Result<String> {
    let manifest_path = dir.join(MANIFEST);
    if !manifest_path.exists() {
        bail!("no artifacts in {}", dir.display());
    }
    let manifest: Manifest = serde_json::from_slice(&std::fs::read(&manifest_path)?).context("reading manifest.json")?;
    let mut out = String::new();
    writeln!(out, "{} / {}: {}", manifest.kind, manifest.model, if manifest.pass { "PASS" } else { "FAIL" })?;
    let width = manifest.invariants.iter().map(|i| i.name.len()).max().unwrap_or(0);
    for inv in &manifest.invariants {
        writeln!(out, "  {:<4}  {:<width$}  {}", if inv.pass { "ok" } else { "FAIL" }, inv.name, inv.detail)?;
    }
    let duality = dir.join("duality.csv");
    if duality.exists() {
        writeln!(out, "\n  {:>5} {:>8} {:>12} {:>12} {:>12}", "L", "rho", "cbar", "cbar_star", "gap")?;
        for row in csv::Reader::from_path(&duality)?.deserialize() {
            let r: DualityRow = row?;
            writeln!(out, "  {:>5} {:>8.4} {:>12.6} {:>12.6} {:>12.4e}", r.l, r.rho, r.cbar, r.cbar_star, r.gap)?;
        }
    }
    let hydro = dir.join("hydro.csv");
    if hydro.exists() {
        let rows: Vec<HydroRow> = csv::Reader::from_path(&hydro)?.deserialize().collect::<Result<_, _>>()?;
        let sup = sup_over_checkpoints(&rows);
        writeln!(out, "\n  {:>6} {:>8} {:>14} {:>12}", "N", "t*", "sup E|err|^2", "stderr")?;
        for s in &sup {
            writeln!(out, "  {:>6} {:>8.4} {:>14.5e} {:>12.2e}", s.n, s.t, s.mean_sq_error, s.stderr)?;
        }
        writeln!(out, "  strictly decreasing beyond 2 SE: {}", is_strictly_decreasing(&sup))?;
        match fit_slope(&sup) {
            Some(f) => writeln!(out, "  log-log slope {:.3} ± {:.3} (95% CI [{:.3}, {:.3}])", f.slope, f.stderr, f.low, f.high)?,
            None => writeln!(out, "  slope: not enough sizes")?,
        }
    }
    let disorder = dir.join("disorder.csv");
    if disorder.exists() {
        #[derive(Deserialize)]
        struct Row {
            m: u32,
            rho: f64,
            cbar: f64,
        }
        let rows: Vec<Row> = csv::Reader::from_path(&disorder)?.deserialize().collect::<Result<_, _>>()?;
        let mut keys: Vec<(u32, f64)> = rows.iter().map(|r| (r.m, r.rho)).collect();
        keys.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        keys.dedup();
        writeln!(out, "\n  {:>3} {:>8} {:>12} {:>6}", "m", "rho", "mean cbar", "n")?;
        for (m, rho) in keys {
            let v: Vec<f64> = rows.iter().filter(|r| r.m == m && r.rho == rho).map(|r| r.cbar).collect();
            writeln!(out, "  {:>3} {:>8.4} {:>12.6} {:>6}", m, rho, v.iter().sum::<f64>() / v.len() as f64, v.len())?;
        }
    }
    Ok(out)
}
