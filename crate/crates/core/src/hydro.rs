//! The nonlinear diffusion equation ∂_t ρ = ∂_v(D(ρ) ∂_v ρ) on the unit
//! torus, H^{-α} distances between Fourier coefficients, and the Monte Carlo
//! comparison of the particle system with the PDE.

use crate::dynamics::{Modes, Snapshot, Torus, TorusState};
use crate::lattice::Domain;
use crate::rates::RateModel;
use crate::variational::{density_grid, solve_primal};
use crate::{Error, Result};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// D(ρ) on a density grid with a monotone piecewise-cubic (Fritsch–Carlson)
/// interpolant, extended flat outside the grid.
#[derive(Clone, Debug, Serialize)]
pub struct DiffusivityTable {
    pub rho: Vec<f64>,
    pub d: Vec<f64>,
    /// Side of the box the values were computed on, if they come from one.
    pub reference_side: Option<u64>,
    pub model: String,
    slopes: Vec<f64>,
}

fn pchip_slopes(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n < 2 {
        return vec![0.0; n];
    }
    let h: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    let delta: Vec<f64> = (0..n - 1).map(|k| (y[k + 1] - y[k]) / h[k]).collect();
    let mut m = vec![0.0; n];
    for k in 1..n - 1 {
        if delta[k - 1] * delta[k] > 0.0 {
            let w1 = 2.0 * h[k] + h[k - 1];
            let w2 = h[k] + 2.0 * h[k - 1];
            m[k] = (w1 + w2) / (w1 / delta[k - 1] + w2 / delta[k]);
        }
    }
    let end = |h0: f64, h1: f64, d0: f64, d1: f64| {
        let s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
        if s.signum() != d0.signum() {
            0.0
        } else if d0.signum() != d1.signum() && s.abs() > 3.0 * d0.abs() {
            3.0 * d0
        } else {
            s
        }
    };
    if n == 2 {
        m[0] = delta[0];
        m[1] = delta[0];
    } else {
        m[0] = end(h[0], h[1], delta[0], delta[1]);
        m[n - 1] = end(h[n - 2], h[n - 3], delta[n - 2], delta[n - 3]);
    }
    m
}

impl DiffusivityTable {
    pub fn new(rho: Vec<f64>, d: Vec<f64>, reference_side: Option<u64>, model: &str) -> Result<Self> {
        if rho.is_empty() || rho.len() != d.len() {
            return Err(Error::Precondition("diffusivity table needs matching, non-empty grids".into()));
        }
        if rho.windows(2).any(|w| w[1] <= w[0]) || rho.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Precondition("density grid must be increasing inside [0,1]".into()));
        }
        if d.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Precondition("diffusivities must be positive and finite".into()));
        }
        let slopes = pchip_slopes(&rho, &d);
        Ok(DiffusivityTable { rho, d, reference_side, model: model.to_string(), slopes })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.5], vec![value], None, &format!("constant({value})"))
    }

    /// D̄(ρ, Λ_side) in d = 1 on the 1/64 grid.
    pub fn from_model(model: &RateModel, side: u64) -> Result<Self> {
        let domain = Domain::cube(side, 1)?;
        let grid = density_grid();
        let d = grid
            .par_iter()
            .map(|&r| solve_primal(r, &domain, model).map(|s| s.dbar[(0, 0)]))
            .collect::<Result<Vec<_>>>()?;
        Self::new(grid, d, Some(side), &model.name())
    }

    pub fn eval(&self, r: f64) -> f64 {
        let (x, y, m) = (&self.rho, &self.d, &self.slopes);
        let n = x.len();
        if r <= x[0] {
            return y[0];
        }
        if r >= x[n - 1] {
            return y[n - 1];
        }
        let k = x.partition_point(|v| *v <= r) - 1;
        let h = x[k + 1] - x[k];
        let s = (r - x[k]) / h;
        let (h00, h10, h01, h11) = (
            (1.0 + 2.0 * s) * (1.0 - s).powi(2),
            s * (1.0 - s).powi(2),
            s * s * (3.0 - 2.0 * s),
            s * s * (s - 1.0),
        );
        h00 * y[k] + h10 * h * m[k] + h01 * y[k + 1] + h11 * h * m[k + 1]
    }

    pub fn max(&self) -> f64 {
        self.d.iter().copied().fold(f64::MIN, f64::max)
    }
    pub fn min(&self) -> f64 {
        self.d.iter().copied().fold(f64::MAX, f64::min)
    }

    /// P(ρ) = ∫₀^ρ D by composite Simpson on the interpolant.
    pub fn integral(&self, r: f64) -> f64 {
        let n = 256;
        let h = r / n as f64;
        let mut s = self.eval(0.0) + self.eval(r);
        for k in 1..n {
            s += if k % 2 == 1 { 4.0 } else { 2.0 } * self.eval(k as f64 * h);
        }
        s * h / 3.0
    }
}

/// Cell-centre values ρ(t, (j + ½)/G) on the unit torus.
#[derive(Clone, Debug, Serialize)]
pub struct DensityField {
    pub t: f64,
    pub values: Vec<f64>,
    /// Number of cell updates that left [0, 1] and were clamped so far.
    pub clamped: usize,
}

impl DensityField {
    pub fn from_profile(profile: &dyn Fn(f64) -> f64, g: usize) -> Self {
        DensityField { t: 0.0, values: (0..g).map(|j| profile((j as f64 + 0.5) / g as f64)).collect(), clamped: 0 }
    }

    /// ∫ρ by the midpoint rule.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// ⟨ρ, e_k⟩ = ∫ρ(v) e^{−2πikv} dv by the midpoint rule, k ∈ {−n_max, …, n_max}.
    pub fn modes(&self, n_max: usize) -> Modes {
        let g = self.values.len();
        let coeffs = (-(n_max as i64)..=n_max as i64)
            .map(|k| {
                self.values
                    .iter()
                    .enumerate()
                    .map(|(j, v)| Complex64::from_polar(*v, -2.0 * PI * k as f64 * (j as f64 + 0.5) / g as f64))
                    .sum::<Complex64>()
                    / g as f64
            })
            .collect();
        Modes { n_max, dim: 1, coeffs }
    }
}

/// Explicit finite-volume solution at each requested time (sorted, ≥ 0).
///
/// Face diffusivity is the mean of D at the adjacent cells and the step is
/// Δt = 0.4 Δx² / max D, shortened to land on every checkpoint.
pub fn solve_pde(initial: &DensityField, table: &DiffusivityTable, times: &[f64]) -> Result<Vec<DensityField>> {
    let g = initial.values.len();
    if g < 16 {
        return Err(Error::Precondition(format!("PDE grid needs G ≥ 16, got {g}")));
    }
    if initial.values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
        return Err(Error::Precondition("initial density must lie in (0,1)".into()));
    }
    if times.iter().any(|t| *t < initial.t) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Precondition("checkpoint times must be sorted and not before the start".into()));
    }
    let dx = 1.0 / g as f64;
    let dt_max = 0.4 * dx * dx / table.max();
    let mut field = initial.clone();
    let mut out = Vec::with_capacity(times.len());
    let mut d = vec![0.0; g];
    let mut flux = vec![0.0; g];
    for &target in times {
        while field.t < target {
            let dt = dt_max.min(target - field.t);
            for (dj, v) in d.iter_mut().zip(&field.values) {
                *dj = table.eval(*v);
            }
            for j in 0..g {
                let k = (j + 1) % g;
                flux[j] = 0.5 * (d[j] + d[k]) * (field.values[k] - field.values[j]) / dx;
            }
            for j in 0..g {
                let left = flux[(j + g - 1) % g];
                let v = field.values[j] + dt / dx * (flux[j] - left);
                field.values[j] = if (0.0..=1.0).contains(&v) {
                    v
                } else {
                    field.clamped += 1;
                    v.clamp(0.0, 1.0)
                };
            }
            // Land exactly on the checkpoint despite rounding in the sum of steps.
            field.t = if target - field.t - dt < 1e-15 * target.max(1.0) { target } else { field.t + dt };
        }
        out.push(field.clone());
    }
    Ok(out)
}

/// ‖f − g‖²_{H^{-α}} over the common modes with weights (4π²|k|² + 1)^{-α},
/// i.e. (λ + 1)^{-α} for the Laplacian eigenvalue λ of e^{2πik·v}.
#[derive(Clone, Debug, Serialize)]
pub struct NegativeNorm {
    pub squared: f64,
    /// Bound on the omitted modes |k|_∞ > n_max given a sup bound on the
    /// amplitudes of both inputs.
    pub remainder_bound: f64,
}

impl NegativeNorm {
    pub fn norm(&self) -> f64 {
        self.squared.sqrt()
    }
}

pub fn mode_weight(k: &[i32], alpha: f64) -> f64 {
    let k2: f64 = k.iter().map(|c| (*c as f64).powi(2)).sum();
    (4.0 * PI * PI * k2 + 1.0).powf(-alpha)
}

/// Σ_{|k|_∞ > n} (4π²|k|²)^{-α} · 4 sup² bounds the omitted part, since
/// |f̂_k − ĝ_k| ≤ 2 sup.
fn remainder(n_max: usize, dim: usize, alpha: f64, sup: f64) -> f64 {
    let shell = |m: f64| ((2.0 * m + 1.0).powi(dim as i32) - (2.0 * m - 1.0).powi(dim as i32)) * (4.0 * PI * PI * m * m).powf(-alpha);
    let mut s = 0.0;
    let cut = n_max + 10_000;
    for m in n_max + 1..=cut {
        s += shell(m as f64);
    }
    // Integral tail of 2d (2m+1)^{d−1} (4π²m²)^{-α} beyond the cut, with 2m+1 ≤ 3m.
    let p = 2.0 * alpha - dim as f64 + 1.0;
    let c = 2.0 * dim as f64 * 3f64.powi(dim as i32 - 1) * (4.0 * PI * PI).powf(-alpha);
    s += c * (cut as f64).powf(1.0 - p) / (p - 1.0);
    4.0 * sup * sup * s
}

pub fn h_minus_alpha(f: &Modes, g: &Modes, alpha: f64, sup: f64) -> Result<NegativeNorm> {
    if f.dim != g.dim || f.n_max != g.n_max {
        return Err(Error::Precondition("H^{-α} needs matched mode truncations".into()));
    }
    if alpha <= f.dim as f64 / 2.0 {
        return Err(Error::Precondition(format!("α = {alpha} must exceed d/2 = {}", f.dim as f64 / 2.0)));
    }
    let squared = Modes::indices(f.n_max, f.dim)
        .zip(f.coeffs.iter().zip(&g.coeffs))
        .map(|(k, (a, b))| mode_weight(&k, alpha) * (a - b).norm_sqr())
        .sum();
    Ok(NegativeNorm { squared, remainder_bound: remainder(f.n_max, f.dim, alpha, sup) })
}

/// Inputs of [`convergence_experiment`].
#[derive(Clone, Debug)]
pub struct ExperimentSpec {
    pub horizon: f64,
    pub sizes: Vec<usize>,
    pub replicas: usize,
    pub alpha: f64,
    pub seed: u64,
    /// PDE grid cells.
    pub grid: usize,
}

/// One CSV row.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct HydroRow {
    #[serde(rename = "N")]
    pub n: usize,
    pub t: f64,
    pub mean_sq_error: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub alpha: f64,
    #[serde(rename = "table_ref_L")]
    pub table_ref_l: Option<u64>,
}

/// Sup over checkpoints of the mean squared error for one N.
#[derive(Clone, Debug, Serialize)]
pub struct SupRow {
    pub n: usize,
    pub t: f64,
    pub mean_sq_error: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub stderr: f64,
    /// 95% interval.
    pub low: f64,
    pub high: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub model: String,
    pub rows: Vec<HydroRow>,
    pub sup: Vec<SupRow>,
    pub slope: Option<SlopeFit>,
    /// Mode truncation shared by all N.
    pub n_max: usize,
    pub remainder_bound: f64,
    /// Each sup error exceeds the next by more than 2 combined standard errors.
    pub strictly_decreasing: bool,
    /// Fewer than 16 replicas: the table is produced but carries no assertion.
    pub low_power: bool,
    pub pde_clamped: usize,
    pub snapshots: Vec<SizedSnapshots>,
}

/// Checkpoints T/8, T/4, T/2, T (just 0 when T = 0).
pub fn checkpoints(horizon: f64) -> Vec<f64> {
    if horizon == 0.0 {
        vec![0.0]
    } else {
        vec![horizon / 8.0, horizon / 4.0, horizon / 2.0, horizon]
    }
}

fn mean_and_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Weighted least squares of log error on log N with delta-method weights.
pub fn fit_slope(rows: &[SupRow]) -> Option<SlopeFit> {
    if rows.len() < 2 || rows.iter().any(|r| !(r.mean_sq_error > 0.0 && r.stderr > 0.0)) {
        return None;
    }
    let pts: Vec<(f64, f64, f64)> = rows
        .iter()
        .map(|r| ((r.n as f64).ln(), r.mean_sq_error.ln(), (r.mean_sq_error / r.stderr).powi(2)))
        .collect();
    let sw: f64 = pts.iter().map(|p| p.2).sum();
    let xm = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / sw;
    let ym = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / sw;
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - xm).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - xm) * (p.1 - ym)).sum();
    let slope = sxy / sxx;
    let stderr = (1.0 / sxx).sqrt();
    Some(SlopeFit { slope, stderr, low: slope - 1.96 * stderr, high: slope + 1.96 * stderr })
}

/// Per N (in order of first appearance), the checkpoint with the largest mean error.
pub fn sup_over_checkpoints(rows: &[HydroRow]) -> Vec<SupRow> {
    let mut sup: Vec<SupRow> = Vec::new();
    for r in rows {
        match sup.iter_mut().find(|s| s.n == r.n) {
            Some(s) if r.mean_sq_error > s.mean_sq_error => {
                *s = SupRow { n: r.n, t: r.t, mean_sq_error: r.mean_sq_error, stderr: r.stderr }
            }
            Some(_) => {}
            None => sup.push(SupRow { n: r.n, t: r.t, mean_sq_error: r.mean_sq_error, stderr: r.stderr }),
        }
    }
    sup
}

/// Consecutive sup errors drop by more than twice their combined standard error.
pub fn is_strictly_decreasing(sup: &[SupRow]) -> bool {
    sup.windows(2).all(|w| {
        let band = 2.0 * (w[0].stderr.powi(2) + w[1].stderr.powi(2)).sqrt();
        w[0].mean_sq_error - w[1].mean_sq_error > band
    })
}

/// Replica-0 snapshots at each checkpoint for one system size.
#[derive(Clone, Debug, Serialize)]
pub struct SizedSnapshots {
    pub n: usize,
    pub snapshots: Vec<Snapshot>,
}

/// E‖ρ^N(t) − ρ(t)‖²_{H^{-α}} per N at the checkpoints, in d = 1.
pub fn convergence_experiment(
    model: &RateModel,
    table: &DiffusivityTable,
    profile: &(dyn Fn(f64) -> f64 + Sync),
    spec: &ExperimentSpec,
) -> Result<ConvergenceReport> {
    if spec.sizes.is_empty() || spec.sizes.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("system sizes must be strictly increasing".into()));
    }
    if spec.replicas == 0 || !(spec.horizon >= 0.0) {
        return Err(Error::Precondition("need at least one replica and T ≥ 0".into()));
    }
    if spec.alpha <= 0.5 {
        return Err(Error::Precondition(format!("α = {} must exceed d/2 = 0.5", spec.alpha)));
    }
    let times = checkpoints(spec.horizon);
    let pde = solve_pde(&DensityField::from_profile(profile, spec.grid), table, &times)?;
    let n_max = spec.sizes[0] / 2;
    let targets: Vec<Modes> = pde.iter().map(|f| f.modes(n_max)).collect();
    let mut rows = Vec::new();
    let mut snapshots = Vec::new();
    for &n in &spec.sizes {
        let torus = Torus::new(n, 1, model)?;
        let per_replica: Vec<(Vec<f64>, Vec<Snapshot>)> = (0..spec.replicas)
            .into_par_iter()
            .map(|r| -> Result<(Vec<f64>, Vec<Snapshot>)> {
                let mut s = TorusState::sample_initial(&torus, &|v| profile(v[0]), spec.seed, ((n as u64) << 32) | r as u64)?;
                let mut errs = Vec::with_capacity(times.len());
                let mut snaps = Vec::new();
                for (t, target) in times.iter().zip(&targets) {
                    s.advance(t - s.time())?;
                    let modes = s.fourier_modes(n_max)?;
                    errs.push(h_minus_alpha(&modes, target, spec.alpha, 1.0)?.squared);
                    if r == 0 {
                        snaps.push(s.snapshot(n_max)?);
                    }
                }
                Ok((errs, snaps))
            })
            .collect::<Result<_>>()?;
        for (j, &t) in times.iter().enumerate() {
            let col: Vec<f64> = per_replica.iter().map(|e| e.0[j]).collect();
            let (mean, se) = mean_and_stderr(&col);
            rows.push(HydroRow {
                n,
                t,
                mean_sq_error: mean,
                stderr: se,
                replicas: spec.replicas,
                alpha: spec.alpha,
                table_ref_l: table.reference_side,
            });
        }
        snapshots.push(SizedSnapshots { n, snapshots: per_replica.into_iter().next().map(|p| p.1).unwrap_or_default() });
    }
    let sup = sup_over_checkpoints(&rows);
    let strictly_decreasing = is_strictly_decreasing(&sup);
    Ok(ConvergenceReport {
        model: model.name(),
        slope: fit_slope(&sup),
        rows,
        sup,
        n_max,
        remainder_bound: remainder(n_max, 1, spec.alpha, 1.0),
        strictly_decreasing,
        low_power: spec.replicas < 16,
        pde_clamped: pde.last().map_or(0, |f| f.clamped),
        snapshots,
    })
}
