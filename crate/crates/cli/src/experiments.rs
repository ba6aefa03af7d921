//! Dispatch from a validated config to the library, one function per kind.

use crate::artifacts::Sink;
use crate::config::{Config, Kind};
use anyhow::Result;
use kawasaki_core::ensemble::{compressibility, ConfigFunction, StateSpace};
use kawasaki_core::hydro::{convergence_experiment, DiffusivityTable, ExperimentSpec};
use kawasaki_core::inequalities::run_suite;
use kawasaki_core::lattice::{Domain, Site};
use kawasaki_core::lifting::*;
use kawasaki_core::rates::{sample_disorder, validate, RateModel};
use kawasaki_core::variational::*;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;

const TOL: f64 = 1e-9;

pub fn run(config: &Config) -> Result<Sink> {
    let model = config.model().map_err(anyhow::Error::msg)?;
    let mut sink = Sink::new(model.name(), config.geometry.d);
    match config.kind {
        Kind::ValidateRates => validate_rates(config, &model, &mut sink),
        Kind::Conductivity => conductivity(config, &model, &mut sink)?,
        Kind::Duality => duality(config, &model, &mut sink)?,
        Kind::Corrector => corrector(config, &model, &mut sink)?,
        Kind::Clt => clt(config, &model, &mut sink)?,
        Kind::Lifting => lifting(config, &mut sink)?,
        Kind::Hydro => hydro(config, &model, &mut sink)?,
        Kind::Disorder => disorder(config, &mut sink)?,
        Kind::InequalitySuite => suite(config, &mut sink)?,
    }
    Ok(sink)
}

fn eigen_range(m: &DMatrix<f64>) -> (f64, f64) {
    let s = (m + m.transpose()) * 0.5;
    let e = s.symmetric_eigenvalues();
    (e.min(), e.max())
}

/// Emit every entry of a d×d matrix; d = 1 gets the bare quantity name.
fn matrix_records(sink: &mut Sink, rho: f64, l: u64, name: &str, m: &DMatrix<f64>, residual: f64) {
    if m.nrows() == 1 {
        sink.record(Some(rho), Some(l), name, m[(0, 0)], Some(residual));
    } else {
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                sink.record(Some(rho), Some(l), format!("{name}[{i}][{j}]"), m[(i, j)], Some(residual));
            }
        }
    }
}

fn validate_rates(config: &Config, model: &RateModel, sink: &mut Sink) {
    let r = sink.time("validate", || validate(model, config.geometry.d));
    sink.record(None, None, "lambda", r.lambda, None);
    sink.record(None, None, "observed_min", r.observed_min, None);
    sink.record(None, None, "observed_max", r.observed_max, None);
    let detail = match &r.violation {
        None => format!("pass, λ={}", r.lambda),
        Some(v) => format!("{}: {} at bond {:?}", v.check, v.detail, v.bond),
    };
    sink.check("rate_hypotheses", r.pass, detail);
    let _ = sink.json("validation.json", &r);
}

/// Matrices of every requested box and density, sharing the ρ-independent dual.
fn matrices(config: &Config, model: &RateModel, sink: &mut Sink) -> Result<Vec<(u64, DiffusionReport)>> {
    let mut out = Vec::new();
    for (l, domain) in config.domains().map_err(anyhow::Error::msg)? {
        let dual = sink.time(format!("dual L={l}"), || solve_nu_star(&domain, model))?;
        for rho in config.densities() {
            let r = sink.time(format!("primal L={l} rho={rho}"), || diffusion_matrices_with(rho, &domain, model, &dual))?;
            out.push((l, r));
        }
    }
    Ok(out)
}

fn conductivity(config: &Config, model: &RateModel, sink: &mut Sink) -> Result<()> {
    let lambda = model.lambda();
    let mut worst_sym = 0.0f64;
    let mut bounds = true;
    let mut detail = String::new();
    for (l, r) in matrices(config, model, sink)? {
        let (db, ds) = (r.dbar.clone().expect("interior density"), r.dbar_star.clone().expect("interior density"));
        matrix_records(sink, r.rho, l, "dbar", &db, r.residual);
        matrix_records(sink, r.rho, l, "dbar_star", &ds, r.residual);
        matrix_records(sink, r.rho, l, "cbar", &r.cbar, r.residual);
        matrix_records(sink, r.rho, l, "cbar_star", &r.cbar_star, r.residual);
        worst_sym = worst_sym.max((&db - db.transpose()).abs().max()).max((&ds - ds.transpose()).abs().max());
        let (lo, _) = eigen_range(&ds);
        let (_, hi) = eigen_range(&db);
        let (gap, _) = eigen_range(&(&db - &ds));
        let ok = lo >= 1.0 - TOL && hi <= lambda + TOL && gap >= -TOL;
        if !ok && detail.is_empty() {
            detail = format!("L={l} ρ={}: eig D̄* ≥ {lo}, eig D̄ ≤ {hi}, eig(D̄ − D̄*) ≥ {gap}", r.rho);
        }
        bounds &= ok;
    }
    sink.check("symmetric", worst_sym < TOL, format!("max asymmetry {worst_sym:.2e}"));
    if detail.is_empty() {
        detail = format!("Id ≤ D̄* ≤ D̄ ≤ {lambda}·Id on every box");
    }
    sink.check("elliptic_bounds", bounds, detail);
    Ok(())
}

#[derive(Serialize)]
struct DualityRow {
    #[serde(rename = "L")]
    l: u64,
    rho: f64,
    cbar: f64,
    cbar_star: f64,
    gap: f64,
}

fn duality(config: &Config, model: &RateModel, sink: &mut Sink) -> Result<()> {
    let lambda = model.lambda();
    let mut rows = Vec::new();
    let mut sandwich = true;
    let mut min_gap = f64::INFINITY;
    for (l, r) in matrices(config, model, sink)? {
        let chi2 = 2.0 * compressibility(r.rho);
        // Scalars are the smallest eigenvalues in d > 1; the sandwich itself
        // is checked as a matrix inequality.
        let (c, _) = eigen_range(&r.cbar);
        let (cs, _) = eigen_range(&r.cbar_star);
        let (gap, _) = eigen_range(&(&r.cbar - &r.cbar_star));
        let (lo, _) = eigen_range(&r.cbar_star);
        let (_, hi) = eigen_range(&r.cbar);
        sandwich &= lo >= chi2 * (1.0 - TOL) && hi <= chi2 * lambda + TOL && gap >= -TOL;
        min_gap = min_gap.min(gap);
        sink.record(Some(r.rho), Some(l), "cbar", c, Some(r.residual));
        sink.record(Some(r.rho), Some(l), "cbar_star", cs, Some(r.residual));
        sink.record(Some(r.rho), Some(l), "gap", gap, Some(r.residual));
        rows.push(DualityRow { l, rho: r.rho, cbar: c, cbar_star: cs, gap });
    }
    sink.check("gap_nonnegative", min_gap >= -TOL, format!("min gap {min_gap:.3e}"));
    sink.check("sandwich", sandwich, format!("2χ ≤ c̄* ≤ c̄ ≤ 2χλ with λ = {lambda}"));
    if config.geometry.triadic.is_some() {
        let mut ok = true;
        let mut worst = f64::NEG_INFINITY;
        for rho in config.densities() {
            let gaps: Vec<f64> = rows.iter().filter(|r| r.rho == rho).map(|r| r.gap).collect();
            for w in gaps.windows(2) {
                worst = worst.max(w[1] - w[0]);
                ok &= w[1] <= w[0] + TOL;
            }
        }
        sink.check("gap_nonincreasing_in_level", ok, format!("largest increase {worst:.3e}"));
    }
    sink.csv("duality.csv", &rows)
}

fn corrector(config: &Config, model: &RateModel, sink: &mut Sink) -> Result<()> {
    let d = config.geometry.d;
    let (mut mean, mut linear, mut first_order, mut chain) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for (l, domain) in config.domains().map_err(anyhow::Error::msg)? {
        for rho in config.densities() {
            let p = sink.time(format!("primal L={l} rho={rho}"), || solve_primal(rho, &domain, model))?;
            let mu = kawasaki_core::ensemble::Measure::bernoulli(&p.space, rho)?;
            let ones = vec![1.0; d];
            let sum = (0..d).try_fold(ConfigFunction::zero(&p.space), |acc, k| {
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                acc.add(&p.corrector(&e))
            })?;
            linear = linear.max(p.corrector(&ones).sub(&sum)?.sup_norm());
            for k in 0..d {
                mean = mean.max(mu.expect(&p.correctors[k])?.abs());
                let mut e = vec![0.0; d];
                e[k] = 1.0;
                let res = p.first_order_residual(&e)?;
                first_order = first_order.max(res);
                sink.record(Some(rho), Some(l), format!("nu[e{k}]"), p.nu(&e), Some(p.residual));
            }
            let id = sink.time(format!("chain L={l} rho={rho}"), || identification_chain(rho, &domain, model))?;
            chain = chain.min(id.lower_margin).min(id.upper_margin);
            sink.record(Some(rho), Some(l), "chain_lower_margin", id.lower_margin, None);
            sink.record(Some(rho), Some(l), "chain_upper_margin", id.upper_margin, None);
        }
    }
    sink.check("corrector_mean_zero", mean < TOL, format!("max |⟨φ⟩_ρ| {mean:.2e}"));
    sink.check("corrector_linear", linear < TOL, format!("max deviation {linear:.2e}"));
    sink.check("first_order_condition", first_order < 1e-8, format!("max residual {first_order:.2e}"));
    sink.check("identification_chain", chain >= -TOL, format!("smallest margin {chain:.3e}"));
    Ok(())
}

/// A seeded exterior configuration: bits drawn on a box around the origin.
fn random_exterior(seed: u64, reach: i32, dim: usize) -> impl Fn(&Site) -> Option<bool> {
    let width = (2 * reach + 1) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let bits: Vec<bool> = (0..width.pow(dim as u32)).map(|_| rng.random_bool(0.5)).collect();
    move |s: &Site| {
        let mut idx = 0usize;
        for &c in s {
            if c.abs() > reach {
                return None;
            }
            idx = idx * width + (c + reach) as usize;
        }
        Some(bits[idx])
    }
}

fn clt(config: &Config, model: &RateModel, sink: &mut Sink) -> Result<()> {
    let d = config.geometry.d;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let q: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut worst = 0.0f64;
    let mut sectors = 0;
    for (l, domain) in config.domains().map_err(anyhow::Error::msg)? {
        let reach = l as i32 / 2 + 2 * model.range().max(1) as i32 + 1;
        for e in 0..config.clt.exteriors {
            let zeta = random_exterior(config.seed.wrapping_mul(1_000_003).wrapping_add(e), reach, d);
            for m in 0..=domain.len() {
                let sec = CanonicalSector::new(&domain, m, model, &zeta)?;
                let rep = sink.time(format!("sector L={l} M={m} zeta={e}"), || sec.matrices())?;
                let sf = sec.special_functions(&[])?;
                let f = (0..d).try_fold(ConfigFunction::zero(&sf.a[0].space().clone()), |acc, k| acc.add(&sf.a[k].scale(q[k])))?;
                let delta = sec.clt_variance(&f, &f)? / domain.len() as f64;
                let want = match &rep.dhat_star {
                    Some(ds) => {
                        let qv = DVector::from_vec(q.clone());
                        let inv = ds.clone().try_inverse().ok_or_else(|| anyhow::anyhow!("singular D̂*"))?;
                        rep.chi_hat * qv.dot(&(inv * &qv))
                    }
                    None => 0.0,
                };
                let rho = m as f64 / domain.len() as f64;
                sink.record(Some(rho), Some(l), format!("clt_variance[zeta={e}]"), delta, Some(rep.residual));
                if let Some(ds) = &rep.dhat_star {
                    sink.record(Some(rho), Some(l), format!("dhat_star[zeta={e}]"), ds[(0, 0)], Some(rep.residual));
                }
                worst = worst.max((delta - want).abs());
                sectors += 1;
            }
        }
    }
    sink.check("clt_variance_identity", worst < TOL, format!("{sectors} sectors, max deviation {worst:.2e}"));
    Ok(())
}

fn random_function(space: &std::sync::Arc<StateSpace>, rng: &mut ChaCha8Rng) -> Result<ConfigFunction> {
    let v = (0..space.size()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    Ok(ConfigFunction::new(space.clone(), v)?)
}

fn lifting(config: &Config, sink: &mut Sink) -> Result<()> {
    let n = config.lifting.sites as i32;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let segment = |lo: i32, hi: i32| -> Vec<Site> { (lo..=hi).map(|x| vec![x]).collect() };
    let space = StateSpace::new(segment(0, n - 1))?;
    let plus = StateSpace::new(segment(0, n))?;
    let mut results: Vec<(&str, IdentityCheck)> = Vec::new();
    for _ in 0..config.lifting.functions {
        let u = random_function(&space, &mut rng)?;
        let w = random_function(&plus, &mut rng)?;
        for rho in config.densities() {
            let pm = PoissonMeasure::with_tolerance(alpha_of(rho), 1e-15)?;
            results.push(("lifting", lifting_check(&u, rho, pm.k)?));
            let table: Vec<f64> = (0..(pm.k as usize + 1).pow(2)).map(|_| rng.random_range(-1.0..=1.0)).collect();
            let k1 = pm.k as usize + 1;
            let f = move |c: &[u32]| table[(c[0] as usize).min(k1 - 1) * k1 + (c[1] as usize).min(k1 - 1)];
            results.push(("mecke", mecke_check(&f, 2, 0, alpha_of(rho), pm.k)?));
            results.push(("kawasaki_mecke", mecke_kawasaki(&w, &vec![0], 0, rho)?));
            if n <= 3 {
                results.push(("gradient_coupling", gradient_coupling(&w, &segment(0, n - 1), 0, rho, pm.k)?));
            }
            results.push(("change_of_variable", change_of_variable(2, 0, 1, rho, pm.k)?));
        }
        for count in 0..=plus.len() {
            results.push(("canonical_mecke", canonical_mecke(&w, &vec![0], 0, count)?));
        }
        for m in 0..=(plus.len() as u32 + 1) {
            results.push(("canonical_gradient_coupling", canonical_gradient_coupling(&w, &segment(0, n - 1), 0, m)?));
        }
    }
    let mut names: Vec<&str> = results.iter().map(|r| r.0).collect();
    names.dedup();
    names.sort();
    names.dedup();
    for name in names {
        let checks: Vec<&IdentityCheck> = results.iter().filter(|r| r.0 == name).map(|r| &r.1).collect();
        let ok = checks.iter().all(|c| c.holds && c.budget < 1e-10);
        let worst = checks.iter().map(|c| c.gap).fold(0.0, f64::max);
        let budget = checks.iter().map(|c| c.budget).fold(0.0, f64::max);
        sink.record(None, None, format!("{name}_max_gap"), worst, Some(budget));
        sink.check(name, ok, format!("{} checks, max gap {worst:.2e}, max budget {budget:.2e}", checks.len()));
    }
    Ok(())
}

fn hydro(config: &Config, model: &RateModel, sink: &mut Sink) -> Result<()> {
    let h = &config.hydro;
    let table = sink.time("diffusivity table", || DiffusivityTable::from_model(model, h.reference_side))?;
    let amp = h.amplitude;
    let profile = move |v: f64| 0.5 + amp * (2.0 * PI * v).sin();
    let spec = ExperimentSpec {
        horizon: h.horizon,
        sizes: h.sizes.clone(),
        replicas: h.replicas,
        alpha: h.alpha,
        seed: config.seed,
        grid: h.grid,
    };
    let r = sink.time("convergence experiment", || convergence_experiment(model, &table, &profile, &spec))?;
    for row in &r.rows {
        sink.record(None, Some(row.n as u64), format!("mean_sq_error[t={}]", row.t), row.mean_sq_error, Some(row.stderr));
    }
    for s in &r.sup {
        sink.record(None, Some(s.n as u64), "sup_mean_sq_error", s.mean_sq_error, Some(s.stderr));
    }
    if let Some(fit) = &r.slope {
        sink.record(None, None, "slope", fit.slope, Some(fit.stderr));
    }
    sink.record(None, None, "remainder_bound", r.remainder_bound, None);
    sink.csv("hydro.csv", &r.rows)?;
    for s in &r.snapshots {
        let mut bytes = Vec::new();
        for snap in &s.snapshots {
            serde_json::to_writer(&mut bytes, snap)?;
            bytes.push(b'\n');
        }
        sink.file(format!("snapshots_N{}.jsonl", s.n), bytes);
    }
    let sup: Vec<String> = r.sup.iter().map(|s| format!("N={} {:.3e}±{:.1e}", s.n, s.mean_sq_error, s.stderr)).collect();
    if h.require_decreasing && h.sizes.len() > 1 {
        sink.check("sup_error_strictly_decreasing", r.strictly_decreasing, sup.join(", "));
    }
    sink.check("pde_in_range", r.pde_clamped == 0, format!("{} clamped values", r.pde_clamped));
    if r.low_power {
        log::warn!("fewer than 16 replicas: the decrease test has low power");
    }
    #[derive(Serialize)]
    struct Summary<'a> {
        model: &'a str,
        n_max: usize,
        remainder_bound: f64,
        strictly_decreasing: bool,
        low_power: bool,
        table_ref_l: Option<u64>,
        slope: &'a Option<kawasaki_core::hydro::SlopeFit>,
        sup: &'a [kawasaki_core::hydro::SupRow],
    }
    let summary = Summary {
        model: &r.model,
        n_max: r.n_max,
        remainder_bound: r.remainder_bound,
        strictly_decreasing: r.strictly_decreasing,
        low_power: r.low_power,
        table_ref_l: table.reference_side,
        slope: &r.slope,
        sup: &r.sup,
    };
    sink.json("hydro.json", &summary)
}

#[derive(Serialize)]
struct DisorderRow {
    seed: u64,
    m: u32,
    #[serde(rename = "L")]
    l: u64,
    rho: f64,
    cbar: f64,
}

fn disorder(config: &Config, sink: &mut Sink) -> Result<()> {
    let a_max = config.rate.a_max.expect("validated");
    let base = config.rate.seed.unwrap_or(0);
    let d = config.geometry.d;
    let mut rows = Vec::new();
    let mut bounds = true;
    for k in 0..config.disorder.samples {
        let seed = base + k;
        let model = sample_disorder(a_max, seed)?;
        for &m in &config.disorder.levels {
            let domain = Domain::triadic(m, d)?;
            for rho in config.densities() {
                let p = sink.time(format!("seed={seed} m={m} rho={rho}"), || solve_primal(rho, &domain, &model))?;
                let chi2 = 2.0 * compressibility(rho);
                let c = p.conductivity();
                let (lo, hi) = eigen_range(&c);
                bounds &= lo >= chi2 * (1.0 - TOL) && hi <= chi2 * model.lambda() + TOL;
                rows.push(DisorderRow { seed, m, l: 3u64.pow(m), rho, cbar: lo });
            }
        }
    }
    sink.check("quenched_bounds", bounds, format!("2χ ≤ c̄(ω) ≤ 2χλ(ω) over {} samples", config.disorder.samples));
    let stats = |v: &[f64]| {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    };
    let mut ok = true;
    let mut detail = Vec::new();
    for rho in config.densities() {
        let per: Vec<(u32, f64, f64)> = config
            .disorder
            .levels
            .iter()
            .map(|&m| {
                let v: Vec<f64> = rows.iter().filter(|r| r.m == m && r.rho == rho).map(|r| r.cbar).collect();
                let (mean, se) = stats(&v);
                (m, mean, se)
            })
            .collect();
        for &(m, mean, se) in &per {
            sink.record(Some(rho), Some(3u64.pow(m)), "mean_cbar", mean, Some(se));
            detail.push(format!("ρ={rho} m={m}: {mean:.5}±{se:.1e}"));
        }
        for w in per.windows(2) {
            ok &= w[1].1 <= w[0].1 + 2.0 * (w[0].2.powi(2) + w[1].2.powi(2)).sqrt();
        }
    }
    sink.check("mean_nonincreasing", ok, detail.join("; "));
    sink.csv("disorder.csv", &rows)
}

fn suite(config: &Config, sink: &mut Sink) -> Result<()> {
    let r = sink.time("suite", || run_suite(config.seed, config.suite.cases))?;
    for f in &r.families {
        sink.record(None, None, format!("{}_worst_margin", f.name), f.worst_margin, None);
        sink.check(&f.name, f.violations == 0, format!("{} cases, {} applicable, {} violations", f.cases, f.applicable, f.violations));
    }
    for f in &r.diagnostics {
        log::info!("diagnostic {}: {} violations in {} cases", f.name, f.violations, f.cases);
    }
    sink.json("suite.json", &r)
}
