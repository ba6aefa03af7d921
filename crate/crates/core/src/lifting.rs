//! Independent particles with Poisson(α) occupation numbers, the projection
//! [η̃]_x = 1{η̃_x ≥ 1} onto exclusion configurations, and exact checks of the
//! identities that couple the two systems.
//!
//! Grand-canonical expectations on the free space are truncated sums over
//! counts 0..=K per site with renormalized weights. Every check returns its
//! gap together with a budget that bounds the truncation effect, so a check
//! passes iff gap ≤ budget.

use crate::ensemble::{bernoulli_weight, Config, ConfigFunction, Measure, StateSpace};
use crate::lattice::{shift, Domain, Site};
use crate::{Error, Result};
use serde::Serialize;
use std::collections::HashMap;
use std::sync::Arc;

/// Free-space enumerations beyond this many count vectors are refused.
pub const MAX_FREE_STATES: usize = 20_000_000;
/// Free-space supports are limited to this many sites.
pub const MAX_FREE_SITES: usize = 6;

/// α(ρ) = −log(1−ρ), so that P(Poi(α) = 0) = 1 − ρ.
pub fn alpha_of(rho: f64) -> f64 {
    -(-rho).ln_1p()
}

/// Poisson(α) truncated to {0, …, K} and renormalized.
#[derive(Clone, Debug, Serialize)]
pub struct PoissonMeasure {
    pub alpha: f64,
    pub k: u32,
    /// Renormalized weights of 0..=K.
    pub weights: Vec<f64>,
    /// P(Poi(α) > K) for the untruncated law.
    pub tail: f64,
    /// P(Poi(α) > K − 1).
    pub tail_before: f64,
}

fn poisson_pmf(alpha: f64, upto: u32) -> Vec<f64> {
    let mut p = Vec::with_capacity(upto as usize + 1);
    let mut w = (-alpha).exp();
    for k in 0..=upto {
        p.push(w);
        w *= alpha / (k + 1) as f64;
    }
    p
}

/// P(Poi(α) > k), summed forward so that tiny tails keep full precision.
fn poisson_tail(alpha: f64, k: u32) -> f64 {
    let mut w = poisson_pmf(alpha, k + 1)[k as usize + 1];
    let mut sum = 0.0;
    let mut j = k + 1;
    while w > 0.0 && (w > 1e-300 || j < k + 10) {
        sum += w;
        j += 1;
        w *= alpha / j as f64;
        if w < sum * 1e-18 {
            break;
        }
    }
    sum
}

impl PoissonMeasure {
    pub fn new(alpha: f64, k: u32) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::Precondition(format!("Poisson mean must be positive, got {alpha}")));
        }
        let pmf = poisson_pmf(alpha, k);
        let z: f64 = pmf.iter().sum();
        Ok(PoissonMeasure {
            alpha,
            k,
            weights: pmf.iter().map(|p| p / z).collect(),
            tail: poisson_tail(alpha, k),
            tail_before: if k == 0 { 1.0 - (-alpha).exp() } else { poisson_tail(alpha, k - 1) },
        })
    }

    /// Smallest K whose tail mass and top weight are both below `tol`.
    pub fn with_tolerance(alpha: f64, tol: f64) -> Result<Self> {
        if !(tol > 0.0) {
            return Err(Error::Precondition(format!("tolerance must be positive, got {tol}")));
        }
        let mut k = alpha.ceil() as u32 + 1;
        loop {
            let m = Self::new(alpha, k)?;
            if m.tail_before <= tol {
                return Ok(m);
            }
            k += 1;
            if k > 400 {
                return Err(Error::Precondition(format!("no truncation below {tol} for α = {alpha}")));
            }
        }
    }

    /// Total variation between the truncated and the untruncated law.
    pub fn total_variation(&self) -> f64 {
        self.tail
    }
}

/// [η̃]: occupied iff at least one particle, as a bitmask over the site order.
pub fn project(counts: &[u32]) -> Config {
    counts.iter().enumerate().fold(0, |c, (k, &n)| c | ((n >= 1) as u64) << k)
}

/// [u](η̃) = u([η̃]), with counts ordered like the sites of u's space.
pub fn lift(u: &ConfigFunction) -> impl Fn(&[u32]) -> f64 + '_ {
    move |counts| u.value(project(counts))
}

fn check_free(n: usize, k: u32) -> Result<()> {
    if n > MAX_FREE_SITES {
        return Err(Error::CapExceeded { needed: n, cap: MAX_FREE_SITES });
    }
    let states = (k as f64 + 1.0).powi(n as i32);
    if states > MAX_FREE_STATES as f64 {
        return Err(Error::Precondition(format!("{states} free configurations exceed {MAX_FREE_STATES}")));
    }
    Ok(())
}

/// Σ over {0..=K}^n of the product weight times f.
fn free_sum(n: usize, pm: &PoissonMeasure, mut f: impl FnMut(&[u32]) -> f64) -> f64 {
    let mut counts = vec![0u32; n];
    let mut total = 0.0;
    loop {
        let w: f64 = counts.iter().map(|&c| pm.weights[c as usize]).product();
        if w > 0.0 {
            total += w * f(&counts);
        }
        let mut i = 0;
        loop {
            if i == n {
                return total;
            }
            counts[i] += 1;
            if counts[i] <= pm.k {
                break;
            }
            counts[i] = 0;
            i += 1;
        }
    }
}

/// Truncated ⟨f⟩_α over n independent sites.
pub fn free_expect(n: usize, pm: &PoissonMeasure, f: impl FnMut(&[u32]) -> f64) -> Result<f64> {
    check_free(n, pm.k)?;
    Ok(free_sum(n, pm, f))
}

/// Outcome of an identity check: both sides, their distance and the budget
/// the distance is allowed by truncation and rounding.
#[derive(Clone, Debug, Serialize)]
pub struct IdentityCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub gap: f64,
    pub budget: f64,
    pub holds: bool,
}

/// Absolute rounding allowance for exact double-precision sums.
const ROUNDING: f64 = 1e-13;

impl IdentityCheck {
    fn new(lhs: f64, rhs: f64, truncation: f64) -> Self {
        let gap = (lhs - rhs).abs();
        let budget = truncation + ROUNDING * (1.0 + lhs.abs().max(rhs.abs()));
        IdentityCheck { lhs, rhs, gap, budget, holds: gap <= budget }
    }
}

/// ⟨[u]⟩_{α(ρ)} against ⟨u⟩_ρ.
pub fn lifting_check(u: &ConfigFunction, rho: f64, k: u32) -> Result<IdentityCheck> {
    let pm = PoissonMeasure::new(alpha_of(rho), k)?;
    let n = u.space().len();
    let lifted = lift(u);
    let lhs = free_expect(n, &pm, |c| lifted(c))?;
    let rhs = Measure::bernoulli(u.space(), rho)?.expect(u)?;
    // The renormalized zero-weight differs from 1 − ρ by at most the tail.
    Ok(IdentityCheck::new(lhs, rhs, 2.0 * u.sup_norm() * n as f64 * pm.tail))
}

/// ⟨η̃_x F(η̃)⟩_α against α⟨F(η̃ + δ_x)⟩_α on `n` free sites.
///
/// On the truncated law the two sides differ exactly by α times the weight
/// of η̃_x = K times F evaluated with K + 1 particles at x, which bounds the gap.
pub fn mecke_check(f: &dyn Fn(&[u32]) -> f64, n: usize, x: usize, alpha: f64, k: u32) -> Result<IdentityCheck> {
    if x >= n {
        return Err(Error::Support(format!("site index {x} outside {n} free sites")));
    }
    let pm = PoissonMeasure::new(alpha, k)?;
    check_free(n, k)?;
    let mut sup = 0.0f64;
    let lhs = free_sum(n, &pm, |c| c[x] as f64 * f(c));
    let rhs = alpha
        * free_sum(n, &pm, |c| {
            let mut up = c.to_vec();
            up[x] += 1;
            let v = f(&up);
            sup = sup.max(v.abs());
            v
        });
    Ok(IdentityCheck::new(lhs, rhs, alpha * sup * pm.weights[k as usize]))
}

fn neighbour(u: &ConfigFunction, x: &Site, i: usize) -> Result<(usize, usize)> {
    let space = u.space();
    Ok((space.require(x)?, space.require(&shift(x, i, 1))?))
}

/// ⟨u | η_y = 1⟩ under a measure, or 0 when the event is null.
fn conditional_on(mu: &Measure, u: &ConfigFunction, y: usize) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for (c, w) in mu.support() {
        if c >> y & 1 == 1 {
            num += w * u.value(c);
            den += w;
        }
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

/// ⟨∇_{x,e_i} u⟩_ρ against 2ρ(⟨u | η_{x+e_i} = 1⟩_ρ − ⟨u | η_x = 1⟩_ρ).
pub fn mecke_kawasaki(u: &ConfigFunction, x: &Site, i: usize, rho: f64) -> Result<IdentityCheck> {
    let (a, b) = neighbour(u, x, i)?;
    let mu = Measure::bernoulli(u.space(), rho)?;
    let lhs = mu.expect(&u.gradient_field(x, i)?)?;
    let rhs = 2.0 * rho * (conditional_on(&mu, u, b) - conditional_on(&mu, u, a));
    Ok(IdentityCheck::new(lhs, rhs, 0.0))
}

/// The canonical version on the whole space of u (playing Λ⁺) with N
/// particles: ⟨∇_{x,e_i} u⟩_N = (2N/|Λ⁺|)(⟨u | η_{x+e_i} = 1⟩_N − ⟨u | η_x = 1⟩_N).
pub fn canonical_mecke(u: &ConfigFunction, x: &Site, i: usize, count: usize) -> Result<IdentityCheck> {
    let (a, b) = neighbour(u, x, i)?;
    let space = u.space();
    let mu = Measure::canonical(space, space.sites(), count, &|_| None)?;
    let lhs = mu.expect(&u.gradient_field(x, i)?)?;
    let factor = 2.0 * count as f64 / space.len() as f64;
    let rhs = factor * (conditional_on(&mu, u, b) - conditional_on(&mu, u, a));
    Ok(IdentityCheck::new(lhs, rhs, 0.0))
}

/// Σ_{x∈Λ} ⟨η̃_x π̃_{x,x+e_i}[u]⟩_{α(ρ)} against (α/2ρ) Σ_{x∈Λ} ⟨∇_{x,e_i} u⟩_ρ.
///
/// The free space is the space of u, so it must contain Λ and Λ + e_i.
pub fn gradient_coupling(u: &ConfigFunction, region: &[Site], i: usize, rho: f64, k: u32) -> Result<IdentityCheck> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Precondition(format!("gradient coupling needs ρ ∈ (0,1), got {rho}")));
    }
    let alpha = alpha_of(rho);
    let pm = PoissonMeasure::new(alpha, k)?;
    let n = u.space().len();
    let pairs = region.iter().map(|x| neighbour(u, x, i)).collect::<Result<Vec<_>>>()?;
    check_free(n, k)?;
    let lhs = free_sum(n, &pm, |c| {
        let base = u.value(project(c));
        pairs
            .iter()
            .filter(|(a, _)| c[*a] > 0)
            .map(|&(a, b)| {
                let mut moved = c.to_vec();
                moved[a] -= 1;
                moved[b] += 1;
                c[a] as f64 * (u.value(project(&moved)) - base)
            })
            .sum()
    });
    let mu = Measure::bernoulli(u.space(), rho)?;
    let mut grad = 0.0;
    for x in region {
        grad += mu.expect(&u.gradient_field(x, i)?)?;
    }
    let rhs = alpha / (2.0 * rho) * grad;
    // Mecke on the truncated law leaves α·2‖u‖·w_K per term; replacing the
    // truncated occupation law by Bernoulli(ρ) costs at most 2‖u‖·n·tail per
    // evaluation, two evaluations per term.
    let per_term = alpha * 2.0 * u.sup_norm() * (pm.weights[k as usize] + 2.0 * n as f64 * pm.tail);
    Ok(IdentityCheck::new(lhs, rhs, per_term * region.len() as f64))
}

/// Count vectors of `m` labelled particles placed uniformly on `n` sites,
/// with their multinomial probabilities.
fn multinomial(n: usize, m: u32) -> Vec<(Vec<u32>, f64)> {
    let ln_fact = |k: u32| (1..=k).map(|j| (j as f64).ln()).sum::<f64>();
    let mut out = Vec::new();
    let mut counts = vec![0u32; n];
    fn rec(
        i: usize,
        left: u32,
        counts: &mut Vec<u32>,
        out: &mut Vec<(Vec<u32>, f64)>,
        m: u32,
        n: usize,
        ln_fact: &dyn Fn(u32) -> f64,
    ) {
        if i + 1 == counts.len() {
            counts[i] = left;
            let ln_w = ln_fact(m) - counts.iter().map(|&c| ln_fact(c)).sum::<f64>() - m as f64 * (n as f64).ln();
            out.push((counts.clone(), ln_w.exp()));
            return;
        }
        for c in 0..=left {
            counts[i] = c;
            rec(i + 1, left - c, counts, out, m, n, ln_fact);
        }
    }
    if n > 0 {
        rec(0, m, &mut counts, &mut out, m, n, &ln_fact);
    }
    out
}

/// Canonical gradient coupling with M independent particles on the space Λ⁺
/// of u:
/// Σ_{x∈Λ} ⟨[u](η̃+δ_{x+e_i}) − [u](η̃+δ_x)⟩_{Λ⁺,M}
///   = Σ_{N=1}^{M+1} |Λ⁺| P_{Λ,M,N}/(2N) Σ_{x∈Λ} ⟨∇_{x,e_i} u⟩_{Λ⁺,N},
/// with P_{Λ,M,N} the law of one plus the number of occupied sites off a
/// fixed site.
pub fn canonical_gradient_coupling(u: &ConfigFunction, region: &[Site], i: usize, m: u32) -> Result<IdentityCheck> {
    let space = u.space();
    let n = space.len();
    check_free(n, m)?;
    let pairs = region.iter().map(|x| neighbour(u, x, i)).collect::<Result<Vec<_>>>()?;
    let configs = multinomial(n, m);
    let mut lhs = 0.0;
    let mut p_mn = vec![0.0; n + 1];
    for (c, w) in &configs {
        let occ = project(c);
        for &(a, b) in &pairs {
            lhs += w * (u.value(occ | 1 << b) - u.value(occ | 1 << a));
        }
        let others = (occ & !1).count_ones() as usize;
        p_mn[others + 1] += w;
    }
    let mut rhs = 0.0;
    for (count, &p) in p_mn.iter().enumerate().skip(1) {
        if p == 0.0 || count > n {
            continue;
        }
        let mu = Measure::canonical(space, space.sites(), count, &|_| None)?;
        let mut grad = 0.0;
        for x in region {
            grad += mu.expect(&u.gradient_field(x, i)?)?;
        }
        rhs += n as f64 * p / (2.0 * count as f64) * grad;
    }
    Ok(IdentityCheck::new(lhs, rhs, 0.0))
}

/// Total variation between the joint law of ([η̃+δ_x], [η̃+δ_y]) under the
/// truncated Poisson(α(ρ)) law and that of (η∨δ_x, η∨δ_y) under Bernoulli(ρ),
/// reported as an identity check with both sides the common mass 1.
pub fn change_of_variable(n: usize, x: usize, y: usize, rho: f64, k: u32) -> Result<IdentityCheck> {
    if x >= n || y >= n {
        return Err(Error::Support(format!("sites {x}, {y} outside {n} free sites")));
    }
    let pm = PoissonMeasure::new(alpha_of(rho), k)?;
    check_free(n, k)?;
    let mut free: HashMap<(Config, Config), f64> = HashMap::new();
    free_sum(n, &pm, |c| {
        let occ = project(c);
        *free.entry((occ | 1 << x, occ | 1 << y)).or_default() += c.iter().map(|&j| pm.weights[j as usize]).product::<f64>();
        0.0
    });
    let mut exclusion: HashMap<(Config, Config), f64> = HashMap::new();
    for c in 0..(1u64 << n) {
        *exclusion.entry((c | 1 << x, c | 1 << y)).or_default() += bernoulli_weight(rho, c.count_ones(), n);
    }
    let mut tv = 0.0;
    for (key, p) in &exclusion {
        tv += (p - free.get(key).copied().unwrap_or(0.0)).abs();
    }
    for (key, p) in &free {
        if !exclusion.contains_key(key) {
            tv += p;
        }
    }
    let tv = 0.5 * tv;
    Ok(IdentityCheck::new(tv, 0.0, 2.0 * n as f64 * pm.tail))
}

/// Both sides of the weighted multiscale Poincaré inequality (without the
/// constant) for u on □_m⁺ in d = 1..3, after recentring u on the sectors of
/// the particle number in □_m⁺.
#[derive(Clone, Debug, Serialize)]
pub struct PoincareProbe {
    pub m: u32,
    pub rho: f64,
    /// (⟨u²⟩_ρ / |□_m|)^{1/2}.
    pub lhs: f64,
    /// Σ_n 3^n (mean over z of the weighted spatial-average energy)^{1/2}.
    pub rhs: f64,
    /// Scale-by-scale contributions to the right-hand side.
    pub scales: Vec<f64>,
    /// lhs/rhs, or 0 when u vanishes.
    pub ratio: f64,
}

/// Replace u by u − ⟨u | particle number⟩ with the canonical (uniform) mean.
pub fn recenter(u: &ConfigFunction) -> ConfigFunction {
    let len = u.space().len();
    let mut sums = vec![0.0; len + 1];
    let mut sizes = vec![0usize; len + 1];
    for (c, v) in u.values().iter().enumerate() {
        let k = (c as u64).count_ones() as usize;
        sums[k] += v;
        sizes[k] += 1;
    }
    ConfigFunction::from_fn(u.space(), |c| {
        let k = c.count_ones() as usize;
        u.value(c) - sums[k] / sizes[k] as f64
    })
}

/// Conditional expectation given the particle number in `mask` and the
/// configuration off it, under any exchangeable measure.
fn condition_on_sector(values: &[f64], mask: u64) -> Vec<f64> {
    let mut sums: HashMap<(u64, u32), (f64, usize)> = HashMap::new();
    for (c, v) in values.iter().enumerate() {
        let c = c as u64;
        let e = sums.entry((c & !mask, (c & mask).count_ones())).or_default();
        e.0 += v;
        e.1 += 1;
    }
    (0..values.len() as u64)
        .map(|c| {
            let (s, k) = sums[&(c & !mask, (c & mask).count_ones())];
            s / k as f64
        })
        .collect()
}

pub fn weighted_poincare_probe(u: &ConfigFunction, m: u32, rho: f64, dim: usize) -> Result<PoincareProbe> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::Precondition(format!("Poincaré probe needs ρ ∈ (0,1), got {rho}")));
    }
    let big = Domain::triadic(m, dim)?;
    let plus = big.structure().enlarged;
    let space: Arc<StateSpace> = StateSpace::new(plus.clone())?;
    let u = recenter(&u.embed(&space)?);
    let mu = Measure::bernoulli(&space, rho)?;
    let lhs = (mu.expect(&u.mul(&u)?)? / big.len() as f64).sqrt();
    let mut scales = Vec::with_capacity(m as usize + 1);
    for n in 0..=m {
        let centers = if n == m { vec![vec![0; dim]] } else { crate::lattice::triadic_partition(m, n, dim)? };
        let small = Domain::triadic(n, dim)?;
        let mut acc = 0.0;
        for z in &centers {
            let cell = small.translate(z);
            let cell_plus = cell.structure().enlarged;
            let mask = space.mask(&cell_plus)?;
            let vol = cell.len() as f64;
            let mut comps = Vec::with_capacity(dim);
            for i in 0..dim {
                let mut avg = vec![0.0; space.size()];
                for x in cell.sites() {
                    let g = u.gradient_field(x, i)?;
                    for (a, v) in avg.iter_mut().zip(g.values()) {
                        *a += v / vol;
                    }
                }
                comps.push(condition_on_sector(&avg, mask));
            }
            let plus_len = cell_plus.len() as f64;
            let mut e = 0.0;
            for (c, w) in mu.support() {
                let inside = (c & mask).count_ones();
                let n_star = if rho <= 0.5 { inside } else { cell_plus.len() as u32 - inside };
                if n_star == 0 {
                    continue;
                }
                let sq: f64 = comps.iter().map(|v| v[c as usize].powi(2)).sum();
                e += w * plus_len / (2.0 * n_star as f64) * sq;
            }
            acc += e;
        }
        scales.push(3f64.powi(n as i32) * (acc / centers.len() as f64).sqrt());
    }
    let rhs: f64 = scales.iter().sum();
    let ratio = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(PoincareProbe { m, rho, lhs, rhs, scales, ratio })
}
