//! Kinetic Monte Carlo for the exclusion process on the discrete torus T^d_N
//! with generator N²L, its empirical measure and Fourier modes.
//!
//! Time is macroscopic throughout: a bond fires at rate N² c_b(η) when its
//! endpoints differ. The production engine uses thinning against the uniform
//! bound N²λ over the active bonds; [`TorusState::advance_exact`] is a direct
//! Gillespie scheme over a Fenwick tree of exact rates, kept as an oracle.

use crate::lattice::{shift, Bond, Site};
use crate::rates::RateModel;
use crate::{Error, Result};
use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug)]
struct TorusBond {
    a: usize,
    b: usize,
    window: Vec<usize>,
    /// Rate for each occupation of the window, bit k = window site k.
    table: Vec<f64>,
}

/// Geometry and rates of T^d_N, shared by all replicas.
#[derive(Clone, Debug)]
pub struct Torus {
    n: usize,
    dim: usize,
    lambda: f64,
    model: String,
    bonds: Vec<TorusBond>,
    /// Bonds having the site as an endpoint.
    endpoint_bonds: Vec<Vec<usize>>,
    /// Bonds whose rate or activity depends on the site.
    touching: Vec<Vec<usize>>,
}

impl Torus {
    pub fn new(n: usize, dim: usize, model: &RateModel) -> Result<Arc<Self>> {
        if dim == 0 || n < 3 {
            return Err(Error::Geometry(format!("torus needs N ≥ 3 and d ≥ 1, got N={n}, d={dim}")));
        }
        let sites = n.checked_pow(dim as u32).filter(|s| *s <= 1 << 24).ok_or_else(|| {
            Error::Geometry(format!("torus with N={n}, d={dim} is too large"))
        })?;
        let index = |s: &Site| -> usize {
            s.iter().rev().fold(0usize, |acc, &c| acc * n + c.rem_euclid(n as i32) as usize)
        };
        let mut bonds = Vec::with_capacity(sites * dim);
        for x in 0..sites {
            let coords = coords_of(x, n, dim);
            for i in 0..dim {
                let bond = Bond::new(coords.clone(), i);
                let (a, b) = (x, index(&shift(&coords, i, 1)));
                let window: Vec<usize> = model.window(&bond).iter().map(index).collect();
                let folded = window.iter().enumerate().any(|(j, w)| window[..j].contains(w));
                if folded || window.iter().any(|w| *w == a || *w == b) {
                    return Err(Error::Geometry(format!(
                        "N={n} is too small for {}: a rate window wraps onto its bond",
                        model.name()
                    )));
                }
                if window.len() > 16 {
                    return Err(Error::CapExceeded { needed: window.len(), cap: 16 });
                }
                let table = (0..1u32 << window.len()).map(|bits| model.rate_bits(&bond, bits)).collect();
                bonds.push(TorusBond { a, b, window, table });
            }
        }
        let mut endpoint_bonds = vec![Vec::new(); sites];
        let mut touching = vec![Vec::new(); sites];
        for (k, bd) in bonds.iter().enumerate() {
            endpoint_bonds[bd.a].push(k);
            endpoint_bonds[bd.b].push(k);
            for s in [bd.a, bd.b].iter().chain(&bd.window) {
                if !touching[*s].contains(&k) {
                    touching[*s].push(k);
                }
            }
        }
        Ok(Arc::new(Torus { n, dim, lambda: model.lambda(), model: model.name(), bonds, endpoint_bonds, touching }))
    }

    pub fn side(&self) -> usize {
        self.n
    }
    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn sites(&self) -> usize {
        self.endpoint_bonds.len()
    }
    pub fn model(&self) -> &str {
        &self.model
    }

    fn rate(&self, k: usize, occ: &[bool]) -> f64 {
        let bd = &self.bonds[k];
        let bits = bd.window.iter().enumerate().fold(0usize, |c, (j, &s)| c | (occ[s] as usize) << j);
        bd.table[bits]
    }

    fn active(&self, k: usize, occ: &[bool]) -> bool {
        let bd = &self.bonds[k];
        occ[bd.a] != occ[bd.b]
    }
}

fn coords_of(mut x: usize, n: usize, dim: usize) -> Site {
    let mut c = Vec::with_capacity(dim);
    for _ in 0..dim {
        c.push((x % n) as i32);
        x /= n;
    }
    c
}

fn exponential(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    -(1.0 - rng.random::<f64>()).ln() / rate
}

/// A configuration on the torus with its macroscopic clock and RNG.
#[derive(Clone, Debug)]
pub struct TorusState {
    torus: Arc<Torus>,
    occ: Vec<bool>,
    particles: usize,
    t: f64,
    rng: ChaCha8Rng,
}

/// Indexable set of active bonds with O(1) insert, remove and uniform draw.
struct ActiveSet {
    list: Vec<usize>,
    pos: Vec<usize>,
}

impl ActiveSet {
    fn new(torus: &Torus, occ: &[bool]) -> Self {
        let mut s = ActiveSet { list: Vec::new(), pos: vec![usize::MAX; torus.bonds.len()] };
        for k in 0..torus.bonds.len() {
            if torus.active(k, occ) {
                s.insert(k);
            }
        }
        s
    }
    fn insert(&mut self, k: usize) {
        if self.pos[k] == usize::MAX {
            self.pos[k] = self.list.len();
            self.list.push(k);
        }
    }
    fn remove(&mut self, k: usize) {
        let p = self.pos[k];
        if p != usize::MAX {
            let last = self.list.pop().expect("non-empty");
            if last != k {
                self.list[p] = last;
                self.pos[last] = p;
            }
            self.pos[k] = usize::MAX;
        }
    }
}

/// Binary indexed tree over nonnegative bond rates.
struct Fenwick {
    tree: Vec<f64>,
    values: Vec<f64>,
}

impl Fenwick {
    fn new(values: Vec<f64>) -> Self {
        let mut f = Fenwick { tree: vec![0.0; values.len() + 1], values: vec![0.0; values.len()] };
        for (k, v) in values.into_iter().enumerate() {
            f.set(k, v);
        }
        f
    }
    fn set(&mut self, k: usize, v: f64) {
        let delta = v - self.values[k];
        self.values[k] = v;
        let mut i = k + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }
    fn total(&self) -> f64 {
        let mut i = self.values.len();
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i -= i & i.wrapping_neg();
        }
        s
    }
    /// Smallest k with prefix sum through k exceeding `target`, restricted to
    /// positive entries.
    fn find(&self, mut target: f64) -> usize {
        let n = self.values.len();
        let mut pos = 0;
        let mut step = n.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                target -= self.tree[next];
                pos = next;
            }
            step >>= 1;
        }
        let mut k = pos.min(n - 1);
        // Rounding can land on a zero-rate bond; move to the nearest positive one.
        while self.values[k] <= 0.0 && k > 0 {
            k -= 1;
        }
        while self.values[k] <= 0.0 && k + 1 < n {
            k += 1;
        }
        k
    }
}

impl TorusState {
    /// Independent Bernoulli(ρ₀(x/N)) occupations. The RNG is ChaCha8 seeded by
    /// `seed` on stream `stream`, so replicas share a seed and differ by stream.
    pub fn sample_initial(
        torus: &Arc<Torus>,
        profile: &dyn Fn(&[f64]) -> f64,
        seed: u64,
        stream: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let n = torus.n;
        let mut occ = Vec::with_capacity(torus.sites());
        for x in 0..torus.sites() {
            let v: Vec<f64> = coords_of(x, n, torus.dim).iter().map(|&c| c as f64 / n as f64).collect();
            let p = profile(&v);
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::Precondition(format!("initial profile {p} at {v:?} is outside (0,1)")));
            }
            occ.push(rng.random::<f64>() < p);
        }
        Ok(Self::with_rng(torus, occ, rng))
    }

    pub fn from_occupation(torus: &Arc<Torus>, occ: Vec<bool>, seed: u64, stream: u64) -> Result<Self> {
        if occ.len() != torus.sites() {
            return Err(Error::Support(format!("{} occupations for {} sites", occ.len(), torus.sites())));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(Self::with_rng(torus, occ, rng))
    }

    fn with_rng(torus: &Arc<Torus>, occ: Vec<bool>, rng: ChaCha8Rng) -> Self {
        let particles = occ.iter().filter(|b| **b).count();
        TorusState { torus: torus.clone(), occ, particles, t: 0.0, rng }
    }

    pub fn torus(&self) -> &Arc<Torus> {
        &self.torus
    }
    pub fn occupation(&self) -> &[bool] {
        &self.occ
    }
    pub fn particle_count(&self) -> usize {
        self.particles
    }
    pub fn time(&self) -> f64 {
        self.t
    }

    /// Occupations packed into an integer, site x at bit x (small tori only).
    pub fn bits(&self) -> u64 {
        self.occ.iter().enumerate().take(64).fold(0, |c, (k, &o)| c | (o as u64) << k)
    }

    fn exchange(&mut self, k: usize) {
        let bd = &self.torus.bonds[k];
        self.occ.swap(bd.a, bd.b);
    }

    /// Run the thinned jump chain for macroscopic time `dt`.
    pub fn advance(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(Error::Precondition(format!("time step must be nonnegative, got {dt}")));
        }
        let torus = self.torus.clone();
        let end = self.t + dt;
        let bound = (torus.n * torus.n) as f64 * torus.lambda;
        let mut active = ActiveSet::new(&torus, &self.occ);
        loop {
            if active.list.is_empty() {
                break;
            }
            let wait = exponential(&mut self.rng, bound * active.list.len() as f64);
            if self.t + wait > end {
                break;
            }
            self.t += wait;
            let k = active.list[self.rng.random_range(0..active.list.len())];
            let accept = torus.rate(k, &self.occ) / torus.lambda;
            if self.rng.random::<f64>() < accept {
                self.exchange(k);
                let bd = &torus.bonds[k];
                for &s in &[bd.a, bd.b] {
                    for &j in &torus.endpoint_bonds[s] {
                        if torus.active(j, &self.occ) {
                            active.insert(j);
                        } else {
                            active.remove(j);
                        }
                    }
                }
            }
        }
        self.t = end;
        Ok(())
    }

    /// Exact Gillespie scheme with per-bond rates in a Fenwick tree.
    pub fn advance_exact(&mut self, dt: f64) -> Result<()> {
        if !(dt >= 0.0) {
            return Err(Error::Precondition(format!("time step must be nonnegative, got {dt}")));
        }
        let torus = self.torus.clone();
        let scale = (torus.n * torus.n) as f64;
        let rate = |k: usize, occ: &[bool]| if torus.active(k, occ) { scale * torus.rate(k, occ) } else { 0.0 };
        let mut tree = Fenwick::new((0..torus.bonds.len()).map(|k| rate(k, &self.occ)).collect());
        let end = self.t + dt;
        let mut events = 0usize;
        loop {
            let total = tree.total();
            if total <= 1e-12 * scale {
                break;
            }
            let wait = exponential(&mut self.rng, total);
            if self.t + wait > end {
                break;
            }
            self.t += wait;
            let k = tree.find(self.rng.random::<f64>() * total);
            self.exchange(k);
            let bd = &torus.bonds[k];
            for &s in &[bd.a, bd.b] {
                for &j in &torus.touching[s] {
                    tree.set(j, rate(j, &self.occ));
                }
            }
            events += 1;
            if events % 100_000 == 0 {
                tree = Fenwick::new((0..torus.bonds.len()).map(|k| rate(k, &self.occ)).collect());
            }
        }
        self.t = end;
        Ok(())
    }

    pub fn empirical(&self) -> EmpiricalMeasure {
        let n = self.torus.n;
        let atoms = (0..self.occ.len())
            .filter(|&x| self.occ[x])
            .map(|x| coords_of(x, n, self.torus.dim).iter().map(|&c| c as f64 / n as f64).collect())
            .collect();
        EmpiricalMeasure { atoms, weight: (n as f64).powi(-(self.torus.dim as i32)) }
    }

    /// ⟨ρ^N, e_k⟩ = N^{-d} Σ_x η_x e^{−2πi k·x/N} for k ∈ {−n_max, …, n_max}^d.
    pub fn fourier_modes(&self, n_max: usize) -> Result<Modes> {
        let n = self.torus.n;
        if 2 * n_max > n {
            return Err(Error::Precondition(format!("n_max = {n_max} exceeds N/2 = {}", n / 2)));
        }
        let dim = self.torus.dim;
        let twiddle: Vec<Complex64> = (0..n).map(|j| Complex64::from_polar(1.0, -2.0 * PI * j as f64 / n as f64)).collect();
        let occupied: Vec<Site> = (0..self.occ.len()).filter(|&x| self.occ[x]).map(|x| coords_of(x, n, dim)).collect();
        let weight = (n as f64).powi(-(dim as i32));
        let coeffs = Modes::indices(n_max, dim)
            .map(|k| {
                let s: Complex64 = occupied
                    .iter()
                    .map(|x| {
                        let phase = k.iter().zip(x).map(|(a, b)| a * b).sum::<i32>().rem_euclid(n as i32);
                        twiddle[phase as usize]
                    })
                    .sum();
                s * weight
            })
            .collect();
        Ok(Modes { n_max, dim, coeffs })
    }

    pub fn snapshot(&self, n_max: usize) -> Result<Snapshot> {
        let m = self.fourier_modes(n_max)?;
        Ok(Snapshot {
            t: self.t,
            modes: m.coeffs.iter().map(|c| [c.re, c.im]).collect(),
            particle_count: self.particles,
        })
    }
}

/// Atoms of weight N^{-d} at x/N for occupied x.
#[derive(Clone, Debug, Serialize)]
pub struct EmpiricalMeasure {
    pub atoms: Vec<Vec<f64>>,
    pub weight: f64,
}

impl EmpiricalMeasure {
    pub fn total_mass(&self) -> f64 {
        self.atoms.len() as f64 * self.weight
    }
    /// ⟨ρ^N, φ⟩.
    pub fn pair(&self, phi: impl Fn(&[f64]) -> f64) -> f64 {
        self.atoms.iter().map(|v| phi(v)).sum::<f64>() * self.weight
    }
}

/// Complex Fourier coefficients on {−n_max, …, n_max}^d, last coordinate
/// fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct Modes {
    pub n_max: usize,
    pub dim: usize,
    pub coeffs: Vec<Complex64>,
}

impl Modes {
    pub fn indices(n_max: usize, dim: usize) -> impl Iterator<Item = Vec<i32>> {
        let side = 2 * n_max + 1;
        let h = n_max as i32;
        (0..side.pow(dim as u32)).map(move |mut j| {
            let mut k = vec![0i32; dim];
            for slot in k.iter_mut().rev() {
                *slot = (j % side) as i32 - h;
                j /= side;
            }
            k
        })
    }

    pub fn position(&self, k: &[i32]) -> Option<usize> {
        let side = 2 * self.n_max + 1;
        let h = self.n_max as i32;
        if k.len() != self.dim || k.iter().any(|c| c.abs() > h) {
            return None;
        }
        Some(k.iter().fold(0usize, |acc, &c| acc * side + (c + h) as usize))
    }

    pub fn get(&self, k: &[i32]) -> Option<Complex64> {
        self.position(k).map(|p| self.coeffs[p])
    }
}

/// One line of the JSON-lines trajectory stream.
#[derive(Clone, Debug, Serialize)]
pub struct Snapshot {
    pub t: f64,
    /// [re, im] pairs in [`Modes`] order.
    pub modes: Vec<[f64; 2]>,
    pub particle_count: usize,
}

/// e^{tN²L} on the full configuration space of a small torus, by
/// uniformization. Row c is the law at time t started from configuration c
/// (site x at bit x).
pub fn exact_transition(torus: &Torus, t: f64) -> Result<DMatrix<f64>> {
    let sites = torus.sites();
    if sites > 12 {
        return Err(Error::CapExceeded { needed: sites, cap: 12 });
    }
    let size = 1usize << sites;
    let scale = (torus.n * torus.n) as f64;
    let mut q = DMatrix::<f64>::zeros(size, size);
    for c in 0..size {
        let occ: Vec<bool> = (0..sites).map(|x| c >> x & 1 == 1).collect();
        for (k, bd) in torus.bonds.iter().enumerate() {
            if occ[bd.a] != occ[bd.b] {
                let r = scale * torus.rate(k, &occ);
                let to = c ^ (1 << bd.a) ^ (1 << bd.b);
                q[(c, to)] += r;
                q[(c, c)] -= r;
            }
        }
    }
    let bound = (0..size).map(|c| -q[(c, c)]).fold(0.0, f64::max);
    if bound == 0.0 || t == 0.0 {
        return Ok(DMatrix::identity(size, size));
    }
    let p = DMatrix::identity(size, size) + &q / bound;
    let lt = bound * t;
    let mut term = DMatrix::identity(size, size);
    let mut weight = (-lt).exp();
    let mut out = &term * weight;
    let mut mass = weight;
    let mut k = 0u32;
    while mass < 1.0 - 1e-15 && k < 100_000 {
        k += 1;
        term = &term * &p;
        weight *= lt / k as f64;
        out += &term * weight;
        mass += weight;
    }
    Ok(out)
}

/// Relaxation rate of a Fourier mode from replica trajectories sampled on a
/// uniform time grid: regresses a(t+s) on a(t) over all replicas and t, where
/// E[a(t+s) | past] = e^{−κs} a(t) for an eigenmode.
#[derive(Clone, Debug, Serialize)]
pub struct DecayFit {
    pub rate: f64,
    /// Jackknife standard error over replicas.
    pub stderr: f64,
    pub lag: f64,
}

pub fn lag_regression(trajectories: &[Vec<Complex64>], step: f64, lag: usize) -> Result<DecayFit> {
    if lag == 0 || trajectories.is_empty() || trajectories.iter().any(|t| t.len() <= lag) {
        return Err(Error::Precondition("lag regression needs trajectories longer than the lag".into()));
    }
    let sums = |skip: Option<usize>| {
        let (mut num, mut den) = (0.0, 0.0);
        for (r, traj) in trajectories.iter().enumerate() {
            if Some(r) == skip {
                continue;
            }
            for j in 0..traj.len() - lag {
                num += (traj[j + lag] * traj[j].conj()).re;
                den += traj[j].norm_sqr();
            }
        }
        (num, den)
    };
    let s = lag as f64 * step;
    let rate_of = |(num, den): (f64, f64)| -(num / den).ln() / s;
    let rate = rate_of(sums(None));
    let r = trajectories.len();
    let stderr = if r > 1 {
        let leave: Vec<f64> = (0..r).map(|k| rate_of(sums(Some(k)))).collect();
        let mean = leave.iter().sum::<f64>() / r as f64;
        ((r - 1) as f64 / r as f64 * leave.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
    } else {
        f64::NAN
    };
    Ok(DecayFit { rate, stderr, lag: s })
}
