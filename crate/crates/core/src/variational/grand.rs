//! Grand-canonical subadditive quantities ν, ν*, J and the matrices D̄, D̄*.

use crate::ensemble::{bernoulli_weight, compressibility, swap_bits, ConfigFunction, StateSpace};
use crate::lattice::{Domain, Site};
use crate::rates::{bond_tables, exterior_window, BondTable, Outside, RateModel};
use crate::solver::{cg, LaplacianBuilder, DEFAULT_TOL};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::sync::Arc;

fn check_density(rho: f64) -> Result<()> {
    if rho > 0.0 && rho < 1.0 {
        Ok(())
    } else {
        Err(Error::Precondition(format!("density {rho} must lie in (0,1)")))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Pack the bits of `cfg` at `positions` into a compact index.
#[inline]
fn gather(cfg: u64, positions: &[usize]) -> usize {
    positions.iter().enumerate().fold(0, |k, (j, &p)| k | ((cfg >> p & 1) as usize) << j)
}

/// Minimizers of ν(ρ, Λ, e_k) for every direction, and D̄(ρ, Λ).
#[derive(Clone, Debug)]
pub struct PrimalSolution {
    pub rho: f64,
    pub domain: Domain,
    /// State space on Λ⁺; exterior rate-window sites are averaged out.
    pub space: Arc<StateSpace>,
    /// φ_k = v(·, ρ, Λ, e_k) − ℓ_{e_k,Λ⁺}: mean zero, F_0(Λ⁻)-measurable.
    pub correctors: Vec<ConfigFunction>,
    pub dbar: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
    tables: Vec<BondTable>,
    weights: Vec<f64>,
}

/// Solve the primal problem for all basis slopes at once.
pub fn solve_primal(rho: f64, domain: &Domain, model: &RateModel) -> Result<PrimalSolution> {
    check_density(rho)?;
    let dim = domain.dim();
    let st = domain.structure();
    let space = StateSpace::new(st.enlarged.clone())?;
    let tables = bond_tables(model, &st.enlarged_bonds.bonds, &|s| space.position(s), &Outside::Bernoulli(rho))?;
    let minus: Vec<usize> = st.interior.iter().map(|s| space.require(s)).collect::<Result<_>>()?;
    let nvar = 1usize << minus.len();
    let n = space.len();
    let weights: Vec<f64> = (0..space.size() as u64).map(|c| bernoulli_weight(rho, c.count_ones(), n)).collect();

    let mut xs = vec![vec![0.0; nvar]; dim];
    let mut residual = 0.0f64;
    let mut iterations = 0;
    if nvar > 1 {
        let mut bld = LaplacianBuilder::new(nvar, dim);
        let mut h = vec![0.0; dim];
        for cfg in 0..space.size() as u64 {
            let w = weights[cfg as usize];
            let s = gather(cfg, &minus);
            for t in &tables {
                if !t.active(cfg) {
                    continue;
                }
                let e = t.exchange(cfg);
                let tt = gather(e, &minus);
                if s == tt {
                    continue;
                }
                let wc = w * t.rate(cfg);
                let g = (cfg >> t.x & 1) as f64 - (cfg >> t.y & 1) as f64;
                h.iter_mut().for_each(|v| *v = 0.0);
                h[t.bond.dir] = wc * g;
                bld.edge(s, tt, wc, &h);
            }
        }
        let (a, rhs) = bld.finish();
        let marginal: Vec<f64> =
            (0..nvar).map(|k| bernoulli_weight(rho, (k as u64).count_ones(), minus.len())).collect();
        for (k, b) in rhs.iter().enumerate() {
            let out = cg(&a, b, DEFAULT_TOL)?;
            residual = residual.max(out.residual);
            iterations = iterations.max(out.iterations);
            let mean = dot(&out.x, &marginal);
            xs[k] = out.x.iter().map(|v| v - mean).collect();
        }
    }
    let minus_sites: Vec<Site> = st.interior.clone();
    let correctors = xs
        .iter()
        .map(|x| {
            let mut f = ConfigFunction::from_fn(&space, |c| x[gather(c, &minus)]);
            f = f.with_support(&minus_sites)?;
            Ok(f)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut sol = PrimalSolution {
        rho,
        domain: domain.clone(),
        space,
        correctors,
        dbar: DMatrix::zeros(dim, dim),
        residual,
        iterations,
        tables,
        weights,
    };
    let basis: Vec<ConfigFunction> =
        (0..dim).map(|k| sol.minimizer(&unit(dim, k))).collect::<Result<_>>()?;
    let norm = 1.0 / (2.0 * compressibility(rho) * domain.len() as f64);
    for j in 0..dim {
        for k in j..dim {
            let v = norm * sol.bilinear(&basis[j], &basis[k])?;
            sol.dbar[(j, k)] = v;
            sol.dbar[(k, j)] = v;
        }
    }
    Ok(sol)
}

pub(crate) fn unit(dim: usize, k: usize) -> Vec<f64> {
    let mut e = vec![0.0; dim];
    e[k] = 1.0;
    e
}

impl PrimalSolution {
    /// φ(·, ρ, Λ, ξ) = Σ_k ξ_k φ_k.
    pub fn corrector(&self, xi: &[f64]) -> ConfigFunction {
        let mut f = ConfigFunction::zero(&self.space).map(|_| 0.0);
        for (k, phi) in self.correctors.iter().enumerate() {
            f = f.add(&phi.scale(xi[k])).expect("same space");
        }
        f
    }

    /// v(·, ρ, Λ, p) = ℓ_{p,Λ⁺} + φ(·, ρ, Λ, p).
    pub fn minimizer(&self, p: &[f64]) -> Result<ConfigFunction> {
        let plus = self.space.sites().to_vec();
        ConfigFunction::affine(&self.space, p, &plus)?.add(&self.corrector(p))
    }

    /// ν(ρ, Λ, p) = ½ p·D̄p.
    pub fn nu(&self, p: &[f64]) -> f64 {
        let v = nalgebra::DVector::from_column_slice(p);
        0.5 * v.dot(&(&self.dbar * &v))
    }

    /// Σ_{b∈overline{Λ*}} ⟨c_b (π_b f)(π_b g)⟩_ρ for f, g on the Λ⁺ space.
    pub fn bilinear(&self, f: &ConfigFunction, g: &ConfigFunction) -> Result<f64> {
        bilinear(&self.space, &self.weights, &self.tables, f, g, true)
    }

    /// Σ_b ⟨(π_b f)(π_b g)⟩_ρ without the rate.
    pub fn bilinear_free(&self, f: &ConfigFunction, g: &ConfigFunction) -> Result<f64> {
        bilinear(&self.space, &self.weights, &self.tables, f, g, false)
    }

    /// The primal functional (1/(2χ|Λ|)) Σ_b ⟨½ c_b (π_b v)²⟩_ρ.
    pub fn energy(&self, v: &ConfigFunction) -> Result<f64> {
        Ok(0.5 * self.bilinear(v, v)? / (2.0 * compressibility(self.rho) * self.domain.len() as f64))
    }

    /// c̄(ρ, Λ) = 2χ(ρ) D̄.
    pub fn conductivity(&self) -> DMatrix<f64> {
        &self.dbar * (2.0 * compressibility(self.rho))
    }

    /// Largest violation of the first-order condition against the indicator
    /// basis of F_0(Λ⁻), relative to the largest linear term.
    pub fn first_order_residual(&self, p: &[f64]) -> Result<f64> {
        let v = self.minimizer(p)?;
        let minus: Vec<usize> = self
            .domain
            .structure()
            .interior
            .iter()
            .map(|s| self.space.require(s))
            .collect::<Result<_>>()?;
        let nvar = 1usize << minus.len();
        let mut grad = vec![0.0; nvar];
        let mut scale = vec![0.0; nvar];
        let vals = v.values();
        for cfg in 0..self.space.size() as u64 {
            let w = self.weights[cfg as usize];
            for t in &self.tables {
                if !t.active(cfg) {
                    continue;
                }
                let e = t.exchange(cfg);
                let (s, tt) = (gather(cfg, &minus), gather(e, &minus));
                if s == tt {
                    continue;
                }
                let term = w * t.rate(cfg) * (vals[e as usize] - vals[cfg as usize]);
                grad[tt] += term;
                grad[s] -= term;
                scale[s] += term.abs();
            }
        }
        let denom = scale.iter().fold(0.0f64, |m, v| m.max(*v)).max(1e-300);
        Ok(grad.iter().fold(0.0f64, |m, v| m.max(v.abs())) / denom)
    }
}

fn bilinear(
    space: &StateSpace,
    weights: &[f64],
    tables: &[BondTable],
    f: &ConfigFunction,
    g: &ConfigFunction,
    with_rate: bool,
) -> Result<f64> {
    if **f.space() != *space || **g.space() != *space {
        return Err(Error::Support("function is not defined on the problem's state space".into()));
    }
    let (fv, gv) = (f.values(), g.values());
    let mut acc = 0.0;
    for cfg in 0..space.size() as u64 {
        let w = weights[cfg as usize];
        if w == 0.0 {
            continue;
        }
        for t in tables {
            if t.active(cfg) {
                let e = t.exchange(cfg) as usize;
                let c = cfg as usize;
                let r = if with_rate { t.rate(cfg) } else { 1.0 };
                acc += w * r * (fv[e] - fv[c]) * (gv[e] - gv[c]);
            }
        }
    }
    Ok(acc)
}

/// Result of [`solve_nu`].
#[derive(Clone, Debug)]
pub struct NuResult {
    pub value: f64,
    pub minimizer: ConfigFunction,
    pub residual: f64,
}

/// ν(ρ, Λ, p) and its minimizer v ∈ ℓ_{p,Λ⁺} + F_0(Λ⁻).
pub fn solve_nu(rho: f64, domain: &Domain, p: &[f64], model: &RateModel) -> Result<NuResult> {
    let sol = solve_primal(rho, domain, model)?;
    let minimizer = sol.minimizer(p)?;
    Ok(NuResult { value: sol.energy(&minimizer)?, minimizer, residual: sol.residual })
}

/// One canonical sector of the dual problem: particle count N in Λ⁺ and the
/// exterior window configuration ζ.
#[derive(Clone, Debug)]
pub struct DualSector {
    pub count: u32,
    pub exterior: u64,
    /// Total particles N + |ζ|, which fixes the Bernoulli weight of the sector.
    pub particles: u32,
    /// S_{jk} = Σ_{η∈sector} Σ_b (π_b ℓ_{e_j})(π_b u_k).
    pub gram: DMatrix<f64>,
}

/// Maximizers u(·, Λ, e_k) of ν* and the sector data giving D̄*(ρ, Λ)^{-1} for
/// every ρ. The maximizers do not depend on ρ.
#[derive(Clone, Debug)]
pub struct DualSolution {
    pub domain: Domain,
    /// Λ⁺ together with the exterior rate-window sites.
    pub space: Arc<StateSpace>,
    pub plus: Vec<Site>,
    pub exterior: Vec<Site>,
    pub maximizers: Vec<ConfigFunction>,
    pub sectors: Vec<DualSector>,
    pub residual: f64,
    tables: Vec<BondTable>,
}

/// Solve the dual problem sector by sector.
pub fn solve_nu_star(domain: &Domain, model: &RateModel) -> Result<DualSolution> {
    let dim = domain.dim();
    let st = domain.structure();
    let bonds = &st.enlarged_bonds.bonds;
    let plus = st.enlarged.clone();
    let exterior = exterior_window(model, bonds, &plus);
    let mut all = plus.clone();
    all.extend(exterior.iter().cloned());
    let space = StateSpace::new(all)?;
    let tables = bond_tables(model, bonds, &|s| space.position(s), &Outside::Forbid)?;
    let plus_pos: Vec<usize> = plus.iter().map(|s| space.require(s)).collect::<Result<_>>()?;
    let ext_pos: Vec<usize> = exterior.iter().map(|s| space.require(s)).collect::<Result<_>>()?;
    let local_of = |s: &Site| plus.iter().position(|t| t == s);
    let ends: Vec<(usize, usize)> =
        bonds.iter().map(|b| (local_of(&b.base).unwrap(), local_of(&b.tip()).unwrap())).collect();
    let np = plus.len();
    let scatter = |local: u64, pos: &[usize]| -> u64 {
        pos.iter().enumerate().fold(0, |c, (k, &p)| c | (local >> k & 1) << p)
    };
    let mut rank = vec![0u32; 1 << np];
    let mut members: Vec<Vec<u64>> = vec![Vec::new(); np + 1];
    for local in 0..(1u64 << np) {
        let n = local.count_ones() as usize;
        rank[local as usize] = members[n].len() as u32;
        members[n].push(local);
    }
    let jobs: Vec<(u64, usize)> =
        (0..(1u64 << exterior.len())).flat_map(|z| (1..np).map(move |n| (z, n))).collect();

    struct SectorOut {
        zeta: u64,
        n: usize,
        u: Vec<Vec<f64>>,
        gram: DMatrix<f64>,
        residual: f64,
    }
    let outs: Vec<SectorOut> = jobs
        .par_iter()
        .map(|&(zeta, n)| -> Result<SectorOut> {
            let ext_cfg = scatter(zeta, &ext_pos);
            let list = &members[n];
            let mut bld = LaplacianBuilder::new(list.len(), dim);
            let mut h = vec![0.0; dim];
            for (s, &local) in list.iter().enumerate() {
                let cfg = scatter(local, &plus_pos) | ext_cfg;
                for (t, &(lx, ly)) in tables.iter().zip(&ends) {
                    if !t.active(cfg) {
                        continue;
                    }
                    let other = rank[swap_bits(local, lx, ly) as usize] as usize;
                    let g = (local >> lx & 1) as f64 - (local >> ly & 1) as f64;
                    h.iter_mut().for_each(|v| *v = 0.0);
                    h[t.bond.dir] = -g;
                    bld.edge(s, other, t.rate(cfg), &h);
                }
            }
            let (a, rhs) = bld.finish();
            let mut u = Vec::with_capacity(dim);
            let mut residual = 0.0f64;
            for b in &rhs {
                let out = cg(&a, b, DEFAULT_TOL)?;
                residual = residual.max(out.residual);
                let mean = out.x.iter().sum::<f64>() / out.x.len() as f64;
                u.push(out.x.iter().map(|v| v - mean).collect::<Vec<f64>>());
            }
            let mut gram = DMatrix::zeros(dim, dim);
            for (s, &local) in list.iter().enumerate() {
                let cfg = scatter(local, &plus_pos) | ext_cfg;
                for (t, &(lx, ly)) in tables.iter().zip(&ends) {
                    if !t.active(cfg) {
                        continue;
                    }
                    let other = rank[swap_bits(local, lx, ly) as usize] as usize;
                    let g = (local >> lx & 1) as f64 - (local >> ly & 1) as f64;
                    for k in 0..dim {
                        gram[(t.bond.dir, k)] += g * (u[k][other] - u[k][s]);
                    }
                }
            }
            Ok(SectorOut { zeta, n, u, gram, residual })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut values = vec![vec![0.0; space.size()]; dim];
    let mut sectors = Vec::with_capacity(outs.len());
    let mut residual = 0.0f64;
    for o in outs {
        let ext_cfg = scatter(o.zeta, &ext_pos);
        for (s, &local) in members[o.n].iter().enumerate() {
            let cfg = (scatter(local, &plus_pos) | ext_cfg) as usize;
            for k in 0..dim {
                values[k][cfg] = o.u[k][s];
            }
        }
        residual = residual.max(o.residual);
        sectors.push(DualSector {
            count: o.n as u32,
            exterior: o.zeta,
            particles: o.n as u32 + o.zeta.count_ones(),
            gram: o.gram,
        });
    }
    let maximizers =
        values.into_iter().map(|v| ConfigFunction::new(space.clone(), v)).collect::<Result<Vec<_>>>()?;
    Ok(DualSolution { domain: domain.clone(), space, plus, exterior, maximizers, sectors, residual, tables })
}

impl DualSolution {
    /// D̄*(ρ, Λ)^{-1}.
    pub fn inverse_matrix(&self, rho: f64) -> Result<DMatrix<f64>> {
        check_density(rho)?;
        let dim = self.domain.dim();
        let total = self.space.len();
        let mut m = DMatrix::zeros(dim, dim);
        for s in &self.sectors {
            m += &s.gram * bernoulli_weight(rho, s.particles, total);
        }
        m /= 2.0 * compressibility(rho) * self.domain.len() as f64;
        Ok((&m + m.transpose()) * 0.5)
    }

    /// D̄*(ρ, Λ).
    pub fn dbar_star(&self, rho: f64) -> Result<DMatrix<f64>> {
        self.inverse_matrix(rho)?
            .try_inverse()
            .ok_or_else(|| Error::Precondition("singular dual matrix".into()))
    }

    /// ν*(ρ, Λ, q) = ½ q·D̄*^{-1}q.
    pub fn nu_star(&self, rho: f64, q: &[f64]) -> Result<f64> {
        let v = nalgebra::DVector::from_column_slice(q);
        Ok(0.5 * v.dot(&(self.inverse_matrix(rho)? * &v)))
    }

    /// u(·, Λ, q) = Σ_k q_k u_k.
    pub fn maximizer(&self, q: &[f64]) -> ConfigFunction {
        let mut f = ConfigFunction::zero(&self.space);
        for (k, u) in self.maximizers.iter().enumerate() {
            f = f.add(&u.scale(q[k])).expect("same space");
        }
        f
    }

    pub fn bernoulli_weights(&self, rho: f64) -> Vec<f64> {
        let n = self.space.len();
        (0..self.space.size() as u64).map(|c| bernoulli_weight(rho, c.count_ones(), n)).collect()
    }

    /// Σ_b ⟨c_b (π_b f)(π_b g)⟩_ρ on the dual space.
    pub fn bilinear(&self, rho: f64, f: &ConfigFunction, g: &ConfigFunction) -> Result<f64> {
        bilinear(&self.space, &self.bernoulli_weights(rho), &self.tables, f, g, true)
    }

    /// Σ_b ⟨(π_b f)(π_b g)⟩_ρ on the dual space.
    pub fn bilinear_free(&self, rho: f64, f: &ConfigFunction, g: &ConfigFunction) -> Result<f64> {
        bilinear(&self.space, &self.bernoulli_weights(rho), &self.tables, f, g, false)
    }

    /// The dual functional (1/(2χ|Λ|)) Σ_b ⟨(π_b ℓ_q)(π_b u) − ½ c_b (π_b u)²⟩_ρ.
    pub fn functional(&self, rho: f64, q: &[f64], u: &ConfigFunction) -> Result<f64> {
        let l = ConfigFunction::affine(&self.space, q, &self.plus)?;
        let lin = self.bilinear_free(rho, &l, u)?;
        let quad = self.bilinear(rho, u, u)?;
        Ok((lin - 0.5 * quad) / (2.0 * compressibility(rho) * self.domain.len() as f64))
    }

    /// E_ρ[f | G_{Λ⁺}]: average over each (particle count in Λ⁺, exterior) class.
    pub fn conditional_mean(&self, f: &ConfigFunction) -> Result<ConfigFunction> {
        let plus_mask = self.space.mask(&self.plus)?;
        let np = self.plus.len() as u64;
        let key = |c: u64| (c & !plus_mask) * (np + 1) + (c & plus_mask).count_ones() as u64;
        let mut sums = std::collections::HashMap::<u64, (f64, f64)>::new();
        for c in 0..self.space.size() as u64 {
            let e = sums.entry(key(c)).or_insert((0.0, 0.0));
            e.0 += f.value(c);
            e.1 += 1.0;
        }
        Ok(ConfigFunction::from_fn(&self.space, |c| {
            let (s, n) = sums[&key(c)];
            s / n
        }))
    }
}

/// D̄, D̄*, c̄ = 2χD̄ and c̄* = 2χD̄*; at ρ ∈ {0,1} the conductivities vanish
/// and the diffusion matrices are left undefined.
#[derive(Clone, Debug)]
pub struct DiffusionReport {
    pub rho: f64,
    pub dbar: Option<DMatrix<f64>>,
    pub dbar_star: Option<DMatrix<f64>>,
    pub cbar: DMatrix<f64>,
    pub cbar_star: DMatrix<f64>,
    pub residual: f64,
}

pub fn diffusion_matrices(rho: f64, domain: &Domain, model: &RateModel) -> Result<DiffusionReport> {
    let dual = solve_nu_star(domain, model)?;
    diffusion_matrices_with(rho, domain, model, &dual)
}

/// As [`diffusion_matrices`], reusing a dual solution (which is ρ-independent).
pub fn diffusion_matrices_with(
    rho: f64,
    domain: &Domain,
    model: &RateModel,
    dual: &DualSolution,
) -> Result<DiffusionReport> {
    let dim = domain.dim();
    if rho == 0.0 || rho == 1.0 {
        return Ok(DiffusionReport {
            rho,
            dbar: None,
            dbar_star: None,
            cbar: DMatrix::zeros(dim, dim),
            cbar_star: DMatrix::zeros(dim, dim),
            residual: 0.0,
        });
    }
    let primal = solve_primal(rho, domain, model)?;
    let ds = dual.dbar_star(rho)?;
    let chi2 = 2.0 * compressibility(rho);
    Ok(DiffusionReport {
        rho,
        cbar: &primal.dbar * chi2,
        cbar_star: &ds * chi2,
        dbar: Some(primal.dbar.clone()),
        dbar_star: Some(ds),
        residual: primal.residual.max(dual.residual),
    })
}

/// Everything about J(ρ, Λ, p, q).
#[derive(Clone, Debug)]
pub struct MasterReport {
    pub rho: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub nu: f64,
    pub nu_star: f64,
    /// ν + ν* − p·q.
    pub j: f64,
    /// (1/(4χ|Λ|)) Σ_b ⟨c_b (π_b v(p,q))²⟩_ρ.
    pub j_quadratic: f64,
    /// (1/(2χ|Λ|)) Σ_{x∈Λ} ⟨∇_x v(p,q)⟩_ρ.
    pub slope: Vec<f64>,
    /// D̄*^{-1} q − p.
    pub slope_expected: Vec<f64>,
    /// v(·, ρ, Λ, p, q) = u_q − v_p − E[u_q − v_p | G_{Λ⁺}].
    pub optimizer: ConfigFunction,
    pub residual: f64,
}

/// J from independently computed primal and dual solutions at the same ρ, Λ.
pub struct Master<'a> {
    pub primal: &'a PrimalSolution,
    pub dual: &'a DualSolution,
    weights: Vec<f64>,
}

impl<'a> Master<'a> {
    pub fn new(primal: &'a PrimalSolution, dual: &'a DualSolution) -> Result<Self> {
        if primal.domain.sites() != dual.domain.sites() {
            return Err(Error::Support("primal and dual solved on different domains".into()));
        }
        let weights = dual.bernoulli_weights(primal.rho);
        Ok(Master { primal, dual, weights })
    }

    fn norm(&self) -> f64 {
        2.0 * compressibility(self.primal.rho) * self.primal.domain.len() as f64
    }

    pub fn report(&self, p: &[f64], q: &[f64]) -> Result<MasterReport> {
        let rho = self.primal.rho;
        let nu = self.primal.nu(p);
        let nu_star = self.dual.nu_star(rho, q)?;
        let j = nu + nu_star - dot(p, q);
        let vp = self.primal.minimizer(p)?.embed(&self.dual.space)?;
        let w = self.dual.maximizer(q).sub(&vp)?;
        let v = w.sub(&self.dual.conditional_mean(&w)?)?;
        let j_quadratic = 0.5 * self.dual.bilinear(rho, &v, &v)? / self.norm();
        let dim = self.primal.domain.dim();
        let mut slope = vec![0.0; dim];
        let vals = v.values();
        for (i, s) in slope.iter_mut().enumerate() {
            let mut acc = 0.0;
            for x in self.primal.domain.sites() {
                let a = self.dual.space.require(x)?;
                let b = self.dual.space.require(&crate::lattice::shift(x, i, 1))?;
                for c in 0..self.dual.space.size() {
                    let d = (c >> a & 1) as f64 - (c >> b & 1) as f64;
                    if d != 0.0 {
                        let e = swap_bits(c as u64, a, b) as usize;
                        acc += self.weights[c] * (vals[e] - vals[c]) * d;
                    }
                }
            }
            *s = acc / self.norm();
        }
        let inv = self.dual.inverse_matrix(rho)?;
        let qv = nalgebra::DVector::from_column_slice(q);
        let iq = inv * qv;
        let slope_expected = (0..dim).map(|k| iq[k] - p[k]).collect();
        Ok(MasterReport {
            rho,
            p: p.to_vec(),
            q: q.to_vec(),
            nu,
            nu_star,
            j,
            j_quadratic,
            slope,
            slope_expected,
            optimizer: v,
            residual: self.primal.residual.max(self.dual.residual),
        })
    }

    /// J(ρ, Λ, p, q; w) = (1/(2χ|Λ|)) Σ_b ⟨−½ c_b (π_b w)² − c_b (π_b ℓ_p)(π_b w) + (π_b ℓ_q)(π_b w)⟩_ρ.
    pub fn functional(&self, p: &[f64], q: &[f64], w: &ConfigFunction) -> Result<f64> {
        let rho = self.primal.rho;
        let lp = ConfigFunction::affine(&self.dual.space, p, &self.dual.plus)?;
        let lq = ConfigFunction::affine(&self.dual.space, q, &self.dual.plus)?;
        let quad = self.dual.bilinear(rho, w, w)?;
        let cross = self.dual.bilinear(rho, &lp, w)?;
        let lin = self.dual.bilinear_free(rho, &lq, w)?;
        Ok((-0.5 * quad - cross + lin) / self.norm())
    }

    /// (1/(4χ|Λ|)) Σ_b ⟨c_b (π_b f)²⟩_ρ on the dual space.
    pub fn half_energy(&self, f: &ConfigFunction) -> Result<f64> {
        Ok(0.5 * self.dual.bilinear(self.primal.rho, f, f)? / self.norm())
    }
}

/// J(ρ, Λ, p, q) with both problems solved from scratch.
pub fn master_j(rho: f64, domain: &Domain, p: &[f64], q: &[f64], model: &RateModel) -> Result<MasterReport> {
    let primal = solve_primal(rho, domain, model)?;
    let dual = solve_nu_star(domain, model)?;
    Master::new(&primal, &dual)?.report(p, q)
}
