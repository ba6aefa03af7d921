//! Canonical-ensemble quantities: D̂, D̂*, the CLT variance and the special
//! functions A_L, B_{L,ζ}, H_{L,ζ,F}.
//!
//! Conventions: bonds are the interior set Λ*, the state space is Λ together
//! with the exterior rate-window sites (held fixed at ζ), and the measure is
//! uniform on {Σ_Λ η = M}. The variational normalization is the scalar
//! n_Λ,M = (1/d) Σ_{b∈Λ*} ⟨(π_b ℓ_{e_{i(b)}})²⟩_{Λ,M}, which equals 2χ(M/|Λ|)|Λ| for
//! intervals in d = 1.

use super::{range_of, Placed};
use crate::ensemble::{compressibility, swap_bits, ConfigFunction, Measure, StateSpace};
use crate::lattice::{Domain, Site};
use crate::rates::{bond_tables, exterior_window, BondTable, Outside, RateModel};
use crate::solver::{cg, LaplacianBuilder, DEFAULT_TOL};
use crate::{Error, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

/// The sector {Σ_Λ η = M, η = ζ off Λ}.
#[derive(Clone, Debug)]
pub struct CanonicalSector {
    pub domain: Domain,
    pub count: usize,
    pub space: Arc<StateSpace>,
    pub exterior_sites: Vec<Site>,
    /// Members as configurations of `space`, in colex order of their Λ part.
    pub members: Vec<u64>,
    exterior_bits: u64,
    region_pos: Vec<usize>,
    binom: Vec<Vec<u64>>,
    tables: Vec<BondTable>,
    /// Endpoint positions of each table's bond inside Λ (local indexing).
    ends: Vec<(usize, usize)>,
}

/// D̂, D̂* and the conductivities; `None` where χ(M/|Λ|) = 0.
#[derive(Clone, Debug)]
pub struct CanonicalReport {
    pub count: usize,
    pub chi_hat: f64,
    /// The variational normalization n_Λ,M.
    pub normalization: f64,
    pub dhat: Option<DMatrix<f64>>,
    pub dhat_star: Option<DMatrix<f64>>,
    pub chat: DMatrix<f64>,
    pub chat_star: DMatrix<f64>,
    pub residual: f64,
}

/// A_L, B_{L,ζ} and H_{L,ζ,F} as d-vectors of functions on the sector space.
#[derive(Clone, Debug)]
pub struct SpecialFunctions {
    pub a: Vec<ConfigFunction>,
    pub b: Vec<ConfigFunction>,
    pub h: Vec<ConfigFunction>,
}

fn binomials(n: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; n + 2]; n + 1];
    for i in 0..=n {
        c[i][0] = 1;
        for j in 1..=i {
            c[i][j] = c[i - 1][j - 1] + if j <= i - 1 { c[i - 1][j] } else { 0 };
        }
    }
    c
}

impl CanonicalSector {
    pub fn new(
        domain: &Domain,
        count: usize,
        model: &RateModel,
        exterior: &dyn Fn(&Site) -> Option<bool>,
    ) -> Result<Self> {
        let n = domain.len();
        if count > n {
            return Err(Error::EmptySector(format!("{count} particles in {n} sites")));
        }
        let st = domain.structure();
        let bonds = st.interior_bonds.bonds.clone();
        let ext_sites = exterior_window(model, &bonds, domain.sites());
        let mut all = domain.sites().to_vec();
        all.extend(ext_sites.iter().cloned());
        let space = StateSpace::new(all)?;
        let mut exterior_bits = 0u64;
        for s in &ext_sites {
            match exterior(s) {
                Some(true) => exterior_bits |= 1 << space.require(s)?,
                Some(false) => {}
                None => return Err(Error::Support(format!("exterior value at {s:?} not given"))),
            }
        }
        let region_pos: Vec<usize> = domain.sites().iter().map(|s| space.require(s)).collect::<Result<_>>()?;
        let tables = bond_tables(model, &bonds, &|s| space.position(s), &Outside::Forbid)?;
        let ends = bonds
            .iter()
            .map(|b| (domain.position(&b.base).unwrap(), domain.position(&b.tip()).unwrap()))
            .collect();
        let mut sector = CanonicalSector {
            domain: domain.clone(),
            count,
            space,
            exterior_sites: ext_sites,
            members: Vec::new(),
            exterior_bits,
            region_pos,
            binom: binomials(n),
            tables,
            ends,
        };
        let size = sector.binom[n][count] as usize;
        let mut members = Vec::with_capacity(size);
        if count == 0 {
            members.push(sector.to_space(0));
        } else {
            // Gosper's hack walks the k-subsets in increasing (colex) order.
            let mut local: u64 = (1u64 << count) - 1;
            while local < 1u64 << n {
                members.push(sector.to_space(local));
                let c = local & local.wrapping_neg();
                let r = local + c;
                local = (((r ^ local) >> 2) / c) | r;
            }
        }
        sector.members = members;
        Ok(sector)
    }

    fn to_space(&self, local: u64) -> u64 {
        self.region_pos.iter().enumerate().fold(self.exterior_bits, |c, (k, &p)| c | (local >> k & 1) << p)
    }

    fn local_of(&self, cfg: u64) -> u64 {
        self.region_pos.iter().enumerate().fold(0, |c, (k, &p)| c | (cfg >> p & 1) << k)
    }

    /// Colex rank of a k-subset of Λ.
    fn rank(&self, local: u64) -> usize {
        let mut r = 0u64;
        let mut j = 0usize;
        let mut bits = local;
        while bits != 0 {
            let pos = bits.trailing_zeros() as usize;
            j += 1;
            r += self.binom[pos][j];
            bits &= bits - 1;
        }
        r as usize
    }

    /// Index of a space configuration in `members`, if it belongs to the sector.
    pub fn index_of(&self, cfg: u64) -> Option<usize> {
        let local = self.local_of(cfg);
        if local.count_ones() as usize != self.count || cfg & !self.region_mask() != self.exterior_bits {
            return None;
        }
        Some(self.rank(local))
    }

    fn region_mask(&self) -> u64 {
        self.region_pos.iter().fold(0, |m, &p| m | 1 << p)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn chi_hat(&self) -> f64 {
        compressibility(self.count as f64 / self.domain.len() as f64)
    }

    /// The uniform measure on the sector as a [`Measure`] on `space`.
    pub fn measure(&self) -> Result<Measure> {
        let ext = self.exterior_bits;
        let space = self.space.clone();
        Measure::canonical(&self.space, self.domain.sites(), self.count, &|s| {
            space.position(s).map(|p| ext >> p & 1 == 1)
        })
    }

    fn values(&self, f: &ConfigFunction) -> Result<Vec<f64>> {
        let f = if Arc::ptr_eq(f.space(), &self.space) || **f.space() == *self.space {
            f.clone()
        } else {
            f.embed(&self.space)?
        };
        Ok(self.members.iter().map(|&c| f.value(c)).collect())
    }

    /// Lift sector values to a function on `space` (zero off the sector).
    pub fn function(&self, vals: &[f64]) -> ConfigFunction {
        let mut out = vec![0.0; self.space.size()];
        for (&c, &v) in self.members.iter().zip(vals) {
            out[c as usize] = v;
        }
        ConfigFunction::new(self.space.clone(), out).expect("sized to the space")
    }

    /// ⟨f⟩_{Λ,M,ζ}.
    pub fn expect(&self, f: &ConfigFunction) -> Result<f64> {
        let v = self.values(f)?;
        Ok(v.iter().sum::<f64>() / v.len() as f64)
    }

    /// L_{Λ,ζ} f = Σ_{b∈Λ*} c_b π_b f, on sector values.
    fn apply_generator(&self, vals: &[f64]) -> Vec<f64> {
        self.members
            .iter()
            .enumerate()
            .map(|(s, &cfg)| {
                let local = self.local_of(cfg);
                self.tables
                    .iter()
                    .zip(&self.ends)
                    .filter(|(t, _)| t.active(cfg))
                    .map(|(t, &(lx, ly))| t.rate(cfg) * (vals[self.rank(swap_bits(local, lx, ly))] - vals[s]))
                    .sum()
            })
            .collect()
    }

    /// L_{Λ,ζ} f as a function on the space.
    pub fn generator(&self, f: &ConfigFunction) -> Result<ConfigFunction> {
        Ok(self.function(&self.apply_generator(&self.values(f)?)))
    }

    fn edges(&self, mut visit: impl FnMut(usize, usize, &BondTable, f64)) {
        for (s, &cfg) in self.members.iter().enumerate() {
            let local = self.local_of(cfg);
            for (t, &(lx, ly)) in self.tables.iter().zip(&self.ends) {
                if t.active(cfg) {
                    let other = self.rank(swap_bits(local, lx, ly));
                    let g = (local >> lx & 1) as f64 - (local >> ly & 1) as f64;
                    visit(s, other, t, g);
                }
            }
        }
    }

    /// h with −L_{Λ,ζ} h = g and ⟨h⟩ = 0; g must have mean zero.
    fn solve_generator(&self, g: &[f64]) -> Result<(Vec<f64>, f64)> {
        let n = g.len();
        let mean = g.iter().sum::<f64>() / n as f64;
        let scale = g.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mean.abs() > 1e-10 * scale {
            return Err(Error::Precondition(format!("function has sector mean {mean:e}, not zero")));
        }
        if n == 1 {
            return Ok((vec![0.0], 0.0));
        }
        let mut bld = LaplacianBuilder::new(n, 0);
        self.edges(|s, o, t, _| bld.edge(s, o, t.rate(self.members[s]), &[]));
        let (a, _) = bld.finish();
        // Each unordered pair was visited from both ends, so the matrix is −2L.
        let rhs: Vec<f64> = g.iter().map(|v| 2.0 * (v - mean)).collect();
        let out = cg(&a, &rhs, DEFAULT_TOL)?;
        let m = out.x.iter().sum::<f64>() / n as f64;
        Ok((out.x.iter().map(|v| v - m).collect(), out.residual))
    }

    /// Δ = ⟨f (−L_{Λ,ζ})^{-1} g⟩_{Λ,M,ζ} for mean-zero f, g.
    pub fn clt_variance(&self, f: &ConfigFunction, g: &ConfigFunction) -> Result<f64> {
        let fv = self.values(f)?;
        let gv = self.values(g)?;
        let mf = fv.iter().sum::<f64>() / fv.len() as f64;
        let scale = fv.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        if mf.abs() > 1e-10 * scale {
            return Err(Error::Precondition(format!("function has sector mean {mf:e}, not zero")));
        }
        let (h, _) = self.solve_generator(&gv)?;
        Ok(fv.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() / fv.len() as f64)
    }

    /// n_Λ,M = (1/d) Σ_{b∈Λ*} ⟨(π_b ℓ_{e_{i(b)}})²⟩.
    pub fn normalization(&self) -> f64 {
        let mut acc = 0.0;
        self.edges(|_, _, _, g| acc += g * g);
        acc / (self.len() as f64 * self.domain.dim() as f64)
    }

    /// D̂, D̂* and ĉ = 2χ̂D̂, ĉ* = 2χ̂D̂*.
    pub fn matrices(&self) -> Result<CanonicalReport> {
        let dim = self.domain.dim();
        let chi = self.chi_hat();
        let zero = DMatrix::zeros(dim, dim);
        let norm = self.normalization();
        if chi == 0.0 || norm == 0.0 {
            return Ok(CanonicalReport {
                count: self.count,
                chi_hat: chi,
                normalization: norm,
                dhat: None,
                dhat_star: None,
                chat: zero.clone(),
                chat_star: zero,
                residual: 0.0,
            });
        }
        let size = self.len() as f64;
        let (dhat, r1) = self.primal(norm)?;
        let mut s = DMatrix::zeros(dim, dim);
        let mut residual = r1;
        if self.len() > 1 {
            let mut bld = LaplacianBuilder::new(self.len(), dim);
            let mut h = vec![0.0; dim];
            self.edges(|a, o, t, g| {
                h.iter_mut().for_each(|v| *v = 0.0);
                h[t.bond.dir] = -g;
                bld.edge(a, o, t.rate(self.members[a]), &h);
            });
            let (mat, rhs) = bld.finish();
            let mut us = Vec::with_capacity(dim);
            for b in &rhs {
                let out = cg(&mat, b, DEFAULT_TOL)?;
                residual = residual.max(out.residual);
                let m = out.x.iter().sum::<f64>() / out.x.len() as f64;
                us.push(out.x.iter().map(|v| v - m).collect::<Vec<f64>>());
            }
            self.edges(|a, o, t, g| {
                for k in 0..dim {
                    s[(t.bond.dir, k)] += g * (us[k][o] - us[k][a]);
                }
            });
        }
        let inv = (&s + s.transpose()) * (0.5 / (size * norm));
        let dhat_star =
            inv.clone().try_inverse().ok_or_else(|| Error::Precondition("singular canonical dual matrix".into()))?;
        Ok(CanonicalReport {
            count: self.count,
            chi_hat: chi,
            normalization: norm,
            chat: &dhat * (2.0 * chi),
            chat_star: &dhat_star * (2.0 * chi),
            dhat: Some(dhat),
            dhat_star: Some(dhat_star),
            residual,
        })
    }

    /// D̂ via minimization over F(Λ⁻) on the sector.
    fn primal(&self, norm: f64) -> Result<(DMatrix<f64>, f64)> {
        let dim = self.domain.dim();
        let st = self.domain.structure();
        let minus: Vec<usize> =
            st.interior.iter().map(|s| self.domain.position(s).unwrap()).collect();
        let key = |local: u64| -> usize {
            minus.iter().enumerate().fold(0, |k, (j, &p)| k | ((local >> p & 1) as usize) << j)
        };
        let nvar = 1usize << minus.len();
        let size = self.len() as f64;
        let mut phis = vec![vec![0.0; nvar]; dim];
        let mut residual = 0.0f64;
        if nvar > 1 {
            let mut bld = LaplacianBuilder::new(nvar, dim);
            let mut weight = vec![0.0; nvar];
            let mut h = vec![0.0; dim];
            for (s, &cfg) in self.members.iter().enumerate() {
                let local = self.local_of(cfg);
                weight[key(local)] += 1.0 / size;
                let _ = s;
                for (t, &(lx, ly)) in self.tables.iter().zip(&self.ends) {
                    if !t.active(cfg) {
                        continue;
                    }
                    let other = swap_bits(local, lx, ly);
                    let (a, b) = (key(local), key(other));
                    if a == b {
                        continue;
                    }
                    let w = t.rate(cfg) / size;
                    let g = (local >> lx & 1) as f64 - (local >> ly & 1) as f64;
                    h.iter_mut().for_each(|v| *v = 0.0);
                    h[t.bond.dir] = w * g;
                    bld.edge(a, b, w, &h);
                }
            }
            let (mat, rhs) = bld.finish();
            for (k, b) in rhs.iter().enumerate() {
                let out = cg(&mat, b, DEFAULT_TOL)?;
                residual = residual.max(out.residual);
                let m: f64 = out.x.iter().zip(&weight).map(|(x, w)| x * w).sum();
                phis[k] = out.x.iter().map(|v| v - m).collect();
            }
        }
        let mut d = DMatrix::zeros(dim, dim);
        for &cfg in &self.members {
            let local = self.local_of(cfg);
            for (t, &(lx, ly)) in self.tables.iter().zip(&self.ends) {
                if !t.active(cfg) {
                    continue;
                }
                let other = swap_bits(local, lx, ly);
                let g = (local >> lx & 1) as f64 - (local >> ly & 1) as f64;
                let c = t.rate(cfg);
                let grad: Vec<f64> = (0..dim)
                    .map(|j| {
                        let lin = if t.bond.dir == j { g } else { 0.0 };
                        lin + phis[j][key(other)] - phis[j][key(local)]
                    })
                    .collect();
                for j in 0..dim {
                    for k in 0..dim {
                        d[(j, k)] += c * grad[j] * grad[k];
                    }
                }
            }
        }
        d /= size * norm;
        Ok(((&d + d.transpose()) * 0.5, residual))
    }

    /// A_L, B_{L,ζ} and, for each component F_k, H_k = L_{Λ,ζ}(Σ_{x∈Λ_{L−r(F)−1}} τ_x F_k).
    pub fn special_functions(&self, f: &[ConfigFunction]) -> Result<SpecialFunctions> {
        let dim = self.domain.dim();
        let mut a = vec![vec![0.0; self.len()]; dim];
        let mut b = vec![vec![0.0; self.len()]; dim];
        for (s, &cfg) in self.members.iter().enumerate() {
            let local = self.local_of(cfg);
            for (t, &(lx, ly)) in self.tables.iter().zip(&self.ends) {
                let diff = (local >> ly & 1) as f64 - (local >> lx & 1) as f64;
                a[t.bond.dir][s] += diff;
                b[t.bond.dir][s] += t.rate(cfg) * diff;
            }
        }
        let mut h = Vec::with_capacity(f.len());
        if !f.is_empty() {
            let side = self
                .domain
                .side()
                .ok_or_else(|| Error::Geometry("special functions need a cube domain".into()))?;
            for fk in f {
                let r = range_of(fk);
                if r + 1 >= side {
                    return Err(Error::Precondition(format!("r(F) = {r} too large for L = {side}")));
                }
                let inner = Domain::cube(side - r - 1, dim)?;
                let placed: Vec<Placed> =
                    inner.sites().iter().map(|x| Placed::new(fk, &self.space, x)).collect::<Result<_>>()?;
                let g: Vec<f64> =
                    self.members.iter().map(|&c| placed.iter().map(|p| p.eval(c)).sum()).collect();
                h.push(self.function(&self.apply_generator(&g)));
            }
        }
        Ok(SpecialFunctions {
            a: a.iter().map(|v| self.function(v)).collect(),
            b: b.iter().map(|v| self.function(v)).collect(),
            h,
        })
    }
}
