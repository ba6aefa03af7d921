//! Correctors, the single-bond quadratic form c(ρ;F), the density-free
//! corrector φ̂ and the uniform-in-ρ functional μ.

use super::grand::{solve_primal, PrimalSolution};
use super::{min_eigenvalue, Placed};
use crate::ensemble::{bernoulli_weight, compressibility, ConfigFunction, StateSpace};
use crate::lattice::{dist, shift, triadic_partition, Bond, Domain, Site};
use crate::rates::{BondTable, Outside, RateModel};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rayon::prelude::*;
use std::collections::{BTreeMap, BTreeSet};

/// c(ρ;F)_{jk} = Σ_i ⟨c_{0,e_i} π_{0,e_i}(ℓ_{e_j} + Σ_y τ_y F_j) π_{0,e_i}(ℓ_{e_k} + Σ_y τ_y F_k)⟩_ρ.
///
/// Only translates whose support meets {0, e_i} contribute to the bond
/// difference, so the sum over y is finite. At ρ ∈ {0,1} the form is 0.
pub fn conductivity_of(rho: f64, f: &[ConfigFunction], model: &RateModel, dim: usize) -> Result<DMatrix<f64>> {
    if f.len() != dim {
        return Err(Error::Precondition(format!("need {dim} components of F, got {}", f.len())));
    }
    let mut out = DMatrix::zeros(dim, dim);
    if rho <= 0.0 || rho >= 1.0 {
        return Ok(out);
    }
    let origin: Site = vec![0; dim];
    for i in 0..dim {
        let bond = Bond::new(origin.clone(), i);
        let ends = [origin.clone(), shift(&origin, i, 1)];
        let mut sites: BTreeSet<Site> = model.window(&bond).into_iter().collect();
        sites.extend(ends.iter().cloned());
        let mut shifts: Vec<Vec<Site>> = Vec::with_capacity(dim);
        for fk in f {
            let supp = fk.support_sites();
            let ys: BTreeSet<Site> = supp
                .iter()
                .flat_map(|s| ends.iter().map(move |e| e.iter().zip(s).map(|(a, b)| a - b).collect::<Site>()))
                .collect();
            for y in &ys {
                sites.extend(Placed::sites(fk, y));
            }
            shifts.push(ys.into_iter().collect());
        }
        let space = StateSpace::new(sites.into_iter().collect())?;
        let table = BondTable::new(model, &bond, &|s| space.position(s), &Outside::Forbid)?;
        let placed: Vec<Vec<Placed>> = f
            .iter()
            .zip(&shifts)
            .map(|(fk, ys)| ys.iter().map(|y| Placed::new(fk, &space, y)).collect::<Result<Vec<_>>>())
            .collect::<Result<_>>()?;
        let n = space.len();
        let mut grad = vec![0.0; dim];
        for cfg in 0..space.size() as u64 {
            if !table.active(cfg) {
                continue;
            }
            let e = table.exchange(cfg);
            let w = bernoulli_weight(rho, cfg.count_ones(), n) * table.rate(cfg);
            let g = (cfg >> table.x & 1) as f64 - (cfg >> table.y & 1) as f64;
            for (j, gj) in grad.iter_mut().enumerate() {
                let lin = if j == i { g } else { 0.0 };
                *gj = lin + placed[j].iter().map(|p| p.eval(e) - p.eval(cfg)).sum::<f64>();
            }
            for j in 0..dim {
                for k in 0..dim {
                    out[(j, k)] += w * grad[j] * grad[k];
                }
            }
        }
    }
    Ok((&out + out.transpose()) * 0.5)
}

/// R(ρ;F) = c(ρ;F) − c̄(ρ, Λ_ref), with the finite reference box standing in for
/// the infinite-volume limit.
#[derive(Clone, Debug)]
pub struct RReport {
    pub rho: f64,
    pub c_f: DMatrix<f64>,
    pub cbar_ref: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub reference_sites: usize,
    /// Always true: the reference is a finite box.
    pub finite_box: bool,
}

pub fn r_of_f(rho: f64, f: &[ConfigFunction], model: &RateModel, reference: &Domain) -> Result<RReport> {
    let dim = reference.dim();
    let c_f = conductivity_of(rho, f, model, dim)?;
    let cbar_ref = if rho > 0.0 && rho < 1.0 {
        solve_primal(rho, reference, model)?.conductivity()
    } else {
        DMatrix::zeros(dim, dim)
    };
    Ok(RReport { rho, r: &c_f - &cbar_ref, c_f, cbar_ref, reference_sites: reference.len(), finite_box: true })
}

/// c̄*(ρ,Λ) ≤ c(ρ; φ_Λ/|Λ|) ≤ c̄(ρ,Λ) with φ_Λ the box correctors.
#[derive(Clone, Debug)]
pub struct IdentificationReport {
    pub rho: f64,
    pub cbar: DMatrix<f64>,
    pub cbar_star: DMatrix<f64>,
    pub c_phi: DMatrix<f64>,
    /// Smallest eigenvalue of c(ρ;Φ) − c̄*(ρ,Λ).
    pub lower_margin: f64,
    /// Smallest eigenvalue of c̄(ρ,Λ) − c(ρ;Φ).
    pub upper_margin: f64,
}

pub fn identification_chain(rho: f64, domain: &Domain, model: &RateModel) -> Result<IdentificationReport> {
    let primal = solve_primal(rho, domain, model)?;
    let dual = super::grand::solve_nu_star(domain, model)?;
    let chi2 = 2.0 * compressibility(rho);
    let cbar = primal.conductivity();
    let cbar_star = dual.dbar_star(rho)? * chi2;
    let scale = 1.0 / domain.len() as f64;
    let phis: Vec<ConfigFunction> = primal.correctors.iter().map(|p| p.scale(scale)).collect();
    let c_phi = conductivity_of(rho, &phis, model, domain.dim())?;
    Ok(IdentificationReport {
        rho,
        lower_margin: min_eigenvalue(&(&c_phi - &cbar_star)),
        upper_margin: min_eigenvalue(&(&cbar - &c_phi)),
        cbar,
        cbar_star,
        c_phi,
    })
}

/// φ̂^{(ε)}_{m,n,ξ} on the state space of □_m⁺.
#[derive(Clone, Debug)]
pub struct DensityFree {
    pub domain: Domain,
    pub phi: ConfigFunction,
    /// Subcube centers z ∈ Z_{m,n} with dist(z, ∂□_m) > 3^n.
    pub centers: Vec<Site>,
    /// Truncated empirical density for each particle count in □_m⁻.
    pub densities: Vec<f64>,
}

pub fn density_free_corrector(
    m: u32,
    n: u32,
    eps: f64,
    xi: &[f64],
    model: &RateModel,
    dim: usize,
) -> Result<DensityFree> {
    if eps <= 0.0 {
        return Err(Error::Precondition(format!("truncation ε = {eps} must be positive")));
    }
    let big = Domain::triadic(m, dim)?;
    let st = big.structure();
    let space = StateSpace::new(st.enlarged.clone())?;
    let gap = 3i32.pow(n);
    let centers: Vec<Site> = triadic_partition(m, n, dim)?
        .into_iter()
        .filter(|z| st.boundary.iter().map(|b| dist(z, b)).min().unwrap_or(i32::MAX) > gap)
        .collect();
    let minus_mask = space.mask(&st.interior)?;
    let nm = st.interior.len();
    let clamp = |r: f64| if eps >= 0.5 { 0.5 } else { r.clamp(eps, 1.0 - eps) };
    let densities: Vec<f64> =
        (0..=nm).map(|k| clamp(if nm == 0 { 0.5 } else { k as f64 / nm as f64 })).collect();
    let distinct: Vec<f64> = densities
        .iter()
        .map(|r| r.to_bits())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(f64::from_bits)
        .collect();
    let small = Domain::triadic(n, dim)?;
    let jobs: Vec<(f64, &Site)> = distinct.iter().flat_map(|&r| centers.iter().map(move |z| (r, z))).collect();
    let solved: Vec<(u64, ConfigFunction)> = jobs
        .par_iter()
        .map(|&(r, z)| -> Result<(u64, ConfigFunction)> {
            let sol = solve_primal(r, &small.translate(z), model)?;
            Ok((r.to_bits(), sol.corrector(xi).embed(&space)?))
        })
        .collect::<Result<_>>()?;
    let mut by_rho: BTreeMap<u64, Vec<ConfigFunction>> = BTreeMap::new();
    for (r, f) in solved {
        by_rho.entry(r).or_default().push(f);
    }
    let phi = ConfigFunction::from_fn(&space, |c| {
        let k = (c & minus_mask).count_ones() as usize;
        by_rho.get(&densities[k].to_bits()).map_or(0.0, |fs| fs.iter().map(|f| f.value(c)).sum())
    })
    .with_support(&st.interior)?;
    Ok(DensityFree { domain: big, phi, centers, densities })
}

/// One grid point of [`mu`].
#[derive(Clone, Debug)]
pub struct MuRow {
    pub rho: f64,
    /// (1/|Λ|) Σ_b ⟨½c_b(π_b(ℓ_ξ + v))²⟩_ρ.
    pub functional: f64,
    /// ½ ξ·c̄(ρ, Λ) ξ: the minimum of the functional over v at this ρ.
    pub box_minimum: f64,
    /// ½ ξ·c̄(ρ, Λ_ref) ξ.
    pub reference: f64,
}

#[derive(Clone, Debug)]
pub struct MuReport {
    /// sup over the grid of {functional − reference}; grid endpoints 0 and 1
    /// contribute 0 by convention.
    pub value: f64,
    pub argmax: f64,
    pub rows: Vec<MuRow>,
    /// min_ρ {functional − box minimum}; nonnegative up to solver tolerance.
    pub min_gap: f64,
    pub finite_box: bool,
}

/// Evaluate the μ(Λ, ξ) functional at the competitor v ∈ F_0(Λ⁻) over a ρ-grid.
pub fn mu(
    domain: &Domain,
    xi: &[f64],
    v: &ConfigFunction,
    model: &RateModel,
    grid: &[f64],
    reference: &Domain,
) -> Result<MuReport> {
    let same_ref = reference.sites() == domain.sites();
    let half = |c: &DMatrix<f64>| {
        let x = nalgebra::DVector::from_column_slice(xi);
        0.5 * x.dot(&(c * &x))
    };
    let rows: Vec<MuRow> = grid
        .par_iter()
        .map(|&rho| -> Result<MuRow> {
            if rho <= 0.0 || rho >= 1.0 {
                return Ok(MuRow { rho, functional: 0.0, box_minimum: 0.0, reference: 0.0 });
            }
            let sol: PrimalSolution = solve_primal(rho, domain, model)?;
            let plus = sol.space.sites().to_vec();
            let w = ConfigFunction::affine(&sol.space, xi, &plus)?.add(&v.embed(&sol.space)?)?;
            let functional = 2.0 * compressibility(rho) * sol.energy(&w)?;
            let box_minimum = half(&sol.conductivity());
            let reference = if same_ref {
                box_minimum
            } else {
                half(&solve_primal(rho, reference, model)?.conductivity())
            };
            Ok(MuRow { rho, functional, box_minimum, reference })
        })
        .collect::<Result<_>>()?;
    let (mut value, mut argmax) = (f64::NEG_INFINITY, f64::NAN);
    let mut min_gap = f64::INFINITY;
    for r in &rows {
        let gap = r.functional - r.reference;
        if gap > value {
            value = gap;
            argmax = r.rho;
        }
        min_gap = min_gap.min(r.functional - r.box_minimum);
    }
    Ok(MuReport { value, argmax, rows, min_gap, finite_box: true })
}
