//! Exact finite-volume homogenization: the subadditive quantities and the
//! matrices built from them, correctors, canonical-ensemble counterparts,
//! CLT variances and the density-regularity and equivalence checks.

mod canonical;
mod corrector;
mod equivalence;
mod grand;

pub use canonical::{CanonicalReport, CanonicalSector, SpecialFunctions};
pub use corrector::{
    conductivity_of, density_free_corrector, identification_chain, mu, r_of_f, DensityFree, IdentificationReport,
    MuReport, MuRow, RReport,
};
pub use equivalence::{
    bias_bounds, bias_proba_check, ensemble_equivalence, regularity_suite, theta, theta_two_sided, BiasBounds, BiasCheck, EquivalenceReport,
    Inequality, RegularityReport,
};
pub use grand::{
    diffusion_matrices, diffusion_matrices_with, master_j, solve_nu, solve_nu_star, solve_primal, DiffusionReport,
    DualSector, DualSolution, Master, MasterReport, NuResult, PrimalSolution,
};

use crate::ensemble::{ConfigFunction, StateSpace};
use crate::lattice::{add, Site};
use crate::{Error, Result};
use nalgebra::DMatrix;

/// ρ-grid with step 1/64 on [1/64, 63/64].
pub fn density_grid() -> Vec<f64> {
    (1..64).map(|k| k as f64 / 64.0).collect()
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().fold(f64::INFINITY, |a, &b| a.min(b))
}

/// Operator norm of a symmetric matrix.
pub fn operator_norm(m: &DMatrix<f64>) -> f64 {
    let s = (m + m.transpose()) * 0.5;
    s.symmetric_eigenvalues().iter().fold(0.0, |a: f64, &b| a.max(b.abs()))
}

/// A local function placed at a shift inside a larger space: evaluates
/// (τ_z F)(η) by reading η at z + supp F.
pub struct Placed<'a> {
    f: &'a ConfigFunction,
    pairs: Vec<(usize, usize)>,
}

impl<'a> Placed<'a> {
    pub fn new(f: &'a ConfigFunction, target: &StateSpace, z: &Site) -> Result<Self> {
        let mut pairs = Vec::new();
        for (k, y) in f.space().sites().iter().enumerate() {
            if f.support_mask() >> k & 1 == 1 {
                let p = target.position(&add(y, z)).ok_or_else(|| {
                    Error::Support(format!("translate of support site {y:?} by {z:?} leaves the space"))
                })?;
                pairs.push((p, k));
            }
        }
        Ok(Placed { f, pairs })
    }

    /// Sites of z + supp F.
    pub fn sites(f: &ConfigFunction, z: &Site) -> Vec<Site> {
        f.support_sites().iter().map(|y| add(y, z)).collect()
    }

    #[inline]
    pub fn eval(&self, cfg: u64) -> f64 {
        let local = self.pairs.iter().fold(0u64, |c, &(from, to)| c | (cfg >> from & 1) << to);
        self.f.value(local)
    }

    pub fn touches(&self, positions: &[usize]) -> bool {
        self.pairs.iter().any(|(p, _)| positions.contains(p))
    }
}

/// r(F): the smallest r with supp F ⊆ Λ_r.
pub fn range_of(f: &ConfigFunction) -> u64 {
    let m = f.support_sites().iter().flat_map(|s| s.iter().map(|c| c.unsigned_abs() as u64)).max();
    m.map_or(1, |m| 2 * m + 1)
}
