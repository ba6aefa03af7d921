//! Functional inequalities of the exclusion process checked exactly on
//! enumerated state spaces, and a seeded randomized suite over all of them.

use crate::ensemble::{compressibility, dirichlet_form, swap_bits, ConfigFunction, Measure, StateSpace};
use crate::lattice::{Domain, Site};
use crate::rates::{cooperative, speed_change, ssep, RateModel};
use crate::variational::{bias_bounds, bias_proba_check, ensemble_equivalence, regularity_suite};
use crate::{Error, Result};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::sync::Arc;

const SLACK: f64 = 1e-10;

/// lhs ≤ rhs, up to a relative rounding slack.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl Check {
    fn new(lhs: f64, rhs: f64) -> Self {
        Check { lhs, rhs, holds: lhs <= rhs + SLACK * (1.0 + rhs.abs()) }
    }
}

/// Σ_b ⟨(π_b f)²⟩ under μ for unit rates.
fn kawasaki_energy(f: &ConfigFunction, domain: &Domain, mu: &Measure) -> Result<f64> {
    Ok(2.0 * dirichlet_form(f, f, &domain.structure().interior_bonds.bonds, &ssep(), mu)?)
}

/// Var_ρ[f] ≤ χ(ρ) Σ_x ⟨(π_x f)²⟩_ρ over the sites of f's space.
pub fn spectral_glauber(f: &ConfigFunction, rho: f64) -> Result<Check> {
    let mu = Measure::bernoulli(f.space(), rho)?;
    let mut energy = 0.0;
    for x in f.space().sites() {
        let g = f.glauber(x)?;
        energy += mu.expect(&g.mul(&g)?)?;
    }
    Ok(Check::new(mu.variance(f)?, compressibility(rho) * energy))
}

/// Var_ρ[f] ≤ diam(Λ)² Σ_{b∈Λ*} ⟨(π_b f)²⟩_ρ for f measurable on Λ⁻.
pub fn spectral_gradient(f: &ConfigFunction, domain: &Domain, rho: f64) -> Result<Check> {
    let st = domain.structure();
    if f.support_sites().iter().any(|s| !st.interior.contains(s)) {
        return Err(Error::Support("f must be measurable on the interior of the domain".into()));
    }
    let space = StateSpace::new(domain.sites().to_vec())?;
    let f = f.embed(&space)?;
    let mu = Measure::bernoulli(&space, rho)?;
    let diam = domain.diameter();
    Ok(Check::new(mu.variance(&f)?, diam * diam * kawasaki_energy(&f, domain, &mu)?))
}

/// ‖π_x f‖ ≤ ‖π_y f‖ + (2χ)^{-1/2} ‖π_{x,y} f‖ in L²(P_ρ), for any two sites.
pub fn glauber_exchange(f: &ConfigFunction, x: &Site, y: &Site, rho: f64) -> Result<Check> {
    let space = f.space();
    let (i, j) = (space.require(x)?, space.require(y)?);
    let mu = Measure::bernoulli(space, rho)?;
    let exchange = ConfigFunction::from_fn(space, |c| f.value(swap_bits(c, i, j)) - f.value(c));
    let lhs = mu.l2_norm(&f.glauber(x)?)?;
    let rhs = mu.l2_norm(&f.glauber(y)?)? + mu.l2_norm(&exchange)? / (2.0 * compressibility(rho)).sqrt();
    Ok(Check::new(lhs, rhs))
}

/// Var_{Λ_L,N}[f] ≤ C L² Σ_{b∈Λ_L*} ⟨(π_b f)²⟩_{Λ_L,N}, reported as the ratio
/// Var / (L² Σ) next to the sharp constant of the sector, which is
/// 1/(2 L² λ₁) with λ₁ the spectral gap of the configuration graph.
#[derive(Clone, Debug, Serialize)]
pub struct CanonicalPoincare {
    pub ratio: f64,
    pub sharp_constant: f64,
    pub holds: bool,
}

pub fn canonical_poincare(f: &ConfigFunction, side: u64, dim: usize, count: usize) -> Result<CanonicalPoincare> {
    let domain = Domain::cube(side, dim)?;
    let space = StateSpace::new(domain.sites().to_vec())?;
    let f = f.embed(&space)?;
    let mu = Measure::canonical(&space, domain.sites(), count, &|_| None)?;
    let var = mu.variance(&f)?;
    let energy = kawasaki_energy(&f, &domain, &mu)?;
    let l2 = (side * side) as f64;
    let members: Vec<u64> = mu.support().map(|(c, _)| c).collect();
    let index = |c: u64| members.binary_search(&c).expect("sector member");
    let bonds = domain.structure().interior_bonds.bonds;
    let pos: Vec<(usize, usize)> =
        bonds.iter().map(|b| Ok((space.require(&b.base)?, space.require(&b.tip())?))).collect::<Result<_>>()?;
    let m = members.len();
    let mut lap = DMatrix::<f64>::zeros(m, m);
    for (a, &c) in members.iter().enumerate() {
        for &(i, j) in &pos {
            let e = swap_bits(c, i, j);
            if e != c {
                lap[(a, a)] += 1.0;
                lap[(a, index(e))] -= 1.0;
            }
        }
    }
    let mut eig: Vec<f64> = lap.symmetric_eigenvalues().iter().copied().collect();
    eig.sort_by(f64::total_cmp);
    let gap = eig.get(1).copied().unwrap_or(f64::INFINITY);
    let sharp_constant = if gap.is_finite() && gap > 0.0 { 1.0 / (2.0 * l2 * gap) } else { 0.0 };
    let ratio = if var <= SLACK * SLACK { 0.0 } else { var / (l2 * energy) };
    Ok(CanonicalPoincare { ratio, sharp_constant, holds: ratio <= sharp_constant * (1.0 + 1e-9) + SLACK })
}

/// Outcome of one family of randomized cases.
#[derive(Clone, Debug, Serialize)]
pub struct FamilyReport {
    pub name: String,
    pub cases: usize,
    /// Cases whose preconditions held, so the inequality was asserted.
    pub applicable: usize,
    pub violations: usize,
    /// Smallest rhs − lhs over applicable cases.
    pub worst_margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub families: Vec<FamilyReport>,
    /// Reported but not asserted: the single-Θ bias bound, false for signed f.
    pub diagnostics: Vec<FamilyReport>,
    pub pass: bool,
}

struct Tally {
    report: FamilyReport,
}

impl Tally {
    fn new(name: &str) -> Self {
        Tally { report: FamilyReport { name: name.into(), cases: 0, applicable: 0, violations: 0, worst_margin: f64::INFINITY } }
    }
    fn record(&mut self, applicable: bool, lhs: f64, rhs: f64, holds: bool) {
        self.report.cases += 1;
        if applicable {
            self.report.applicable += 1;
            self.report.worst_margin = self.report.worst_margin.min(rhs - lhs);
            if !holds {
                self.report.violations += 1;
            }
        }
    }
}

fn random_function(space: &Arc<StateSpace>, rng: &mut ChaCha8Rng) -> ConfigFunction {
    let values = (0..space.size()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    ConfigFunction::new(space.clone(), values).expect("sized to the space")
}

fn random_density(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(0.02..0.98)
}

fn random_model(rng: &mut ChaCha8Rng) -> Result<RateModel> {
    let a = rng.random_range(0.0..2.0);
    match rng.random_range(0..3) {
        0 => Ok(ssep()),
        1 => speed_change(a),
        _ => cooperative(a),
    }
}

/// Run `cases` randomized instances of every family, deterministically in `seed`.
pub fn run_suite(seed: u64, cases: usize) -> Result<SuiteReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut glauber = Tally::new("spectral_glauber");
    let mut gradient = Tally::new("spectral_gradient");
    let mut exchange = Tally::new("glauber_exchange");
    let mut poincare = Tally::new("canonical_poincare");
    let mut bias = Tally::new("bias_proba");
    let mut bias_literal = Tally::new("bias_proba_single_theta");
    let mut one_sided = Tally::new("local_equivalence_one_sided");
    let mut two_sided = Tally::new("local_equivalence_two_sided");
    let mut regularity = Tally::new("density_regularity");
    for _ in 0..cases {
        let dim = if rng.random_bool(0.75) { 1 } else { 2 };
        let side = if dim == 1 { rng.random_range(3..=7) } else { 3 };
        let domain = Domain::cube(side, dim)?;
        let space = StateSpace::new(domain.sites().to_vec())?;
        let rho = random_density(&mut rng);

        let f = random_function(&space, &mut rng);
        let c = spectral_glauber(&f, rho)?;
        glauber.record(true, c.lhs, c.rhs, c.holds);

        let interior = StateSpace::new(domain.structure().interior)?;
        let g = random_function(&interior, &mut rng);
        let c = spectral_gradient(&g, &domain, rho)?;
        gradient.record(true, c.lhs, c.rhs, c.holds);

        let sites = space.sites();
        let x = &sites[rng.random_range(0..sites.len())];
        let y = &sites[rng.random_range(0..sites.len())];
        let c = glauber_exchange(&f, x, y, rho)?;
        exchange.record(true, c.lhs, c.rhs, c.holds);

        let count = rng.random_range(0..=space.len());
        let p = canonical_poincare(&f, side, dim, count)?;
        poincare.record(true, p.ratio, p.sharp_constant, p.holds);

        let small = StateSpace::new(Domain::cube(rng.random_range(1..=3), 1)?.sites().to_vec())?;
        let h = random_function(&small, &mut rng);
        let rho_p = (rho + rng.random_range(-0.1..0.1)).clamp(0.01, 0.99);
        let b = bias_bounds(rho_p, rho, &h)?;
        bias.record(true, b.upper.lhs, b.upper.rhs, b.upper.holds);
        bias.record(true, b.two_sided.lhs, b.two_sided.rhs, b.two_sided.holds);
        let c = bias_proba_check(rho_p, rho, &h)?;
        bias_literal.record(true, c.lhs, c.rhs, c.holds);

        // Equivalence of ensembles on Λ_ℓ inside Λ_L with the preconditions
        // satisfied in most draws.
        let ell: u64 = if rng.random_bool(0.7) { 1 } else { 3 };
        let one_min = 10 * ell * ell;
        let eps = rng.random_range(0.05..0.45);
        let big = if rng.random_bool(0.5) {
            rng.random_range(one_min..=one_min * 4)
        } else {
            let two_min = (10.0 * (ell as f64).powi(2) / eps).ceil() as u64;
            rng.random_range(two_min..=two_min * 2)
        };
        let inner = StateSpace::new(Domain::cube(ell, 1)?.sites().to_vec())?;
        let total = Domain::cube(big, 1)?.len();
        let m = rng.random_range(0..=total) as u64;
        let nonneg = random_function(&inner, &mut rng).map(f64::abs);
        let r = ensemble_equivalence(big, m, ell, 1, eps, &nonneg)?;
        one_sided.record(r.one_sided_guaranteed, r.canonical, r.one_sided_bound, r.one_sided_holds);
        let signed = random_function(&inner, &mut rng);
        let r = ensemble_equivalence(big, m, ell, 1, eps, &signed)?;
        two_sided.record(r.two_sided_guaranteed, (r.canonical - r.grand).abs(), r.two_sided_bound, r.two_sided_holds);

        let model = random_model(&mut rng)?;
        let r0 = rng.random_range(0.1..0.9);
        let near = |rng: &mut ChaCha8Rng| (r0 + rng.random_range(-0.03..0.03f64)).clamp(0.05, 0.95);
        let (r1, r2) = (near(&mut rng), near(&mut rng));
        let reg = regularity_suite(r0, r1, r2, &Domain::cube(3, 1)?, &[1.0], &model)?;
        for i in &reg.inequalities {
            regularity.record(i.applicable, i.lhs, i.rhs, i.holds);
        }
    }
    let families: Vec<FamilyReport> =
        [glauber, gradient, exchange, poincare, bias, one_sided, two_sided, regularity].into_iter().map(|t| t.report).collect();
    let pass = families.iter().all(|f| f.violations == 0);
    Ok(SuiteReport { seed, families, diagnostics: vec![bias_literal.report], pass })
}
