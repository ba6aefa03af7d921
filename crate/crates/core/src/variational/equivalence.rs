//! Equivalence of ensembles, the bias factors Θ, Θ̃ and density regularity.

use super::grand::solve_primal;
use super::{min_eigenvalue, operator_norm};
use crate::ensemble::{bernoulli_weight, ConfigFunction, Measure};
use crate::lattice::Domain;
use crate::rates::RateModel;
use crate::{Error, Result};
use serde::Serialize;
use statrs::function::factorial::ln_binomial;

const SLACK: f64 = 1e-10;

fn holds(lhs: f64, rhs: f64) -> bool {
    lhs <= rhs + SLACK * (1.0 + rhs.abs())
}

/// Θ_{ρ',ρ} = max{ρ'/ρ, (1−ρ')/(1−ρ)}.
pub fn theta(rho_p: f64, rho: f64) -> f64 {
    (rho_p / rho).max((1.0 - rho_p) / (1.0 - rho))
}

/// Θ̃_{ρ',ρ} = max{Θ_{ρ',ρ}, Θ_{ρ,ρ'}}.
pub fn theta_two_sided(rho_p: f64, rho: f64) -> f64 {
    theta(rho_p, rho).max(theta(rho, rho_p))
}

#[derive(Clone, Debug, Serialize)]
pub struct EquivalenceReport {
    pub big: u64,
    pub small: u64,
    pub count: u64,
    pub canonical: f64,
    pub grand: f64,
    pub abs_grand: f64,
    /// Preconditions of the one-sided bound hold (including ⟨f⟩_{Λ_ℓ,N} ≥ 0 for all N).
    pub one_sided_guaranteed: bool,
    pub one_sided_bound: f64,
    pub one_sided_holds: bool,
    pub two_sided_guaranteed: bool,
    pub two_sided_bound: f64,
    pub two_sided_holds: bool,
    /// Every guaranteed bound holds.
    pub pass: bool,
}

/// Compare ⟨f⟩_{Λ_L,M} with ⟨f⟩_{M/|Λ_L|} for f on the sites of Λ_ℓ (f's state
/// space), using the exact hypergeometric marginal.
pub fn ensemble_equivalence(
    big: u64,
    count: u64,
    small: u64,
    dim: usize,
    eps: f64,
    f: &ConfigFunction,
) -> Result<EquivalenceReport> {
    let outer = Domain::cube(big, dim)?;
    let inner = Domain::cube(small, dim)?;
    let space = f.space();
    if space.sites().iter().any(|s| !inner.contains(s)) {
        return Err(Error::Support("f must live on Λ_ℓ".into()));
    }
    let n = outer.len() as u64;
    if count > n {
        return Err(Error::EmptySector(format!("{count} particles in {n} sites")));
    }
    let k = space.len() as u64;
    let rho = count as f64 / n as f64;
    let log_total = ln_binomial(n, count);
    let mut canonical = 0.0;
    let mut grand = 0.0;
    let mut abs_grand = 0.0;
    let mut sector_sum = vec![0.0; k as usize + 1];
    for (c, &v) in f.values().iter().enumerate() {
        let j = (c as u64).count_ones() as u64;
        sector_sum[j as usize] += v;
        if j <= count && count - j <= n - k {
            canonical += v * (ln_binomial(n - k, count - j) - log_total).exp();
        }
        let w = bernoulli_weight(rho, j as u32, k as usize);
        grand += w * v;
        abs_grand += w * v.abs();
    }
    let nonneg = sector_sum.iter().all(|s| *s >= -SLACK);
    let (l, ell, d) = (big as f64, small as f64, dim as i32);
    let ratio = (ell * ell / l).powi(d);
    let one_sided_guaranteed = 10.0 * ell * ell <= l && count as f64 <= l.powi(d) && nonneg;
    let one_sided_bound = (1.0 + 4.0 * ratio) * grand;
    let one_sided_holds = holds(canonical, one_sided_bound);
    let two_sided_guaranteed = 10.0 * ell.powi(2 * d) <= eps * l.powi(d) && rho >= eps && rho <= 1.0 - eps && count >= 1;
    let two_sided_bound = ratio * abs_grand / eps;
    let two_sided_holds = holds((canonical - grand).abs(), two_sided_bound);
    Ok(EquivalenceReport {
        big,
        small,
        count,
        canonical,
        grand,
        abs_grand,
        one_sided_guaranteed,
        one_sided_bound,
        one_sided_holds,
        two_sided_guaranteed,
        two_sided_bound,
        two_sided_holds,
        pass: (!one_sided_guaranteed || one_sided_holds) && (!two_sided_guaranteed || two_sided_holds),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct BiasCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub theta: f64,
    pub holds: bool,
}

/// |⟨f⟩_{ρ'} − ⟨f⟩_ρ| ≤ (Θ_{ρ',ρ}^{|Λ|} − 1)⟨|f|⟩_ρ with Λ the sites of f's space.
pub fn bias_proba_check(rho_p: f64, rho: f64, f: &ConfigFunction) -> Result<BiasCheck> {
    let mp = Measure::bernoulli(f.space(), rho_p)?;
    let m = Measure::bernoulli(f.space(), rho)?;
    let lhs = (mp.expect(f)? - m.expect(f)?).abs();
    let t = theta(rho_p, rho);
    let rhs = (t.powi(f.space().len() as i32) - 1.0) * m.expect(&f.map(f64::abs))?;
    Ok(BiasCheck { lhs, rhs, theta: t, holds: holds(lhs, rhs) })
}

/// Sound replacements for the single-Θ bound above, which fails for signed f
/// (one site, ρ = 0.9, ρ' = 0.95, f = 1 − η): `upper` is ⟨|f|⟩_{ρ'} ≤ Θ^{|Λ|}⟨|f|⟩_ρ
/// and `two_sided` is the absolute bound with Θ̃ in place of Θ.
#[derive(Clone, Debug, Serialize)]
pub struct BiasBounds {
    pub upper: BiasCheck,
    pub two_sided: BiasCheck,
}

pub fn bias_bounds(rho_p: f64, rho: f64, f: &ConfigFunction) -> Result<BiasBounds> {
    let mp = Measure::bernoulli(f.space(), rho_p)?;
    let m = Measure::bernoulli(f.space(), rho)?;
    let n = f.space().len() as i32;
    let abs = f.map(f64::abs);
    let t = theta(rho_p, rho);
    let (lhs, rhs) = (mp.expect(&abs)?, t.powi(n) * m.expect(&abs)?);
    let upper = BiasCheck { lhs, rhs, theta: t, holds: holds(lhs, rhs) };
    let tt = theta_two_sided(rho_p, rho);
    let lhs = (mp.expect(f)? - m.expect(f)?).abs();
    let rhs = (tt.powi(n) - 1.0) * m.expect(&abs)?;
    Ok(BiasBounds { upper, two_sided: BiasCheck { lhs, rhs, theta: tt, holds: holds(lhs, rhs) } })
}

/// One inequality of the regularity suite.
#[derive(Clone, Debug, Serialize)]
pub struct Inequality {
    pub name: &'static str,
    pub lhs: f64,
    pub rhs: f64,
    pub applicable: bool,
    pub holds: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RegularityReport {
    /// Exponent (L + 2r)^d, with r taken as at least 1.
    pub exponent: u32,
    pub inequalities: Vec<Inequality>,
    pub pass: bool,
}

/// Density regularity of c̄ and of the correctors at (ρ, ρ', ρ'').
pub fn regularity_suite(
    rho: f64,
    rho_p: f64,
    rho_pp: f64,
    domain: &Domain,
    xi: &[f64],
    model: &RateModel,
) -> Result<RegularityReport> {
    let side = domain.side().ok_or_else(|| Error::Geometry("regularity suite needs a cube".into()))?;
    let dim = domain.dim();
    let exponent = ((side as usize + 2 * model.range().max(1)).pow(dim as u32)) as u32;
    let k = exponent as i32;
    let s = solve_primal(rho, domain, model)?;
    let sp = solve_primal(rho_p, domain, model)?;
    let spp = solve_primal(rho_pp, domain, model)?;
    let (c, cp, cpp) = (s.conductivity(), sp.conductivity(), spp.conductivity());
    let (n, n_p, n_pp) = (operator_norm(&c), operator_norm(&cp), operator_norm(&cpp));
    let vol = domain.len() as f64;
    let l2 = (side * side) as f64;
    let mut out = Vec::new();

    let th = theta(rho_p, rho);
    let margin = min_eigenvalue(&(&c * th.powi(k) - &cp));
    out.push(Inequality {
        name: "conductivity_one_sided",
        lhs: (-margin).max(0.0),
        rhs: 0.0,
        applicable: true,
        holds: margin >= -SLACK * (1.0 + n),
    });

    let tt = theta_two_sided(rho_p, rho);
    let lhs = operator_norm(&(&c - &cp));
    let rhs = (tt.powi(k) - 1.0) * n.max(n_p);
    out.push(Inequality { name: "conductivity_two_sided", lhs, rhs, applicable: true, holds: holds(lhs, rhs) });

    let phi = s.corrector(xi);
    let mean = Measure::bernoulli(&s.space, rho_p)?.expect(&phi)?;
    let lhs = mean * mean / vol;
    let rhs = l2 * (th.powi(k) - 1.0).powi(2) * n;
    out.push(Inequality { name: "corrector_mean", lhs, rhs, applicable: true, holds: holds(lhs, rhs) });

    let t1 = theta_two_sided(rho, rho_pp).powi(k);
    let t2 = theta_two_sided(rho_p, rho_pp).powi(k);
    let applicable = t1 <= 2.0 && t2 <= 2.0;
    let diff = sp.corrector(xi).sub(&phi)?;
    let l2_part = Measure::bernoulli(&s.space, rho_pp)?.l2_norm(&diff)?.powi(2) / vol / l2;
    let dirichlet = spp.bilinear(&diff, &diff)? / vol;
    let lhs = l2_part + dirichlet;
    let rhs = 10.0 * (t1.max(t2) - 1.0) * n.max(n_p).max(n_pp);
    out.push(Inequality {
        name: "corrector_l2",
        lhs,
        rhs,
        applicable,
        holds: !applicable || holds(lhs, rhs),
    });
    let pass = out.iter().all(|i| i.holds);
    Ok(RegularityReport { exponent, inequalities: out, pass })
}
