//! Jump-rate laws c_b(η) and exhaustive verification of their hypotheses.
//!
//! Every model exposes the finite window of sites its rate on a bond reads.
//! Fast evaluation goes through [`RateModel::rate_bits`], which receives the
//! occupation of the window packed into an integer (bit k = window site k).

use crate::lattice::{add, dist, shift, Bond, Site};
use crate::{Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::cell::RefCell;
use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// I.i.d. per-bond parameters a_b ~ U[0, a_max], a deterministic function of
/// (seed, bond): nested domains see the same environment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DisorderField {
    pub a_max: f64,
    pub seed: u64,
}

impl DisorderField {
    /// Stream identifier of a bond: direction and coordinates packed in 64 bits.
    fn stream(b: &Bond) -> u64 {
        let mut key = b.dir as u64 & 0x7;
        for &c in &b.base {
            key = key.rotate_left(20) ^ ((c as i64 as u64) & 0xF_FFFF);
        }
        key
    }

    pub fn parameter(&self, b: &Bond) -> f64 {
        if self.a_max == 0.0 {
            return 0.0;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(Self::stream(b));
        rng.random_range(0.0..=self.a_max)
    }

    pub fn parameters(&self, bonds: &[Bond]) -> Vec<f64> {
        bonds.iter().map(|b| self.parameter(b)).collect()
    }
}

type WindowFn = dyn Fn(&Bond) -> Vec<Site> + Send + Sync;
type OracleFn = dyn Fn(&Site, &Site, &dyn Fn(&Site) -> bool) -> f64 + Send + Sync;

/// A user-supplied rate law, mainly for exercising [`validate`].
#[derive(Clone)]
pub struct CustomRate {
    pub name: String,
    pub homogeneous: bool,
    window: Arc<WindowFn>,
    eval: Arc<OracleFn>,
}

impl fmt::Debug for CustomRate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CustomRate({})", self.name)
    }
}

#[derive(Clone, Debug)]
pub enum RateKind {
    Ssep,
    SpeedChange { a: f64 },
    Cooperative { a: f64 },
    Disordered(DisorderField),
    Custom(CustomRate),
}

/// Local jump-rate law with range r and ellipticity bound λ.
#[derive(Clone, Debug)]
pub struct RateModel {
    kind: RateKind,
    range: usize,
    lambda: f64,
}

/// c ≡ 1.
pub fn ssep() -> RateModel {
    RateModel { kind: RateKind::Ssep, range: 0, lambda: 1.0 }
}

/// c_{x,x+e} = 1 + a(η_{x−e} + η_{x+2e}).
///
/// The current of this law is a discrete gradient, W_{x,x+1} = h_x − h_{x+1}
/// with h_x = η_x + a(η_{x−1}η_x + η_xη_{x+1} − η_{x−1}η_{x+1}), so the affine
/// function is already optimal and D̄(ρ, Λ) = 1 + 2aρ on every box.
pub fn speed_change(a: f64) -> Result<RateModel> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Precondition(format!("speed-change needs a ≥ 0, got {a}")));
    }
    Ok(RateModel { kind: RateKind::SpeedChange { a }, range: 2, lambda: 1.0 + 2.0 * a })
}

/// c_{x,x+e} = 1 + a η_{x−e} η_{x+2e}.
///
/// Unlike [`speed_change`], whose current telescopes into a gradient, the
/// two cubic monomials of this current are not translates of each other, so
/// the model is of non-gradient type and its correctors are nontrivial.
pub fn cooperative(a: f64) -> Result<RateModel> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Precondition(format!("cooperative rates need a ≥ 0, got {a}")));
    }
    Ok(RateModel { kind: RateKind::Cooperative { a }, range: 2, lambda: 1.0 + a })
}

/// Speed-change rates with per-bond parameter a_b ~ U[0, a_max].
pub fn sample_disorder(a_max: f64, seed: u64) -> Result<RateModel> {
    if !(a_max >= 0.0 && a_max.is_finite()) {
        return Err(Error::Precondition(format!("disorder needs a_max ≥ 0, got {a_max}")));
    }
    Ok(RateModel {
        kind: RateKind::Disordered(DisorderField { a_max, seed }),
        range: 2,
        lambda: 1.0 + 2.0 * a_max,
    })
}

impl RateModel {
    /// A model given by its window and a directed evaluation oracle
    /// `eval(x, y, occupation)`.
    pub fn custom(
        name: &str,
        range: usize,
        lambda: f64,
        homogeneous: bool,
        window: impl Fn(&Bond) -> Vec<Site> + Send + Sync + 'static,
        eval: impl Fn(&Site, &Site, &dyn Fn(&Site) -> bool) -> f64 + Send + Sync + 'static,
    ) -> RateModel {
        RateModel {
            kind: RateKind::Custom(CustomRate {
                name: name.to_string(),
                homogeneous,
                window: Arc::new(window),
                eval: Arc::new(eval),
            }),
            range,
            lambda,
        }
    }

    pub fn kind(&self) -> &RateKind {
        &self.kind
    }
    pub fn range(&self) -> usize {
        self.range
    }
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn name(&self) -> String {
        match &self.kind {
            RateKind::Ssep => "ssep".into(),
            RateKind::SpeedChange { a } => format!("speed_change({a})"),
            RateKind::Cooperative { a } => format!("cooperative({a})"),
            RateKind::Disordered(f) => format!("disordered(a_max={}, seed={})", f.a_max, f.seed),
            RateKind::Custom(c) => c.name.clone(),
        }
    }

    pub fn is_homogeneous(&self) -> bool {
        match &self.kind {
            RateKind::Disordered(f) => f.a_max == 0.0,
            RateKind::Custom(c) => c.homogeneous,
            _ => true,
        }
    }

    /// Sites read by the rate of `b`, in the order used by [`Self::rate_bits`].
    pub fn window(&self, b: &Bond) -> Vec<Site> {
        match &self.kind {
            RateKind::Ssep => Vec::new(),
            RateKind::SpeedChange { .. } | RateKind::Cooperative { .. } | RateKind::Disordered(_) => {
                vec![shift(&b.base, b.dir, -1), shift(&b.base, b.dir, 2)]
            }
            RateKind::Custom(c) => (c.window)(b),
        }
    }

    /// Rate of `b` given the window occupation packed into `bits`.
    pub fn rate_bits(&self, b: &Bond, bits: u32) -> f64 {
        match &self.kind {
            RateKind::Ssep => 1.0,
            RateKind::SpeedChange { a } => 1.0 + a * (bits & 3).count_ones() as f64,
            RateKind::Cooperative { a } => 1.0 + if bits & 3 == 3 { *a } else { 0.0 },
            RateKind::Disordered(f) => 1.0 + f.parameter(b) * (bits & 3).count_ones() as f64,
            RateKind::Custom(c) => {
                let w = (c.window)(b);
                let occ = |s: &Site| w.iter().position(|t| t == s).is_some_and(|k| bits >> k & 1 == 1);
                (c.eval)(&b.base, &b.tip(), &occ)
            }
        }
    }

    /// Directed evaluation c_{x,y}(η) through an occupation oracle.
    pub fn rate(&self, x: &Site, y: &Site, occ: &dyn Fn(&Site) -> bool) -> f64 {
        match &self.kind {
            RateKind::Custom(c) => (c.eval)(x, y, occ),
            _ => {
                let b = Bond::between(x, y).expect("rate queried on a non-bond");
                let mut bits = 0u32;
                for (k, s) in self.window(&b).iter().enumerate() {
                    if occ(s) {
                        bits |= 1 << k;
                    }
                }
                self.rate_bits(&b, bits)
            }
        }
    }
}

/// The first configuration found violating a hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Violation {
    pub check: String,
    pub bond: Bond,
    pub configuration: Vec<(Site, bool)>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub pass: bool,
    pub lambda: f64,
    pub observed_min: f64,
    pub observed_max: f64,
    pub configurations_checked: usize,
    pub violation: Option<Violation>,
}

fn probe_bonds(model: &RateModel, dim: usize) -> Vec<Bond> {
    let mut out = Vec::new();
    for i in 0..dim {
        out.push(Bond::new(vec![0; dim], i));
    }
    if let RateKind::Disordered(_) = model.kind {
        for k in -6..=6 {
            for i in 0..dim {
                let mut base = vec![0; dim];
                base[0] = k;
                out.push(Bond::new(base, i));
            }
        }
    }
    out
}

/// Exhaustive check of ellipticity, locality, endpoint independence, bond
/// symmetry and (for homogeneous kinds) translation invariance, over every
/// occupation of the window plus the two endpoints.
pub fn validate(model: &RateModel, dim: usize) -> ValidationReport {
    const TOL: f64 = 1e-12;
    let mut report = ValidationReport {
        model: model.name(),
        pass: true,
        lambda: model.lambda(),
        observed_min: f64::INFINITY,
        observed_max: f64::NEG_INFINITY,
        configurations_checked: 0,
        violation: None,
    };
    let shifts: Vec<Site> = if model.is_homogeneous() {
        let mut s = vec![vec![0; dim]; 3];
        s[0][0] = 1;
        s[1][0] = -2;
        s[2][dim - 1] = 5;
        s
    } else {
        Vec::new()
    };
    'bonds: for b in probe_bonds(model, dim) {
        let (x, y) = (b.base.clone(), b.tip());
        let mut sites: BTreeSet<Site> = model.window(&b).into_iter().collect();
        sites.insert(x.clone());
        sites.insert(y.clone());
        let sites: Vec<Site> = sites.into_iter().collect();
        if sites.len() > 20 {
            report.pass = false;
            report.violation = Some(Violation {
                check: "window size".into(),
                bond: b.clone(),
                configuration: Vec::new(),
                detail: format!("window of {} sites is too large to scan", sites.len()),
            });
            break;
        }
        let xi = sites.iter().position(|s| *s == x).unwrap();
        let yi = sites.iter().position(|s| *s == y).unwrap();
        for cfg in 0u32..(1 << sites.len()) {
            report.configurations_checked += 1;
            let reads = RefCell::new(Vec::<Site>::new());
            let occ_of = |c: u32| {
                let sites = &sites;
                let reads = &reads;
                move |s: &Site| {
                    reads.borrow_mut().push(s.clone());
                    sites.iter().position(|t| t == s).is_some_and(|k| c >> k & 1 == 1)
                }
            };
            let describe = |c: u32| -> Vec<(Site, bool)> {
                sites.iter().enumerate().map(|(k, s)| (s.clone(), c >> k & 1 == 1)).collect()
            };
            let mut fail = |check: &str, detail: String| {
                report.pass = false;
                report.violation = Some(Violation {
                    check: check.into(),
                    bond: b.clone(),
                    configuration: describe(cfg),
                    detail,
                });
            };
            let c = model.rate(&x, &y, &occ_of(cfg));
            let c_rev = model.rate(&y, &x, &occ_of(cfg));
            report.observed_min = report.observed_min.min(c);
            report.observed_max = report.observed_max.max(c);
            for s in reads.borrow().iter() {
                if dist(s, &x) > model.range() as i32 || !sites.contains(s) {
                    fail("locality", format!("rate reads site {s:?} outside range {}", model.range()));
                    break 'bonds;
                }
            }
            if !(c >= 1.0 - TOL && c <= model.lambda() + TOL) {
                fail("ellipticity", format!("c = {c} outside [1, {}]", model.lambda()));
                break 'bonds;
            }
            if (c - c_rev).abs() > TOL {
                fail("bond symmetry", format!("c_xy = {c}, c_yx = {c_rev}"));
                break 'bonds;
            }
            for (idx, name) in [(xi, "η_x"), (yi, "η_y")] {
                let flipped = model.rate(&x, &y, &occ_of(cfg ^ (1 << idx)));
                if (flipped - c).abs() > TOL {
                    fail("endpoint independence", format!("flipping {name} changes c from {c} to {flipped}"));
                    break 'bonds;
                }
            }
            for z in &shifts {
                let bz = b.translate(z);
                let occ_z = |s: &Site| {
                    let back: Site = s.iter().zip(z).map(|(a, b)| a - b).collect();
                    sites.iter().position(|t| *t == back).is_some_and(|k| cfg >> k & 1 == 1)
                };
                let cz = model.rate(&bz.base, &bz.tip(), &occ_z);
                if (cz - c).abs() > TOL {
                    fail("homogeneity", format!("translate by {z:?} changes c from {c} to {cz}"));
                    break 'bonds;
                }
            }
        }
    }
    if report.configurations_checked == 0 {
        report.observed_min = 1.0;
        report.observed_max = 1.0;
    }
    report
}

/// How window sites outside an enumerated support are treated.
#[derive(Clone)]
pub enum Outside<'a> {
    /// Every window site must be enumerated.
    Forbid,
    /// Average over independent Bernoulli(ρ) values.
    Bernoulli(f64),
    /// Fixed exterior values, looked up by site.
    Fixed(&'a dyn Fn(&Site) -> Option<bool>),
}

/// Precomputed rate of one bond as a function of the enumerated window bits.
#[derive(Clone, Debug)]
pub struct BondTable {
    pub bond: Bond,
    /// Bit positions of the endpoints in the enclosing state space.
    pub x: usize,
    pub y: usize,
    window: Vec<usize>,
    table: Vec<f64>,
}

impl BondTable {
    /// Tabulate the rate of `bond` for a state space whose site positions are
    /// given by `position`.
    pub fn new(
        model: &RateModel,
        bond: &Bond,
        position: &dyn Fn(&Site) -> Option<usize>,
        outside: &Outside,
    ) -> Result<BondTable> {
        let x = position(&bond.base)
            .ok_or_else(|| Error::Support(format!("bond endpoint {:?} outside support", bond.base)))?;
        let tip = bond.tip();
        let y = position(&tip)
            .ok_or_else(|| Error::Support(format!("bond endpoint {tip:?} outside support")))?;
        let window = model.window(bond);
        let mut inside = Vec::new();
        let mut inside_k = Vec::new();
        let mut free_k = Vec::new();
        let mut fixed_bits = 0u32;
        for (k, s) in window.iter().enumerate() {
            match position(s) {
                Some(p) => {
                    inside.push(p);
                    inside_k.push(k);
                }
                None => match outside {
                    Outside::Forbid => {
                        return Err(Error::Support(format!(
                            "rate window site {s:?} of bond {bond:?} outside support"
                        )))
                    }
                    Outside::Bernoulli(_) => free_k.push(k),
                    Outside::Fixed(f) => match f(s) {
                        Some(true) => fixed_bits |= 1 << k,
                        Some(false) => {}
                        None => {
                            return Err(Error::Support(format!(
                                "exterior value of window site {s:?} not given"
                            )))
                        }
                    },
                },
            }
        }
        let rho = if let Outside::Bernoulli(r) = outside { *r } else { 0.0 };
        let mut table = vec![0.0; 1 << inside.len()];
        for (idx, slot) in table.iter_mut().enumerate() {
            let mut base = fixed_bits;
            for (j, &k) in inside_k.iter().enumerate() {
                if idx >> j & 1 == 1 {
                    base |= 1 << k;
                }
            }
            let mut acc = 0.0;
            for free in 0u32..(1 << free_k.len()) {
                let mut bits = base;
                let mut w = 1.0;
                for (j, &k) in free_k.iter().enumerate() {
                    if free >> j & 1 == 1 {
                        bits |= 1 << k;
                        w *= rho;
                    } else {
                        w *= 1.0 - rho;
                    }
                }
                if w > 0.0 {
                    acc += w * model.rate_bits(bond, bits);
                }
            }
            *slot = acc;
        }
        Ok(BondTable { bond: bond.clone(), x, y, window: inside, table })
    }

    #[inline]
    pub fn rate(&self, cfg: u64) -> f64 {
        let mut idx = 0usize;
        for (k, &p) in self.window.iter().enumerate() {
            idx |= ((cfg >> p & 1) as usize) << k;
        }
        self.table[idx]
    }

    /// Whether the endpoints differ in `cfg`.
    #[inline]
    pub fn active(&self, cfg: u64) -> bool {
        (cfg >> self.x ^ cfg >> self.y) & 1 == 1
    }

    /// η ↦ η^b.
    #[inline]
    pub fn exchange(&self, cfg: u64) -> u64 {
        if self.active(cfg) {
            cfg ^ (1 << self.x) ^ (1 << self.y)
        } else {
            cfg
        }
    }
}

/// Tabulate a list of bonds.
pub fn bond_tables(
    model: &RateModel,
    bonds: &[Bond],
    position: &dyn Fn(&Site) -> Option<usize>,
    outside: &Outside,
) -> Result<Vec<BondTable>> {
    bonds.iter().map(|b| BondTable::new(model, b, position, outside)).collect()
}

/// Union of the rate windows of `bonds` lying outside `support`.
pub fn exterior_window(model: &RateModel, bonds: &[Bond], support: &[Site]) -> Vec<Site> {
    let inside: BTreeSet<&Site> = support.iter().collect();
    let mut out = BTreeSet::new();
    for b in bonds {
        for s in model.window(b) {
            if !inside.contains(&s) {
                out.insert(s);
            }
        }
    }
    out.into_iter().collect()
}

/// Translate a site set.
pub fn translate_sites(sites: &[Site], z: &Site) -> Vec<Site> {
    sites.iter().map(|s| add(s, z)).collect()
}
