//! Configuration spaces {0,1}^S, functions on them, Bernoulli and canonical
//! measures, and the exchange / Kawasaki / Glauber / translation operators.
//!
//! A configuration is a `u64` whose bit k is the occupation of the k-th site
//! of the state space (sites in lexicographic order).

use crate::lattice::{add, shift, Bond, Site};
use crate::rates::{bond_tables, Outside, RateModel};
use crate::{Error, Result};
use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

pub type Config = u64;

/// Default cap on enumerated sites.
pub const DEFAULT_CAP: usize = 24;

/// χ(ρ) = ρ(1−ρ).
pub fn compressibility(rho: f64) -> f64 {
    rho * (1.0 - rho)
}

/// The enumerated space {0,1}^S.
#[derive(Debug, PartialEq)]
pub struct StateSpace {
    sites: Vec<Site>,
    index: HashMap<Site, usize>,
}

impl StateSpace {
    pub fn new(sites: Vec<Site>) -> Result<Arc<Self>> {
        Self::with_cap(sites, DEFAULT_CAP)
    }

    pub fn with_cap(sites: Vec<Site>, cap: usize) -> Result<Arc<Self>> {
        let set: BTreeSet<Site> = sites.into_iter().collect();
        if set.len() > cap.min(40) {
            return Err(Error::CapExceeded { needed: set.len(), cap: cap.min(40) });
        }
        let sites: Vec<Site> = set.into_iter().collect();
        let index = sites.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Ok(Arc::new(StateSpace { sites, index }))
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }
    pub fn len(&self) -> usize {
        self.sites.len()
    }
    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }
    /// Number of configurations 2^|S|.
    pub fn size(&self) -> usize {
        1usize << self.sites.len()
    }
    pub fn position(&self, x: &Site) -> Option<usize> {
        self.index.get(x).copied()
    }
    pub fn contains(&self, x: &Site) -> bool {
        self.index.contains_key(x)
    }

    pub fn require(&self, x: &Site) -> Result<usize> {
        self.position(x).ok_or_else(|| Error::Support(format!("site {x:?} outside the state space")))
    }

    /// Bit mask of a site subset.
    pub fn mask(&self, sites: &[Site]) -> Result<u64> {
        let mut m = 0;
        for s in sites {
            m |= 1 << self.require(s)?;
        }
        Ok(m)
    }

    pub fn occupied(&self, cfg: Config, x: &Site) -> Result<bool> {
        Ok(cfg >> self.require(x)? & 1 == 1)
    }

    /// Configuration with the given occupation.
    pub fn config_from(&self, occ: impl Fn(&Site) -> bool) -> Config {
        self.sites.iter().enumerate().fold(0, |c, (k, s)| if occ(s) { c | 1 << k } else { c })
    }

    /// Readable form of a configuration.
    pub fn describe(&self, cfg: Config) -> Vec<(Site, bool)> {
        self.sites.iter().enumerate().map(|(k, s)| (s.clone(), cfg >> k & 1 == 1)).collect()
    }

    /// Map from a configuration of `self` to one of `target`, copying the bits
    /// of `sites` (which must lie in both spaces).
    pub fn transfer(&self, target: &StateSpace, sites: &[Site]) -> Result<Transfer> {
        let pairs = sites
            .iter()
            .map(|s| Ok((self.require(s)?, target.require(s)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Transfer { pairs })
    }
}

/// Bit-copy map between two state spaces.
#[derive(Clone, Debug)]
pub struct Transfer {
    pairs: Vec<(usize, usize)>,
}

impl Transfer {
    #[inline]
    pub fn apply(&self, cfg: Config) -> Config {
        self.pairs.iter().fold(0, |c, &(from, to)| c | (cfg >> from & 1) << to)
    }
}

/// Swap the values at two bit positions.
#[inline]
pub fn swap_bits(cfg: Config, i: usize, j: usize) -> Config {
    if (cfg >> i ^ cfg >> j) & 1 == 1 {
        cfg ^ (1 << i) ^ (1 << j)
    } else {
        cfg
    }
}

/// η ↦ η^b.
pub fn exchange(space: &StateSpace, cfg: Config, b: &Bond) -> Result<Config> {
    Ok(swap_bits(cfg, space.require(&b.base)?, space.require(&b.tip())?))
}

/// A real function on a state space with a declared measurability support.
#[derive(Clone, Debug)]
pub struct ConfigFunction {
    space: Arc<StateSpace>,
    values: Vec<f64>,
    support: u64,
}

impl ConfigFunction {
    pub fn new(space: Arc<StateSpace>, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.size() {
            return Err(Error::Support(format!(
                "{} values for a space of {} configurations",
                values.len(),
                space.size()
            )));
        }
        let support = full_mask(&space);
        Ok(ConfigFunction { space, values, support })
    }

    pub fn from_fn(space: &Arc<StateSpace>, f: impl Fn(Config) -> f64) -> Self {
        let values = (0..space.size() as u64).map(f).collect();
        ConfigFunction { space: space.clone(), values, support: full_mask(space) }
    }

    pub fn constant(space: &Arc<StateSpace>, c: f64) -> Self {
        ConfigFunction { space: space.clone(), values: vec![c; space.size()], support: 0 }
    }

    pub fn zero(space: &Arc<StateSpace>) -> Self {
        Self::constant(space, 0.0)
    }

    /// η ↦ η_x.
    pub fn occupation(space: &Arc<StateSpace>, x: &Site) -> Result<Self> {
        let k = space.require(x)?;
        let mut f = Self::from_fn(space, |c| (c >> k & 1) as f64);
        f.support = 1 << k;
        Ok(f)
    }

    /// ℓ_{p,Λ}(η) = Σ_{x∈Λ} (p·x) η_x.
    pub fn affine(space: &Arc<StateSpace>, p: &[f64], region: &[Site]) -> Result<Self> {
        let mut coef = Vec::with_capacity(region.len());
        for x in region {
            if x.len() != p.len() {
                return Err(Error::Precondition("slope and site dimensions differ".into()));
            }
            let px: f64 = p.iter().zip(x).map(|(a, b)| a * *b as f64).sum();
            coef.push((space.require(x)?, px));
        }
        let mut f = Self::from_fn(space, |c| {
            coef.iter().map(|&(k, w)| if c >> k & 1 == 1 { w } else { 0.0 }).sum()
        });
        f.support = space.mask(region)?;
        Ok(f)
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn value(&self, cfg: Config) -> f64 {
        self.values[cfg as usize]
    }
    pub fn support_mask(&self) -> u64 {
        self.support
    }

    /// Sites of the declared support.
    pub fn support_sites(&self) -> Vec<Site> {
        (0..self.space.len())
            .filter(|k| self.support >> k & 1 == 1)
            .map(|k| self.space.sites()[k].clone())
            .collect()
    }

    /// Whether the values only depend on the bits in `mask`.
    pub fn is_measurable(&self, mask: u64) -> bool {
        self.values.iter().enumerate().all(|(c, v)| {
            let rep = c as u64 & mask;
            (self.values[rep as usize] - v).abs() <= 1e-12 * (1.0 + v.abs())
        })
    }

    /// Declare measurability with respect to `sites`, checking it exhaustively.
    pub fn with_support(mut self, sites: &[Site]) -> Result<Self> {
        let mask = self.space.mask(sites)?;
        if !self.is_measurable(mask) {
            return Err(Error::Support("function depends on sites outside the declared support".into()));
        }
        self.support = mask;
        Ok(self)
    }

    /// The smallest support on which the values actually depend.
    pub fn tighten_support(mut self) -> Self {
        let mut mask = self.support;
        for k in 0..self.space.len() {
            if mask >> k & 1 == 1 && self.is_measurable(mask & !(1 << k)) {
                mask &= !(1 << k);
            }
        }
        self.support = mask;
        self
    }

    fn same_space(&self, other: &Self) -> Result<()> {
        if Arc::ptr_eq(&self.space, &other.space) || *self.space == *other.space {
            Ok(())
        } else {
            Err(Error::Support("functions live on different state spaces".into()))
        }
    }

    fn zip(&self, other: &Self, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        self.same_space(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| op(*a, *b)).collect();
        Ok(ConfigFunction { space: self.space.clone(), values, support: self.support | other.support })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }
    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| s * v)
    }
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ConfigFunction {
            space: self.space.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
            support: self.support,
        }
    }

    /// π_b f = f(η^b) − f(η).
    pub fn kawasaki(&self, b: &Bond) -> Result<Self> {
        let i = self.space.require(&b.base)?;
        let j = self.space.require(&b.tip())?;
        let v = &self.values;
        let values = (0..v.len()).map(|c| v[swap_bits(c as u64, i, j) as usize] - v[c]).collect();
        Ok(ConfigFunction { space: self.space.clone(), values, support: self.support | 1 << i | 1 << j })
    }

    /// π_x f = f(η^x) − f(η), η^x flipping site x.
    pub fn glauber(&self, x: &Site) -> Result<Self> {
        let k = self.space.require(x)?;
        let v = &self.values;
        let values = (0..v.len()).map(|c| v[c ^ (1 << k)] - v[c]).collect();
        Ok(ConfigFunction { space: self.space.clone(), values, support: self.support | 1 << k })
    }

    /// ∇_{x,e_i} u = (π_{x,x+e_i} u)(η_x − η_{x+e_i}).
    pub fn gradient_field(&self, x: &Site, i: usize) -> Result<Self> {
        let b = Bond::new(x.clone(), i);
        let p = self.kawasaki(&b)?;
        let a = self.space.require(x)?;
        let t = self.space.require(&b.tip())?;
        let values = p
            .values
            .iter()
            .enumerate()
            .map(|(c, v)| v * ((c >> a & 1) as f64 - (c >> t & 1) as f64))
            .collect();
        Ok(ConfigFunction { space: self.space.clone(), values, support: p.support })
    }

    /// (τ_z f)(η) = f(τ_z η) with (τ_z η)_y = η_{z+y}; result lives on the same
    /// space, so z + supp(f) must lie in it.
    pub fn translate(&self, z: &Site) -> Result<Self> {
        let support = self.support_sites();
        let mut pairs = Vec::with_capacity(support.len());
        for y in &support {
            let from = self.space.position(&add(y, z)).ok_or_else(|| {
                Error::Support(format!("translate by {z:?} moves support site {y:?} out of the space"))
            })?;
            pairs.push((from, self.space.require(y)?));
        }
        let moved = Transfer { pairs };
        let values = (0..self.space.size() as u64).map(|c| self.values[moved.apply(c) as usize]).collect();
        let new_support = support.iter().map(|y| 1u64 << self.space.position(&add(y, z)).unwrap()).fold(0, |a, b| a | b);
        Ok(ConfigFunction { space: self.space.clone(), values, support: new_support })
    }

    /// The same function viewed on another space containing its support.
    pub fn embed(&self, target: &Arc<StateSpace>) -> Result<Self> {
        let support = self.support_sites();
        let t = target.transfer(&self.space, &support)?;
        let values = (0..target.size() as u64).map(|c| self.values[t.apply(c) as usize]).collect();
        Ok(ConfigFunction { space: target.clone(), values, support: target.mask(&support)? })
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn full_mask(space: &StateSpace) -> u64 {
    if space.len() == 64 {
        u64::MAX
    } else {
        (1u64 << space.len()) - 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeasureKind {
    Bernoulli { rho: f64 },
    /// Uniform on {Σ_{x∈region} η_x = count, η = exterior off the region}.
    Canonical { region: Vec<Site>, count: usize, exterior: Config },
}

/// A probability measure on a state space, stored as its weight vector.
#[derive(Clone, Debug)]
pub struct Measure {
    space: Arc<StateSpace>,
    kind: MeasureKind,
    weights: Vec<f64>,
}

/// Product Bernoulli weight of a configuration with `n` particles on `len` sites.
pub fn bernoulli_weight(rho: f64, n: u32, len: usize) -> f64 {
    rho.powi(n as i32) * (1.0 - rho).powi(len as i32 - n as i32)
}

impl Measure {
    pub fn bernoulli(space: &Arc<StateSpace>, rho: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&rho) {
            return Err(Error::Precondition(format!("density {rho} outside [0,1]")));
        }
        let n = space.len();
        let weights = (0..space.size() as u64).map(|c| bernoulli_weight(rho, c.count_ones(), n)).collect();
        Ok(Measure { space: space.clone(), kind: MeasureKind::Bernoulli { rho }, weights })
    }

    /// Canonical measure with `count` particles in `region` and the remaining
    /// sites of the space fixed by `exterior` (every one must be given).
    pub fn canonical(
        space: &Arc<StateSpace>,
        region: &[Site],
        count: usize,
        exterior: &dyn Fn(&Site) -> Option<bool>,
    ) -> Result<Self> {
        let mask = space.mask(region)?;
        if count > region.len() {
            return Err(Error::EmptySector(format!("{count} particles in {} sites", region.len())));
        }
        let mut ext = 0u64;
        for (k, s) in space.sites().iter().enumerate() {
            if mask >> k & 1 == 0 {
                match exterior(s) {
                    Some(true) => ext |= 1 << k,
                    Some(false) => {}
                    None => return Err(Error::Support(format!("exterior value at {s:?} not given"))),
                }
            }
        }
        let members: Vec<u64> = (0..space.size() as u64)
            .filter(|c| c & !mask == ext && (c & mask).count_ones() as usize == count)
            .collect();
        let w = 1.0 / members.len() as f64;
        let mut weights = vec![0.0; space.size()];
        for c in members {
            weights[c as usize] = w;
        }
        Ok(Measure {
            space: space.clone(),
            kind: MeasureKind::Canonical { region: region.to_vec(), count, exterior: ext },
            weights,
        })
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }
    pub fn kind(&self) -> &MeasureKind {
        &self.kind
    }
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Configurations with positive weight.
    pub fn support(&self) -> impl Iterator<Item = (Config, f64)> + '_ {
        self.weights.iter().enumerate().filter(|(_, w)| **w > 0.0).map(|(c, w)| (c as u64, *w))
    }

    fn check(&self, f: &ConfigFunction) -> Result<()> {
        if Arc::ptr_eq(&self.space, &f.space) || *self.space == *f.space {
            Ok(())
        } else {
            Err(Error::Support("function and measure live on different state spaces".into()))
        }
    }

    pub fn expect(&self, f: &ConfigFunction) -> Result<f64> {
        self.check(f)?;
        Ok(self.support().map(|(c, w)| w * f.values[c as usize]).sum())
    }

    pub fn covariance(&self, f: &ConfigFunction, g: &ConfigFunction) -> Result<f64> {
        let (mf, mg) = (self.expect(f)?, self.expect(g)?);
        self.check(g)?;
        Ok(self.support().map(|(c, w)| w * (f.values[c as usize] - mf) * (g.values[c as usize] - mg)).sum())
    }

    pub fn variance(&self, f: &ConfigFunction) -> Result<f64> {
        self.covariance(f, f)
    }

    /// ‖f‖₂ = ⟨f²⟩^{1/2}.
    pub fn l2_norm(&self, f: &ConfigFunction) -> Result<f64> {
        self.check(f)?;
        Ok(self.support().map(|(c, w)| w * f.values[c as usize].powi(2)).sum::<f64>().sqrt())
    }
}

/// ½ Σ_b ⟨c_b (π_b u)(π_b v)⟩_μ; every rate window must lie in the space.
pub fn dirichlet_form(
    u: &ConfigFunction,
    v: &ConfigFunction,
    bonds: &[Bond],
    model: &RateModel,
    mu: &Measure,
) -> Result<f64> {
    mu.check(u)?;
    mu.check(v)?;
    let space = mu.space();
    let tables = bond_tables(model, bonds, &|s| space.position(s), &Outside::Forbid)?;
    let mut acc = 0.0;
    for (c, w) in mu.support() {
        for t in &tables {
            if t.active(c) {
                let e = t.exchange(c) as usize;
                let c = c as usize;
                acc += w * t.rate(c as u64) * (u.values[e] - u.values[c]) * (v.values[e] - v.values[c]);
            }
        }
    }
    Ok(0.5 * acc)
}

/// L u = Σ_b c_b π_b u.
pub fn generator(u: &ConfigFunction, bonds: &[Bond], model: &RateModel) -> Result<ConfigFunction> {
    let space = u.space();
    let tables = bond_tables(model, bonds, &|s| space.position(s), &Outside::Forbid)?;
    let values = (0..space.size() as u64)
        .map(|c| {
            tables
                .iter()
                .filter(|t| t.active(c))
                .map(|t| t.rate(c) * (u.values[t.exchange(c) as usize] - u.values[c as usize]))
                .sum()
        })
        .collect();
    ConfigFunction::new(space.clone(), values)
}

/// Sites of a set translated by a unit step: helper for tests and suites.
pub fn shifted(sites: &[Site], i: usize, k: i32) -> Vec<Site> {
    sites.iter().map(|s| shift(s, i, k)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Domain;
    use crate::rates::{speed_change, ssep};

    fn line(lo: i32, hi: i32) -> Arc<StateSpace> {
        StateSpace::new((lo..=hi).map(|x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn exchange_examples() {
        let s = line(0, 1);
        let b = Bond::new(vec![0], 0);
        let c10 = s.config_from(|x| x[0] == 0);
        let c01 = s.config_from(|x| x[0] == 1);
        assert_eq!(exchange(&s, c10, &b).unwrap(), c01);
        assert_eq!(exchange(&s, 3, &b).unwrap(), 3);
        assert!(exchange(&s, 0, &Bond::new(vec![1], 0)).is_err());
    }

    #[test]
    fn exchange_is_involution() {
        let s = line(0, 3);
        for b in (0..3).map(|x| Bond::new(vec![x], 0)) {
            for c in 0..16 {
                let once = exchange(&s, c, &b).unwrap();
                assert_eq!(exchange(&s, once, &b).unwrap(), c);
            }
        }
    }

    #[test]
    fn kawasaki_examples() {
        let s = line(0, 1);
        let b = Bond::new(vec![0], 0);
        let f = ConfigFunction::occupation(&s, &vec![0]).unwrap();
        let pf = f.kawasaki(&b).unwrap();
        for c in 0..4u64 {
            let expected = (c >> 1 & 1) as f64 - (c & 1) as f64;
            assert_eq!(pf.value(c), expected);
        }
        let ppf = pf.kawasaki(&b).unwrap();
        for c in 0..4u64 {
            assert_eq!(ppf.value(c), -2.0 * pf.value(c));
        }
        assert!(ConfigFunction::constant(&s, 3.0).kawasaki(&b).unwrap().values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn kawasaki_of_affine() {
        let s = StateSpace::new(Domain::cube(3, 2).unwrap().structure().enlarged).unwrap();
        let p = [0.7, -1.3];
        let region = Domain::cube(3, 2).unwrap().structure().enlarged;
        let l = ConfigFunction::affine(&s, &p, &region).unwrap();
        let b = Bond::new(vec![0, 0], 1);
        let pl = l.kawasaki(&b).unwrap();
        let (a, t) = (s.position(&b.base).unwrap(), s.position(&b.tip()).unwrap());
        for c in 0..s.size() as u64 {
            let expected = p[1] * ((c >> a & 1) as f64 - (c >> t & 1) as f64);
            assert!((pl.value(c) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn glauber_and_translate() {
        let s = line(0, 1);
        let f = ConfigFunction::occupation(&s, &vec![0]).unwrap();
        let g = f.glauber(&vec![0]).unwrap();
        for c in 0..4u64 {
            assert_eq!(g.value(c), 1.0 - 2.0 * (c & 1) as f64);
        }
        let t = f.translate(&vec![1]).unwrap();
        let expected = ConfigFunction::occupation(&s, &vec![1]).unwrap();
        assert_eq!(t.values(), expected.values());
        assert!(f.translate(&vec![2]).is_err());
    }

    #[test]
    fn translate_commutes_with_exchange() {
        let s = line(0, 3);
        let f = ConfigFunction::from_fn(&s, |c| ((c & 3) as f64).sin() + (c & 1) as f64)
            .with_support(&[vec![0], vec![1]])
            .unwrap();
        let z = vec![2];
        let lhs = f.translate(&z).unwrap().kawasaki(&Bond::new(vec![2], 0)).unwrap();
        let rhs = f.kawasaki(&Bond::new(vec![0], 0)).unwrap().translate(&z).unwrap();
        for c in 0..16u64 {
            assert!((lhs.value(c) - rhs.value(c)).abs() < 1e-12);
        }
    }

    #[test]
    fn expectations() {
        let s = line(0, 2);
        let f = ConfigFunction::occupation(&s, &vec![0]).unwrap();
        let mu = Measure::bernoulli(&s, 0.3).unwrap();
        assert!((mu.expect(&f).unwrap() - 0.3).abs() < 1e-15);
        assert!((mu.variance(&f).unwrap() - 0.21).abs() < 1e-15);
        assert_eq!(compressibility(0.5), 0.25);
        let lambda3 = vec![vec![-1], vec![0], vec![1]];
        let s3 = line(-1, 1);
        let can = Measure::canonical(&s3, &lambda3, 2, &|_| None).unwrap();
        let g = ConfigFunction::occupation(&s3, &vec![0]).unwrap();
        assert!((can.expect(&g).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(Measure::canonical(&s3, &lambda3, 4, &|_| None).is_err());
        assert!(Measure::canonical(&s, &lambda3[1..], 1, &|_| None).is_err());
    }

    #[test]
    fn dirichlet_matches_generator_and_closed_form() {
        let d = Domain::cube(3, 1).unwrap();
        let st = d.structure();
        let space = StateSpace::new(d.neighborhood(2)).unwrap();
        let model = speed_change(0.5).unwrap();
        let mu = Measure::bernoulli(&space, 0.4).unwrap();
        let u = ConfigFunction::from_fn(&space, |c| ((c * 2654435761) % 97) as f64 / 97.0);
        let v = ConfigFunction::from_fn(&space, |c| ((c * 40503) % 89) as f64 / 89.0);
        let bonds = &st.enlarged_bonds.bonds;
        let e = dirichlet_form(&u, &v, bonds, &model, &mu).unwrap();
        let lu = generator(&u, bonds, &model).unwrap();
        let rhs = -mu.expect(&v.mul(&lu).unwrap()).unwrap();
        assert!((e - rhs).abs() < 1e-12);
        let e2 = dirichlet_form(&v, &u, bonds, &model, &mu).unwrap();
        assert!((e - e2).abs() < 1e-12);

        let plus = st.enlarged.clone();
        let l = ConfigFunction::affine(&space, &[1.5], &plus).unwrap();
        let mu = Measure::bernoulli(&space, 0.3).unwrap();
        let val = dirichlet_form(&l, &l, bonds, &ssep(), &mu).unwrap();
        assert!((val - compressibility(0.3) * 3.0 * 2.25).abs() < 1e-12);
    }

    #[test]
    fn gradient_of_affine() {
        let s = line(0, 1);
        let l = ConfigFunction::affine(&s, &[1.0], &[vec![0], vec![1]]).unwrap();
        let g = l.gradient_field(&vec![0], 0).unwrap();
        for c in 0..4u64 {
            let d = (c >> 1 & 1) as f64 - (c & 1) as f64;
            assert_eq!(g.value(c), d * d);
        }
    }

    #[test]
    fn measurability_and_embedding() {
        let s = line(0, 2);
        let f = ConfigFunction::occupation(&s, &vec![1]).unwrap();
        assert!(f.is_measurable(s.mask(&[vec![1]]).unwrap()));
        assert!(!f.is_measurable(s.mask(&[vec![0]]).unwrap()));
        let big = line(-1, 3);
        let g = f.embed(&big).unwrap();
        let h = ConfigFunction::occupation(&big, &vec![1]).unwrap();
        assert_eq!(g.values(), h.values());
    }
}
