//! Lattice geometry: cubes, triadic cubes, bonds, boundaries and partitions.
//!
//! Cubes follow the open-interval convention Λ_L = (-L/2, L/2)^d ∩ Z^d, so an
//! even side collapses onto the next odd one below (Λ_4 = Λ_3 in d = 1).
//! Sites are kept in lexicographic order everywhere; this order fixes the bit
//! layout of configurations in [`crate::ensemble`].

use crate::{Error, Result};
use serde::Serialize;
use std::collections::{BTreeSet, HashMap};

/// A lattice point.
pub type Site = Vec<i32>;

/// Largest number of sites a geometric constructor will materialize.
const MAX_SITES: usize = 1 << 26;

/// Unordered nearest-neighbour pair {base, base + e_dir}.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct Bond {
    pub base: Site,
    pub dir: usize,
}

impl Bond {
    pub fn new(base: Site, dir: usize) -> Self {
        Bond { base, dir }
    }

    /// The endpoint base + e_dir.
    pub fn tip(&self) -> Site {
        shift(&self.base, self.dir, 1)
    }

    /// The bond joining two neighbouring sites, in either order.
    pub fn between(x: &Site, y: &Site) -> Option<Bond> {
        if x.len() != y.len() {
            return None;
        }
        let mut dir = None;
        for i in 0..x.len() {
            match y[i] - x[i] {
                0 => {}
                1 | -1 if dir.is_none() => dir = Some(i),
                _ => return None,
            }
        }
        let dir = dir?;
        let base = if y[dir] > x[dir] { x.clone() } else { y.clone() };
        Some(Bond { base, dir })
    }

    pub fn translate(&self, z: &Site) -> Bond {
        Bond { base: add(&self.base, z), dir: self.dir }
    }
}

/// x + k e_i.
pub fn shift(x: &Site, i: usize, k: i32) -> Site {
    let mut y = x.clone();
    y[i] += k;
    y
}

pub fn add(x: &Site, z: &Site) -> Site {
    x.iter().zip(z).map(|(a, b)| a + b).collect()
}

/// Sup-norm distance.
pub fn dist(x: &Site, y: &Site) -> i32 {
    x.iter().zip(y).map(|(a, b)| (a - b).abs()).max().unwrap_or(0)
}

/// Which construction produced a domain.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum DomainKind {
    /// Λ_L.
    Cube { side: u64 },
    /// □_m = Λ_{3^m}.
    Triadic { m: u32 },
    /// z + Λ_L.
    Translate { shift: Site, side: u64 },
    /// The discrete torus {0,…,n−1}^d with periodic bonds.
    Torus { n: u64 },
    /// An arbitrary finite site set.
    Custom,
}

/// A finite lattice region.
#[derive(Clone, Debug)]
pub struct Domain {
    dim: usize,
    sites: Vec<Site>,
    kind: DomainKind,
    index: HashMap<Site, usize>,
}

/// Integers in the open interval (-L/2, L/2).
fn half_width(side: u64) -> i32 {
    ((side.max(1) - 1) / 2) as i32
}

fn product_box(lo: &[i32], hi: &[i32]) -> Vec<Site> {
    let dim = lo.len();
    let mut out = vec![Vec::with_capacity(dim)];
    for i in 0..dim {
        let mut next = Vec::with_capacity(out.len() * (hi[i] - lo[i] + 1).max(0) as usize);
        for prefix in &out {
            for c in lo[i]..=hi[i] {
                let mut s = prefix.clone();
                s.push(c);
                next.push(s);
            }
        }
        out = next;
    }
    out
}

fn check_count(per_axis: u64, dim: usize) -> Result<()> {
    let mut n: u64 = 1;
    for _ in 0..dim {
        n = n.saturating_mul(per_axis);
    }
    if n as usize > MAX_SITES {
        return Err(Error::Geometry(format!("{n} sites exceed the supported range")));
    }
    Ok(())
}

impl Domain {
    /// Λ_L in dimension d.
    pub fn cube(side: u64, dim: usize) -> Result<Self> {
        if side < 1 || dim < 1 {
            return Err(Error::Geometry(format!("need L ≥ 1 and d ≥ 1, got L={side}, d={dim}")));
        }
        let h = half_width(side);
        check_count(2 * h as u64 + 1, dim)?;
        let sites = product_box(&vec![-h; dim], &vec![h; dim]);
        Ok(Self::build(dim, sites, DomainKind::Cube { side }))
    }

    /// □_m = Λ_{3^m}.
    pub fn triadic(m: u32, dim: usize) -> Result<Self> {
        let side = 3u64
            .checked_pow(m)
            .ok_or_else(|| Error::Geometry(format!("3^{m} overflows")))?;
        let mut d = Self::cube(side, dim)?;
        d.kind = DomainKind::Triadic { m };
        Ok(d)
    }

    /// The discrete torus T^d_n, sites {0,…,n−1}^d.
    pub fn torus(n: u64, dim: usize) -> Result<Self> {
        if n < 1 || dim < 1 {
            return Err(Error::Geometry("torus needs n ≥ 1 and d ≥ 1".into()));
        }
        check_count(n, dim)?;
        let sites = product_box(&vec![0; dim], &vec![n as i32 - 1; dim]);
        Ok(Self::build(dim, sites, DomainKind::Torus { n }))
    }

    /// An arbitrary site set; duplicates are rejected.
    pub fn from_sites(dim: usize, sites: Vec<Site>) -> Result<Self> {
        if sites.iter().any(|s| s.len() != dim) {
            return Err(Error::Geometry("site of wrong dimension".into()));
        }
        let set: BTreeSet<Site> = sites.iter().cloned().collect();
        if set.len() != sites.len() {
            return Err(Error::Geometry("duplicate sites".into()));
        }
        Ok(Self::build(dim, set.into_iter().collect(), DomainKind::Custom))
    }

    fn build(dim: usize, mut sites: Vec<Site>, kind: DomainKind) -> Self {
        sites.sort();
        let index = sites.iter().enumerate().map(|(i, s)| (s.clone(), i)).collect();
        Domain { dim, sites, kind, index }
    }

    /// z + Λ.
    pub fn translate(&self, z: &Site) -> Domain {
        let sites = self.sites.iter().map(|s| add(s, z)).collect();
        let kind = match &self.kind {
            DomainKind::Cube { side } => DomainKind::Translate { shift: z.clone(), side: *side },
            DomainKind::Triadic { m } => {
                DomainKind::Translate { shift: z.clone(), side: 3u64.pow(*m) }
            }
            DomainKind::Translate { shift: s, side } => {
                DomainKind::Translate { shift: add(s, z), side: *side }
            }
            _ => DomainKind::Custom,
        };
        Self::build(self.dim, sites, kind)
    }

    pub fn dim(&self) -> usize {
        self.dim
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
    pub fn kind(&self) -> &DomainKind {
        &self.kind
    }
    pub fn contains(&self, x: &Site) -> bool {
        self.index.contains_key(x)
    }
    pub fn position(&self, x: &Site) -> Option<usize> {
        self.index.get(x).copied()
    }

    /// Side length of the cube this domain is a (translated) copy of.
    pub fn side(&self) -> Option<u64> {
        match &self.kind {
            DomainKind::Cube { side } | DomainKind::Translate { side, .. } => Some(*side),
            DomainKind::Triadic { m } => Some(3u64.pow(*m)),
            DomainKind::Torus { n } => Some(*n),
            DomainKind::Custom => None,
        }
    }

    fn is_torus(&self) -> Option<i32> {
        match self.kind {
            DomainKind::Torus { n } => Some(n as i32),
            _ => None,
        }
    }

    /// Maximal Euclidean distance between two sites.
    pub fn diameter(&self) -> f64 {
        if self.sites.is_empty() {
            return 0.0;
        }
        let mut best = 0i64;
        for (a, x) in self.sites.iter().enumerate() {
            for y in &self.sites[a + 1..] {
                let d2: i64 = x.iter().zip(y).map(|(p, q)| ((p - q) as i64).pow(2)).sum();
                best = best.max(d2);
            }
        }
        (best as f64).sqrt()
    }

    /// Derived boundary, interior, enlargement and bond sets.
    pub fn structure(&self) -> Structure {
        let dim = self.dim;
        let torus = self.is_torus();
        let wrap = |s: Site| -> Site {
            match torus {
                Some(n) => s.into_iter().map(|c| c.rem_euclid(n)).collect(),
                None => s,
            }
        };
        let mut interior = Vec::new();
        let mut boundary = Vec::new();
        for x in &self.sites {
            let on_boundary = (0..dim).any(|i| {
                [-1, 1].iter().any(|&k| !self.contains(&wrap(shift(x, i, k))))
            });
            if on_boundary {
                boundary.push(x.clone());
            } else {
                interior.push(x.clone());
            }
        }
        let mut plus: BTreeSet<Site> = self.sites.iter().cloned().collect();
        let mut interior_bonds = Vec::new();
        let mut enlarged_bonds = Vec::new();
        let mut cut = BTreeSet::new();
        for x in &self.sites {
            for i in 0..dim {
                let y = wrap(shift(x, i, 1));
                plus.insert(y.clone());
                let b = Bond::new(x.clone(), i);
                enlarged_bonds.push(b.clone());
                if self.contains(&y) {
                    interior_bonds.push(b);
                }
                for k in [-1, 1] {
                    let z = shift(x, i, k);
                    if !self.contains(&wrap(z.clone())) {
                        cut.insert(Bond::between(x, &z).expect("neighbours"));
                    }
                }
            }
        }
        interior_bonds.sort();
        enlarged_bonds.sort();
        Structure {
            interior,
            boundary,
            enlarged: plus.into_iter().collect(),
            interior_bonds: BondSet { flavor: BondFlavor::Interior, bonds: interior_bonds },
            enlarged_bonds: BondSet { flavor: BondFlavor::Enlarged, bonds: enlarged_bonds },
            cut_bonds: BondSet { flavor: BondFlavor::Cut, bonds: cut.into_iter().collect() },
        }
    }

    /// N_r(Λ⁺) = {x : dist(x, Λ⁺) ≤ r} in the sup-distance.
    pub fn neighborhood(&self, r: usize) -> Vec<Site> {
        let plus = self.structure().enlarged;
        let r = r as i32;
        let offsets = product_box(&vec![-r; self.dim], &vec![r; self.dim]);
        let mut out = BTreeSet::new();
        for x in &plus {
            for o in &offsets {
                out.insert(add(x, o));
            }
        }
        out.into_iter().collect()
    }
}

/// Which of the three bond families a [`BondSet`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BondFlavor {
    /// Λ*: both endpoints in Λ.
    Interior,
    /// overline{Λ*}: {x, x+e_i} for x ∈ Λ.
    Enlarged,
    /// (Λ, Λᶜ)*: exactly one endpoint in Λ.
    Cut,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BondSet {
    pub flavor: BondFlavor,
    pub bonds: Vec<Bond>,
}

impl BondSet {
    pub fn len(&self) -> usize {
        self.bonds.len()
    }
    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }
}

/// Sets derived from a domain Λ.
#[derive(Clone, Debug)]
pub struct Structure {
    /// Λ⁻ = Λ ∖ ∂Λ.
    pub interior: Vec<Site>,
    /// ∂Λ: sites with a neighbour outside Λ.
    pub boundary: Vec<Site>,
    /// Λ⁺ = Λ ∪ ⋃_i (Λ + e_i).
    pub enlarged: Vec<Site>,
    pub interior_bonds: BondSet,
    pub enlarged_bonds: BondSet,
    pub cut_bonds: BondSet,
}

/// Centers Z_{m,n} = 3^n Z^d ∩ □_m of the triadic tiling of □_m by translates of □_n.
pub fn triadic_partition(m: u32, n: u32, dim: usize) -> Result<Vec<Site>> {
    if n >= m {
        return Err(Error::Geometry(format!("triadic partition needs n < m, got n={n}, m={m}")));
    }
    let h = half_width(3u64.pow(m));
    let step = 3i32.pow(n);
    let per_axis: Vec<i32> = (-h..=h).filter(|c| c % step == 0).collect();
    check_count(per_axis.len() as u64, dim)?;
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out
            .into_iter()
            .flat_map(|p: Site| {
                per_axis.iter().map(move |&c| {
                    let mut s = p.clone();
                    s.push(c);
                    s
                })
            })
            .collect();
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cube_open_interval() {
        assert_eq!(Domain::cube(3, 1).unwrap().sites(), &[vec![-1], vec![0], vec![1]]);
        assert_eq!(Domain::cube(3, 2).unwrap().len(), 9);
        assert_eq!(Domain::cube(4, 1).unwrap().sites(), &[vec![-1], vec![0], vec![1]]);
        assert_eq!(Domain::cube(2, 1).unwrap().sites(), &[vec![0]]);
        assert!(Domain::cube(0, 1).is_err());
        assert!(Domain::cube(3, 0).is_err());
    }

    #[test]
    fn structure_of_small_cubes() {
        let s = Domain::cube(3, 1).unwrap().structure();
        assert_eq!(s.interior, vec![vec![0]]);
        assert_eq!(s.boundary, vec![vec![-1], vec![1]]);
        assert_eq!(s.enlarged, vec![vec![-1], vec![0], vec![1], vec![2]]);
        assert_eq!(s.enlarged_bonds.len(), 3);
        assert_eq!(s.interior_bonds.len(), 2);
        assert_eq!(s.cut_bonds.len(), 2);
        assert_eq!(Domain::cube(3, 2).unwrap().structure().enlarged_bonds.len(), 18);
        let one = Domain::cube(1, 1).unwrap().structure();
        assert!(one.interior.is_empty());
        assert_eq!(one.boundary, vec![vec![0]]);
    }

    #[test]
    fn neighborhood_of_lambda3() {
        let n = Domain::cube(3, 1).unwrap().neighborhood(2);
        assert_eq!(n.first().unwrap(), &vec![-3]);
        assert_eq!(n.last().unwrap(), &vec![4]);
        assert_eq!(n.len(), 8);
    }

    #[test]
    fn triadic_centers() {
        assert_eq!(triadic_partition(1, 0, 1).unwrap(), vec![vec![-1], vec![0], vec![1]]);
        assert_eq!(triadic_partition(2, 1, 1).unwrap(), vec![vec![-3], vec![0], vec![3]]);
        assert_eq!(triadic_partition(2, 0, 2).unwrap().len(), 81);
        assert!(triadic_partition(1, 1, 1).is_err());
    }

    #[test]
    fn bond_between_is_orientation_free() {
        let b = Bond::between(&vec![2, 0], &vec![1, 0]).unwrap();
        assert_eq!(b, Bond::new(vec![1, 0], 0));
        assert_eq!(b.tip(), vec![2, 0]);
        assert!(Bond::between(&vec![0, 0], &vec![1, 1]).is_none());
    }

    #[test]
    fn torus_has_no_boundary() {
        let s = Domain::torus(4, 1).unwrap().structure();
        assert!(s.boundary.is_empty());
        assert_eq!(s.interior_bonds.len(), 4);
    }

    #[test]
    fn diameter_of_square() {
        let d = Domain::cube(3, 2).unwrap().diameter();
        assert!((d - 8f64.sqrt()).abs() < 1e-12);
    }
}
