//! Dense brute-force oracles for one-dimensional problems, written against
//! closed-form rates and independent of the library's sparse machinery.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Rate of bond (x, x+1) given an occupation oracle.
pub type Rate<'a> = &'a dyn Fn(i32, &dyn Fn(i32) -> bool) -> f64;

/// c_{x,x+1}(η) = 1 + a(η_{x−1} + η_{x+2}).
pub fn speed_change_rate(a: f64, x: i32, occ: &dyn Fn(i32) -> bool) -> f64 {
    1.0 + a * (occ(x - 1) as u8 + occ(x + 2) as u8) as f64
}

/// c_{x,x+1}(η) = 1 + a η_{x−1} η_{x+2}.
pub fn cooperative_rate(a: f64, x: i32, occ: &dyn Fn(i32) -> bool) -> f64 {
    1.0 + if occ(x - 1) && occ(x + 2) { a } else { 0.0 }
}

/// Minimize a convex quadratic ½xᵀHx − bᵀx via the pseudo-inverse; returns
/// (minimizer, minimum value).
pub fn minimize(h: &DMatrix<f64>, b: &DVector<f64>) -> (DVector<f64>, f64) {
    let svd = h.clone().svd(true, true);
    let x = svd.solve(b, 1e-11).unwrap();
    let v = 0.5 * x.dot(&(h * &x)) - b.dot(&x);
    (x, v)
}

/// ν(ρ, Λ_L, p) in d = 1 by dense minimization over all functions of the Λ⁻
/// bits, summing over every configuration of the full window [lo, hi].
pub fn nu_dense(rho: f64, side: i32, p: f64, rate: Rate) -> f64 {
    let h = (side - 1) / 2;
    let (lo, hi) = (-h - 1, h + 2); // enlarged bonds (x, x+1), x ∈ Λ, windows [x−1, x+2]
    let n = (hi - lo + 1) as usize;
    let minus: Vec<i32> = (-h + 1..=h - 1).collect();
    let nv = 1usize << minus.len();
    let bit = |c: u64, s: i32| c >> (s - lo) & 1 == 1;
    let key = |c: u64| minus.iter().enumerate().fold(0usize, |k, (j, &s)| k | (bit(c, s) as usize) << j);
    let mut hm = DMatrix::zeros(nv, nv);
    let mut bv = DVector::zeros(nv);
    let mut c0 = 0.0;
    for c in 0..(1u64 << n) {
        let k = c.count_ones() as i32;
        let w = rho.powi(k) * (1.0 - rho).powi(n as i32 - k);
        for x in -h..=h {
            let (ex, ey) = (bit(c, x), bit(c, x + 1));
            if ex == ey {
                continue;
            }
            let swapped = c ^ (1 << (x - lo)) ^ (1 << (x + 1 - lo));
            let rate = rate(x, &|s| bit(c, s));
            let g = p * (ex as i32 - ey as i32) as f64;
            let (s, t) = (key(c), key(swapped));
            // ½ w c (g + φ_t − φ_s)²
            let wc = w * rate;
            c0 += 0.5 * wc * g * g;
            if s != t {
                hm[(t, t)] += wc;
                hm[(s, s)] += wc;
                hm[(s, t)] -= wc;
                hm[(t, s)] -= wc;
                bv[t] -= wc * g;
                bv[s] += wc * g;
            }
        }
    }
    let (_, v) = minimize(&hm, &bv);
    let chi = rho * (1.0 - rho);
    (c0 + v) / (2.0 * chi * side as f64)
}

/// ν*(ρ, Λ_L, q) in d = 1 by dense maximization over all functions on the
/// window [−h−1, h+2], with no sector decomposition.
pub fn nu_star_dense(rho: f64, side: i32, q: f64, rate: Rate, local: bool) -> f64 {
    let h = (side - 1) / 2;
    let (lo, hi) = if local { (-h, h + 1) } else { (-h - 1, h + 2) };
    let n = (hi - lo + 1) as usize;
    let nv = 1usize << n;
    let bit = |c: u64, s: i32| s >= lo && s <= hi && c >> (s - lo) & 1 == 1;
    let mut hm = DMatrix::zeros(nv, nv);
    let mut bv = DVector::zeros(nv);
    for c in 0..(1u64 << n) {
        let k = c.count_ones() as i32;
        let w = rho.powi(k) * (1.0 - rho).powi(n as i32 - k);
        for x in -h..=h {
            let (ex, ey) = (bit(c, x), bit(c, x + 1));
            if ex == ey {
                continue;
            }
            let t = (c ^ (1 << (x - lo)) ^ (1 << (x + 1 - lo))) as usize;
            let s = c as usize;
            let rate = rate(x, &|y| bit(c, y));
            let g = q * (ex as i32 - ey as i32) as f64;
            // maximize w [g (u_t − u_s) − ½ c (u_t − u_s)²]
            hm[(t, t)] += w * rate;
            hm[(s, s)] += w * rate;
            hm[(s, t)] -= w * rate;
            hm[(t, s)] -= w * rate;
            bv[t] += w * g;
            bv[s] -= w * g;
        }
    }
    let (_, v) = minimize(&hm, &bv);
    let chi = rho * (1.0 - rho);
    -v / (2.0 * chi * side as f64)
}

/// Seeded function with values uniform in [−1, 1] on a space.

pub fn random_function(
    space: &std::sync::Arc<kawasaki_core::ensemble::StateSpace>,
    seed: u64,
) -> kawasaki_core::ensemble::ConfigFunction {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let values = (0..space.size()).map(|_| rng.random_range(-1.0..=1.0)).collect();
    kawasaki_core::ensemble::ConfigFunction::new(space.clone(), values).unwrap()
}

/// Sites 0..n on the line.

pub fn segment(lo: i32, hi: i32) -> Vec<kawasaki_core::lattice::Site> {
    (lo..=hi).map(|x| vec![x]).collect()
}
