//! Sparse symmetric matrices and Jacobi-preconditioned conjugate gradient.
//!
//! The systems met here are weighted graph Laplacians: symmetric, positive
//! semidefinite, with constants on each connected component in the kernel.
//! CG converges on them whenever the right-hand side sums to zero on every
//! component, which is the case for all the variational problems.

use crate::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl Csr {
    /// Build from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n: usize, mut t: Vec<(u32, u32, f64)>) -> Csr {
        t.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(t.len());
        let mut vals: Vec<f64> = Vec::with_capacity(t.len());
        let mut last: Option<(u32, u32)> = None;
        for (r, c, v) in t {
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(c);
                vals.push(v);
                row_ptr[r as usize + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Csr { n, row_ptr, cols, vals }
    }

    pub fn mul(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * x[self.cols[k] as usize];
            }
            *yi = acc;
        }
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .find(|&k| self.cols[k] as usize == i)
                    .map_or(0.0, |k| self.vals[k])
            })
            .collect()
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }
}

/// Accumulates the quadratic form Σ_e ½W_e (x_t − x_s)² + h_e·(x_t − x_s) over
/// edges (s, t), for several linear terms h at once.
#[derive(Clone, Debug)]
pub struct LaplacianBuilder {
    n: usize,
    triplets: Vec<(u32, u32, f64)>,
    diag: Vec<f64>,
    rhs: Vec<Vec<f64>>,
}

impl LaplacianBuilder {
    pub fn new(n: usize, systems: usize) -> Self {
        LaplacianBuilder { n, triplets: Vec::new(), diag: vec![0.0; n], rhs: vec![vec![0.0; n]; systems] }
    }

    /// Add ½W(x_t − x_s)² + Σ_k h[k](x_t − x_s)_k-th system.
    #[inline]
    pub fn edge(&mut self, s: usize, t: usize, w: f64, h: &[f64]) {
        for (k, &hk) in h.iter().enumerate() {
            self.rhs[k][t] -= hk;
            self.rhs[k][s] += hk;
        }
        if s != t && w != 0.0 {
            self.diag[s] += w;
            self.diag[t] += w;
            self.triplets.push((s as u32, t as u32, -w));
            self.triplets.push((t as u32, s as u32, -w));
        }
    }

    pub fn finish(self) -> (Csr, Vec<Vec<f64>>) {
        let mut t = self.triplets;
        t.extend(self.diag.iter().enumerate().map(|(i, &d)| (i as u32, i as u32, d)));
        (Csr::from_triplets(self.n, t), self.rhs)
    }
}

#[derive(Clone, Debug)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// ‖b − Ax‖ relative to the reference scale of [`cg`].
    pub residual: f64,
}

/// Default relative residual tolerance.
pub const DEFAULT_TOL: f64 = 1e-12;

/// Solve Ax = b by Jacobi-preconditioned CG from x = 0, iteration cap 10·n.
///
/// The residual is measured against max(‖b‖, 10⁻³‖diag A‖), so right-hand
/// sides that vanish up to rounding are recognized as zero instead of being
/// chased to relative precision.
pub fn cg(a: &Csr, b: &[f64], tol: f64) -> Result<CgOutcome> {
    let n = a.n;
    let diag = a.diagonal();
    let bnorm = norm(b).max(1e-3 * norm(&diag));
    let mut x = vec![0.0; n];
    if norm(b) <= 1e-14 * bnorm || bnorm == 0.0 {
        return Ok(CgOutcome { x, iterations: 0, residual: 0.0 });
    }
    let inv_diag: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let cap = (10 * n).max(50);
    let mut it = 0;
    while it < cap {
        if norm(&r) <= tol * bnorm {
            break;
        }
        a.mul(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
        it += 1;
    }
    // True residual, not the recursively updated one.
    a.mul(&x, &mut ap);
    let res = norm(&ap.iter().zip(b).map(|(ax, b)| b - ax).collect::<Vec<_>>()) / bnorm;
    if res > tol.max(1e-9) {
        return Err(Error::Solver { residual: res, iterations: it });
    }
    Ok(CgOutcome { x, iterations: it, residual: res })
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_laplacian() {
        // Path 0-1-2 with unit weights; solve L x = (1, 0, -1).
        let mut bld = LaplacianBuilder::new(3, 1);
        bld.edge(0, 1, 1.0, &[0.0]);
        bld.edge(1, 2, 1.0, &[0.0]);
        let (a, _) = bld.finish();
        let out = cg(&a, &[1.0, 0.0, -1.0], 1e-14).unwrap();
        let x = out.x;
        assert!((x[0] - x[1] - 1.0).abs() < 1e-12);
        assert!((x[1] - x[2] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn linear_term_sign() {
        // minimize ½(x1 − x0)² + 2(x1 − x0): optimum x1 − x0 = −2.
        let mut bld = LaplacianBuilder::new(2, 1);
        bld.edge(0, 1, 1.0, &[2.0]);
        let (a, rhs) = bld.finish();
        let x = cg(&a, &rhs[0], 1e-14).unwrap().x;
        assert!((x[1] - x[0] + 2.0).abs() < 1e-12);
    }

    #[test]
    fn triplets_merge() {
        let a = Csr::from_triplets(2, vec![(0, 0, 1.0), (0, 0, 2.0), (1, 0, 1.0)]);
        assert_eq!(a.diagonal(), vec![3.0, 0.0]);
        assert_eq!(a.nnz(), 2);
    }
}
