//! Symmetric positive-definite linear solvers on banded storage.

use crate::error::{Error, Result};

/// Lower band of a symmetric matrix. Row `i` stores columns
/// `i - bw ..= i` contiguously.
///
/// Entries added through [`BandMatrix::add_product`] also keep their
/// rounding error in `lo`, so `data + lo` is the assembled sum to roughly
/// twice the working precision. Factorization only sees `data`; iterative
/// refinement against the full sum recovers the lost digits.
#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    bw: usize,
    data: Vec<f64>,
    lo: Vec<f64>,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

/// Veltkamp split: `a = hi + lo` with each half holding at most 26 bits.
#[inline]
fn split(a: f64) -> (f64, f64) {
    let c = 134_217_729.0 * a; // 2^27 + 1
    let hi = c - (c - a);
    (hi, a - hi)
}

/// Dekker's exact product `a * b = p + e`, without relying on a hardware
/// fused multiply-add.
#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let (ah, al) = split(a);
    let (bh, bl) = split(b);
    let e = ((ah * bh - p) + ah * bl + al * bh) + al * bl;
    (p, e)
}

impl BandMatrix {
    pub fn zeros(n: usize, bw: usize) -> Self {
        Self {
            n,
            bw,
            data: vec![0.0; n * (bw + 1)],
            lo: vec![0.0; n * (bw + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.bw
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(j <= i && i - j <= self.bw);
        i * (self.bw + 1) + j + self.bw - i
    }

    /// Adds `v` at `(i, j)`; only the lower triangle (`j <= i`) is stored.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self.idx(i, j);
        self.data[k] += v;
    }

    /// Adds `a * b` at `(i, j)`, tracking the rounding error.
    #[inline]
    pub fn add_product(&mut self, i: usize, j: usize, a: f64, b: f64) {
        let k = self.idx(i, j);
        let (p, pe) = two_prod(a, b);
        let (s, se) = two_sum(self.data[k], p);
        self.data[k] = s;
        self.lo[k] += se + pe;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (i, j) = if j > i { (j, i) } else { (i, j) };
        if i - j > self.bw {
            0.0
        } else {
            self.data[self.idx(i, j)]
        }
    }

    #[inline]
    fn row(&self, i: usize, from: usize, to: usize) -> &[f64] {
        &self.data[self.idx(i, from)..self.idx(i, from) + (to - from)]
    }

    /// Largest absolute row sum of the full symmetric matrix.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            for j in j0..i {
                let a = self.data[self.idx(i, j)].abs();
                rows[i] += a;
                rows[j] += a;
            }
            rows[i] += self.data[self.idx(i, i)].abs();
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.data[self.idx(i, i)]).collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let row = self.row(i, j0, i);
            let mut s = self.data[self.idx(i, i)] * x[i];
            for (k, &a) in row.iter().enumerate() {
                s += a * x[j0 + k];
                y[j0 + k] += a * x[i];
            }
            y[i] += s;
        }
        y
    }

    /// `b - A x` accumulated in double-double arithmetic, so the residual
    /// stays meaningful when `A` is badly conditioned.
    pub fn residual_compensated(&self, x: &[f64], b: &[f64]) -> Vec<f64> {
        let mut hi = b.to_vec();
        let mut lo = vec![0.0; self.n];
        let acc = |i: usize, a: f64, v: f64, hi: &mut [f64], lo: &mut [f64]| {
            let (p, pe) = two_prod(-a, v);
            let (s, se) = two_sum(hi[i], p);
            hi[i] = s;
            lo[i] += se + pe;
        };
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.bw);
            let d = self.idx(i, i);
            acc(i, self.data[d], x[i], &mut hi, &mut lo);
            lo[i] -= self.lo[d] * x[i];
            for j in j0..i {
                let k = self.idx(i, j);
                let a = self.data[k];
                if a != 0.0 {
                    acc(i, a, x[j], &mut hi, &mut lo);
                    acc(j, a, x[i], &mut hi, &mut lo);
                    let l = self.lo[k];
                    lo[i] -= l * x[j];
                    lo[j] -= l * x[i];
                }
            }
        }
        hi.iter().zip(&lo).map(|(h, l)| h + l).collect()
    }
}

/// Dot product over independent lanes so the loop vectorizes.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let tail: f64 = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..8 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[4]) + (acc[1] + acc[5]) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// In-place banded Cholesky factor `A = L L^T`.
#[derive(Debug, Clone)]
pub struct BandCholesky {
    l: BandMatrix,
}

impl BandCholesky {
    /// Fails with the index of the first non-positive pivot.
    pub fn factor(a: &BandMatrix) -> std::result::Result<Self, usize> {
        let mut l = a.clone();
        let bw = l.bw;
        let w = bw + 1;
        for i in 0..l.n {
            let j0 = i.saturating_sub(bw);
            for j in j0..=i {
                let k0 = j0.max(j.saturating_sub(bw));
                let ri = i * w + k0 + bw - i;
                let rj = j * w + k0 + bw - j;
                let len = j - k0;
                let s = dot(&l.data[ri..ri + len], &l.data[rj..rj + len]);
                let at = i * w + j + bw - i;
                let v = l.data[at] - s;
                if j < i {
                    l.data[at] = v / l.data[j * w + bw];
                } else {
                    if !(v > 0.0) {
                        return Err(i);
                    }
                    l.data[at] = v.sqrt();
                }
            }
        }
        Ok(Self { l })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let l = &self.l;
        let (n, bw) = (l.n, l.bw);
        let w = bw + 1;
        let mut y = b.to_vec();
        for i in 0..n {
            let j0 = i.saturating_sub(bw);
            let base = i * w + j0 + bw - i;
            let s = y[i] - dot(&l.data[base..base + i - j0], &y[j0..i]);
            y[i] = s / l.data[i * w + bw];
        }
        for i in (0..n).rev() {
            let xi = y[i] / l.data[i * w + bw];
            y[i] = xi;
            let j0 = i.saturating_sub(bw);
            let base = i * w + j0 + bw - i;
            for k in j0..i {
                y[k] -= l.data[base + k - j0] * xi;
            }
        }
        y
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn relative_residual(a: &BandMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    norm(&r) / norm(b).max(f64::MIN_POSITIVE)
}

fn norm_inf(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Normwise backward error `|r| / (|A| |x| + |b|)` in the infinity norm:
/// the smallest relative perturbation of `A` and `b` for which `x` is exact.
/// Unlike `|r| / |b|` it stays at rounding level when `x` is huge, as on
/// void-dominated designs.
pub fn backward_error(a: &BandMatrix, x: &[f64], b: &[f64]) -> f64 {
    let r = a.residual_compensated(x, b);
    let den = a.norm_inf() * norm_inf(x) + norm_inf(b);
    if den == 0.0 {
        0.0
    } else {
        norm_inf(&r) / den
    }
}

/// Direct solve with up to three steps of iterative refinement against a
/// double-double residual. Returns the solution and its backward error.
pub fn solve_direct(a: &BandMatrix, factor: &BandCholesky, b: &[f64]) -> (Vec<f64>, f64) {
    let mut x = factor.solve(b);
    for _ in 0..3 {
        let r = a.residual_compensated(&x, b);
        let dx = factor.solve(&r);
        for (xi, d) in x.iter_mut().zip(&dx) {
            *xi += d;
        }
        if norm_inf(&dx) <= f64::EPSILON * norm_inf(&x) {
            break;
        }
    }
    let res = backward_error(a, &x, b);
    (x, res)
}

/// Jacobi-preconditioned conjugate gradients, stopped on `|r| / |b| < tol`.
/// The returned residual is the backward error of the final iterate.
pub fn solve_pcg(a: &BandMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<(Vec<f64>, f64)> {
    let n = a.dim();
    let inv_diag: Vec<f64> = a.diagonal().iter().map(|d| 1.0 / d).collect();
    let bn = norm(b).max(f64::MIN_POSITIVE);
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, d)| r * d).collect();
    let mut p = z.clone();
    let mut rz: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
    let mut history = Vec::new();
    for it in 0..max_iter {
        let res = norm(&r) / bn;
        history.push(res);
        if res < tol {
            let r = backward_error(a, &x, b);
            return Ok((x, r));
        }
        let ap = a.matvec(&p);
        let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
        if !(pap > 0.0) {
            return Err(Error::SolverDiverged {
                iterations: it,
                residual: res,
                history,
            });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new: f64 = r.iter().zip(&z).map(|(a, b)| a * b).sum();
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let res = norm(&r) / bn;
    Err(Error::SolverDiverged {
        iterations: max_iter,
        residual: res,
        history,
    })
}
