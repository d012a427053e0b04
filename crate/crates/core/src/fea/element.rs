//! Bilinear four-node plane-stress element on a square cell, unit thickness,
//! 2x2 Gauss quadrature. Nodes are counter-clockwise from the bottom-left and
//! dofs are interleaved `(u_x, u_y)` per node.

use crate::material::Mat3;

pub type ElementMatrix = [f64; 64];

const NODE_SIGNS: [(f64, f64); 4] = [(-1.0, -1.0), (1.0, -1.0), (1.0, 1.0), (-1.0, 1.0)];

/// Strain-displacement matrix (3x8) at a point of the reference square.
pub fn strain_displacement(xi: f64, eta: f64, h: f64) -> [[f64; 8]; 3] {
    let mut b = [[0.0; 8]; 3];
    for (i, &(sx, sy)) in NODE_SIGNS.iter().enumerate() {
        let dx = sx * (1.0 + eta * sy) / 4.0 * 2.0 / h;
        let dy = sy * (1.0 + xi * sx) / 4.0 * 2.0 / h;
        b[0][2 * i] = dx;
        b[1][2 * i + 1] = dy;
        b[2][2 * i] = dy;
        b[2][2 * i + 1] = dx;
    }
    b
}

/// The element stiffness is linear in `D`, so it is stored as six basis
/// matrices, one per independent entry of a symmetric `D`.
#[derive(Debug, Clone)]
pub struct ElementBasis {
    mats: [ElementMatrix; 6],
}

const PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (0, 1), (0, 2), (1, 2)];

impl ElementBasis {
    pub fn new(h: f64) -> Self {
        let g = 1.0 / 3f64.sqrt();
        let det = h * h / 4.0;
        let mut mats = [[0.0; 64]; 6];
        for &xi in &[-g, g] {
            for &eta in &[-g, g] {
                let b = strain_displacement(xi, eta, h);
                for (m, &(a, c)) in PAIRS.iter().enumerate() {
                    for i in 0..8 {
                        for j in 0..8 {
                            let mut v = b[a][i] * b[c][j];
                            if a != c {
                                v += b[c][i] * b[a][j];
                            }
                            mats[m][i * 8 + j] += v * det;
                        }
                    }
                }
            }
        }
        Self { mats }
    }

    /// `k0(D)`; `D` is assumed symmetric.
    pub fn stiffness(&self, d: &Mat3) -> ElementMatrix {
        let mut k = [0.0; 64];
        for (m, &(a, c)) in PAIRS.iter().enumerate() {
            let w = d[a][c];
            if w == 0.0 {
                continue;
            }
            for (kv, bv) in k.iter_mut().zip(&self.mats[m]) {
                *kv += w * bv;
            }
        }
        k
    }

    /// Nonzero `(D_ac, basis matrix)` terms whose sum is `k0(D)`.
    pub fn terms<'a>(&'a self, d: &'a Mat3) -> impl Iterator<Item = (f64, &'a ElementMatrix)> + 'a {
        PAIRS
            .iter()
            .zip(&self.mats)
            .map(|(&(a, c), m)| (d[a][c], m))
            .filter(|(w, _)| *w != 0.0)
    }
}

/// `u^T k u` for an 8x8 element matrix.
#[inline]
/// Removes the rigid-body part (two translations and the rotation about the
/// centre, mutually orthogonal on the square) from element displacements.
/// Element matrices annihilate these modes only up to rounding, and the
/// rigid motion of a floating region can exceed its deformation by many
/// orders of magnitude, so quadratic forms are evaluated on what remains.
pub fn deformation(u: &[f64; 8]) -> [f64; 8] {
    let tx = (u[0] + u[2] + u[4] + u[6]) / 4.0;
    let ty = (u[1] + u[3] + u[5] + u[7]) / 4.0;
    let mut w = 0.0;
    for (i, &(sx, sy)) in NODE_SIGNS.iter().enumerate() {
        w += -sy * u[2 * i] + sx * u[2 * i + 1];
    }
    w /= 8.0;
    let mut d = [0.0; 8];
    for (i, &(sx, sy)) in NODE_SIGNS.iter().enumerate() {
        d[2 * i] = u[2 * i] - tx + w * sy;
        d[2 * i + 1] = u[2 * i + 1] - ty - w * sx;
    }
    d
}

/// `a^T k b` for an element matrix, insensitive to rigid motion in either
/// argument.
pub fn bilinear(k: &ElementMatrix, a: &[f64; 8], b: &[f64; 8]) -> f64 {
    let (a, b) = (deformation(a), deformation(b));
    let mut s = 0.0;
    for i in 0..8 {
        let mut row = 0.0;
        for j in 0..8 {
            row += k[i * 8 + j] * b[j];
        }
        s += a[i] * row;
    }
    s
}

/// Strain energy `u^T k u` (twice the stored energy).
pub fn energy(k: &ElementMatrix, u: &[f64; 8]) -> f64 {
    bilinear(k, u, u)
}

/// Direct quadrature of `B^T D B`, kept for cross-checking the basis.
pub fn element_stiffness(d: &Mat3, h: f64) -> ElementMatrix {
    let g = 1.0 / 3f64.sqrt();
    let det = h * h / 4.0;
    let mut k = [0.0; 64];
    for &xi in &[-g, g] {
        for &eta in &[-g, g] {
            let b = strain_displacement(xi, eta, h);
            for i in 0..8 {
                for j in 0..8 {
                    let mut s = 0.0;
                    for a in 0..3 {
                        for c in 0..3 {
                            s += b[a][i] * d[a][c] * b[c][j];
                        }
                    }
                    k[i * 8 + j] += s * det;
                }
            }
        }
    }
    k
}
