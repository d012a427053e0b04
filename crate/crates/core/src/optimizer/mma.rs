//! Method of Moving Asymptotes (Svanberg), in the formulation
//!
//! ```text
//! min  f0(x) + sum_i (c_i y_i + d_i y_i^2 / 2)
//! s.t. f_i(x) - y_i <= 0,   xmin <= x <= xmax,   y >= 0
//! ```
//!
//! Each call builds the convex separable approximation around the current
//! point and solves it through its dual, a concave function of the `m`
//! constraint multipliers. The primal point is explicit per variable for a
//! given multiplier vector, so one dual iteration costs `O(n m)` however
//! badly the constraints are scaled.

use nalgebra::{DMatrix, DVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmaParams {
    /// Linear penalty on the elastic relaxation `y`.
    pub c: f64,
    /// Quadratic penalty on `y`.
    pub d: f64,
    /// Move limit as a fraction of each variable's range.
    pub move_limit: f64,
    pub asyinit: f64,
    pub asyincr: f64,
    pub asydecr: f64,
    pub albefa: f64,
    pub raa0: f64,
    /// Dual stationarity tolerance relative to the constraint scale.
    pub dual_tolerance: f64,
}

impl Default for MmaParams {
    fn default() -> Self {
        Self {
            c: 1000.0,
            d: 1.0,
            move_limit: 0.05,
            asyinit: 0.5,
            asyincr: 1.2,
            asydecr: 0.7,
            albefa: 0.1,
            raa0: 1e-5,
            dual_tolerance: 1e-12,
        }
    }
}

/// Persistent state between MMA iterations.
#[derive(Debug, Clone)]
pub struct Mma {
    pub params: MmaParams,
    xmin: Vec<f64>,
    xmax: Vec<f64>,
    xold1: Vec<f64>,
    xold2: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    lambda: Vec<f64>,
    iteration: usize,
}

/// Subproblem solution.
#[derive(Debug, Clone)]
pub struct MmaStep {
    pub x: Vec<f64>,
    /// Constraint multipliers of the subproblem.
    pub lambda: Vec<f64>,
    /// Elastic relaxation per constraint; nonzero only when the
    /// approximation cannot be satisfied inside the move box.
    pub y: Vec<f64>,
}

impl Mma {
    pub fn new(xmin: Vec<f64>, xmax: Vec<f64>, params: MmaParams) -> Self {
        let n = xmin.len();
        assert_eq!(n, xmax.len());
        Self {
            params,
            xold1: Vec::new(),
            xold2: Vec::new(),
            low: vec![0.0; n],
            upp: vec![0.0; n],
            lambda: Vec::new(),
            xmin,
            xmax,
            iteration: 0,
        }
    }

    /// One plain MMA update from `x` given objective and constraint
    /// gradients. `dfdx[i]` is the gradient of constraint `i`.
    pub fn update(
        &mut self,
        x: &[f64],
        df0dx: &[f64],
        fval: &[f64],
        dfdx: &[Vec<f64>],
    ) -> MmaStep {
        let approx = self.approximate(x, 0.0, df0dx, fval, dfdx, &[], false);
        let step = approx.solve();
        self.accept(x, &step);
        step
    }

    /// Moves the asymptotes and builds the convex separable approximation
    /// around `x`. With `conservative` the curvature terms start from the
    /// gradient scale and can be raised by [`Approximation::raise`];
    /// otherwise they are fixed at `raa0`.
    pub fn approximate(
        &mut self,
        x: &[f64],
        f0: f64,
        df0dx: &[f64],
        fval: &[f64],
        dfdx: &[Vec<f64>],
        curvature: &[Vec<f64>],
        conservative: bool,
    ) -> Approximation {
        let p = self.params;
        let n = x.len();
        let m = fval.len();
        self.iteration += 1;
        let k = self.iteration;
        if self.xold1.is_empty() {
            self.xold1 = x.to_vec();
            self.xold2 = x.to_vec();
        }
        for j in 0..n {
            let range = self.xmax[j] - self.xmin[j];
            if k <= 2 {
                self.low[j] = x[j] - p.asyinit * range;
                self.upp[j] = x[j] + p.asyinit * range;
            } else {
                let zzz = (x[j] - self.xold1[j]) * (self.xold1[j] - self.xold2[j]);
                let factor = if zzz > 0.0 {
                    p.asyincr
                } else if zzz < 0.0 {
                    p.asydecr
                } else {
                    1.0
                };
                let low = x[j] - factor * (self.xold1[j] - self.low[j]);
                let upp = x[j] + factor * (self.upp[j] - self.xold1[j]);
                self.low[j] = low.clamp(x[j] - 10.0 * range, x[j] - 0.01 * range);
                self.upp[j] = upp.clamp(x[j] + 0.01 * range, x[j] + 10.0 * range);
            }
        }
        let mut alfa = vec![0.0; n];
        let mut beta = vec![0.0; n];
        let mut xmami = vec![0.0; n];
        for j in 0..n {
            let range = self.xmax[j] - self.xmin[j];
            alfa[j] = (self.low[j] + p.albefa * (x[j] - self.low[j]))
                .max(x[j] - p.move_limit * range)
                .max(self.xmin[j]);
            beta[j] = (self.upp[j] - p.albefa * (self.upp[j] - x[j]))
                .min(x[j] + p.move_limit * range)
                .min(self.xmax[j]);
            xmami[j] = range.max(1e-5);
        }
        let mut grads = Vec::with_capacity(m + 1);
        grads.push(df0dx.to_vec());
        grads.extend(dfdx.iter().cloned());
        let rho = grads
            .iter()
            .map(|g| {
                if conservative {
                    let s: f64 = g.iter().zip(&xmami).map(|(d, r)| d.abs() * r).sum();
                    (0.1 * s / n.max(1) as f64).max(RHO_FLOOR)
                } else {
                    p.raa0
                }
            })
            .collect();
        let mut values = vec![f0];
        values.extend_from_slice(fval);
        let mut hint = vec![Vec::new(); m + 1];
        for (i, h) in curvature.iter().enumerate().take(m) {
            hint[i + 1] = h.clone();
        }
        // The objective always keeps its curvature term so the subproblem
        // stays strictly convex in every variable.
        let mask: Vec<Vec<bool>> = (0..=m)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        !conservative
                            || i == 0
                            || grads[i][j] != 0.0
                            || hint[i].get(j).is_some_and(|&h| h > 0.0)
                    })
                    .collect()
            })
            .collect();
        let start = if self.lambda.len() == m {
            self.lambda.clone()
        } else {
            vec![0.0; m]
        };
        let mut approx = Approximation {
            x: x.to_vec(),
            low: self.low.clone(),
            upp: self.upp.clone(),
            alfa,
            beta,
            xmami,
            grads,
            values,
            rho,
            hint,
            mask,
            pm: Vec::new(),
            qm: Vec::new(),
            r: Vec::new(),
            c: p.c,
            d: p.d,
            tolerance: p.dual_tolerance,
            start,
        };
        approx.build();
        approx
    }

    /// Records the accepted step: `x` is the point the approximation was
    /// built at.
    pub fn accept(&mut self, x: &[f64], step: &MmaStep) {
        self.lambda = step.lambda.clone();
        self.xold2 = std::mem::replace(&mut self.xold1, x.to_vec());
    }
}

/// Smallest curvature coefficient of a conservative approximation.
const RHO_FLOOR: f64 = 1e-6;

/// Convex separable approximation of the objective (index 0) and the
/// constraints around one point:
/// `f~_i(x) = r_i + sum_j (p_ij/(U_j - x_j) + q_ij/(x_j - L_j))`.
#[derive(Debug, Clone)]
pub struct Approximation {
    x: Vec<f64>,
    low: Vec<f64>,
    upp: Vec<f64>,
    alfa: Vec<f64>,
    beta: Vec<f64>,
    xmami: Vec<f64>,
    grads: Vec<Vec<f64>>,
    values: Vec<f64>,
    /// Curvature coefficient per function.
    rho: Vec<f64>,
    /// Known second-derivative bound per function and variable; empty when
    /// none is known.
    hint: Vec<Vec<f64>>,
    /// Variables each function depends on; `rho` only acts on these.
    mask: Vec<Vec<bool>>,
    pm: Vec<Vec<f64>>,
    qm: Vec<Vec<f64>>,
    r: Vec<f64>,
    c: f64,
    d: f64,
    tolerance: f64,
    start: Vec<f64>,
}

impl Approximation {
    fn build(&mut self) {
        let n = self.x.len();
        let k = self.grads.len();
        self.pm = vec![vec![0.0; n]; k];
        self.qm = vec![vec![0.0; n]; k];
        self.r = self.values.clone();
        for i in 0..k {
            for j in 0..n {
                let ux1 = self.upp[j] - self.x[j];
                let xl1 = self.x[j] - self.low[j];
                let g = self.grads[i][j];
                let (pp, qq) = (g.max(0.0), (-g).max(0.0));
                let mut pq = 0.001 * (pp + qq);
                if self.mask[i][j] {
                    pq += self.rho[i] / self.xmami[j];
                }
                if let Some(&h) = self.hint[i].get(j) {
                    // curvature `h` at the expansion point
                    pq += h * ux1 * xl1 / (2.0 * (ux1 + xl1));
                }
                self.pm[i][j] = (pp + pq) * ux1 * ux1;
                self.qm[i][j] = (qq + pq) * xl1 * xl1;
                self.r[i] -= self.pm[i][j] / ux1 + self.qm[i][j] / xl1;
            }
        }
    }

    /// Approximated function values at `x`, objective first.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        (0..self.grads.len())
            .map(|i| {
                self.r[i]
                    + (0..x.len())
                        .map(|j| self.pm[i][j] / (self.upp[j] - x[j]) + self.qm[i][j] / (x[j] - self.low[j]))
                        .sum::<f64>()
            })
            .collect()
    }

    pub fn solve(&self) -> MmaStep {
        let m = self.grads.len() - 1;
        let b: Vec<f64> = (1..=m).map(|i| -self.r[i]).collect();
        let sub = Subproblem {
            low: &self.low,
            upp: &self.upp,
            alfa: &self.alfa,
            beta: &self.beta,
            p0: &self.pm[0],
            q0: &self.qm[0],
            p: &self.pm[1..],
            q: &self.qm[1..],
            b: &b,
            c: self.c,
            d: self.d,
        };
        sub.solve(self.start.clone(), self.tolerance)
    }

    /// `(U - L) (x - x_k)^2 / ((U - x)(x - L) range)` summed over variables:
    /// the shape of the curvature term each unit of `rho` adds.
    fn spread(&self, i: usize, x: &[f64]) -> f64 {
        (0..x.len())
            .filter(|&j| self.mask[i][j])
            .map(|j| {
                let dx = x[j] - self.x[j];
                (self.upp[j] - self.low[j]) * dx * dx
                    / ((self.upp[j] - x[j]) * (x[j] - self.low[j]) * self.xmami[j])
            })
            .sum::<f64>()
            .max(1e-12)
    }

    /// Whether every approximation bounds the true value at `x` from above.
    pub fn is_conservative(&self, x: &[f64], f0: f64, fval: &[f64]) -> bool {
        let pred = self.predict(x);
        std::iter::once(f0)
            .chain(fval.iter().copied())
            .zip(&pred)
            .all(|(f, p)| p + CONSERVATIVE_SLACK >= f)
    }

    /// Raises the curvature of every function whose approximation fell below
    /// the true value at `x`, then rebuilds.
    pub fn raise(&mut self, x: &[f64], f0: f64, fval: &[f64]) {
        let pred = self.predict(x);
        for (i, f) in std::iter::once(f0).chain(fval.iter().copied()).enumerate() {
            if pred[i] + CONSERVATIVE_SLACK < f {
                let delta = (f - pred[i]) / self.spread(i, x);
                self.rho[i] = (1.1 * (self.rho[i] + delta)).min(10.0 * self.rho[i]);
            }
        }
        self.build();
    }
}

/// Absolute slack in the conservativeness test.
const CONSERVATIVE_SLACK: f64 = 5e-8;

/// `min sum_j (P_j/(U_j - x_j) + Q_j/(x_j - L_j)) + sum_i (c y_i + d y_i^2/2)`
/// with `P = p0 + lambda . p`, subject to `g_i(x) - y_i <= b_i`.
struct Subproblem<'a> {
    low: &'a [f64],
    upp: &'a [f64],
    alfa: &'a [f64],
    beta: &'a [f64],
    p0: &'a [f64],
    q0: &'a [f64],
    p: &'a [Vec<f64>],
    q: &'a [Vec<f64>],
    b: &'a [f64],
    c: f64,
    d: f64,
}

/// Dual function value and what it was evaluated from.
struct DualPoint {
    w: f64,
    grad: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Subproblem<'_> {
    fn coefficients(&self, lam: &[f64], j: usize) -> (f64, f64) {
        let mut pj = self.p0[j];
        let mut qj = self.q0[j];
        for (i, &l) in lam.iter().enumerate() {
            pj += l * self.p[i][j];
            qj += l * self.q[i][j];
        }
        (pj, qj)
    }

    fn dual(&self, lam: &[f64]) -> DualPoint {
        let n = self.p0.len();
        let m = lam.len();
        let mut x = Vec::with_capacity(n);
        let mut w = 0.0;
        let mut g = vec![0.0; m];
        for j in 0..n {
            let (pj, qj) = self.coefficients(lam, j);
            let (sp, sq) = (pj.sqrt(), qj.sqrt());
            let xj = ((sp * self.low[j] + sq * self.upp[j]) / (sp + sq)).clamp(self.alfa[j], self.beta[j]);
            let ux = 1.0 / (self.upp[j] - xj);
            let xl = 1.0 / (xj - self.low[j]);
            w += pj * ux + qj * xl;
            for i in 0..m {
                g[i] += self.p[i][j] * ux + self.q[i][j] * xl;
            }
            x.push(xj);
        }
        let y: Vec<f64> = lam.iter().map(|&l| ((l - self.c) / self.d).max(0.0)).collect();
        for i in 0..m {
            w -= lam[i] * self.b[i] + 0.5 * self.d * y[i] * y[i];
            g[i] -= self.b[i] + y[i];
        }
        DualPoint { w, grad: g, x, y }
    }

    /// Negated dual Hessian restricted to `free` multipliers.
    fn curvature(&self, lam: &[f64], pt: &DualPoint, free: &[usize]) -> DMatrix<f64> {
        let k = free.len();
        let mut h = DMatrix::<f64>::zeros(k, k);
        let mut gj = vec![0.0; k];
        for j in 0..pt.x.len() {
            let xj = pt.x[j];
            if xj <= self.alfa[j] || xj >= self.beta[j] {
                continue;
            }
            let (pj, qj) = self.coefficients(lam, j);
            let ux = 1.0 / (self.upp[j] - xj);
            let xl = 1.0 / (xj - self.low[j]);
            let second = 2.0 * (pj * ux * ux * ux + qj * xl * xl * xl);
            for (a, &i) in free.iter().enumerate() {
                gj[a] = self.p[i][j] * ux * ux - self.q[i][j] * xl * xl;
            }
            for a in 0..k {
                for c in 0..=a {
                    h[(a, c)] += gj[a] * gj[c] / second;
                }
            }
        }
        for a in 0..k {
            for c in 0..a {
                h[(c, a)] = h[(a, c)];
            }
            if lam[free[a]] > self.c {
                h[(a, a)] += 1.0 / self.d;
            }
        }
        h
    }

    /// Projected Newton ascent on the concave dual over `lambda >= 0`.
    fn solve(&self, start: Vec<f64>, tolerance: f64) -> MmaStep {
        let m = self.b.len();
        let mut lam = start;
        let mut pt = self.dual(&lam);
        let scale = 1.0 + self.b.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for _ in 0..200 {
            let pg = (0..m)
                .map(|i| if lam[i] > 0.0 { pt.grad[i].abs() } else { pt.grad[i].max(0.0) })
                .fold(0.0f64, f64::max);
            if pg <= tolerance * scale {
                break;
            }
            let free: Vec<usize> = (0..m).filter(|&i| lam[i] > 0.0 || pt.grad[i] > 0.0).collect();
            let h = self.curvature(&lam, &pt, &free);
            let rhs = DVector::from_iterator(free.len(), free.iter().map(|&i| pt.grad[i]));
            let reg = 1e-14 * (0..free.len()).map(|a| h[(a, a)]).fold(0.0f64, f64::max);
            let newton = (h.clone() + DMatrix::identity(free.len(), free.len()) * reg)
                .cholesky()
                .map(|c| c.solve(&rhs));
            let mut accepted = false;
            let newton_ok = newton.is_some();
            let directions = newton.into_iter().chain(std::iter::once(rhs.clone()));
            for (k, dir) in directions.enumerate() {
                let along = |t: f64| -> Vec<f64> {
                    let mut trial = lam.clone();
                    for (a, &i) in free.iter().enumerate() {
                        trial[i] = (lam[i] + t * dir[a]).max(0.0);
                    }
                    trial
                };
                let mut t = 1.0;
                for _ in 0..60 {
                    let trial = along(t);
                    let next = self.dual(&trial);
                    let rise: f64 = (0..m).map(|i| pt.grad[i] * (trial[i] - lam[i])).sum();
                    if next.w >= pt.w + 1e-4 * rise && trial != lam {
                        let (mut trial, mut next) = (trial, next);
                        // the dual is piecewise linear where every variable
                        // sits on its move limit, so gradient steps expand
                        if !(newton_ok && k == 0) && t == 1.0 {
                            for _ in 0..60 {
                                t *= 2.0;
                                let further = along(t);
                                let ahead = self.dual(&further);
                                if ahead.w <= next.w {
                                    break;
                                }
                                (trial, next) = (further, ahead);
                            }
                        }
                        lam = trial;
                        pt = next;
                        accepted = true;
                        break;
                    }
                    t *= 0.5;
                }
                if accepted {
                    break;
                }
            }
            if !accepted {
                break;
            }
        }
        MmaStep {
            x: pt.x,
            lambda: lam,
            y: pt.y,
        }
    }
}
