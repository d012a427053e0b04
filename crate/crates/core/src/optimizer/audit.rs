//! Central finite-difference check of every analytic gradient block.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::DesignVector;
use crate::model::{DesignGradient, Evaluation, Model};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub function: String,
    pub block: String,
    pub checked: usize,
    pub max_relative_error: f64,
    pub max_abs_gradient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub entries: Vec<AuditEntry>,
    pub seed: u64,
    pub step: f64,
}

impl AuditReport {
    pub fn worst(&self) -> f64 {
        self.entries
            .iter()
            .map(|e| e.max_relative_error)
            .fold(0.0, f64::max)
    }

    pub fn entry(&self, function: &str, block: &str) -> Option<&AuditEntry> {
        self.entries
            .iter()
            .find(|e| e.function == function && e.block == block)
    }
}

/// `|a - fd| / max(|a|, |fd|, floor)`, zero when both vanish.
pub fn relative_error(analytic: f64, fd: f64, floor: f64) -> f64 {
    let den = analytic.abs().max(fd.abs()).max(floor);
    if den == 0.0 {
        0.0
    } else {
        (analytic - fd).abs() / den
    }
}

/// Roundoff in `f(x +- h)` limits a central difference to about
/// `eps |f| / h` absolute; below `RESOLUTION_DIGITS` times that, an FD value
/// carries fewer than four correct digits and is judged in absolute terms.
const RESOLUTION_DIGITS: f64 = 1e4;

/// Denominator floor for one coordinate: the larger of a tiny fraction of
/// the block's largest entry and the rounding resolution of the difference.
pub fn error_floor(block_scale: f64, f_plus: f64, f_minus: f64, step: f64) -> f64 {
    let magnitude = f_plus.abs().max(f_minus.abs()) + 1.0;
    (1e-6 * block_scale).max(RESOLUTION_DIGITS * f64::EPSILON * magnitude / step)
}

fn values(e: &Evaluation) -> Vec<f64> {
    let mut v = vec![e.compliance];
    v.extend(e.constraints.iter().map(|c| c.normalized));
    v
}

/// A random design strictly inside the bounds, used as an audit point.
pub fn random_interior_design(model: &Model, seed: u64) -> DesignVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = &model.problem;
    let n = model.n_design();
    DesignVector {
        psi: (0..n).map(|_| rng.gen_range(0.1..0.9)).collect(),
        tau: (0..n)
            .map(|e| if p.domain.base_plate[e] { 0.0 } else { rng.gen_range(0.05..0.95) })
            .collect(),
        theta: (0..p.n_stages)
            .map(|_| p.theta0 + rng.gen_range(-1.2..1.2))
            .collect(),
    }
}

/// Compares analytic gradients of compliance and every active constraint
/// against central differences on `samples` random coordinates of `psi` and
/// of the free `tau`, and on every `theta_j`.
pub fn finite_difference_audit(
    model: &Model,
    x: &DesignVector,
    betas: (f64, f64),
    samples: usize,
    step: f64,
    seed: u64,
) -> Result<AuditReport> {
    let p = &model.problem;
    let (tlo, thi) = p.theta_bounds();
    let inside = |v: f64, lo: f64, hi: f64| v - step >= lo && v + step <= hi;
    let free: Vec<usize> = p.domain.free_elements().collect();
    if !x.psi.iter().all(|&v| inside(v, 0.0, 1.0))
        || !free.iter().all(|&e| inside(x.tau[e], 0.0, 1.0))
        || !x.theta.iter().all(|&t| inside(t, tlo, thi))
    {
        return Err(Error::config("audit point must lie inside the bounds by at least the step"));
    }
    let base = model.evaluate(x, betas, true)?;
    let mut names = vec!["compliance".to_string()];
    names.extend(base.constraints.iter().map(|c| c.name.clone()));
    let mut grads: Vec<&DesignGradient> = vec![base.compliance_gradient.as_ref().unwrap()];
    grads.extend(base.constraint_gradients.iter());

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_design();
    let psi_idx: Vec<usize> = sample(&mut rng, n, samples.min(n)).into_vec();
    let tau_idx: Vec<usize> = sample(&mut rng, free.len(), samples.min(free.len()))
        .into_iter()
        .map(|k| free[k])
        .collect();
    let theta_idx: Vec<usize> = (0..x.theta.len()).collect();

    let mut entries = Vec::new();
    for (block, idx) in [("psi", &psi_idx), ("tau", &tau_idx), ("theta", &theta_idx)] {
        let pick = |g: &DesignGradient| -> Vec<f64> {
            match block {
                "psi" => g.psi.clone(),
                "tau" => g.tau.clone(),
                _ => g.theta.clone(),
            }
        };
        let mut worst = vec![0.0f64; names.len()];
        for &i in idx.iter() {
            let shifted = |d: f64| -> Result<Vec<f64>> {
                let mut y = x.clone();
                match block {
                    "psi" => y.psi[i] += d,
                    "tau" => y.tau[i] += d,
                    _ => y.theta[i] += d,
                }
                Ok(values(&model.evaluate(&y, betas, false)?))
            };
            let plus = shifted(step)?;
            let minus = shifted(-step)?;
            for (f, g) in grads.iter().enumerate() {
                let fd = (plus[f] - minus[f]) / (2.0 * step);
                let block_grad = pick(g);
                let scale = block_grad.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let floor = error_floor(scale, plus[f], minus[f], step);
                worst[f] = worst[f].max(relative_error(block_grad[i], fd, floor));
            }
        }
        for (f, name) in names.iter().enumerate() {
            let scale = pick(grads[f]).iter().fold(0.0f64, |a, v| a.max(v.abs()));
            entries.push(AuditEntry {
                function: name.clone(),
                block: block.to_string(),
                checked: idx.len(),
                max_relative_error: worst[f],
                max_abs_gradient: scale,
            });
        }
    }
    Ok(AuditReport {
        entries,
        seed,
        step,
    })
}
