//! Termination logic.

use serde::{Deserialize, Serialize};

use super::{IterationRecord, OptimizerSettings};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Continue,
    Converged,
    Stalled,
}

/// Converged when the sharpness schedule is finished, the objective has
/// moved by less than `tolerance` (relative) over the last `window`
/// iterations and every constraint is within `feasibility_tolerance`.
/// Stalled when the design stops moving while still infeasible.
pub fn convergence_check(history: &[IterationRecord], settings: &OptimizerSettings) -> Convergence {
    if history.len() < 2 {
        return Convergence::Continue;
    }
    let last = history.last().unwrap();
    let feasible = last.max_violation <= settings.feasibility_tolerance;
    if !feasible && last.max_change < settings.stall_change {
        return Convergence::Stalled;
    }
    let w = settings.window;
    if !feasible || !last.at_final_level || history.len() <= w {
        return Convergence::Continue;
    }
    let tail = &history[history.len() - 1 - w..];
    if !tail.iter().all(|r| r.at_final_level) {
        return Convergence::Continue;
    }
    let f = last.objective;
    let scale = f.abs().max(f64::MIN_POSITIVE);
    let spread = tail
        .iter()
        .map(|r| (r.objective - f).abs())
        .fold(0.0, f64::max);
    if spread / scale < settings.tolerance {
        Convergence::Converged
    } else {
        Convergence::Continue
    }
}
