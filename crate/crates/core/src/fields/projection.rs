//! Smoothed Heaviside projections.
//!
//! `project(x) = (tanh(b*eta) + tanh(b*(x - eta))) / (tanh(b*eta) + tanh(b*(1 - eta)))`
//!
//! Note the "+" in the denominator. The variant with a minus sign in both
//! numerator and denominator divides by zero at `eta = 0.5` and is not a
//! step function; this form maps 0 to 0, 1 to 1 and `eta` to the midpoint of
//! the step for symmetric thresholds.

#[inline]
pub fn project(x: f64, threshold: f64, beta: f64) -> f64 {
    let a = (beta * threshold).tanh();
    (a + (beta * (x - threshold)).tanh()) / (a + (beta * (1.0 - threshold)).tanh())
}

/// d project / dx.
#[inline]
pub fn project_derivative(x: f64, threshold: f64, beta: f64) -> f64 {
    let a = (beta * threshold).tanh();
    let th = (beta * (x - threshold)).tanh();
    beta * (1.0 - th * th) / (a + (beta * (1.0 - threshold)).tanh())
}

/// Truncated time: close to 1 when `t` lies below the stage threshold
/// (deposited at or before the stage), close to 0 above it.
#[inline]
pub fn truncate_time(t: f64, threshold: f64, beta: f64) -> f64 {
    1.0 - project(t, threshold, beta)
}

#[inline]
pub fn truncate_time_derivative(t: f64, threshold: f64, beta: f64) -> f64 {
    -project_derivative(t, threshold, beta)
}
