//! Heuristic noise bounds, in message units (absolute slot error).
//!
//! Each bound is `BOUND_SIGMAS` standard deviations of the slot error,
//! derived from coefficient variances: a slot is a sum of `N` coefficients
//! times unit-modulus roots, so its real part has variance `N/2 * var`.

/// Standard deviations covered by a bound.
pub const BOUND_SIGMAS: f64 = 6.0;

/// Probability that a ternary coefficient is nonzero.
const TERNARY_DENSITY: f64 = 2.0 / 3.0;

fn slot_bound(degree: usize, coeff_var: f64, scale: f64) -> f64 {
    BOUND_SIGMAS * (degree as f64 / 2.0 * coeff_var).sqrt() / scale
}

/// Rounding a real coefficient vector to integers.
pub(crate) fn encoding(degree: usize, scale: f64) -> f64 {
    slot_bound(degree, 1.0 / 12.0, scale)
}

/// Public-key encryption: `v*e + e0 + e1*s` with ternary `v`, `s`.
pub(crate) fn fresh(degree: usize, sigma: f64, scale: f64) -> f64 {
    let n = degree as f64;
    let var = sigma * sigma * (2.0 * TERNARY_DENSITY * n + 1.0);
    slot_bound(degree, var, scale)
}

/// Division by the dropped prime with rounding: `round(c0) + round(c1) * s`.
pub(crate) fn rescale(degree: usize, new_scale: f64) -> f64 {
    let n = degree as f64;
    slot_bound(degree, (1.0 + TERNARY_DENSITY * n) / 12.0, new_scale)
}

/// Rounding a scalar to `round(scale * v)`, applied to a unit-magnitude message.
pub(crate) fn scalar_rounding(scale: f64) -> f64 {
    0.5 / scale
}
