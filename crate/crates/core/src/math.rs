//! Float helpers backed by `libm` so the crate stays `no_std`.

pub use libm::{ceil, exp, expm1, fabs as abs, log, log1p, log2, pow, sqrt};

pub const PI: f64 = core::f64::consts::PI;
pub const E: f64 = core::f64::consts::E;

/// Binary entropy in bits. `H(0) = H(1) = 0`.
pub fn binary_entropy(p: f64) -> f64 {
    if p <= 0.0 || p >= 1.0 {
        return 0.0;
    }
    -(p * log2(p) + (1.0 - p) * log2(1.0 - p))
}

/// `(1 - p)^n` evaluated as `exp(n * log1p(-p))`, which keeps tiny-but-positive
/// values instead of rounding them to zero.
pub fn survival_pow(p: f64, n: u64) -> f64 {
    if p >= 1.0 {
        return if n == 0 { 1.0 } else { 0.0 };
    }
    exp(n as f64 * log1p(-p))
}

pub(crate) fn square(x: f64) -> f64 {
    x * x
}
