//! Scalar search routines: golden-section minimization and bisection.

use crate::error::{Error, Result};
use crate::math::{exp, log};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Result of a one-dimensional minimization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub argmin: f64,
    pub value: f64,
}

/// Golden-section search for a unimodal `f` on `[lo, hi]`, `lo > 0`, carried
/// out in `log x` so that `rel_tol` bounds the relative bracket width.
/// The end points are compared against the interior optimum, so monotone
/// objectives return the correct boundary.
pub fn golden_section_log<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, rel_tol: f64) -> Result<Minimum> {
    if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
        return Err(Error::EmptyRange { lo, hi });
    }
    let (mut a, mut b) = (log(lo), log(hi));
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(exp(c));
    let mut fd = f(exp(d));
    let mut iters = 0;
    while b - a > rel_tol && iters < 500 {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(exp(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(exp(d));
        }
        iters += 1;
    }
    let mut best = if fc <= fd { Minimum { argmin: exp(c), value: fc } } else { Minimum { argmin: exp(d), value: fd } };
    for x in [lo, hi] {
        let v = f(x);
        if v < best.value {
            best = Minimum { argmin: x, value: v };
        }
    }
    Ok(best)
}

/// Solves `g(x) = target` for nondecreasing `g` on `[lo, hi]` by bisection,
/// stopping once the bracket is within `rel_tol` of its upper end.
pub fn bisect_increasing<G: FnMut(f64) -> f64>(mut g: G, target: f64, mut lo: f64, mut hi: f64, rel_tol: f64) -> f64 {
    for _ in 0..2000 {
        if hi - lo <= rel_tol * hi.abs() {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
