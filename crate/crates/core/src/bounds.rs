//! Risk bounds for leaf-only-averaging estimators.
//!
//! * [`decompose_risk`]: bias / variance / empty-cell terms of the expected
//!   risk on a fixed partition, in the simplified and the tight form.
//! * Rate-distortion lower bounds: [`linear_lower_bound_cube`],
//!   [`boolean_lower_bound_general`], [`boolean_lower_bound_sparse`], built on
//!   [`univariate_rate_bound`], [`boolean_rate`] and [`minimize_rd_objective`].
//! * Covering lower bounds: [`additive_lower_bound_general`] (through
//!   [`g_beta`] / [`g_beta_inverse`]) and [`additive_lower_bound_sparse`].
//! * The matching tessellation upper bound [`sparse_additive_upper_bound`].
//!
//! Entropies and rates are in bits.

use core::fmt;

use crate::error::{invalid, Error, Result};
use crate::geometry::{cell_measure, moments_unchecked, Partition};
use crate::math::{binary_entropy, exp, log, log2, pow, sqrt, survival_pow, E, PI};
use crate::models::AdditiveModel;
use crate::optimize::{bisect_increasing, golden_section_log, Minimum};

/// Relative bracket width used by every scalar minimization here.
pub const MINIMIZE_RTOL: f64 = 1e-9;
/// Lower end of every `D` search range, relative to the largest useful distortion.
pub const D_FLOOR: f64 = 1e-14;
const INVERSE_RTOL: f64 = 1e-14;

/// Bias, variance and empty-cell terms of the expected risk on a partition.
#[derive(Debug, Clone, PartialEq)]
pub struct DecompositionReport {
    /// `sum_C Var{f|C} nu{C}`.
    pub bias_term: f64,
    /// `|p| sigma^2 / (2n)`.
    pub variance_term_lower: f64,
    /// `6 |p| sigma^2 / n`.
    pub variance_term_upper: f64,
    /// `E(p) = sum_C E{f|C}^2 (1 - nu{C})^n nu{C}`.
    pub boundary_error: f64,
    pub tight_e1: f64,
    /// `(1/n) sum_C (Var{f|C} + sigma^2) (1 - nu{C})^n`.
    pub tight_e2: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub tight_lower: f64,
    pub tight_upper: f64,
    pub cell_count: usize,
}

/// Bias-variance decomposition for a permissible partition.
pub fn decompose_risk(p: &Partition, model: &AdditiveModel, n: usize) -> Result<DecompositionReport> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    if let Some((index, measure)) = p.first_impermissible(model.distribution(), n) {
        return Err(Error::NotPermissible { index, measure, threshold: 1.0 / n as f64 });
    }
    decompose_risk_unchecked(p, model, n)
}

/// Same terms without the permissibility check. Only the tight forms are
/// guaranteed to bracket the risk when some cell has `nu{C} < 1/n`.
pub fn decompose_risk_unchecked(p: &Partition, model: &AdditiveModel, n: usize) -> Result<DecompositionReport> {
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    let dist = model.distribution();
    let sigma2 = model.noise_variance();
    let nf = n as f64;
    let (mut bias, mut var_sum, mut e1, mut e2) = (0.0, 0.0, 0.0, 0.0);
    for cell in p.cells() {
        let nu = cell_measure(dist, cell)?;
        if nu <= 0.0 {
            continue;
        }
        let m = moments_unchecked(model, cell);
        let empty = survival_pow(nu, n as u64);
        bias += m.variance * nu;
        var_sum += m.variance;
        e1 += m.mean * m.mean * empty * nu;
        e2 += (m.variance + sigma2) * empty / nf;
    }
    let k = p.len() as f64;
    let variance_term_lower = k * sigma2 / (2.0 * nf);
    let variance_term_upper = 6.0 * k * sigma2 / nf;
    Ok(DecompositionReport {
        bias_term: bias,
        variance_term_lower,
        variance_term_upper,
        boundary_error: e1,
        tight_e1: e1,
        tight_e2: e2,
        lower_bound: bias + variance_term_lower,
        upper_bound: 7.0 * bias + variance_term_upper + e1,
        tight_lower: bias + var_sum / nf + k * sigma2 / nf + e1 - e2,
        tight_upper: bias + 6.0 * var_sum / nf + variance_term_upper + e1,
        cell_count: p.len(),
    })
}

/// Identifies which closed form or optimization produced a [`BoundResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formula {
    AdditiveLowerGeneral,
    AdditiveLowerSparse,
    SparseAdditiveUpper,
    LinearLowerCube,
    BooleanLowerGeneral,
    BooleanLowerSparse,
}

impl Formula {
    pub const ALL: [Formula; 6] = [
        Formula::AdditiveLowerGeneral,
        Formula::AdditiveLowerSparse,
        Formula::SparseAdditiveUpper,
        Formula::LinearLowerCube,
        Formula::BooleanLowerGeneral,
        Formula::BooleanLowerSparse,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Formula::AdditiveLowerGeneral => "additive_lower_general",
            Formula::AdditiveLowerSparse => "additive_lower_sparse",
            Formula::SparseAdditiveUpper => "sparse_additive_upper",
            Formula::LinearLowerCube => "linear_lower_cube",
            Formula::BooleanLowerGeneral => "boolean_lower_general",
            Formula::BooleanLowerSparse => "boolean_lower_sparse",
        }
    }
}

impl fmt::Display for Formula {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

/// A bound value; `clamped` is set when the raw formula was negative and 0 is reported.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundResult {
    pub value: f64,
    pub optimizer_d: Option<f64>,
    pub alpha: Option<f64>,
    pub clamped: bool,
    pub formula: Formula,
}

impl BoundResult {
    fn closed(formula: Formula, raw: f64, optimizer_d: Option<f64>) -> Self {
        let clamped = raw < 0.0;
        Self { value: if clamped { 0.0 } else { raw }, optimizer_d, alpha: None, clamped, formula }
    }
}

fn check_common(sigma2: f64, n: usize) -> Result<()> {
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(invalid("sigma2", "must be finite and > 0"));
    }
    if n == 0 {
        return Err(invalid("n", "must be >= 1"));
    }
    Ok(())
}

fn check_nonnegative(name: &'static str, v: &[f64]) -> Result<()> {
    if v.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
        return Err(invalid(name, "entries must be finite and >= 0"));
    }
    Ok(())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(0.0, f64::max)
}

/// `g(alpha) = alpha^2 |{j: beta_j >= alpha}| + sum_{beta_j < alpha} beta_j^2` on `[0, max beta]`.
pub fn g_beta(beta: &[f64], alpha: f64) -> Result<f64> {
    check_nonnegative("beta", beta)?;
    let top = max_of(beta);
    if !(0.0..=top).contains(&alpha) {
        return Err(invalid("alpha", alloc::format!("{alpha} is outside [0, {top}]")));
    }
    Ok(g_unchecked(beta, alpha))
}

fn g_unchecked(beta: &[f64], alpha: f64) -> f64 {
    beta.iter().map(|&b| if b >= alpha { alpha * alpha } else { b * b }).sum()
}

/// Inverse of [`g_beta`]; `f64::INFINITY` when `t > ||beta||^2`.
pub fn g_beta_inverse(beta: &[f64], t: f64) -> Result<f64> {
    check_nonnegative("beta", beta)?;
    if !(t >= 0.0) {
        return Err(invalid("t", "must be >= 0"));
    }
    Ok(g_inverse_unchecked(beta, t))
}

fn g_inverse_unchecked(beta: &[f64], t: f64) -> f64 {
    let total: f64 = beta.iter().map(|b| b * b).sum();
    if t > total {
        return f64::INFINITY;
    }
    if t == 0.0 {
        return 0.0;
    }
    bisect_increasing(|a| g_unchecked(beta, a), t, 0.0, max_of(beta), INVERSE_RTOL)
}

/// `s muK (beta0^2 q_min / 12)^{s/(s+2)} (sigma^2 / (4n))^{2/(s+2)}`.
pub fn additive_lower_bound_sparse(
    s: usize,
    beta0: f64,
    q_min: f64,
    mu_k: f64,
    sigma2: f64,
    n: usize,
) -> Result<BoundResult> {
    check_common(sigma2, n)?;
    check_density(q_min, mu_k)?;
    if s == 0 {
        return Err(invalid("s", "must be >= 1"));
    }
    if !(beta0 >= 0.0 && beta0.is_finite()) {
        return Err(invalid("beta0", "must be finite and >= 0"));
    }
    let sf = s as f64;
    let value = sf
        * mu_k
        * pow(beta0 * beta0 * q_min / 12.0, sf / (sf + 2.0))
        * pow(sigma2 / (4.0 * n as f64), 2.0 / (sf + 2.0));
    Ok(BoundResult::closed(Formula::AdditiveLowerSparse, value, Some(value)))
}

fn check_density(q_min: f64, mu_k: f64) -> Result<()> {
    if !(q_min > 0.0 && q_min.is_finite()) {
        return Err(invalid("q_min", "must be finite and > 0"));
    }
    if !(mu_k > 0.0 && mu_k <= 1.0) {
        return Err(invalid("mu_k", "must lie in (0, 1]"));
    }
    Ok(())
}

/// `inf_D { D + (muK sigma^2 / 4n) prod_{beta_j >= alpha(D)} beta_j / alpha(D) }`
/// with `alpha(D) = g^{-1}(12 D / (q_min muK))`, by golden section on `log D`.
pub fn additive_lower_bound_general(
    beta: &[f64],
    q_min: f64,
    mu_k: f64,
    sigma2: f64,
    n: usize,
) -> Result<BoundResult> {
    check_common(sigma2, n)?;
    check_density(q_min, mu_k)?;
    check_nonnegative("beta", beta)?;
    let noise = mu_k * sigma2 / (4.0 * n as f64);
    let energy: f64 = beta.iter().map(|b| b * b).sum();
    if energy == 0.0 {
        return Ok(BoundResult {
            value: noise,
            optimizer_d: Some(0.0),
            alpha: None,
            clamped: false,
            formula: Formula::AdditiveLowerGeneral,
        });
    }
    let scale = 12.0 / (q_min * mu_k);
    let objective = |d: f64| d + noise * covering_count(beta, g_inverse_unchecked(beta, scale * d));
    let hi = energy / scale;
    let Minimum { argmin, value } = golden_section_log(objective, D_FLOOR * energy, hi, MINIMIZE_RTOL)?;
    Ok(BoundResult {
        value,
        optimizer_d: Some(argmin),
        alpha: Some(g_inverse_unchecked(beta, scale * argmin)),
        clamped: false,
        formula: Formula::AdditiveLowerGeneral,
    })
}

/// `prod_{beta_j >= alpha} beta_j / alpha` (empty product when `alpha` is infinite).
fn covering_count(beta: &[f64], alpha: f64) -> f64 {
    beta.iter().filter(|&&b| b >= alpha).map(|&b| b / alpha).product()
}

/// Largest box volume compatible with `Var_mu{f|C} <= d` for a linear model
/// with slopes `beta`, given the variance-to-sides constant
/// `Var >= sum beta_j^2 l_j^2 / side_constant`.
pub fn max_cell_volume(beta: &[f64], d: f64, side_constant: f64) -> Result<f64> {
    check_nonnegative("beta", beta)?;
    let alpha = g_inverse_unchecked(beta, side_constant * d);
    Ok(beta.iter().filter(|&&b| b >= alpha).map(|&b| alpha / b).product())
}

/// Tessellation upper bound together with the side length that achieves it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TessellationBound {
    pub bound: BoundResult,
    /// Target cell side along each support coordinate, in `(0, 1]`.
    pub side_target: f64,
    /// Approximation-error budget `D`.
    pub distortion: f64,
}

/// `(168 s q beta^2 + 6) (sigma^2 / n)^{2/(s+2)} + (s beta)^2 exp(-sigma^{2s/(s+2)} n^{2/(s+2)})`,
/// with `D = 24 s q beta^2 (sigma^2/n)^{2/(s+2)}` and side `sqrt(D / (6 s q beta^2)) ^ 1`.
pub fn sparse_additive_upper_bound(
    s: usize,
    beta_max: f64,
    q_sup: f64,
    sigma2: f64,
    n: usize,
) -> Result<TessellationBound> {
    check_common(sigma2, n)?;
    if s == 0 {
        return Err(invalid("s", "must be >= 1"));
    }
    if !(beta_max > 0.0 && beta_max.is_finite()) {
        return Err(invalid("beta_max", "must be finite and > 0"));
    }
    if !(q_sup > 0.0 && q_sup.is_finite()) {
        return Err(invalid("q_sup", "must be finite and > 0"));
    }
    let sf = s as f64;
    let nf = n as f64;
    let scale = sf * q_sup * beta_max * beta_max;
    let rate = pow(sigma2 / nf, 2.0 / (sf + 2.0));
    let distortion = 24.0 * scale * rate;
    let side_target = tessellation_side(distortion, s, beta_max, q_sup);
    let sup_f = sf * beta_max;
    let tail = sup_f * sup_f * exp(-pow(sigma2, sf / (sf + 2.0)) * pow(nf, 2.0 / (sf + 2.0)));
    let value = (168.0 * scale + 6.0) * rate + tail;
    Ok(TessellationBound {
        bound: BoundResult::closed(Formula::SparseAdditiveUpper, value, Some(distortion)),
        side_target,
        distortion,
    })
}

/// `sqrt(D / (6 s q beta_max^2))`, capped at 1.
pub fn tessellation_side(distortion: f64, s: usize, beta_max: f64, q_sup: f64) -> f64 {
    sqrt(distortion / (6.0 * s as f64 * q_sup * beta_max * beta_max)).min(1.0)
}

/// `s 2^{2 s h0/(s+2) - 2} (beta0^2 / (pi e))^{s/(s+2)} (sigma^2 / n)^{2/(s+2)}`.
pub fn linear_lower_bound_cube(s: usize, beta0: f64, h0: f64, sigma2: f64, n: usize) -> Result<BoundResult> {
    check_common(sigma2, n)?;
    if s == 0 {
        return Err(invalid("s", "must be >= 1"));
    }
    if !(beta0 >= 0.0 && beta0.is_finite()) {
        return Err(invalid("beta0", "must be finite and >= 0"));
    }
    let sf = s as f64;
    let w = sf / (sf + 2.0);
    let minimizer = sf
        * pow(2.0, 2.0 * w * h0 - 1.0)
        * pow(beta0 * beta0 / (PI * E), w)
        * pow(sigma2 / n as f64, 2.0 / (sf + 2.0));
    Ok(BoundResult::closed(Formula::LinearLowerCube, 0.5 * minimizer, Some(minimizer)))
}

/// Unclamped rate lower bound `s (h0 - 1/2 log2(2 pi e D / (s beta0^2)))` for a
/// linear model with `s` slopes of size at least `beta0` on the cube.
pub fn continuous_linear_rate(s: usize, beta0: f64, h0: f64, d: f64) -> f64 {
    let sf = s as f64;
    sf * (h0 - 0.5 * log2(2.0 * PI * E * d / (sf * beta0 * beta0)))
}

/// Marginal source for [`univariate_rate_bound`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnivariateSource {
    /// Continuous marginal with differential entropy `entropy` (bits).
    Continuous { entropy: f64 },
    /// `Bernoulli(p)` with `p in (0, 1/2]`.
    Bernoulli { p: f64 },
}

/// Lower bound on the univariate rate-distortion function at distortion `d`.
pub fn univariate_rate_bound(source: UnivariateSource, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(invalid("D", "must be > 0"));
    }
    match source {
        UnivariateSource::Continuous { entropy } => Ok((entropy - 0.5 * log2(2.0 * PI * E * d)).max(0.0)),
        UnivariateSource::Bernoulli { p } => {
            if !(p > 0.0 && p <= 0.5) {
                return Err(invalid("pi", "must lie in (0, 1/2]"));
            }
            if d >= 1.0 {
                return Err(invalid("D", "must be < 1 for a Bernoulli source"));
            }
            Ok((binary_entropy(p) - binary_entropy(d)).max(0.0))
        }
    }
}

fn check_boolean_args(beta: &[f64], probs: &[f64]) -> Result<()> {
    if beta.len() != probs.len() {
        return Err(Error::DimensionMismatch { expected: beta.len(), got: probs.len() });
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(invalid("beta", "entries must be finite"));
    }
    if probs.iter().any(|p| !(*p > 0.0 && *p <= 0.5)) {
        return Err(invalid("pi", "entries must lie in (0, 1/2]"));
    }
    Ok(())
}

fn logistic_tail(b2: f64, alpha: f64) -> f64 {
    1.0 / (1.0 + exp(b2 / alpha))
}

/// Upper end of the domain of `m`; infinite when a coordinate with
/// `beta_j != 0` has `pi_j = 1/2`.
pub fn m_domain_end(beta: &[f64], probs: &[f64]) -> f64 {
    beta.iter()
        .zip(probs)
        .filter(|(b, _)| **b != 0.0)
        .map(|(b, &p)| {
            let odds = log((1.0 - p) / p);
            if odds <= 0.0 {
                f64::INFINITY
            } else {
                b * b / odds
            }
        })
        .fold(0.0, f64::max)
}

fn m_unchecked(beta: &[f64], probs: &[f64], alpha: f64) -> f64 {
    beta.iter()
        .zip(probs)
        .map(|(&b, &p)| {
            let b2 = b * b;
            b2 * p.min(logistic_tail(b2, alpha))
        })
        .sum()
}

/// `m(alpha) = sum_j beta_j^2 min(pi_j, 1 / (1 + e^{beta_j^2 / alpha}))`.
pub fn m_beta_pi(beta: &[f64], probs: &[f64], alpha: f64) -> Result<f64> {
    check_boolean_args(beta, probs)?;
    let end = m_domain_end(beta, probs);
    if !(alpha > 0.0 && alpha < end) {
        return Err(invalid("alpha", alloc::format!("{alpha} is outside (0, {end})")));
    }
    Ok(m_unchecked(beta, probs, alpha))
}

/// Full-distortion level `sum_j beta_j^2 pi_j`.
pub fn boolean_max_distortion(beta: &[f64], probs: &[f64]) -> f64 {
    beta.iter().zip(probs).map(|(b, p)| b * b * p).sum()
}

/// Inverse of [`m_beta_pi`] for `d in (0, sum beta_j^2 pi_j)`.
pub fn m_inverse(beta: &[f64], probs: &[f64], d: f64) -> Result<f64> {
    check_boolean_args(beta, probs)?;
    let top = boolean_max_distortion(beta, probs);
    if !(d > 0.0 && d < top) {
        return Err(invalid("D", alloc::format!("{d} is outside (0, {top})")));
    }
    Ok(m_inverse_unchecked(beta, probs, d))
}

fn m_inverse_unchecked(beta: &[f64], probs: &[f64], d: f64) -> f64 {
    let end = m_domain_end(beta, probs);
    let mut hi = if end.is_finite() { end } else { 1.0 };
    while m_unchecked(beta, probs, hi) < d && hi < f64::MAX / 4.0 {
        hi *= 2.0;
    }
    bisect_increasing(|a| m_unchecked(beta, probs, a), d, 0.0, hi, INVERSE_RTOL)
}

/// Lower bound on the rate of a weighted Boolean product source at distortion `d` (bits).
pub fn boolean_rate(beta: &[f64], probs: &[f64], d: f64) -> Result<f64> {
    check_boolean_args(beta, probs)?;
    if !(d > 0.0) {
        return Err(invalid("D", "must be > 0"));
    }
    Ok(boolean_rate_unchecked(beta, probs, d))
}

fn boolean_rate_unchecked(beta: &[f64], probs: &[f64], d: f64) -> f64 {
    if d >= boolean_max_distortion(beta, probs) {
        return 0.0;
    }
    let alpha = m_inverse_unchecked(beta, probs, d);
    beta.iter()
        .zip(probs)
        .filter(|(b, p)| **b * **b >= alpha * log((1.0 - **p) / **p))
        .map(|(&b, &p)| binary_entropy(p) - binary_entropy(logistic_tail(b * b, alpha)))
        .sum()
}

/// `(1/2) inf_D { D + sigma^2 2^{R(D)} / n }` with `R` the Boolean rate bound.
pub fn boolean_lower_bound_general(beta: &[f64], probs: &[f64], sigma2: f64, n: usize) -> Result<BoundResult> {
    check_common(sigma2, n)?;
    check_boolean_args(beta, probs)?;
    let top = boolean_max_distortion(beta, probs);
    if top == 0.0 {
        return Ok(BoundResult {
            value: 0.5 * sigma2 / n as f64,
            optimizer_d: Some(0.0),
            alpha: None,
            clamped: false,
            formula: Formula::BooleanLowerGeneral,
        });
    }
    let min = minimize_rd_objective(|d| boolean_rate_unchecked(beta, probs, d), sigma2, n, D_FLOOR * top, top)?;
    let alpha = (min.argmin < top).then(|| m_inverse_unchecked(beta, probs, min.argmin));
    Ok(BoundResult {
        value: min.value,
        optimizer_d: Some(min.argmin),
        alpha,
        clamped: false,
        formula: Formula::BooleanLowerGeneral,
    })
}

/// `(s beta0^2 / 2) (1 - (2 e^s n beta0^2 / (2^{s H(pi)} sigma^2))^{1/(s-1)})`, clamped at 0.
pub fn boolean_lower_bound_sparse(s: usize, beta0: f64, pi: f64, sigma2: f64, n: usize) -> Result<BoundResult> {
    check_common(sigma2, n)?;
    if s == 1 {
        return Err(invalid("s", "the sparse Boolean bound needs s >= 2 (exponent 1/(s-1))"));
    }
    if s == 0 {
        return Err(invalid("s", "must be >= 2"));
    }
    if !(pi > 0.0 && pi <= 0.5) {
        return Err(invalid("pi", "must lie in (0, 1/2]"));
    }
    if !(beta0 >= 0.0 && beta0.is_finite()) {
        return Err(invalid("beta0", "must be finite and >= 0"));
    }
    let sf = s as f64;
    let ln2 = core::f64::consts::LN_2;
    let log_inner = ln2 + sf + log(n as f64) + 2.0 * log(beta0) - sf * binary_entropy(pi) * ln2 - log(sigma2);
    let inner = exp(log_inner / (sf - 1.0));
    let d = sf * beta0 * beta0 * (1.0 - inner);
    let mut result = BoundResult::closed(Formula::BooleanLowerSparse, 0.5 * d, Some(d));
    if result.clamped {
        result.optimizer_d = None;
    }
    Ok(result)
}

/// Minimizer of the rate-distortion objective.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdMinimum {
    pub argmin: f64,
    pub value: f64,
}

/// Minimizes `(1/2)(D + sigma^2 2^{R(D)} / n)` over `[lo, hi]` by golden
/// section on `log D`, for a nonincreasing rate function `R`.
pub fn minimize_rd_objective<R: FnMut(f64) -> f64>(
    mut rate: R,
    sigma2: f64,
    n: usize,
    lo: f64,
    hi: f64,
) -> Result<RdMinimum> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::EmptyRange { lo, hi });
    }
    let scale = sigma2 / n as f64;
    let m = golden_section_log(|d| 0.5 * (d + scale * pow(2.0, rate(d))), lo, hi, MINIMIZE_RTOL)?;
    Ok(RdMinimum { argmin: m.argmin, value: m.value })
}
