//! Sparse additive generative models `y = sum_j phi_j(x_j) + eps`.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::geometry::Cell;
use crate::math::{abs, sqrt};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ComponentKind {
    Zero,
    Linear,
    Square,
}

/// A univariate component `phi_j`, scaled by `coefficient`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComponentFunction {
    pub kind: ComponentKind,
    pub coefficient: f64,
}

impl ComponentFunction {
    pub const ZERO: Self = Self { kind: ComponentKind::Zero, coefficient: 0.0 };

    pub fn linear(coefficient: f64) -> Self {
        Self { kind: ComponentKind::Linear, coefficient }
    }

    pub fn square(coefficient: f64) -> Self {
        Self { kind: ComponentKind::Square, coefficient }
    }

    pub fn new(kind: ComponentKind, coefficient: f64) -> Self {
        Self { kind, coefficient }
    }

    /// True when the component is identically zero.
    pub fn is_null(&self) -> bool {
        self.kind == ComponentKind::Zero || self.coefficient == 0.0
    }

    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            ComponentKind::Zero => 0.0,
            ComponentKind::Linear => self.coefficient * t,
            ComponentKind::Square => self.coefficient * t * t,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            ComponentKind::Zero => 0.0,
            ComponentKind::Linear => self.coefficient,
            ComponentKind::Square => 2.0 * self.coefficient * t,
        }
    }

    /// Exact `min |phi'(t)|` over `t in [a, b]`.
    pub fn min_abs_derivative(&self, a: f64, b: f64) -> f64 {
        match self.kind {
            ComponentKind::Zero => 0.0,
            ComponentKind::Linear => abs(self.coefficient),
            ComponentKind::Square => {
                if a <= 0.0 && 0.0 <= b {
                    0.0
                } else {
                    2.0 * abs(self.coefficient) * abs(a).min(abs(b))
                }
            }
        }
    }

    /// Largest `|phi|` on `[0, 1]`.
    pub fn sup_norm(&self) -> f64 {
        match self.kind {
            ComponentKind::Zero => 0.0,
            ComponentKind::Linear | ComponentKind::Square => abs(self.coefficient),
        }
    }
}

/// Covariate distribution on `[0,1]^d` or `{0,1}^d`.
#[derive(Debug, Clone, PartialEq)]
pub enum CovariateDistribution {
    /// Uniform on the unit cube; density 1 everywhere.
    UniformCube { dim: usize },
    /// Independent coordinates with `x_j ~ Bernoulli(probs[j])`, `probs[j] in (0, 1/2]`.
    BooleanProduct { probs: Vec<f64> },
}

impl CovariateDistribution {
    pub fn uniform(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        Ok(Self::UniformCube { dim })
    }

    pub fn boolean(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(invalid("dimension", "must be positive"));
        }
        if let Some(p) = probs.iter().find(|&&p| !(p > 0.0 && p <= 0.5)) {
            return Err(invalid(
                "bernoulli_p",
                alloc::format!("{p} is outside (0, 1/2]"),
            ));
        }
        Ok(Self::BooleanProduct { probs })
    }

    pub fn boolean_uniform_p(dim: usize, p: f64) -> Result<Self> {
        Self::boolean(alloc::vec![p; dim])
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::UniformCube { dim } => *dim,
            Self::BooleanProduct { probs } => probs.len(),
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self, Self::BooleanProduct { .. })
    }

    /// Smallest density value; 1 for the uniform cube.
    pub fn q_min(&self) -> Option<f64> {
        match self {
            Self::UniformCube { .. } => Some(1.0),
            Self::BooleanProduct { .. } => None,
        }
    }

    /// `||q||_inf`; 1 for the uniform cube.
    pub fn q_sup(&self) -> Option<f64> {
        self.q_min()
    }

    /// Marginal differential entropy in bits; 0 for `Uniform[0,1]`.
    pub fn marginal_entropy(&self) -> Option<f64> {
        match self {
            Self::UniformCube { .. } => Some(0.0),
            Self::BooleanProduct { .. } => None,
        }
    }

    pub fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        for (coord, &value) in x.iter().enumerate() {
            let ok = match self {
                Self::UniformCube { .. } => (0.0..=1.0).contains(&value),
                Self::BooleanProduct { .. } => value == 0.0 || value == 1.0,
            };
            if !ok {
                return Err(Error::OutOfSupport { coord, value });
            }
        }
        Ok(())
    }

    pub fn sample_point<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        match self {
            Self::UniformCube { .. } => out.iter_mut().for_each(|v| *v = rng.random::<f64>()),
            Self::BooleanProduct { probs } => {
                for (v, &p) in out.iter_mut().zip(probs) {
                    *v = if rng.random::<f64>() < p { 1.0 } else { 0.0 };
                }
            }
        }
    }
}

/// `f(x) = sum_j phi_j(x_j)` with homoskedastic Gaussian noise of variance `noise_variance`.
#[derive(Debug, Clone, PartialEq)]
pub struct AdditiveModel {
    components: Vec<ComponentFunction>,
    noise_variance: f64,
    distribution: CovariateDistribution,
}

impl AdditiveModel {
    pub fn new(
        components: Vec<ComponentFunction>,
        noise_variance: f64,
        distribution: CovariateDistribution,
    ) -> Result<Self> {
        if components.len() != distribution.dim() {
            return Err(Error::DimensionMismatch {
                expected: distribution.dim(),
                got: components.len(),
            });
        }
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(invalid("noise_variance", "must be finite and >= 0"));
        }
        if components.iter().any(|c| !c.coefficient.is_finite()) {
            return Err(invalid("coefficient", "must be finite"));
        }
        Ok(Self { components, noise_variance, distribution })
    }

    /// `phi_j = kind(coefficient)` for `j < sparsity`, zero elsewhere.
    pub fn sparse(
        kind: ComponentKind,
        sparsity: usize,
        coefficient: f64,
        noise_variance: f64,
        distribution: CovariateDistribution,
    ) -> Result<Self> {
        let d = distribution.dim();
        if sparsity > d {
            return Err(invalid("sparsity", alloc::format!("{sparsity} exceeds dimension {d}")));
        }
        let components = (0..d)
            .map(|j| {
                if j < sparsity {
                    ComponentFunction::new(kind, coefficient)
                } else {
                    ComponentFunction::ZERO
                }
            })
            .collect();
        Self::new(components, noise_variance, distribution)
    }

    pub fn components(&self) -> &[ComponentFunction] {
        &self.components
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn distribution(&self) -> &CovariateDistribution {
        &self.distribution
    }

    pub fn dim(&self) -> usize {
        self.components.len()
    }

    /// Indices of the non-zero components.
    pub fn support(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&j| !self.components[j].is_null()).collect()
    }

    pub fn sparsity(&self) -> usize {
        self.components.iter().filter(|c| !c.is_null()).count()
    }

    /// Largest component sup-norm; the `beta_max` used by the tessellation bound.
    pub fn beta_max(&self) -> f64 {
        self.components.iter().map(|c| c.sup_norm()).fold(0.0, f64::max)
    }

    /// Noise-free regression function; errors outside the support.
    pub fn eval_f(&self, x: &[f64]) -> Result<f64> {
        self.distribution.check_point(x)?;
        Ok(self.eval_unchecked(x))
    }

    pub(crate) fn eval_unchecked(&self, x: &[f64]) -> f64 {
        self.components.iter().zip(x).map(|(c, &t)| c.value(t)).sum()
    }

    /// Exact per-coordinate `min |phi_j'|` over a continuous cell.
    pub fn derivative_lower_bounds(&self, cell: &Cell) -> Result<Vec<f64>> {
        match cell {
            Cell::Boolean { .. } => {
                Err(Error::Unsupported("derivative bounds on a Boolean support"))
            }
            Cell::Box { lower, upper } => {
                if self.distribution.is_boolean() {
                    return Err(Error::Unsupported("derivative bounds on a Boolean support"));
                }
                if lower.len() != self.dim() {
                    return Err(Error::DimensionMismatch { expected: self.dim(), got: lower.len() });
                }
                Ok(self
                    .components
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(c, (&a, &b))| c.min_abs_derivative(a, b))
                    .collect())
            }
        }
    }

    /// Draws `n` i.i.d. rows `(x, f(x) + sigma * z)`. Identical arguments give identical data.
    pub fn sample_dataset(&self, n: usize, seed: u64) -> Dataset {
        let mut rng = rng::stream(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Dataset {
        let d = self.dim();
        let sigma = sqrt(self.noise_variance);
        let mut x = alloc::vec![0.0; n * d];
        let mut y = Vec::with_capacity(n);
        for row in x.chunks_exact_mut(d.max(1)).take(n) {
            self.distribution.sample_point(rng, row);
            let z: f64 = rng.sample(StandardNormal);
            y.push(self.eval_unchecked(row) + sigma * z);
        }
        Dataset { dim: d, x, y }
    }
}

/// Row-major design matrix with responses.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    dim: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Dataset {
    pub fn new(dim: usize, x: Vec<f64>, y: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        if x.len() != y.len() * dim {
            return Err(Error::DimensionMismatch { expected: y.len() * dim, got: x.len() });
        }
        Ok(Self { dim, x, y })
    }

    pub fn from_rows(dim: usize, rows: &[(Vec<f64>, f64)]) -> Result<Self> {
        let mut x = Vec::with_capacity(rows.len() * dim);
        for (r, _) in rows {
            if r.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: r.len() });
            }
            x.extend_from_slice(r);
        }
        Self::new(dim, x, rows.iter().map(|(_, y)| *y).collect())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    pub fn x(&self, i: usize, j: usize) -> f64 {
        self.x[i * self.dim + j]
    }

    pub fn responses(&self) -> &[f64] {
        &self.y
    }

    pub fn rows(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.x.chunks_exact(self.dim).zip(self.y.iter().copied())
    }

    /// Dataset made of the given row indices (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut x = Vec::with_capacity(indices.len() * self.dim);
        let mut y = Vec::with_capacity(indices.len());
        for &i in indices {
            x.extend_from_slice(self.row(i));
            y.push(self.y[i]);
        }
        Self { dim: self.dim, x, y }
    }

    /// Copy with responses replaced.
    pub fn with_responses(&self, y: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.x.clone(), y)
    }

    pub fn mean_response(&self) -> Option<f64> {
        if self.is_empty() {
            None
        } else {
            Some(self.y.iter().sum::<f64>() / self.len() as f64)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn uniform_linear(beta: &[f64], sigma2: f64) -> AdditiveModel {
        AdditiveModel::new(
            beta.iter().map(|&b| ComponentFunction::linear(b)).collect(),
            sigma2,
            CovariateDistribution::uniform(beta.len()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn sampling_is_seeded() {
        let m = uniform_linear(&[1.0, -2.0, 0.0], 0.5);
        assert_eq!(m.sample_dataset(100, 7), m.sample_dataset(100, 7));
        assert_ne!(m.sample_dataset(100, 7), m.sample_dataset(100, 8));
        assert!(m.sample_dataset(0, 1).is_empty());
    }

    #[test]
    fn zero_noise_reproduces_f() {
        let m = uniform_linear(&[1.0, 0.0], 0.0);
        let data = m.sample_dataset(5, 3);
        for (x, y) in data.rows() {
            assert_eq!(y, x[0]);
            m.distribution().check_point(x).unwrap();
        }
    }

    #[test]
    fn boolean_mean_response() {
        // E y = sum beta_j pi_j = 5; CLT band of 3 standard errors.
        let dist = CovariateDistribution::boolean_uniform_p(10, 0.5).unwrap();
        let m = AdditiveModel::sparse(ComponentKind::Linear, 10, 1.0, 1.0, dist).unwrap();
        let n = 100_000;
        let data = m.sample_dataset(n, 11);
        let ys = data.responses();
        let mean = ys.iter().sum::<f64>() / n as f64;
        let var = ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 5.0).abs() < 3.0 * sqrt(var / n as f64), "mean {mean}");
    }

    #[test]
    fn residual_variance_matches_noise() {
        let m = uniform_linear(&[1.0, 1.0, 0.0], 0.25);
        let data = m.sample_dataset(100_000, 5);
        let res: Vec<f64> = data.rows().map(|(x, y)| y - m.eval_f(x).unwrap()).collect();
        let mu = res.iter().sum::<f64>() / res.len() as f64;
        let v = res.iter().map(|r| (r - mu) * (r - mu)).sum::<f64>() / (res.len() - 1) as f64;
        assert!((v / 0.25 - 1.0).abs() < 0.05, "variance {v}");
    }

    #[test]
    fn eval_examples() {
        assert_eq!(uniform_linear(&[1.0, 1.0, 0.0], 0.0).eval_f(&[0.5, 0.5, 0.9]).unwrap(), 1.0);
        assert_eq!(uniform_linear(&[0.0, 0.0], 0.0).eval_f(&[0.3, 0.8]).unwrap(), 0.0);
        let sq = AdditiveModel::new(
            vec![ComponentFunction::square(2.0)],
            0.0,
            CovariateDistribution::uniform(1).unwrap(),
        )
        .unwrap();
        assert_eq!(sq.eval_f(&[0.5]).unwrap(), 0.5);
        assert!(matches!(sq.eval_f(&[1.5]), Err(Error::OutOfSupport { coord: 0, .. })));
        assert!(matches!(sq.eval_f(&[0.5, 0.5]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn eval_is_additive() {
        let comps = vec![
            ComponentFunction::linear(1.5),
            ComponentFunction::square(-0.7),
            ComponentFunction::ZERO,
        ];
        let dist = CovariateDistribution::uniform(3).unwrap();
        let full = AdditiveModel::new(comps.clone(), 0.0, dist.clone()).unwrap();
        let x = [0.3, 0.9, 0.1];
        let parts: f64 = (0..3)
            .map(|j| {
                let mut only = vec![ComponentFunction::ZERO; 3];
                only[j] = comps[j];
                AdditiveModel::new(only, 0.0, dist.clone()).unwrap().eval_f(&x).unwrap()
            })
            .sum();
        assert_eq!(full.eval_f(&x).unwrap(), parts);
    }

    #[test]
    fn derivative_bounds() {
        let m = uniform_linear(&[3.0, -2.0], 0.0);
        let full = Cell::full_box(2);
        assert_eq!(m.derivative_lower_bounds(&full).unwrap(), vec![3.0, 2.0]);

        let sq = AdditiveModel::new(
            vec![ComponentFunction::square(1.0)],
            0.0,
            CovariateDistribution::uniform(1).unwrap(),
        )
        .unwrap();
        let c = Cell::new_box(vec![0.2], vec![0.6]).unwrap();
        let got = sq.derivative_lower_bounds(&c).unwrap()[0];
        // dense-grid minimization of |2t| on [0.2, 0.6]
        let grid_min = (0..=10_000)
            .map(|i| 0.2 + 0.4 * i as f64 / 10_000.0)
            .map(|t| (2.0 * t).abs())
            .fold(f64::INFINITY, f64::min);
        assert!((got - grid_min).abs() < 1e-12);
        assert!((got - 0.4).abs() < 1e-15);

        let c0 = Cell::new_box(vec![0.0], vec![0.5]).unwrap();
        assert_eq!(sq.derivative_lower_bounds(&c0).unwrap(), vec![0.0]);

        let b = AdditiveModel::sparse(
            ComponentKind::Linear,
            1,
            1.0,
            0.0,
            CovariateDistribution::boolean_uniform_p(2, 0.5).unwrap(),
        )
        .unwrap();
        assert!(matches!(
            b.derivative_lower_bounds(&Cell::full_boolean(2)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(CovariateDistribution::boolean(vec![0.0]).is_err());
        assert!(CovariateDistribution::boolean(vec![0.6]).is_err());
        assert!(CovariateDistribution::boolean(vec![0.5]).is_ok());
        assert!(AdditiveModel::new(
            vec![ComponentFunction::linear(1.0)],
            -1.0,
            CovariateDistribution::uniform(1).unwrap()
        )
        .is_err());
        assert!(AdditiveModel::new(
            vec![ComponentFunction::linear(1.0)],
            0.0,
            CovariateDistribution::uniform(2).unwrap()
        )
        .is_err());
    }
}
