//! Cells, partitions, cell measures and exact conditional moments of `f`.
//!
//! Continuous cells are half-open boxes `[a_j, b_j)`, closed at 1, so every
//! point of `[0,1]^d` lies in exactly one cell of a partition. Boolean cells
//! are subcubes of `{0,1}^d` given by a set of fixed coordinates.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::math::{ceil, square};
use crate::models::{AdditiveModel, ComponentFunction, ComponentKind, CovariateDistribution};

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    /// Product of intervals `[lower_j, upper_j]` inside the unit cube.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Subcube of `{0,1}^dim` agreeing with `fixed`.
    Boolean { dim: usize, fixed: BTreeMap<usize, u8> },
}

impl Cell {
    pub fn new_box(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(invalid("dimension", "must be positive"));
        }
        for (j, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if !(0.0 <= a && a <= b && b <= 1.0) {
                return Err(invalid("cell", format!("coordinate {j}: [{a}, {b}] is not inside [0, 1]")));
            }
        }
        Ok(Self::Box { lower, upper })
    }

    pub fn full_box(dim: usize) -> Self {
        Self::Box { lower: alloc::vec![0.0; dim], upper: alloc::vec![1.0; dim] }
    }

    pub fn new_boolean(dim: usize, fixed: BTreeMap<usize, u8>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        if let Some((&j, &v)) = fixed.iter().find(|(&j, &v)| j >= dim || v > 1) {
            return Err(invalid("cell", format!("fixed coordinate {j}={v} is invalid for d={dim}")));
        }
        Ok(Self::Boolean { dim, fixed })
    }

    pub fn full_boolean(dim: usize) -> Self {
        Self::Boolean { dim, fixed: BTreeMap::new() }
    }

    /// The whole support of `dist` as a single cell.
    pub fn full(dist: &CovariateDistribution) -> Self {
        match dist {
            CovariateDistribution::UniformCube { dim } => Self::full_box(*dim),
            CovariateDistribution::BooleanProduct { probs } => Self::full_boolean(probs.len()),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Box { lower, .. } => lower.len(),
            Self::Boolean { dim, .. } => *dim,
        }
    }

    pub fn is_boolean(&self) -> bool {
        matches!(self, Self::Boolean { .. })
    }

    /// Half-open membership test; the upper face at 1 is closed.
    pub fn contains(&self, x: &[f64]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        match self {
            Self::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .zip(x)
                .all(|((&a, &b), &t)| a <= t && (t < b || (t == 1.0 && b == 1.0))),
            Self::Boolean { fixed, .. } => fixed.iter().all(|(&j, &v)| x[j] == f64::from(v)),
        }
    }

    /// Side lengths `b_j - a_j` of a box cell.
    pub fn side_lengths(&self) -> Option<Vec<f64>> {
        match self {
            Self::Box { lower, upper } => Some(lower.iter().zip(upper).map(|(a, b)| b - a).collect()),
            Self::Boolean { .. } => None,
        }
    }

    /// Inclusion of `self` in `other` (as closed sets).
    pub fn is_subset_of(&self, other: &Cell) -> bool {
        match (self, other) {
            (Self::Box { lower: a1, upper: b1 }, Self::Box { lower: a2, upper: b2 }) => {
                a1.len() == a2.len()
                    && (0..a1.len()).all(|j| a2[j] <= a1[j] && b1[j] <= b2[j])
            }
            (Self::Boolean { dim: d1, fixed: f1 }, Self::Boolean { dim: d2, fixed: f2 }) => {
                d1 == d2 && f2.iter().all(|(j, v)| f1.get(j) == Some(v))
            }
            _ => false,
        }
    }

    /// True when the interiors (Boolean: the point sets) intersect.
    pub fn overlaps(&self, other: &Cell) -> bool {
        match (self, other) {
            (Self::Box { lower: a1, upper: b1 }, Self::Box { lower: a2, upper: b2 }) => {
                (0..a1.len()).all(|j| a1[j].max(a2[j]) < b1[j].min(b2[j]))
            }
            (Self::Boolean { fixed: f1, .. }, Self::Boolean { fixed: f2, .. }) => {
                f1.iter().all(|(j, v)| f2.get(j).is_none_or(|w| w == v))
            }
            _ => false,
        }
    }
}

/// Probability mass `nu{C}` of a cell.
pub fn cell_measure(dist: &CovariateDistribution, cell: &Cell) -> Result<f64> {
    if cell.dim() != dist.dim() {
        return Err(Error::DimensionMismatch { expected: dist.dim(), got: cell.dim() });
    }
    match (dist, cell) {
        (CovariateDistribution::UniformCube { .. }, Cell::Box { lower, upper }) => {
            Ok(lower.iter().zip(upper).map(|(a, b)| b - a).product())
        }
        (CovariateDistribution::BooleanProduct { probs }, Cell::Boolean { fixed, .. }) => Ok(fixed
            .iter()
            .map(|(&j, &v)| if v == 1 { probs[j] } else { 1.0 - probs[j] })
            .product()),
        _ => Err(Error::Unsupported("cell kind does not match the covariate support")),
    }
}

/// Regular grid structure used for constant-time point location.
#[derive(Debug, Clone, PartialEq)]
struct GridIndex {
    /// `(coordinate, interior cut points ascending)`; first axis is most significant.
    axes: Vec<(usize, Vec<f64>)>,
}

impl GridIndex {
    fn locate(&self, x: &[f64]) -> usize {
        self.axes.iter().fold(0, |acc, (coord, cuts)| {
            acc * (cuts.len() + 1) + cuts.partition_point(|&c| c <= x[*coord])
        })
    }
}

/// A collection of cells with disjoint interiors covering the support.
#[derive(Debug, Clone)]
pub struct Partition {
    dim: usize,
    cells: Vec<Cell>,
    grid: Option<GridIndex>,
}

/// Equal when the cell lists are equal; the lookup index is ignored.
impl PartialEq for Partition {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.cells == other.cells
    }
}

impl Partition {
    /// Validates dimensions, pairwise disjointness and coverage.
    pub fn new(dim: usize, cells: Vec<Cell>) -> Result<Self> {
        if cells.is_empty() {
            return Err(Error::MalformedPartition("no cells".into()));
        }
        let boolean = cells[0].is_boolean();
        for (i, c) in cells.iter().enumerate() {
            if c.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: c.dim() });
            }
            if c.is_boolean() != boolean {
                return Err(Error::MalformedPartition(format!("cell {i} mixes Boolean and continuous cells")));
            }
        }
        for i in 0..cells.len() {
            for j in i + 1..cells.len() {
                if cells[i].overlaps(&cells[j]) {
                    return Err(Error::MalformedPartition(format!("cells {i} and {j} overlap")));
                }
            }
        }
        // Coverage: the fair-coin / Lebesgue mass of disjoint cells must add up to one.
        let total: f64 = cells
            .iter()
            .map(|c| match c {
                Cell::Box { lower, upper } => lower.iter().zip(upper).map(|(a, b)| b - a).product(),
                Cell::Boolean { fixed, .. } => crate::math::pow(0.5, fixed.len() as f64),
            })
            .sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::MalformedPartition(format!("cells cover mass {total}, not 1")));
        }
        Ok(Self { dim, cells, grid: None })
    }

    /// The single-cell partition of the whole support.
    pub fn trivial(dist: &CovariateDistribution) -> Self {
        Self { dim: dist.dim(), cells: alloc::vec![Cell::full(dist)], grid: None }
    }

    /// Product grid on the unit cube. `axes` lists `(coordinate, interior cuts)`;
    /// coordinates not listed are left whole. Cells are ordered in mixed radix
    /// with the first listed axis most significant.
    pub fn grid(dim: usize, axes: Vec<(usize, Vec<f64>)>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension", "must be positive"));
        }
        let mut seen = alloc::vec![false; dim];
        for (coord, cuts) in &axes {
            if *coord >= dim || seen[*coord] {
                return Err(invalid("grid", format!("axis {coord} is out of range or repeated")));
            }
            seen[*coord] = true;
            let mut prev = 0.0;
            for &c in cuts {
                if !(c > prev && c < 1.0) {
                    return Err(invalid("grid", format!("cuts on axis {coord} must increase strictly inside (0, 1)")));
                }
                prev = c;
            }
        }
        let count: usize = axes.iter().map(|(_, c)| c.len() + 1).product();
        let mut cells = Vec::with_capacity(count);
        let mut digits = alloc::vec![0usize; axes.len()];
        for _ in 0..count {
            let mut lower = alloc::vec![0.0; dim];
            let mut upper = alloc::vec![1.0; dim];
            for ((coord, cuts), &k) in axes.iter().zip(&digits) {
                lower[*coord] = if k == 0 { 0.0 } else { cuts[k - 1] };
                upper[*coord] = if k == cuts.len() { 1.0 } else { cuts[k] };
            }
            cells.push(Cell::Box { lower, upper });
            for pos in (0..axes.len()).rev() {
                digits[pos] += 1;
                if digits[pos] <= axes[pos].1.len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
        Ok(Self { dim, cells, grid: Some(GridIndex { axes }) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn is_boolean(&self) -> bool {
        self.cells[0].is_boolean()
    }

    /// Index of the unique cell containing `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        if let Some(grid) = &self.grid {
            let idx = grid.locate(x);
            if self.cells[idx].contains(x) {
                return Ok(idx);
            }
            return Err(Error::Unlocated);
        }
        self.cells.iter().position(|c| c.contains(x)).ok_or(Error::Unlocated)
    }

    /// Cell measures under `dist`.
    pub fn measures(&self, dist: &CovariateDistribution) -> Result<Vec<f64>> {
        self.cells.iter().map(|c| cell_measure(dist, c)).collect()
    }

    /// First cell with `nu{C} < 1/n`, with its measure.
    pub fn first_impermissible(&self, dist: &CovariateDistribution, n: usize) -> Option<(usize, f64)> {
        let threshold = 1.0 / n as f64;
        self.cells.iter().enumerate().find_map(|(i, c)| match cell_measure(dist, c) {
            Ok(m) if m >= threshold => None,
            Ok(m) => Some((i, m)),
            Err(_) => Some((i, 0.0)),
        })
    }
}

/// Every cell carries probability at least `1/n` (no tolerance).
pub fn is_permissible(p: &Partition, dist: &CovariateDistribution, n: usize) -> bool {
    n >= 1 && p.first_impermissible(dist, n).is_none()
}

/// Exact `E{f | x in C}` and `Var{f | x in C}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

/// Mean and variance of `phi(t)` for `t ~ Uniform[a, b]`.
fn uniform_component_moments(c: &ComponentFunction, a: f64, b: f64) -> Moments {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let beta = c.coefficient;
    match c.kind {
        ComponentKind::Zero => Moments { mean: 0.0, variance: 0.0 },
        ComponentKind::Linear => Moments { mean: beta * mid, variance: square(beta * (b - a)) / 12.0 },
        // t = mid + half*u with u ~ U[-1,1]: t^2 = mid^2 + 2 mid half u + half^2 u^2.
        ComponentKind::Square => Moments {
            mean: beta * (mid * mid + half * half / 3.0),
            variance: square(beta)
                * (4.0 / 3.0 * square(mid * half) + 4.0 / 45.0 * square(half * half)),
        },
    }
}

/// Conditional mean and variance of `f` on a cell with positive measure.
pub fn conditional_moments(model: &AdditiveModel, cell: &Cell) -> Result<Moments> {
    let dist = model.distribution();
    let measure = cell_measure(dist, cell)?;
    if !(measure > 0.0) {
        return Err(Error::ZeroMeasureCell { index: 0 });
    }
    Ok(moments_unchecked(model, cell))
}

/// Coordinates are independent given the cell, so component moments add up.
pub(crate) fn moments_unchecked(model: &AdditiveModel, cell: &Cell) -> Moments {
    let mut total = Moments { mean: 0.0, variance: 0.0 };
    match (model.distribution(), cell) {
        (CovariateDistribution::UniformCube { .. }, Cell::Box { lower, upper }) => {
            for (c, (&a, &b)) in model.components().iter().zip(lower.iter().zip(upper)) {
                let m = uniform_component_moments(c, a, b);
                total.mean += m.mean;
                total.variance += m.variance;
            }
        }
        (CovariateDistribution::BooleanProduct { probs }, Cell::Boolean { fixed, .. }) => {
            for (j, (c, &p)) in model.components().iter().zip(probs).enumerate() {
                let (f0, f1) = (c.value(0.0), c.value(1.0));
                match fixed.get(&j) {
                    Some(&v) => total.mean += if v == 1 { f1 } else { f0 },
                    None => {
                        total.mean += (1.0 - p) * f0 + p * f1;
                        total.variance += p * (1.0 - p) * square(f1 - f0);
                    }
                }
            }
        }
        _ => unreachable!("cell kind checked by cell_measure"),
    }
    total
}

/// Grid with `ceil(1/side_target)` equal slabs along each coordinate in
/// `support` and a single slab along the others.
pub fn oracle_tessellation(support: &[usize], side_target: f64, dim: usize) -> Result<Partition> {
    if !(side_target > 0.0 && side_target <= 1.0) {
        return Err(invalid("side_target", format!("{side_target} is outside (0, 1]")));
    }
    let slabs = ceil(1.0 / side_target) as usize;
    let cuts: Vec<f64> = (1..slabs).map(|i| i as f64 / slabs as f64).collect();
    let mut coords: Vec<usize> = support.to_vec();
    coords.sort_unstable();
    coords.dedup();
    let axes = coords
        .into_iter()
        .filter(|_| slabs > 1)
        .map(|j| (j, cuts.clone()))
        .collect();
    Partition::grid(dim, axes)
}
