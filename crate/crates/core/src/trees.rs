//! Tree estimators: greedy CART, honest relabeling, random forests and
//! fixed-partition leaf-only averaging.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::geometry::{cell_measure, moments_unchecked, Cell, Partition};
use crate::models::{AdditiveModel, CovariateDistribution, Dataset};
use crate::rng::{self, Stream};

/// A fitted regression tree. Points with `x[feature] < threshold` go left.
#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Split { feature: usize, threshold: f64, left: Box<TreeNode>, right: Box<TreeNode> },
    Leaf { prediction: f64, train_count: usize, honest_count: usize },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { prediction, .. } => return *prediction,
                TreeNode::Split { feature, threshold, left, right } => {
                    node = if x[*feature] < *threshold { left } else { right };
                }
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// Leaves in left-to-right order.
    pub fn leaves(&self) -> Vec<&TreeNode> {
        let mut out = Vec::new();
        let mut stack = alloc::vec![self];
        while let Some(node) = stack.pop() {
            match node {
                TreeNode::Leaf { .. } => out.push(node),
                TreeNode::Split { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    /// Largest feature index used by a split, if any.
    pub fn max_feature(&self) -> Option<usize> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split { feature, left, right, .. } => {
                Some(*feature).max(left.max_feature()).max(right.max_feature())
            }
        }
    }
}

/// Tree and forest hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitParams {
    pub min_samples_leaf: usize,
    pub max_depth: Option<usize>,
    /// Features tried per node in forests; `None` means `ceil(d / 3)`.
    pub mtry: Option<usize>,
    pub n_trees: usize,
    pub bootstrap: bool,
}

impl Default for FitParams {
    fn default() -> Self {
        Self { min_samples_leaf: 5, max_depth: None, mtry: None, n_trees: 100, bootstrap: true }
    }
}

impl FitParams {
    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.min_samples_leaf == 0 {
            return Err(invalid("min_samples_leaf", "must be >= 1"));
        }
        if let Some(m) = self.mtry {
            if m == 0 || m > dim {
                return Err(invalid("mtry", alloc::format!("{m} is outside 1..={dim}")));
            }
        }
        if self.n_trees == 0 {
            return Err(invalid("n_trees", "must be >= 1"));
        }
        Ok(())
    }

    /// `mtry` used by forests.
    pub fn forest_mtry(&self, dim: usize) -> usize {
        self.mtry.unwrap_or(dim.div_ceil(3)).clamp(1, dim)
    }
}

/// Best split found at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitChoice {
    pub feature: usize,
    pub threshold: f64,
    /// `N(C) Var(C) - N(C_L) Var(C_L) - N(C_R) Var(C_R)` on the node's responses.
    pub decrease: f64,
}

/// Relative gap under which two impurity decreases count as tied.
const TIE_RTOL: f64 = 1e-12;

struct Grower<'a> {
    data: &'a Dataset,
    params: FitParams,
    mtry: usize,
    rng: Option<Stream>,
    buf: Vec<(f64, f64)>,
}

/// Greedy search over `features` (ascending) and midpoints of consecutive
/// distinct values. Ties go to the lowest feature, then the lowest threshold.
fn best_split(
    data: &Dataset,
    idx: &[usize],
    features: &[usize],
    min_leaf: usize,
    buf: &mut Vec<(f64, f64)>,
) -> Option<SplitChoice> {
    let n = idx.len();
    if n < 2 * min_leaf || n < 2 {
        return None;
    }
    let center = idx.iter().map(|&i| data.responses()[i]).sum::<f64>() / n as f64;
    let mut best: Option<SplitChoice> = None;
    for &j in features {
        buf.clear();
        buf.extend(idx.iter().map(|&i| (data.x(i, j), data.responses()[i] - center)));
        buf.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let total: f64 = buf.iter().map(|p| p.1).sum();
        let mut left_sum = 0.0;
        for pos in 1..n {
            left_sum += buf[pos - 1].1;
            if pos < min_leaf || n - pos < min_leaf {
                continue;
            }
            let (lo, hi) = (buf[pos - 1].0, buf[pos].0);
            if !(lo < hi) {
                continue;
            }
            let (nl, nr) = (pos as f64, (n - pos) as f64);
            let diff = left_sum / nl - (total - left_sum) / nr;
            let decrease = nl * nr / n as f64 * diff * diff;
            let better = match &best {
                None => true,
                Some(b) => decrease > b.decrease + TIE_RTOL * b.decrease.abs(),
            };
            if better {
                let mut threshold = lo + 0.5 * (hi - lo);
                if threshold <= lo {
                    threshold = hi;
                }
                best = Some(SplitChoice { feature: j, threshold, decrease });
            }
        }
    }
    best.filter(|b| b.decrease > 0.0)
}

/// Best root split under the greedy rule; exposed for verification.
pub fn root_split(train: &Dataset, min_samples_leaf: usize) -> Option<SplitChoice> {
    let idx: Vec<usize> = (0..train.len()).collect();
    let features: Vec<usize> = (0..train.dim()).collect();
    best_split(train, &idx, &features, min_samples_leaf.max(1), &mut Vec::new())
}

impl Grower<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> TreeNode {
        let ys = self.data.responses();
        let n = idx.len();
        let mean = idx.iter().map(|&i| ys[i]).sum::<f64>() / n as f64;
        let leaf = TreeNode::Leaf { prediction: mean, train_count: n, honest_count: 0 };
        if self.params.max_depth.is_some_and(|m| depth >= m) {
            return leaf;
        }
        let first = ys[idx[0]];
        if idx.iter().all(|&i| ys[i] == first) {
            return leaf;
        }
        let features = self.features();
        let Some(split) = best_split(self.data, idx, &features, self.params.min_samples_leaf, &mut self.buf) else {
            return leaf;
        };
        let mut cut = 0;
        for k in 0..n {
            if self.data.x(idx[k], split.feature) < split.threshold {
                idx.swap(k, cut);
                cut += 1;
            }
        }
        let (l, r) = idx.split_at_mut(cut);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        TreeNode::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    fn features(&mut self) -> Vec<usize> {
        let d = self.data.dim();
        match self.rng.as_mut() {
            Some(rng) if self.mtry < d => {
                let mut f = index::sample(rng, d, self.mtry).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..d).collect(),
        }
    }
}

/// Greedy CART with `min_samples_leaf` stopping. Uses every feature at every
/// node; `params.mtry` only applies to forests.
pub fn fit_cart(train: &Dataset, params: &FitParams) -> Result<TreeNode> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate(train.dim())?;
    let mut grower = Grower { data: train, params: *params, mtry: train.dim(), rng: None, buf: Vec::new() };
    let mut idx: Vec<usize> = (0..train.len()).collect();
    Ok(grower.grow(&mut idx, 0))
}

fn relabel(node: &TreeNode, honest: &Dataset, idx: &mut [usize], fallback: f64) -> TreeNode {
    let count = idx.len();
    let mean = if count > 0 {
        idx.iter().map(|&i| honest.responses()[i]).sum::<f64>() / count as f64
    } else {
        fallback
    };
    match node {
        TreeNode::Leaf { train_count, .. } => {
            TreeNode::Leaf { prediction: mean, train_count: *train_count, honest_count: count }
        }
        TreeNode::Split { feature, threshold, left, right } => {
            let mut cut = 0;
            for k in 0..count {
                if honest.x(idx[k], *feature) < *threshold {
                    idx.swap(k, cut);
                    cut += 1;
                }
            }
            let (l, r) = idx.split_at_mut(cut);
            TreeNode::Split {
                feature: *feature,
                threshold: *threshold,
                left: Box::new(relabel(left, honest, l, mean)),
                right: Box::new(relabel(right, honest, r, mean)),
            }
        }
    }
}

/// Keeps the structure of `tree` and re-estimates every leaf from `honest`.
/// Leaves that receive no honest sample use the closest ancestor that does.
pub fn honest_relabel(tree: &TreeNode, honest: &Dataset) -> Result<Estimator> {
    if honest.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if let Some(f) = tree.max_feature() {
        if f >= honest.dim() {
            return Err(Error::DimensionMismatch { expected: f + 1, got: honest.dim() });
        }
    }
    let mut idx: Vec<usize> = (0..honest.len()).collect();
    let relabeled = relabel(tree, honest, &mut idx, 0.0);
    Ok(Estimator::HonestCart { dim: honest.dim(), tree: relabeled })
}

/// Bagged CART trees with per-node feature subsampling. Tree `t` uses the
/// stream `derive_seed(seed, t)`, so the result does not depend on the order
/// in which trees are grown.
pub fn fit_forest(train: &Dataset, params: &FitParams, seed: u64) -> Result<Estimator> {
    if train.is_empty() {
        return Err(Error::EmptyDataset);
    }
    params.validate(train.dim())?;
    let trees = (0..params.n_trees).map(|t| fit_forest_member(train, params, seed, t)).collect();
    Ok(Estimator::Forest { dim: train.dim(), trees })
}

/// The `t`-th member tree of [`fit_forest`].
pub fn fit_forest_member(train: &Dataset, params: &FitParams, seed: u64, t: usize) -> TreeNode {
    let mut rng = rng::stream(rng::derive_seed(seed, t as u64));
    let n = train.len();
    let sample;
    let data = if params.bootstrap {
        let draws: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        sample = train.select(&draws);
        &sample
    } else {
        train
    };
    let mut grower = Grower {
        data,
        params: *params,
        mtry: params.forest_mtry(train.dim()),
        rng: Some(rng),
        buf: Vec::new(),
    };
    let mut idx: Vec<usize> = (0..data.len()).collect();
    grower.grow(&mut idx, 0)
}

/// Leaf-only averaging over a fixed partition.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionEstimator {
    pub partition: Partition,
    pub predictions: Vec<f64>,
    pub counts: Vec<usize>,
}

impl PartitionEstimator {
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        Ok(self.predictions[self.partition.locate(x)?])
    }

    /// Exact risk `E_x (fhat(x) - f(x))^2 = sum_C nu{C} (Var{f|C} + (E{f|C} - fhat_C)^2)`.
    pub fn exact_risk(&self, model: &AdditiveModel) -> Result<f64> {
        let dist = model.distribution();
        let mut risk = 0.0;
        for (cell, &pred) in self.partition.cells().iter().zip(&self.predictions) {
            let nu = cell_measure(dist, cell)?;
            if nu > 0.0 {
                let m = moments_unchecked(model, cell);
                risk += nu * (m.variance + (m.mean - pred) * (m.mean - pred));
            }
        }
        Ok(risk)
    }
}

/// Cell means of `data` over `p`; empty cells predict exactly 0.
pub fn partition_estimator(p: &Partition, data: &Dataset) -> Result<Estimator> {
    if data.dim() != p.dim() {
        return Err(Error::DimensionMismatch { expected: p.dim(), got: data.dim() });
    }
    let mut sums = alloc::vec![0.0; p.len()];
    let mut counts = alloc::vec![0usize; p.len()];
    for (x, y) in data.rows() {
        let c = p.locate(x)?;
        sums[c] += y;
        counts[c] += 1;
    }
    let predictions = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 })
        .collect();
    Ok(Estimator::PartitionAla(PartitionEstimator { partition: p.clone(), predictions, counts }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EstimatorKind {
    Cart,
    HonestCart,
    Forest,
    PartitionAla,
}

/// A fitted predictor.
#[derive(Debug, Clone, PartialEq)]
pub enum Estimator {
    Cart { dim: usize, tree: TreeNode },
    HonestCart { dim: usize, tree: TreeNode },
    Forest { dim: usize, trees: Vec<TreeNode> },
    PartitionAla(PartitionEstimator),
}

impl Estimator {
    pub fn kind(&self) -> EstimatorKind {
        match self {
            Self::Cart { .. } => EstimatorKind::Cart,
            Self::HonestCart { .. } => EstimatorKind::HonestCart,
            Self::Forest { .. } => EstimatorKind::Forest,
            Self::PartitionAla(_) => EstimatorKind::PartitionAla,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Cart { dim, .. } | Self::HonestCart { dim, .. } | Self::Forest { dim, .. } => *dim,
            Self::PartitionAla(p) => p.partition.dim(),
        }
    }

    /// Prediction at `x in [0,1]^d`.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        if let Some((coord, &value)) = x.iter().enumerate().find(|(_, v)| !(0.0..=1.0).contains(*v)) {
            return Err(Error::OutOfSupport { coord, value });
        }
        Ok(match self {
            Self::Cart { tree, .. } | Self::HonestCart { tree, .. } => tree.predict(x),
            Self::Forest { trees, .. } => {
                // summed in sorted order so the result is independent of tree order
                let mut votes: Vec<f64> = trees.iter().map(|t| t.predict(x)).collect();
                votes.sort_by(f64::total_cmp);
                votes.iter().sum::<f64>() / trees.len() as f64
            }
            Self::PartitionAla(p) => p.predict(x)?,
        })
    }
}

/// Leaf cells of `tree` as a partition of the support of `dist`.
pub fn tree_to_partition(tree: &TreeNode, dist: &CovariateDistribution) -> Result<Partition> {
    let d = dist.dim();
    let mut cells = Vec::new();
    let mut stack = alloc::vec![(tree, Cell::full(dist))];
    while let Some((node, cell)) = stack.pop() {
        match node {
            TreeNode::Leaf { .. } => cells.push(cell),
            TreeNode::Split { feature, threshold, left, right } => {
                let j = *feature;
                if j >= d {
                    return Err(Error::DimensionMismatch { expected: d, got: j + 1 });
                }
                let (lc, rc) = split_cell(&cell, j, *threshold)?;
                stack.push((right, rc));
                stack.push((left, lc));
            }
        }
    }
    Partition::new(d, cells)
}

fn split_cell(cell: &Cell, j: usize, t: f64) -> Result<(Cell, Cell)> {
    match cell {
        Cell::Box { lower, upper } => {
            let cut = t.clamp(lower[j], upper[j]);
            let mut lu = upper.clone();
            lu[j] = cut;
            let mut rl = lower.clone();
            rl[j] = cut;
            Ok((Cell::Box { lower: lower.clone(), upper: lu }, Cell::Box { lower: rl, upper: upper.clone() }))
        }
        Cell::Boolean { dim, fixed } => {
            if !(t > 0.0 && t <= 1.0) || fixed.contains_key(&j) {
                return Err(Error::MalformedPartition(alloc::format!(
                    "split x_{j} < {t} does not halve a Boolean cell"
                )));
            }
            let with = |v: u8| {
                let mut f: BTreeMap<usize, u8> = fixed.clone();
                f.insert(j, v);
                Cell::Boolean { dim: *dim, fixed: f }
            };
            Ok((with(0), with(1)))
        }
    }
}
