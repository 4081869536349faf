use ala_core::geometry::Partition;
use ala_core::models::Dataset;
use ala_core::trees::{
    fit_cart, fit_forest, honest_relabel, partition_estimator, root_split, tree_to_partition, Estimator, FitParams,
    TreeNode,
};
use ala_core::models::CovariateDistribution;
use proptest::prelude::*;

fn dataset(max_n: usize, max_d: usize) -> impl Strategy<Value = Dataset> {
    (1usize..=max_d, 2usize..=max_n).prop_flat_map(|(d, n)| {
        (prop::collection::vec(0.0f64..=1.0, n * d), prop::collection::vec(-5.0f64..5.0, n))
            .prop_map(move |(x, y)| Dataset::new(d, x, y).unwrap())
    })
}

/// Exhaustive SSE reduction over all midpoint thresholds, ties to the
/// lowest feature and then the lowest threshold.
fn exhaustive_root(data: &Dataset, min_leaf: usize) -> Option<(usize, f64, f64)> {
    fn sse(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        v.iter().map(|y| (y - m) * (y - m)).sum()
    }
    let y = data.responses();
    let parent = sse(y);
    let mut candidates = Vec::new();
    for j in 0..data.dim() {
        let mut xs: Vec<f64> = (0..data.len()).map(|i| data.x(i, j)).collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        for w in xs.windows(2) {
            let t = w[0] + (w[1] - w[0]) / 2.0;
            let t = if t <= w[0] { w[1] } else { t };
            let (l, r): (Vec<(usize, f64)>, Vec<(usize, f64)>) =
                y.iter().copied().enumerate().partition(|&(i, _)| data.x(i, j) < t);
            if l.len() < min_leaf || r.len() < min_leaf {
                continue;
            }
            let l: Vec<f64> = l.into_iter().map(|p| p.1).collect();
            let r: Vec<f64> = r.into_iter().map(|p| p.1).collect();
            candidates.push((j, t, parent - sse(&l) - sse(&r)));
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    if !(best > 1e-12 * parent.max(1e-300)) {
        return None;
    }
    candidates.into_iter().find(|c| c.2 >= best - 1e-9 * best)
}

fn route_mean(tree: &TreeNode, data: &Dataset, x: &[f64]) -> Option<f64> {
    let target = leaf_path(tree, x);
    let ys: Vec<f64> = data.rows().filter(|(xi, _)| leaf_path(tree, xi) == target).map(|(_, y)| y).collect();
    (!ys.is_empty()).then(|| ys.iter().sum::<f64>() / ys.len() as f64)
}

fn leaf_path(tree: &TreeNode, x: &[f64]) -> Vec<bool> {
    let mut path = Vec::new();
    let mut node = tree;
    while let TreeNode::Split { feature, threshold, left, right } = node {
        let go_left = x[*feature] < *threshold;
        path.push(go_left);
        node = if go_left { left } else { right };
    }
    path
}

fn scramble_leaves(tree: &TreeNode, k: &mut f64) -> TreeNode {
    match tree {
        TreeNode::Leaf { .. } => {
            *k += 17.0;
            TreeNode::Leaf { prediction: *k, train_count: 0, honest_count: 0 }
        }
        TreeNode::Split { feature, threshold, left, right } => TreeNode::Split {
            feature: *feature,
            threshold: *threshold,
            left: Box::new(scramble_leaves(left, k)),
            right: Box::new(scramble_leaves(right, k)),
        },
    }
}

fn queries(d: usize) -> Vec<Vec<f64>> {
    (0..40).map(|i| (0..d).map(|j| ((i * 7 + j * 13) % 41) as f64 / 40.0).collect()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn root_split_is_the_exhaustive_optimum(data in dataset(50, 3), min_leaf in 1usize..4) {
        let got = root_split(&data, min_leaf);
        let want = exhaustive_root(&data, min_leaf);
        match (got, want) {
            (None, None) => {}
            (Some(g), Some((j, t, dec))) => {
                prop_assert_eq!(g.feature, j);
                prop_assert!((g.threshold - t).abs() <= 1e-12, "{} vs {}", g.threshold, t);
                prop_assert!((g.decrease - dec).abs() <= 1e-9 * dec.abs().max(1.0));
            }
            (g, w) => prop_assert!(false, "greedy {:?} vs exhaustive {:?}", g, w),
        }
    }

    #[test]
    fn honest_leaves_ignore_structure_labels(train in dataset(60, 3), honest_y in prop::collection::vec(-5.0f64..5.0, 60)) {
        let tree = fit_cart(&train, &FitParams { min_samples_leaf: 2, ..FitParams::default() }).unwrap();
        let honest = train.with_responses(honest_y[..train.len()].to_vec()).unwrap();
        let mut k = 0.0;
        let scrambled = scramble_leaves(&tree, &mut k);
        let a = honest_relabel(&tree, &honest).unwrap();
        let b = honest_relabel(&scrambled, &honest).unwrap();
        for x in queries(train.dim()) {
            let pa = a.predict(&x).unwrap();
            prop_assert_eq!(pa, b.predict(&x).unwrap());
            if let Some(m) = route_mean(&tree, &honest, &x) {
                prop_assert!((pa - m).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn forest_ignores_tree_order(train in dataset(40, 3), seed in any::<u64>()) {
        let params = FitParams { n_trees: 7, ..FitParams::default() };
        let forest = fit_forest(&train, &params, seed).unwrap();
        let again = fit_forest(&train, &params, seed).unwrap();
        prop_assert_eq!(&forest, &again);
        let Estimator::Forest { dim, trees } = forest.clone() else { unreachable!() };
        let mut reversed = trees.clone();
        reversed.reverse();
        reversed.swap(0, 3);
        let shuffled = Estimator::Forest { dim, trees: reversed };
        for x in queries(dim) {
            prop_assert_eq!(forest.predict(&x).unwrap(), shuffled.predict(&x).unwrap());
        }
    }

    #[test]
    fn single_tree_forest_is_cart(train in dataset(40, 3), seed in any::<u64>()) {
        let d = train.dim();
        let params = FitParams { n_trees: 1, bootstrap: false, mtry: Some(d), ..FitParams::default() };
        let Estimator::Forest { trees, .. } = fit_forest(&train, &params, seed).unwrap() else { unreachable!() };
        prop_assert_eq!(&trees[0], &fit_cart(&train, &params).unwrap());
    }

    #[test]
    fn partition_estimator_is_the_cell_average(train in dataset(80, 3)) {
        let tree = fit_cart(&train, &FitParams { min_samples_leaf: 3, ..FitParams::default() }).unwrap();
        let dist = CovariateDistribution::uniform(train.dim()).unwrap();
        let p: Partition = tree_to_partition(&tree, &dist).unwrap();
        prop_assert_eq!(p.len(), tree.n_leaves());
        let est = partition_estimator(&p, &train).unwrap();
        for x in queries(train.dim()) {
            let c = p.locate(&x).unwrap();
            let ys: Vec<f64> = train.rows().filter(|(xi, _)| p.locate(xi).unwrap() == c).map(|(_, y)| y).collect();
            let want = if ys.is_empty() { 0.0 } else { ys.iter().sum::<f64>() / ys.len() as f64 };
            prop_assert!((est.predict(&x).unwrap() - want).abs() < 1e-12);
        }
    }
}
