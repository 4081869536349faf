//! Acceptance checks, one line per criterion. Run with
//! `cargo test -p ala-lab --test acceptance`; exits nonzero if any check fails.

use std::collections::BTreeMap;
use std::process::{Command, ExitCode};
use std::time::Instant;

use ala_core::bounds::*;
use ala_core::geometry::{cell_measure, conditional_moments, is_permissible, Cell, Partition};
use ala_core::models::{AdditiveModel, ComponentFunction, CovariateDistribution, Dataset};
use ala_core::rng::{derive_seed, stream};
use ala_core::trees::{fit_cart, partition_estimator, Estimator, FitParams, TreeNode};
use ala_lab::config::{EstimatorId, ExperimentConfig};
use ala_lab::harness::{fit_rate, run_experiment, summarize, RunOptions};
use rand::Rng;
use rayon::prelude::*;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn uniform_config(top: &str, d: usize, s: usize, sigma2: f64) -> ExperimentConfig {
    ExperimentConfig::from_toml(&format!(
        "{top}\n[model]\ndimension = {d}\nsparsity = {s}\ncomponent_kind = \"linear\"\ncoefficient = 1.0\n\
         noise_variance = {sigma2}\ndistribution = \"uniform\"\n"
    ))
    .expect("acceptance config")
}

fn slope_of(cfg: &ExperimentConfig, id: EstimatorId) -> (f64, Vec<(usize, f64, f64)>) {
    let records = run_experiment(cfg, RunOptions::default()).expect("experiment");
    let points: Vec<(f64, f64)> =
        records.iter().filter(|r| r.estimator == id).map(|r| (r.n as f64, r.test_mse)).collect();
    (fit_rate(&points).expect("rate fit").slope, summarize(&records, id))
}

/// Honest CART on the 50-dimensional sparse linear model recovers the
/// high-dimensional rate regime.
fn criterion_1() -> Outcome {
    let top = "seed = 1\nn_grid = [500, 1000, 2000, 4000, 8000]\nreplicates = 10\ntest_size = 500\n\
               estimators = [\"honest_cart\"]\n[fit]\nmin_samples_leaf = 5";
    let mut pass = true;
    let mut parts = Vec::new();
    for (s, lo, hi) in [(10usize, 0.08, 0.30), (20, 0.04, 0.20)] {
        let (slope, _) = slope_of(&uniform_config(top, 50, s, 0.01), EstimatorId::HonestCart);
        let ok = (lo..=hi).contains(&slope.abs());
        pass &= ok;
        parts.push(format!("s={s} slope {slope:.4} (|slope| in [{lo}, {hi}]: {ok})"));
    }
    outcome(pass, format!("honest_cart d=50: {}", parts.join(", ")))
}

/// The oracle tessellation estimator attains the minimax slope and sits between
/// the sparse lower and upper bounds.
fn criterion_2() -> Outcome {
    let (d, s, sigma2) = (10usize, 2usize, 0.01);
    let top = "seed = 2\nn_grid = [1000, 2000, 4000, 8000, 16000, 32000, 64000]\nreplicates = 10\n\
               test_size = 2000\nestimators = [\"oracle_partition\"]";
    let (slope, means) = slope_of(&uniform_config(top, d, s, sigma2), EstimatorId::OraclePartition);
    let target = -2.0 / (s as f64 + 2.0);
    let mut pass = (slope - target).abs() <= 0.12;
    let mut violations = Vec::new();
    for &(n, mean, se) in &means {
        let lower = additive_lower_bound_sparse(s, 1.0, 1.0, 1.0, sigma2, n).unwrap().value;
        let upper = sparse_additive_upper_bound(s, 1.0, 1.0, sigma2, n).unwrap().bound.value;
        if mean + 3.0 * se < lower || mean - 3.0 * se > upper {
            violations.push(format!("n={n}: {mean:.3e} outside [{lower:.3e}, {upper:.3e}]"));
        }
    }
    pass &= violations.is_empty();
    let (n0, m0, _) = means[0];
    outcome(
        pass,
        format!(
            "oracle partition s={s} d={d}: slope {slope:.4} vs {target} +/- 0.12, mean at n={n0} {m0:.3e}, {} bound violations {}",
            violations.len(),
            violations.join("; ")
        ),
    )
}

fn random_component<R: Rng>(rng: &mut R) -> ComponentFunction {
    let beta = rng.random_range(-2.0..2.0);
    match rng.random_range(0..5) {
        0 => ComponentFunction::ZERO,
        1 | 2 => ComponentFunction::linear(beta),
        _ => ComponentFunction::square(beta),
    }
}

/// A random product grid with at most `n / 3` cells that is permissible at `n`.
fn random_permissible_grid<R: Rng>(rng: &mut R, d: usize, n: usize, dist: &CovariateDistribution) -> Partition {
    let mut max_cuts = 4usize;
    for attempt in 0.. {
        if attempt % 50 == 49 {
            max_cuts = max_cuts.saturating_sub(1);
        }
        let mut counts: Vec<usize> = (0..d).map(|_| rng.random_range(0..=max_cuts)).collect();
        while counts.iter().map(|c| c + 1).product::<usize>() > n / 3 {
            let j = counts.iter().enumerate().max_by_key(|p| p.1).unwrap().0;
            counts[j] -= 1;
        }
        let axes: Vec<(usize, Vec<f64>)> = counts
            .iter()
            .enumerate()
            .filter(|p| *p.1 > 0)
            .map(|(j, &k)| {
                let mut cuts: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..0.98)).collect();
                cuts.sort_by(f64::total_cmp);
                cuts.dedup();
                (j, cuts)
            })
            .collect();
        let Ok(p) = Partition::grid(d, axes) else { continue };
        if is_permissible(&p, dist, n) {
            return p;
        }
    }
    unreachable!()
}

/// Monte Carlo risk of the partition estimator against its decomposition bounds.
fn criterion_3() -> Outcome {
    let reps = 200;
    let results: Vec<(bool, String)> = (0..100u64)
        .into_par_iter()
        .map(|case| {
            let mut rng = stream(derive_seed(3, case));
            let d = rng.random_range(1..=5usize);
            let n = rng.random_range(50..=2000usize);
            let sigma2 = rng.random_range(0.0..=1.0);
            let dist = CovariateDistribution::uniform(d).unwrap();
            let comps = (0..d).map(|_| random_component(&mut rng)).collect();
            let model = AdditiveModel::new(comps, sigma2, dist.clone()).unwrap();
            let p = random_permissible_grid(&mut rng, d, n, &dist);
            let report = decompose_risk(&p, &model, n).unwrap();
            let risks: Vec<f64> = (0..reps)
                .map(|_| {
                    let data = model.sample_with(&mut rng, n);
                    match partition_estimator(&p, &data).unwrap() {
                        Estimator::PartitionAla(est) => est.exact_risk(&model).unwrap(),
                        _ => unreachable!(),
                    }
                })
                .collect();
            let mean = risks.iter().sum::<f64>() / reps as f64;
            let se = (risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / ((reps - 1) * reps) as f64).sqrt();
            let ok = report.lower_bound - 3.0 * se <= mean && mean <= report.upper_bound + 3.0 * se;
            let note = format!(
                "case {case} (d={d} n={n} cells={}): {mean:.4e} vs [{:.4e}, {:.4e}]",
                p.len(),
                report.lower_bound,
                report.upper_bound
            );
            (ok, note)
        })
        .collect();
    let inside = results.iter().filter(|r| r.0).count();
    let misses: Vec<&str> = results.iter().filter(|r| !r.0).map(|r| r.1.as_str()).collect();
    outcome(inside >= 99, format!("{inside}/100 cases inside [lower - 3se, upper + 3se] {}", misses.join("; ")))
}

/// Closed-form Boolean cell moments against full enumeration.
fn criterion_4() -> Outcome {
    let mut rng = stream(4);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(1..=12usize);
        let probs: Vec<f64> = (0..d).map(|_| rng.random_range(0.01..=0.5)).collect();
        let dist = CovariateDistribution::boolean(probs.clone()).unwrap();
        let comps = (0..d).map(|_| random_component(&mut rng)).collect();
        let model = AdditiveModel::new(comps, 0.3, dist.clone()).unwrap();
        let mut fixed = BTreeMap::new();
        for j in 0..d {
            if rng.random_bool(0.4) {
                fixed.insert(j, rng.random_range(0..2u8));
            }
        }
        let cell = Cell::new_boolean(d, fixed).unwrap();

        let (mut mass, mut s1, mut s2) = (0.0, 0.0, 0.0);
        let mut x = vec![0.0; d];
        for mask in 0u32..1 << d {
            let mut w = 1.0;
            for j in 0..d {
                let bit = (mask >> j) & 1;
                x[j] = f64::from(bit);
                w *= if bit == 1 { probs[j] } else { 1.0 - probs[j] };
            }
            if cell.contains(&x) {
                let f = model.eval_f(&x).unwrap();
                mass += w;
                s1 += w * f;
                s2 += w * f * f;
            }
        }
        let mean = s1 / mass;
        let var = s2 / mass - mean * mean;
        let m = conditional_moments(&model, &cell).unwrap();
        let errs = [cell_measure(&dist, &cell).unwrap() - mass, m.mean - mean, m.variance - var];
        worst = errs.iter().fold(worst, |w, e| w.max(e.abs()));
    }
    outcome(worst <= 1e-12, format!("200 cells, d <= 12, worst absolute error {worst:.2e} (tolerance 1e-12)"))
}

/// Exhaustive root split: largest SSE reduction, ties to the lowest feature and
/// then the lowest midpoint threshold.
fn exhaustive_root(data: &Dataset, min_leaf: usize) -> Option<(usize, f64)> {
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
            let (l, r): (Vec<f64>, Vec<f64>) = (0..data.len()).map(|i| (data.x(i, j) < t, y[i])).fold(
                (Vec::new(), Vec::new()),
                |(mut l, mut r), (left, v)| {
                    if left { l.push(v) } else { r.push(v) }
                    (l, r)
                },
            );
            if l.len() >= min_leaf && r.len() >= min_leaf {
                candidates.push((j, t, parent - sse(&l) - sse(&r)));
            }
        }
    }
    let best = candidates.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
    if !(best > 1e-12 * parent.max(1e-300)) {
        return None;
    }
    candidates.into_iter().find(|c| c.2 >= best - 1e-10 * best).map(|c| (c.0, c.1))
}

fn criterion_5() -> Outcome {
    let mut rng = stream(5);
    let mut mismatches = Vec::new();
    let mut splits = 0;
    for case in 0..200 {
        let d = rng.random_range(1..=3usize);
        let n = rng.random_range(2..=50usize);
        let coarse = rng.random_bool(0.3);
        let mut x: Vec<f64> = (0..n * d)
            .map(|_| if coarse { f64::from(rng.random_range(0..6u8)) / 5.0 } else { rng.random_range(0.0..1.0) })
            .collect();
        if d >= 2 && rng.random_bool(0.25) {
            // duplicated feature: exact tie across features
            for i in 0..n {
                x[i * d + 1] = x[i * d];
            }
        }
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let data = Dataset::new(d, x, y).unwrap();
        let min_leaf = rng.random_range(1..=5usize);
        let params = FitParams { min_samples_leaf: min_leaf, max_depth: Some(1), ..FitParams::default() };
        let got = match fit_cart(&data, &params).unwrap() {
            TreeNode::Split { feature, threshold, .. } => Some((feature, threshold)),
            TreeNode::Leaf { .. } => None,
        };
        let want = exhaustive_root(&data, min_leaf);
        splits += usize::from(want.is_some());
        if got != want {
            mismatches.push(format!("case {case}: {got:?} vs {want:?}"));
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("200 datasets ({splits} with a split), {} mismatches {}", mismatches.len(), mismatches.join("; ")),
    )
}

fn log_grid_min(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, k: usize) -> f64 {
    let (a, b) = (lo.ln(), hi.ln());
    (0..k).map(|i| f((a + (b - a) * i as f64 / (k - 1) as f64).exp())).fold(f64::INFINITY, f64::min)
}

/// Numerical minimization of the rate-distortion objective against closed forms
/// and against a dense grid.
fn criterion_6() -> Outcome {
    let mut rng = stream(6);
    let mut worst_cube: f64 = 0.0;
    for _ in 0..50 {
        let beta0 = rng.random_range(0.5..=3.0);
        let sigma2 = rng.random_range(0.01..=1.0);
        let n = rng.random_range(100..=100_000usize);
        let closed = linear_lower_bound_cube(1, beta0, 0.0, sigma2, n).unwrap();
        let d_star = closed.optimizer_d.unwrap();
        let top = beta0 * beta0;
        let num = minimize_rd_objective(|d| continuous_linear_rate(1, beta0, 0.0, d), sigma2, n, 1e-14 * top, top)
            .unwrap();
        // the stated bound keeps only D/2 of the objective at its minimizer, i.e. s/(s+2) of the minimum
        let gaps = [num.argmin / d_star - 1.0, num.value / (1.5 * d_star) - 1.0, closed.value / (num.value / 3.0) - 1.0];
        worst_cube = gaps.iter().fold(worst_cube, |w, g| w.max(g.abs()));
    }
    let mut worst_grid: f64 = 0.0;
    for _ in 0..20 {
        let d = rng.random_range(1..=6usize);
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..=2.0)).collect();
        let probs: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..=0.5)).collect();
        let sigma2 = rng.random_range(0.01..=1.0);
        let n = rng.random_range(10..=10_000usize);
        let value = boolean_lower_bound_general(&beta, &probs, sigma2, n).unwrap().value;
        let top = boolean_max_distortion(&beta, &probs);
        let objective = |dd: f64| 0.5 * (dd + sigma2 * 2f64.powf(boolean_rate(&beta, &probs, dd).unwrap()) / n as f64);
        let grid = log_grid_min(objective, 1e-14 * top, top, 10_000);
        worst_grid = worst_grid.max((value / grid - 1.0).abs());
    }
    outcome(
        worst_cube <= 1e-6 && worst_grid <= 1e-4,
        format!(
            "s=1 cube: minimizer, minimum and stated bound vs closed form, worst relative gap {worst_cube:.2e} (<= 1e-6); Boolean grid: worst relative gap {worst_grid:.2e} (<= 1e-4)"
        ),
    )
}

/// Inverse round trips, monotonicity of the lower bounds, dominated weights and
/// the analytic slope.
fn criterion_7() -> Outcome {
    let mut rng = stream(7);
    let mut failures = Vec::new();

    let mut worst_g: f64 = 0.0;
    let mut worst_m: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(1..=8usize);
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..3.0)).collect();
        let top = beta.iter().copied().fold(0.0, f64::max);
        let alpha = rng.random_range(0.0..=1.0) * top;
        let back = g_beta_inverse(&beta, g_beta(&beta, alpha).unwrap()).unwrap();
        worst_g = worst_g.max((back - alpha).abs() / top.max(1.0));

        let beta: Vec<f64> = beta.iter().map(|b| b + 0.05).collect();
        let probs: Vec<f64> = (0..d).map(|_| rng.random_range(0.02..=0.5)).collect();
        let target = rng.random_range(0.001..0.999) * boolean_max_distortion(&beta, &probs);
        let back = m_beta_pi(&beta, &probs, m_inverse(&beta, &probs, target).unwrap()).unwrap();
        worst_m = worst_m.max((back - target).abs() / target.max(1.0));
    }
    if worst_g > 1e-10 || worst_m > 1e-10 {
        failures.push(format!("round trips g {worst_g:.1e}, m {worst_m:.1e}"));
    }

    let mut monotone_bad = 0;
    for _ in 0..100 {
        let s = rng.random_range(2..=10usize);
        let beta0 = rng.random_range(0.1..3.0);
        let beta1 = beta0 * rng.random_range(1.0..2.0);
        let pi = rng.random_range(0.05..=0.5);
        let sigma2 = rng.random_range(0.01..2.0);
        let n0 = rng.random_range(1..50_000usize);
        let n1 = n0 + rng.random_range(1..50_000usize);
        let families: [&dyn Fn(f64, usize) -> f64; 4] = [
            &|b, n| additive_lower_bound_general(&vec![b; s], 1.0, 1.0, sigma2, n).unwrap().value,
            &|b, n| additive_lower_bound_sparse(s, b, 1.0, 1.0, sigma2, n).unwrap().value,
            &|b, n| linear_lower_bound_cube(s, b, 0.0, sigma2, n).unwrap().value,
            &|b, n| boolean_lower_bound_general(&vec![b; s], &vec![pi; s], sigma2, n).unwrap().value,
        ];
        for f in families {
            let tol = 1e-9 * f(beta1, n0).abs().max(1e-300);
            if f(beta0, n1) > f(beta0, n0) + tol || f(beta0, n0) > f(beta1, n0) + tol {
                monotone_bad += 1;
            }
        }
        // the sparse Boolean form only rises with beta0 below its turning point
        let sparse = |b, n| boolean_lower_bound_sparse(s, b, pi, sigma2, n).unwrap().value;
        if sparse(beta0, n1) > sparse(beta0, n0) * (1.0 + 1e-9) + 1e-300 {
            monotone_bad += 1;
        }
    }
    if monotone_bad > 0 {
        failures.push(format!("{monotone_bad} monotonicity violations"));
    }

    let mut dominated_bad = 0;
    for _ in 0..100 {
        let d = rng.random_range(1..=8usize);
        let beta: Vec<f64> = (0..d).map(|_| rng.random_range(0.05..3.0)).collect();
        let weaker: Vec<f64> = beta.iter().map(|b| b * rng.random_range(0.0..=1.0)).collect();
        let probs: Vec<f64> = (0..d).map(|_| rng.random_range(0.02..=0.5)).collect();
        let dd = rng.random_range(0.001..1.2) * boolean_max_distortion(&beta, &probs);
        if boolean_rate(&weaker, &probs, dd).unwrap() > boolean_rate(&beta, &probs, dd).unwrap() + 1e-9 {
            dominated_bad += 1;
        }
    }
    if dominated_bad > 0 {
        failures.push(format!("{dominated_bad} dominated-weight violations"));
    }

    let (n1, n2) = (1usize << 40, 1usize << 44);
    let mut worst_slope: f64 = 0.0;
    for s in 1..=20usize {
        let target = -2.0 / (s as f64 + 2.0);
        let lo = |n| additive_lower_bound_sparse(s, 1.0, 1.0, 1.0, 0.3, n).unwrap().value;
        worst_slope = worst_slope.max(((lo(n2).log2() - lo(n1).log2()) / 4.0 - target).abs());
        if s <= 10 {
            let up = |n| sparse_additive_upper_bound(s, 1.0, 1.0, 1.0, n).unwrap().bound.value;
            worst_slope = worst_slope.max(((up(n2).log2() - up(n1).log2()) / 4.0 - target).abs());
        }
    }
    if worst_slope > 1e-12 {
        failures.push(format!("slope error {worst_slope:.1e}"));
    }
    outcome(
        failures.is_empty(),
        format!(
            "round trips g {worst_g:.1e} m {worst_m:.1e}; 500 monotonicity checks; 100 dominated pairs; slope error {worst_slope:.1e} {}",
            failures.join("; ")
        ),
    )
}

/// Byte-identical experiment output across thread counts.
fn criterion_8() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "seed = 8\nn_grid = [100, 200, 400]\nreplicates = 3\ntest_size = 100\n\
               estimators = [\"cart\", \"honest_cart\", \"forest\", \"oracle_partition\"]\n[fit]\nn_trees = 5\n\
               [model]\ndimension = 6\nsparsity = 3\ncomponent_kind = \"square\"\ncoefficient = 1.5\n\
               noise_variance = 0.1\ndistribution = \"uniform\"\n";
    std::fs::write(dir.path().join("cfg.toml"), cfg).unwrap();
    let run = |threads: &str, out: &str| {
        let status = Command::new(env!("CARGO_BIN_EXE_ala"))
            .args(["experiment", "--config", "cfg.toml", "--out", out])
            .env("THREADS", threads)
            .current_dir(dir.path())
            .status()
            .unwrap();
        assert!(status.success());
        std::fs::read(dir.path().join(out)).unwrap()
    };
    let one = run("1", "one.csv");
    let four = run("4", "four.csv");
    outcome(one == four, format!("THREADS=1 vs THREADS=4: {} bytes, identical {}", one.len(), one == four))
}

fn main() -> ExitCode {
    let criteria: [(u32, fn() -> Outcome); 8] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
    ];
    let mut failed = 0;
    for (id, check) in criteria {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {verdict} {} [{:.1}s]", o.detail, start.elapsed().as_secs_f64());
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criteria failed");
        ExitCode::FAILURE
    }
}
