//! Monte Carlo risk estimation, the scaling experiment and log-log rate fits.

use std::time::Instant;

use ala_core::bounds::sparse_additive_upper_bound;
use ala_core::geometry::{oracle_tessellation, Partition};
use ala_core::models::AdditiveModel;
use ala_core::rng::{derive_path, derive_seed, stream};
use ala_core::trees::{fit_cart, fit_forest, honest_relabel, partition_estimator, Estimator, FitParams};
use rayon::prelude::*;

use crate::config::{EstimatorId, ExperimentConfig};

/// Stream tags under a record seed.
const STRUCTURE_STREAM: u64 = 0;
const HONEST_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;
const FOREST_STREAM: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskEstimate {
    pub mse: f64,
    pub std_error: f64,
}

/// Mean squared distance to the noiseless `f` over `test_size` fresh covariates.
pub fn estimate_risk(est: &Estimator, model: &AdditiveModel, test_size: usize, seed: u64) -> anyhow::Result<RiskEstimate> {
    anyhow::ensure!(test_size >= 1, "test_size must be >= 1");
    anyhow::ensure!(
        est.dim() == model.dim(),
        "estimator dimension {} does not match model dimension {}",
        est.dim(),
        model.dim()
    );
    let dist = model.distribution();
    let mut rng = stream(seed);
    let mut x = vec![0.0; model.dim()];
    // Welford
    let (mut mean, mut m2) = (0.0f64, 0.0f64);
    for i in 0..test_size {
        dist.sample_point(&mut rng, &mut x);
        let err = est.predict(&x)? - model.eval_f(&x)?;
        let sq = err * err;
        let delta = sq - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (sq - mean);
    }
    let std_error = if test_size > 1 { (m2 / (test_size - 1) as f64 / test_size as f64).sqrt() } else { 0.0 };
    Ok(RiskEstimate { mse: mean, std_error })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentRecord {
    pub estimator: EstimatorId,
    pub n: usize,
    pub replicate: usize,
    pub seed_used: u64,
    pub test_mse: f64,
    pub fit_seconds: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses rayon's default.
    pub threads: Option<usize>,
    /// Record wall-clock fit times. Off by default so output is reproducible.
    pub timing: bool,
}

/// Per-record seed for `(estimator, n, replicate)`.
pub fn record_seed(seed: u64, estimator: EstimatorId, n: usize, replicate: usize) -> u64 {
    derive_path(seed, &[estimator.seed_tag(), n as u64, replicate as u64])
}

/// Side length of the oracle tessellation at sample size `n`.
pub fn oracle_side(model: &AdditiveModel, n: usize) -> anyhow::Result<f64> {
    let q_sup = model.distribution().q_sup().ok_or_else(|| anyhow::anyhow!("oracle_partition needs a density"))?;
    Ok(sparse_additive_upper_bound(model.sparsity(), model.beta_max(), q_sup, model.noise_variance(), n)?.side_target)
}

pub fn oracle_partition(model: &AdditiveModel, n: usize) -> anyhow::Result<Partition> {
    Ok(oracle_tessellation(&model.support(), oracle_side(model, n)?, model.dim())?)
}

/// Fits one estimator on fresh data drawn from `record_seed`'s streams.
pub fn fit_estimator(
    id: EstimatorId,
    model: &AdditiveModel,
    params: &FitParams,
    n: usize,
    seed: u64,
) -> anyhow::Result<Estimator> {
    let structure = model.sample_dataset(n, derive_seed(seed, STRUCTURE_STREAM));
    Ok(match id {
        EstimatorId::Cart => Estimator::Cart { dim: model.dim(), tree: fit_cart(&structure, params)? },
        EstimatorId::HonestCart => {
            let tree = fit_cart(&structure, params)?;
            let honest = model.sample_dataset(n, derive_seed(seed, HONEST_STREAM));
            honest_relabel(&tree, &honest)?
        }
        EstimatorId::Forest => fit_forest(&structure, params, derive_seed(seed, FOREST_STREAM))?,
        EstimatorId::OraclePartition => partition_estimator(&oracle_partition(model, n)?, &structure)?,
    })
}

fn run_one(cfg: &ExperimentConfig, id: EstimatorId, n: usize, replicate: usize, timing: bool) -> anyhow::Result<ExperimentRecord> {
    let seed = record_seed(cfg.seed, id, n, replicate);
    let start = Instant::now();
    let est = fit_estimator(id, &cfg.model, &cfg.fit, n, seed)?;
    let fit_seconds = if timing { start.elapsed().as_secs_f64() } else { 0.0 };
    let risk = estimate_risk(&est, &cfg.model, cfg.test_size, derive_seed(seed, TEST_STREAM))?;
    Ok(ExperimentRecord { estimator: id, n, replicate, seed_used: seed, test_mse: risk.mse, fit_seconds })
}

/// Runs every `(estimator, n, replicate)` task and returns records sorted by
/// estimator id, then `n`, then replicate.
pub fn run_experiment(cfg: &ExperimentConfig, opts: RunOptions) -> anyhow::Result<Vec<ExperimentRecord>> {
    let tasks: Vec<(EstimatorId, usize, usize)> = cfg
        .estimators
        .iter()
        .flat_map(|&e| cfg.n_grid.iter().flat_map(move |&n| (0..cfg.replicates).map(move |r| (e, n, r))))
        .collect();
    // largest fits first keeps the pool busy at the tail
    let mut order: Vec<usize> = (0..tasks.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(tasks[i].1));
    let work = || {
        order
            .par_iter()
            .map(|&i| {
                let (e, n, r) = tasks[i];
                run_one(cfg, e, n, r, opts.timing)
            })
            .collect::<anyhow::Result<Vec<_>>>()
    };
    let mut records = match opts.threads {
        Some(t) => rayon::ThreadPoolBuilder::new().num_threads(t.max(1)).build()?.install(work)?,
        None => work()?,
    };
    records.sort_by(|a, b| {
        (a.estimator.as_str(), a.n, a.replicate).cmp(&(b.estimator.as_str(), b.n, b.replicate))
    });
    Ok(records)
}

/// Mean and standard error of `test_mse` per `n` for one estimator.
pub fn summarize(records: &[ExperimentRecord], estimator: EstimatorId) -> Vec<(usize, f64, f64)> {
    let mut by_n: std::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    for r in records.iter().filter(|r| r.estimator == estimator) {
        by_n.entry(r.n).or_default().push(r.test_mse);
    }
    by_n.into_iter()
        .map(|(n, v)| {
            let k = v.len() as f64;
            let mean = v.iter().sum::<f64>() / k;
            let se = if v.len() > 1 {
                (v.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (k - 1.0) / k).sqrt()
            } else {
                0.0
            };
            (n, mean, se)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
}

/// OLS of `log2(mean mse)` on `log2(n)`; replicates at the same `n` are averaged first.
pub fn fit_rate(points: &[(f64, f64)]) -> anyhow::Result<RateFit> {
    let mut grouped: Vec<(f64, f64, usize)> = Vec::new();
    for &(n, mse) in points {
        anyhow::ensure!(n > 0.0 && n.is_finite(), "n must be positive, got {n}");
        anyhow::ensure!(mse > 0.0 && mse.is_finite(), "mse must be positive, got {mse}");
        match grouped.iter_mut().find(|g| g.0 == n) {
            Some(g) => {
                g.1 += mse;
                g.2 += 1;
            }
            None => grouped.push((n, mse, 1)),
        }
    }
    anyhow::ensure!(grouped.len() >= 3, "need at least 3 distinct n values, got {}", grouped.len());
    let xs: Vec<f64> = grouped.iter().map(|g| g.0.log2()).collect();
    let ys: Vec<f64> = grouped.iter().map(|g| (g.1 / g.2 as f64).log2()).collect();
    let k = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / k, ys.iter().sum::<f64>() / k);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = (rss / (k - 2.0) / sxx).sqrt();
    Ok(RateFit { slope, intercept, stderr })
}
