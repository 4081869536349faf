//! Results CSV, long-format plot data and a static log-log SVG.

use std::fmt::Write as _;
use std::io::{Read, Write};

use ala_core::bounds::{
    additive_lower_bound_general, additive_lower_bound_sparse, boolean_lower_bound_general,
    boolean_lower_bound_sparse, linear_lower_bound_cube, sparse_additive_upper_bound, Formula,
};
use ala_core::models::{AdditiveModel, ComponentKind, CovariateDistribution};

use crate::config::EstimatorId;
use crate::harness::{fit_rate, summarize, ExperimentRecord};

pub const RESULTS_HEADER: [&str; 6] = ["estimator", "n", "replicate", "seed_used", "test_mse", "fit_seconds"];
pub const PLOT_HEADER: [&str; 5] = ["series", "kind", "n", "value", "std_error"];

pub fn write_results<W: Write>(records: &[ExperimentRecord], out: W) -> anyhow::Result<()> {
    anyhow::ensure!(!records.is_empty(), "no records to write");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULTS_HEADER)?;
    for r in records {
        w.write_record([
            r.estimator.as_str().to_string(),
            r.n.to_string(),
            r.replicate.to_string(),
            r.seed_used.to_string(),
            r.test_mse.to_string(),
            r.fit_seconds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_results<R: Read>(input: R) -> anyhow::Result<Vec<ExperimentRecord>> {
    let mut r = csv::Reader::from_reader(input);
    anyhow::ensure!(
        r.headers()?.iter().eq(RESULTS_HEADER),
        "expected header {}",
        RESULTS_HEADER.join(",")
    );
    let mut records = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let ctx = || format!("results line {}", i + 2);
        let field = |k: usize| rec.get(k).ok_or_else(|| anyhow::anyhow!("{}: missing column {}", ctx(), RESULTS_HEADER[k]));
        records.push(ExperimentRecord {
            estimator: field(0)?.parse().map_err(|e: String| anyhow::anyhow!("{}: {e}", ctx()))?,
            n: field(1)?.parse().map_err(|e| anyhow::anyhow!("{}: n: {e}", ctx()))?,
            replicate: field(2)?.parse().map_err(|e| anyhow::anyhow!("{}: replicate: {e}", ctx()))?,
            seed_used: field(3)?.parse().map_err(|e| anyhow::anyhow!("{}: seed_used: {e}", ctx()))?,
            test_mse: field(4)?.parse().map_err(|e| anyhow::anyhow!("{}: test_mse: {e}", ctx()))?,
            fit_seconds: field(5)?.parse().map_err(|e| anyhow::anyhow!("{}: fit_seconds: {e}", ctx()))?,
        });
    }
    Ok(records)
}

/// A theoretical curve evaluated on the experiment's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundSeries {
    pub formula: Formula,
    pub points: Vec<(usize, f64)>,
}

/// Every bound formula that applies to `model`, evaluated at each `n`.
pub fn bound_series(model: &AdditiveModel, ns: &[usize]) -> anyhow::Result<Vec<BoundSeries>> {
    let sigma2 = model.noise_variance();
    let s = model.sparsity();
    if sigma2 <= 0.0 || s == 0 {
        return Ok(Vec::new());
    }
    let comps = model.components();
    let beta0 = comps.iter().filter(|c| !c.is_null()).map(|c| c.coefficient.abs()).fold(f64::INFINITY, f64::min);
    let linear = comps.iter().all(|c| matches!(c.kind, ComponentKind::Linear | ComponentKind::Zero));
    let betas: Vec<f64> = comps.iter().map(|c| if c.is_null() { 0.0 } else { c.coefficient.abs() }).collect();
    let betas = &betas;
    let mut series: Vec<(Formula, Box<dyn Fn(usize) -> anyhow::Result<f64> + '_>)> = Vec::new();
    match model.distribution() {
        CovariateDistribution::UniformCube { .. } => {
            let q = 1.0;
            if linear {
                series.push((
                    Formula::AdditiveLowerGeneral,
                    Box::new(move |n| Ok(additive_lower_bound_general(betas, q, 1.0, sigma2, n)?.value)),
                ));
                series.push((
                    Formula::AdditiveLowerSparse,
                    Box::new(move |n| Ok(additive_lower_bound_sparse(s, beta0, q, 1.0, sigma2, n)?.value)),
                ));
                series.push((
                    Formula::LinearLowerCube,
                    Box::new(move |n| Ok(linear_lower_bound_cube(s, beta0, 0.0, sigma2, n)?.value)),
                ));
            }
            let beta_max = model.beta_max();
            series.push((
                Formula::SparseAdditiveUpper,
                Box::new(move |n| Ok(sparse_additive_upper_bound(s, beta_max, q, sigma2, n)?.bound.value)),
            ));
        }
        CovariateDistribution::BooleanProduct { probs } => {
            if linear {
                series.push((
                    Formula::BooleanLowerGeneral,
                    Box::new(move |n| Ok(boolean_lower_bound_general(betas, probs, sigma2, n)?.value)),
                ));
                let pi = probs[0];
                if s >= 2 && probs.iter().all(|&p| p == pi) {
                    series.push((
                        Formula::BooleanLowerSparse,
                        Box::new(move |n| Ok(boolean_lower_bound_sparse(s, beta0, pi, sigma2, n)?.value)),
                    ));
                }
            }
        }
    }
    series
        .into_iter()
        .map(|(formula, f)| {
            let points = ns.iter().map(|&n| f(n).map(|v| (n, v))).collect::<anyhow::Result<_>>()?;
            Ok(BoundSeries { formula, points })
        })
        .collect()
}

fn estimators_in(records: &[ExperimentRecord]) -> Vec<EstimatorId> {
    let mut ids: Vec<EstimatorId> = records.iter().map(|r| r.estimator).collect();
    ids.sort_by_key(|e| e.as_str());
    ids.dedup();
    ids
}

/// Long format: one row per (series, n). Empirical rows carry the replicate
/// mean and its standard error; bound rows leave `std_error` empty.
pub fn write_plot_data<W: Write>(records: &[ExperimentRecord], bounds: &[BoundSeries], out: W) -> anyhow::Result<()> {
    anyhow::ensure!(!records.is_empty(), "no records to plot");
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PLOT_HEADER)?;
    for id in estimators_in(records) {
        for (n, mean, se) in summarize(records, id) {
            w.write_record([id.as_str().to_string(), "empirical".into(), n.to_string(), mean.to_string(), se.to_string()])?;
        }
    }
    for b in bounds {
        for &(n, v) in &b.points {
            w.write_record([b.formula.id().to_string(), "bound".into(), n.to_string(), v.to_string(), String::new()])?;
        }
    }
    w.flush()?;
    Ok(())
}

const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"];

/// Log-log scaling plot with fitted slopes in the legend.
pub fn render_svg(records: &[ExperimentRecord], bounds: &[BoundSeries]) -> anyhow::Result<String> {
    anyhow::ensure!(!records.is_empty(), "no records to plot");
    let (w, h, left, right, top, bottom) = (760.0, 500.0, 70.0, 230.0, 30.0, 50.0);
    let empirical: Vec<(EstimatorId, Vec<(usize, f64, f64)>)> =
        estimators_in(records).into_iter().map(|id| (id, summarize(records, id))).collect();
    let all = empirical
        .iter()
        .flat_map(|(_, pts)| pts.iter().map(|p| (p.0, p.1)))
        .chain(bounds.iter().flat_map(|b| b.points.iter().copied()))
        .filter(|&(n, v)| n > 0 && v > 0.0);
    let (mut xmin, mut xmax, mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (n, v) in all {
        let (x, y) = ((n as f64).log2(), v.log2());
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        ymin = ymin.min(y);
        ymax = ymax.max(y);
    }
    anyhow::ensure!(xmin.is_finite() && ymin.is_finite(), "nothing positive to plot");
    if xmax - xmin < 1e-9 {
        xmin -= 0.5;
        xmax += 0.5;
    }
    if ymax - ymin < 1e-9 {
        ymin -= 0.5;
        ymax += 0.5;
    }
    let px = |n: f64| left + (n.log2() - xmin) / (xmax - xmin) * (w - left - right);
    let py = |v: f64| top + (ymax - v.log2()) / (ymax - ymin) * (h - top - bottom);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
    let (x0, x1, y0, y1) = (left, w - right, top, h - bottom);
    let _ = writeln!(svg, r#"<rect x="{x0}" y="{y0}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y1 - y0);
    for k in (xmin.ceil() as i64)..=(xmax.floor() as i64) {
        let x = px(2f64.powi(k as i32));
        let _ = writeln!(svg, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">2^{k}</text>"#, y1 + 18.0);
    }
    for k in (ymin.ceil() as i64)..=(ymax.floor() as i64) {
        let y = py(2f64.powi(k as i32));
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">2^{k}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">n</text>"#, (x0 + x1) / 2.0, h - 10.0);
    let _ = writeln!(svg, r#"<text x="16" y="{:.1}" transform="rotate(-90 16 {:.1})" text-anchor="middle">test MSE</text>"#, (y0 + y1) / 2.0, (y0 + y1) / 2.0);

    let mut legend = Vec::new();
    for (i, (id, pts)) in empirical.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let path: Vec<String> = pts.iter().filter(|p| p.1 > 0.0).map(|p| format!("{:.1},{:.1}", px(p.0 as f64), py(p.1))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, path.join(" "));
        for p in pts.iter().filter(|p| p.1 > 0.0) {
            let _ = writeln!(svg, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#, px(p.0 as f64), py(p.1));
        }
        let label = match fit_rate(&pts.iter().map(|p| (p.0 as f64, p.1)).collect::<Vec<_>>()) {
            Ok(fit) => format!("{id} (slope {:.3})", fit.slope),
            Err(_) => id.to_string(),
        };
        legend.push((label, color, false));
    }
    for (i, b) in bounds.iter().enumerate() {
        let color = PALETTE[(empirical.len() + i) % PALETTE.len()];
        let path: Vec<String> =
            b.points.iter().filter(|p| p.1 > 0.0).map(|p| format!("{:.1},{:.1}", px(p.0 as f64), py(p.1))).collect();
        if path.is_empty() {
            continue;
        }
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-dasharray="6 4"/>"#, path.join(" "));
        legend.push((b.formula.id().to_string(), color, true));
    }
    for (i, (label, color, dashed)) in legend.iter().enumerate() {
        let y = top + 10.0 + 18.0 * i as f64;
        let dash = if *dashed { r#" stroke-dasharray="6 4""# } else { r#" stroke-width="2""# };
        let _ = writeln!(svg, r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="{color}"{dash}/>"#, x1 + 12.0, x1 + 36.0);
        let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}">{label}</text>"#, x1 + 42.0, y + 4.0);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}
