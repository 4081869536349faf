use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use ala_core::bounds::{
    additive_lower_bound_general, additive_lower_bound_sparse, boolean_lower_bound_general,
    boolean_lower_bound_sparse, linear_lower_bound_cube, sparse_additive_upper_bound, BoundResult, Formula,
};
use ala_core::trees::{fit_cart, fit_forest, honest_relabel, partition_estimator, Estimator, FitParams};
use ala_lab::config::{EstimatorId, ExperimentConfig};
use ala_lab::formats;
use ala_lab::harness::{fit_rate, run_experiment, RunOptions};
use ala_lab::output;
use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "ala", version, about = "Leaf-only-averaging trees: data, fits, bounds and scaling experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset from the [model] table of a config file.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Fit an estimator and write it in the estimator text format.
    Fit {
        #[arg(long)]
        train: PathBuf,
        #[arg(long, value_enum)]
        estimator: FitKind,
        /// Relabeling sample for honest_cart.
        #[arg(long)]
        honest: Option<PathBuf>,
        /// Partition file for partition_ala.
        #[arg(long)]
        partition: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        min_samples_leaf: usize,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        mtry: Option<usize>,
        #[arg(long, default_value_t = 100)]
        n_trees: usize,
        #[arg(long)]
        no_bootstrap: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Predict with a fitted estimator, one value per dataset row.
    Predict {
        #[arg(long)]
        estimator: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Print theoretical bounds as CSV: formula,parameters,value,optimizer_d,clamped.
    Bounds {
        /// Sparsity.
        #[arg(long)]
        s: usize,
        /// Smallest active coefficient (lower bounds).
        #[arg(long)]
        beta0: f64,
        /// Largest component sup-norm (upper bound); defaults to beta0.
        #[arg(long)]
        beta_max: Option<f64>,
        #[arg(long)]
        sigma2: f64,
        /// Sample sizes, comma separated.
        #[arg(long, value_delimiter = ',', required = true)]
        n: Vec<usize>,
        /// Ambient dimension for the general formulas; defaults to s.
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value_t = 0.5)]
        pi: f64,
        #[arg(long, default_value_t = 1.0)]
        q_min: f64,
        #[arg(long, default_value_t = 1.0)]
        q_sup: f64,
        #[arg(long, default_value_t = 1.0)]
        mu: f64,
        /// Marginal differential entropy in bits.
        #[arg(long, default_value_t = 0.0)]
        h0: f64,
        /// Restrict to these formula ids.
        #[arg(long, value_delimiter = ',')]
        formula: Vec<String>,
    },
    /// Run the scaling experiment described by a config file.
    Experiment {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Record wall-clock fit times (makes the CSV non-reproducible).
        #[arg(long)]
        timing: bool,
    },
    /// Fit the log-log slope of mean test MSE against n.
    Rate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        estimator: EstimatorId,
    },
    /// Long-format plot data (.csv) or a log-log plot (.svg).
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Overlay the bounds that apply to this config's model.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FitKind {
    Cart,
    HonestCart,
    Forest,
    PartitionAla,
}

fn output(path: Option<&Path>) -> anyhow::Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("cannot create {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn open(path: &Path) -> anyhow::Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn read_text(path: &Path) -> anyhow::Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn threads_from_env() -> anyhow::Result<Option<usize>> {
    match std::env::var("THREADS") {
        Ok(v) => {
            let t: usize = v.trim().parse().with_context(|| format!("THREADS={v:?} is not a count"))?;
            anyhow::ensure!(t >= 1, "THREADS must be >= 1");
            Ok(Some(t))
        }
        Err(_) => Ok(None),
    }
}

fn bounds_rows(cmd: &Command) -> anyhow::Result<Vec<(Formula, String, BoundResult)>> {
    let Command::Bounds { s, beta0, beta_max, sigma2, n, d, pi, q_min, q_sup, mu, h0, formula } = cmd else {
        unreachable!()
    };
    let (s, beta0, sigma2, pi) = (*s, *beta0, *sigma2, *pi);
    let d = d.unwrap_or(s);
    anyhow::ensure!(d >= s, "--d must be >= --s");
    let beta_max = beta_max.unwrap_or(beta0);
    let wanted: Vec<Formula> = if formula.is_empty() {
        Formula::ALL.to_vec()
    } else {
        formula
            .iter()
            .map(|f| Formula::ALL.into_iter().find(|x| x.id() == f).with_context(|| format!("unknown formula {f:?}")))
            .collect::<anyhow::Result<_>>()?
    };
    let mut beta = vec![beta0; s];
    beta.resize(d, 0.0);
    let probs = vec![pi; d];
    let mut rows = Vec::new();
    for &n in n {
        for &f in &wanted {
            let (params, result) = match f {
                Formula::AdditiveLowerGeneral => (
                    format!("d={d};s={s};beta0={beta0};q_min={q_min};mu={mu};sigma2={sigma2};n={n}"),
                    additive_lower_bound_general(&beta, *q_min, *mu, sigma2, n),
                ),
                Formula::AdditiveLowerSparse => (
                    format!("s={s};beta0={beta0};q_min={q_min};mu={mu};sigma2={sigma2};n={n}"),
                    additive_lower_bound_sparse(s, beta0, *q_min, *mu, sigma2, n),
                ),
                Formula::SparseAdditiveUpper => (
                    format!("s={s};beta_max={beta_max};q_sup={q_sup};sigma2={sigma2};n={n}"),
                    sparse_additive_upper_bound(s, beta_max, *q_sup, sigma2, n).map(|t| t.bound),
                ),
                Formula::LinearLowerCube => (
                    format!("s={s};beta0={beta0};h0={h0};sigma2={sigma2};n={n}"),
                    linear_lower_bound_cube(s, beta0, *h0, sigma2, n),
                ),
                Formula::BooleanLowerGeneral => (
                    format!("d={d};s={s};beta0={beta0};pi={pi};sigma2={sigma2};n={n}"),
                    boolean_lower_bound_general(&beta, &probs, sigma2, n),
                ),
                Formula::BooleanLowerSparse => (
                    format!("s={s};beta0={beta0};pi={pi};sigma2={sigma2};n={n}"),
                    boolean_lower_bound_sparse(s, beta0, pi, sigma2, n),
                ),
            };
            match result {
                Ok(r) => rows.push((f, params, r)),
                Err(e) if formula.is_empty() => eprintln!("skipping {f}: {e}"),
                Err(e) => bail!("{f}: {e}"),
            }
        }
    }
    Ok(rows)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Gen { config, n, seed, out } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let data = cfg.model.sample_dataset(*n, *seed);
            formats::write_dataset(&data, output(out.as_deref())?)?;
        }
        Command::Fit {
            train,
            estimator,
            honest,
            partition,
            min_samples_leaf,
            max_depth,
            mtry,
            n_trees,
            no_bootstrap,
            seed,
            out,
        } => {
            let train = formats::read_dataset(open(train)?)?;
            let params = FitParams {
                min_samples_leaf: *min_samples_leaf,
                max_depth: *max_depth,
                mtry: *mtry,
                n_trees: *n_trees,
                bootstrap: !no_bootstrap,
            };
            let est = match estimator {
                FitKind::Cart => Estimator::Cart { dim: train.dim(), tree: fit_cart(&train, &params)? },
                FitKind::HonestCart => {
                    let path = honest.as_deref().context("honest_cart needs --honest <csv>")?;
                    let honest = formats::read_dataset(open(path)?)?;
                    honest_relabel(&fit_cart(&train, &params)?, &honest)?
                }
                FitKind::Forest => fit_forest(&train, &params, *seed)?,
                FitKind::PartitionAla => {
                    let path = partition.as_deref().context("partition_ala needs --partition <file>")?;
                    partition_estimator(&formats::read_partition(&read_text(path)?)?, &train)?
                }
            };
            let mut w = output(out.as_deref())?;
            w.write_all(formats::write_estimator(&est).as_bytes())?;
            w.flush()?;
        }
        Command::Predict { estimator, data } => {
            let est = formats::read_estimator(&read_text(estimator)?)?;
            let data = formats::read_dataset(open(data)?)?;
            let mut w = output(None)?;
            for (x, _) in data.rows() {
                writeln!(w, "{}", est.predict(x)?)?;
            }
            w.flush()?;
        }
        cmd @ Command::Bounds { .. } => {
            let rows = bounds_rows(cmd)?;
            let mut w = csv::Writer::from_writer(io::stdout().lock());
            w.write_record(["formula", "parameters", "value", "optimizer_d", "clamped"])?;
            for (f, params, r) in rows {
                let d = r.optimizer_d.map(|d| d.to_string()).unwrap_or_default();
                w.write_record([f.id().to_string(), params, r.value.to_string(), d, r.clamped.to_string()])?;
            }
            w.flush()?;
        }
        Command::Experiment { config, out, timing } => {
            let cfg = ExperimentConfig::from_file(config)?;
            let records = run_experiment(&cfg, RunOptions { threads: threads_from_env()?, timing: *timing })?;
            output::write_results(&records, output(Some(out))?)?;
        }
        Command::Rate { input, estimator } => {
            let records = output::read_results(open(input)?)?;
            let points: Vec<(f64, f64)> =
                records.iter().filter(|r| r.estimator == *estimator).map(|r| (r.n as f64, r.test_mse)).collect();
            anyhow::ensure!(!points.is_empty(), "no records for estimator {estimator}");
            let fit = fit_rate(&points)?;
            println!("estimator,slope,intercept,stderr");
            println!("{estimator},{},{},{}", fit.slope, fit.intercept, fit.stderr);
        }
        Command::Plotdata { input, out, config } => {
            let records = output::read_results(open(input)?)?;
            let bounds = match config {
                Some(c) => {
                    let cfg = ExperimentConfig::from_file(c)?;
                    let mut ns: Vec<usize> = records.iter().map(|r| r.n).collect();
                    ns.sort_unstable();
                    ns.dedup();
                    output::bound_series(&cfg.model, &ns)?
                }
                None => Vec::new(),
            };
            let svg = out.extension().is_some_and(|e| e.eq_ignore_ascii_case("svg"));
            let mut w = output(Some(out))?;
            if svg {
                w.write_all(output::render_svg(&records, &bounds)?.as_bytes())?;
            } else {
                output::write_plot_data(&records, &bounds, &mut w)?;
            }
            w.flush()?;
        }
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}
