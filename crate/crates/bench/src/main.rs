use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use ehmc::diagnostics::ks_vs_cdf;
use ehmc::{
    learn_batch_distribution, run_sampler, tune_step_size, BatchDistribution, BatchLearnConfig, Chain, MassSpec,
    RunReport, RunStats, SamplerConfig, SamplerKind, TargetModel, TuneConfig,
};
use ehmc_bench::config::{ModelArgs, RunArgs};
use ehmc_bench::seed::cell_rng;
use ehmc_bench::summary::{observations_from_csv, summarize, write_curves, write_summary};
use ehmc_bench::{output, run_experiment, AnyModel, Format};
use serde_json::json;
use statrs::distribution::{ContinuousCDF, Normal};

#[derive(Parser)]
#[command(name = "ehmc-bench", version, about = "Benchmark harness for empirical and partially refreshed HMC")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Full grid: warmup, batch learning, production and metrics per cell.
    Run(RunArgs),
    /// Mean and sd over replications, plus median curves against p0.
    Summarize {
        /// Results tables written by `run`.
        #[arg(required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Median curves against p0.
        #[arg(long)]
        curves: Option<PathBuf>,
    },
    /// Step-size warmup only.
    Tune {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.8)]
        p0: f64,
        #[arg(long, default_value_t = 2000)]
        warmup: usize,
        #[arg(long, default_value_t = 10)]
        l0: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Learn the batch-length distribution at a given step size.
    LearnBatches {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 1000)]
        batch_iters: usize,
        #[arg(long, default_value_t = 10)]
        l0: usize,
        #[arg(long, default_value_t = ehmc::uturn::DEFAULT_MAX_BATCH)]
        max_batch: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Start point, comma separated [default: origin].
        #[arg(long, value_delimiter = ',')]
        theta0: Option<Vec<f64>>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Production chain from a step size and a batch-length file.
    Sample {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        eps: f64,
        /// Batch lengths from `learn-batches` (eHMC and prHMC).
        #[arg(long)]
        batches: Option<PathBuf>,
        #[arg(long, default_value = "ehmc")]
        sampler: SamplerKind,
        #[arg(long, default_value_t = 10_000)]
        iters: usize,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        #[arg(long, default_value_t = 10)]
        l_fixed: usize,
        #[arg(long, default_value_t = ehmc::samplers::DEFAULT_PATH_DIVISOR)]
        path_divisor: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_delimiter = ',')]
        theta0: Option<Vec<f64>>,
        /// Chain CSV; the run report goes to stdout.
        #[arg(long)]
        out: PathBuf,
    },
    /// Metrics of a stored chain.
    Report {
        chain: PathBuf,
        /// Gradient calls spent producing the chain.
        #[arg(long)]
        grad_calls: u64,
        /// Compare each column with a standard normal.
        #[arg(long)]
        ks_normal: bool,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Write a model's data set (loaded or synthetic) as CSV.
    DumpData {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn start_point(model: &AnyModel, theta0: Option<Vec<f64>>) -> Vec<f64> {
    theta0.unwrap_or_else(|| model.initial_point())
}

fn run(args: RunArgs) -> Result<bool> {
    let args = args.with_config_file()?;
    let spec = args.spec()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(args.jobs.unwrap_or(0)).build()?;
    let exp = pool.install(|| run_experiment(&spec))?;
    let mut w = sink(args.out.as_deref())?;
    output::write(&exp, args.format.unwrap_or(Format::Csv), &mut w)?;
    w.flush()?;
    let failed = exp.rows.iter().filter(|r| !r.ok).count();
    if failed > 0 {
        log::error!("{failed} of {} cells failed", exp.rows.len());
    }
    Ok(failed == 0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match dispatch(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            log::error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Run(args) => return run(args),
        Command::Summarize { input, out, curves } => {
            let mut obs = Vec::new();
            for p in &input {
                obs.extend(observations_from_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?);
            }
            let (table, curve_rows) = summarize(&obs)?;
            write_summary(&table, sink(out.as_deref())?)?;
            if let Some(p) = curves {
                write_curves(&curve_rows, sink(Some(&p))?)?;
            }
        }
        Command::Tune { model, p0, warmup, l0, seed } => {
            let m = AnyModel::build(&model.spec()?)?;
            let target = TargetModel::new(&m);
            let mut cfg = TuneConfig::new(p0, warmup);
            cfg.l_warmup = l0;
            let (mut rng, _) = cell_rng(seed, "tune");
            let t = tune_step_size(&target, &MassSpec::identity(), &m.initial_point(), &cfg, &mut rng)?;
            let doc = json!({
                "eps": t.eps,
                "warmup_mean_accept_prob": t.mean_accept_prob,
                "divergences": t.divergences,
                "grad_calls": target.grad_calls(),
                "theta": t.theta,
            });
            println!("{}", serde_json::to_string_pretty(&doc)?);
        }
        Command::LearnBatches { model, eps, batch_iters, l0, max_batch, seed, theta0, out } => {
            let m = AnyModel::build(&model.spec()?)?;
            let target = TargetModel::new(&m);
            let mut cfg = BatchLearnConfig::new(eps);
            cfg.iters = batch_iters;
            cfg.l0 = l0;
            cfg.max_batch = max_batch;
            let (mut rng, _) = cell_rng(seed, "learn-batches");
            let theta0 = start_point(&m, theta0);
            let learned = learn_batch_distribution(&target, &MassSpec::identity(), &theta0, &cfg, &mut rng)?;
            log::info!(
                "mean batch {:.1}, median {}, acceptance {:.3}, capped {}, divergent {}",
                learned.distribution.mean(),
                learned.distribution.median(),
                learned.accept_rate,
                learned.capped,
                learned.divergent
            );
            let mut w = sink(out.as_deref())?;
            learned.distribution.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Sample { model, eps, batches, sampler, iters, eta, l_fixed, path_divisor, seed, theta0, out } => {
            let m = AnyModel::build(&model.spec()?)?;
            let target = TargetModel::new(&m);
            let dist = match &batches {
                Some(p) => Some(BatchDistribution::read_csv(File::open(p).with_context(|| format!("opening {}", p.display()))?)?),
                None => None,
            };
            let mut cfg = SamplerConfig::new(sampler, eps, iters);
            cfg.eta = eta;
            cfg.l_fixed = l_fixed;
            cfg.path_divisor = path_divisor;
            cfg.seed = seed;
            let (mut rng, _) = cell_rng(seed, "sample");
            let theta0 = start_point(&m, theta0);
            let run = run_sampler(&target, &MassSpec::identity(), &theta0, dist.as_ref(), &cfg, &mut rng)?;
            let mut w = sink(Some(&out))?;
            run.chain.write_csv(&mut w)?;
            w.flush()?;
            println!("{}", RunReport::from_run(&run.chain, &run.stats)?.to_json());
        }
        Command::Report { chain, grad_calls, ks_normal, format } => {
            let c: Chain<f64> = Chain::read_csv(File::open(&chain).with_context(|| format!("opening {}", chain.display()))?)?;
            // A stored chain carries no acceptance record. Count moves instead and leave the
            // mean acceptance probability undefined (null).
            let moves = (1..c.len()).filter(|&i| c.row(i) != c.row(i - 1)).count();
            let stats = RunStats {
                iterations: c.len().saturating_sub(1),
                grad_calls,
                accepted: moves,
                accept_prob_sum: f64::NAN,
                ..RunStats::default()
            };
            let mut report = RunReport::from_run(&c, &stats)?;
            if ks_normal {
                let n = Normal::standard();
                let worst = (0..c.dim())
                    .map(|k| ks_vs_cdf(&c.column(k), |x| n.cdf(x)))
                    .try_fold(0.0f64, |acc, ks| ks.map(|v| acc.max(v)))?;
                report = report.with_max_ks(worst);
            }
            match format {
                Format::Json => println!("{}", report.to_json()),
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(io::stdout().lock());
                    w.write_record(RunReport::CSV_HEADER)?;
                    w.write_record(report.csv_row())?;
                    w.flush()?;
                }
            }
        }
        Command::DumpData { model, out } => {
            let m = AnyModel::build(&model.spec()?)?;
            let mut w = sink(out.as_deref())?;
            match &m {
                AnyModel::Mvn(_) => anyhow::bail!("the mvn model has no data set"),
                AnyModel::Logistic(l) => l.data().write_csv(&mut w)?,
                AnyModel::Sv(s) => s.data().write_csv(&mut w)?,
                AnyModel::Irt(i) => i.data().write_csv(&mut w)?,
            }
            w.flush()?;
        }
    }
    Ok(true)
}
