//! Grid runner: warmup, batch learning and production sampling for every
//! (p0, replication, sampler) cell, with per-phase gradient accounting.

use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ehmc::diagnostics::{esjd, ess_per_component};
use ehmc::{
    learn_batch_distribution, max_ks, run_sampler, tune_step_size, BatchDistribution, BatchLearnConfig, Chain,
    KsReference, MassSpec, RunReport, SamplerConfig, SamplerKind, TargetModel, TuneConfig,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::model::{AnyModel, ModelSpec};
use crate::seed::cell_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum MassChoice {
    Identity,
    Diag,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub model: ModelSpec,
    pub samplers: Vec<SamplerKind>,
    pub p0: Vec<f64>,
    pub warmup: usize,
    pub batch_iters: usize,
    pub iters: usize,
    /// Production gradient budget per cell; stops a chain early when spent.
    pub grad_budget: Option<u64>,
    pub reps: usize,
    pub seed: u64,
    pub eta: f64,
    pub l0: usize,
    /// Baseline path length; defaults to the median learned batch.
    pub l_fixed: Option<usize>,
    pub max_batch: usize,
    pub path_divisor: usize,
    pub mass: MassChoice,
    /// Empirical KS reference for models without analytic marginals.
    pub ks_reference: bool,
    pub dump_chains: Option<PathBuf>,
}

/// `0.6, 0.65, ..., 0.95`.
pub fn default_p0_grid() -> Vec<f64> {
    (0..8).map(|k| f64::from(60 + 5 * k) / 100.0).collect()
}

impl ExperimentSpec {
    pub fn new(model: ModelSpec) -> Self {
        Self {
            model,
            samplers: vec![SamplerKind::Ehmc],
            p0: default_p0_grid(),
            warmup: 2000,
            batch_iters: 1000,
            iters: 10_000,
            grad_budget: None,
            reps: 5,
            seed: 0,
            eta: 1.0,
            l0: ehmc::uturn::DEFAULT_L0,
            l_fixed: None,
            max_batch: ehmc::uturn::DEFAULT_MAX_BATCH,
            path_divisor: ehmc::samplers::DEFAULT_PATH_DIVISOR,
            mass: MassChoice::Identity,
            ks_reference: false,
            dump_chains: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.samplers.is_empty() || self.p0.is_empty() {
            bail!("sampler and p0 grids must be non-empty");
        }
        if self.reps == 0 || self.warmup == 0 || self.batch_iters == 0 || self.iters == 0 {
            bail!("reps, warmup, batch-iters and iters must be positive");
        }
        if self.grad_budget == Some(0) {
            bail!("grad-budget must be positive");
        }
        if let Some(p) = self.p0.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            bail!("p0 must lie in (0, 1), got {p}");
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            bail!("eta must lie in (0, 1], got {}", self.eta);
        }
        if self.l0 == 0 || self.max_batch < self.l0 || self.path_divisor == 0 || self.l_fixed == Some(0) {
            bail!("need l0 >= 1, max-batch >= l0, path divisor >= 1 and l-fixed >= 1");
        }
        Ok(())
    }

    /// Cells in output order: p0, then replication, then sampler.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::with_capacity(self.p0.len() * self.reps * self.samplers.len());
        for &p0 in &self.p0 {
            for rep in 0..self.reps {
                for &sampler in &self.samplers {
                    cells.push(Cell { p0, rep, sampler });
                }
            }
        }
        cells
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub p0: f64,
    pub rep: usize,
    pub sampler: SamplerKind,
}

fn prep_key(model: &str, p0: f64, rep: usize) -> String {
    format!("{model}/prep/{p0}/{rep}")
}

fn cell_key(model: &str, cell: &Cell) -> String {
    format!("{model}/{}/{}/{}", cell.sampler, cell.p0, cell.rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupMetrics {
    pub group: String,
    pub min_ess: f64,
    pub min_ess_per_grad: f64,
    pub esjd: f64,
    pub esjd_per_grad: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub sampler: SamplerKind,
    pub p0: f64,
    pub rep: usize,
    pub seed: u64,
    pub ok: bool,
    pub error: Option<String>,
    pub eps: Option<f64>,
    pub mean_batch: Option<f64>,
    pub median_batch: Option<usize>,
    pub l_fixed: Option<usize>,
    pub warmup_grad_calls: Option<u64>,
    pub learn_grad_calls: Option<u64>,
    pub report: Option<RunReport>,
    pub groups: Vec<GroupMetrics>,
}

/// Tuning and batch learning shared by all samplers of one (p0, rep).
#[derive(Clone, Debug)]
struct Prepared {
    eps: f64,
    mass: MassSpec<f64>,
    theta: Vec<f64>,
    dist: BatchDistribution,
    warmup_calls: u64,
    learn_calls: u64,
}

fn prepare(model: &AnyModel, spec: &ExperimentSpec, p0: f64, key: &str) -> Result<Prepared> {
    let (mut rng, _) = cell_rng(spec.seed, key);
    let target = TargetModel::new(model);
    let mut tune = TuneConfig::new(p0, spec.warmup);
    tune.l_warmup = spec.l0;
    tune.adapt_mass = spec.mass == MassChoice::Diag;
    let tuned = tune_step_size(&target, &MassSpec::identity(), &model.initial_point(), &tune, &mut rng)
        .context("step-size warmup")?;
    let warmup_calls = target.grad_calls();

    let mut learn = BatchLearnConfig::new(tuned.eps);
    learn.l0 = spec.l0;
    learn.iters = spec.batch_iters;
    learn.max_batch = spec.max_batch;
    let learned = learn_batch_distribution(&target, &tuned.mass, &tuned.theta, &learn, &mut rng)
        .context("batch learning")?;
    Ok(Prepared {
        eps: tuned.eps,
        mass: tuned.mass,
        theta: learned.theta,
        dist: learned.distribution,
        warmup_calls,
        learn_calls: target.grad_calls() - warmup_calls,
    })
}

/// Per-component KS references.
pub enum Reference {
    None,
    Gaussian(Vec<f64>),
    Sample(Chain<f64>),
}

impl Reference {
    fn max_ks(&self, chain: &Chain<f64>) -> ehmc::Result<Option<f64>> {
        match self {
            Self::None => Ok(None),
            Self::Gaussian(sd) => {
                let normal = Normal::standard();
                let cdfs: Vec<_> = sd.iter().map(|&s| move |x: f64| normal.cdf(x / s)).collect();
                let refs: Vec<KsReference<'_>> = cdfs.iter().map(|f| KsReference::Cdf(f)).collect();
                max_ks(chain, &refs).map(Some)
            }
            Self::Sample(c) => {
                let columns: Vec<Vec<f64>> = (0..c.dim()).map(|k| c.column(k)).collect();
                let refs: Vec<KsReference<'_>> = columns.iter().map(|c| KsReference::Sample(c)).collect();
                max_ks(chain, &refs).map(Some)
            }
        }
    }
}

/// Long eHMC run at p0 = 0.95 standing in for the unknown marginals.
fn reference_run(model: &AnyModel, spec: &ExperimentSpec) -> Result<Chain<f64>> {
    let key = format!("{}/reference", spec.model.kind.as_str());
    let prep = prepare(model, spec, 0.95, &format!("{key}/prep"))?;
    let (mut rng, _) = cell_rng(spec.seed, &key);
    let cfg = SamplerConfig::new(SamplerKind::Ehmc, prep.eps, 10 * spec.iters);
    let target = TargetModel::new(model);
    Ok(run_sampler(&target, &prep.mass, &prep.theta, Some(&prep.dist), &cfg, &mut rng)?.chain)
}

fn group_metrics(model: &AnyModel, chain: &Chain<f64>, ess: &[f64], grad_calls: u64) -> Result<Vec<GroupMetrics>> {
    model
        .groups()
        .into_iter()
        .map(|g| {
            let min_ess = g.indices.iter().map(|&k| ess[k]).fold(f64::INFINITY, f64::min);
            let jump = esjd(&chain.select(&g.indices))?;
            Ok(GroupMetrics {
                group: g.name.to_string(),
                min_ess,
                min_ess_per_grad: min_ess / grad_calls as f64,
                esjd: jump,
                esjd_per_grad: jump / grad_calls as f64,
            })
        })
        .collect()
}

fn production(
    model: &AnyModel,
    spec: &ExperimentSpec,
    prep: &Prepared,
    cell: &Cell,
    reference: &Reference,
    row: &mut ResultRow,
) -> Result<()> {
    let (mut rng, _) = cell_rng(spec.seed, &cell_key(spec.model.kind.as_str(), cell));
    let mut cfg = SamplerConfig::new(cell.sampler, prep.eps, spec.iters);
    cfg.eta = spec.eta;
    cfg.path_divisor = spec.path_divisor;
    cfg.seed = row.seed;
    cfg.max_grad_calls = spec.grad_budget;
    if matches!(cell.sampler, SamplerKind::HmcFixed | SamplerKind::HmcJitter) {
        cfg.l_fixed = spec.l_fixed.unwrap_or_else(|| prep.dist.median());
        row.l_fixed = Some(cfg.l_fixed);
    }
    let target = TargetModel::new(model);
    let run = run_sampler(&target, &prep.mass, &prep.theta, Some(&prep.dist), &cfg, &mut rng)?;
    debug_assert_eq!(run.stats.grad_calls, target.grad_calls());

    let mut report = RunReport::from_run(&run.chain, &run.stats)?;
    if let Some(ks) = reference.max_ks(&run.chain)? {
        report = report.with_max_ks(ks);
    }
    row.groups = group_metrics(model, &run.chain, &ess_per_component(&run.chain)?, run.stats.grad_calls)?;
    row.report = Some(report);
    if let Some(dir) = &spec.dump_chains {
        let path = dir.join(format!(
            "{}_{}_p0-{}_rep-{}.csv",
            spec.model.kind.as_str(),
            cell.sampler,
            cell.p0,
            cell.rep
        ));
        run.chain.write_csv(File::create(&path).with_context(|| format!("creating {}", path.display()))?)?;
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub spec: ExperimentSpec,
    pub group_names: Vec<String>,
    pub rows: Vec<ResultRow>,
}

impl Experiment {
    pub fn all_ok(&self) -> bool {
        self.rows.iter().all(|r| r.ok)
    }
}

/// Runs every cell. A failing cell becomes a failed row; only a model that
/// cannot be built (or an invalid spec) is an error.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Experiment> {
    spec.validate()?;
    let model = AnyModel::build(&spec.model).context("building the model")?;
    let name = spec.model.kind.as_str();
    if let Some(dir) = &spec.dump_chains {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let reference = match model.gaussian_marginals() {
        Some(sd) => Reference::Gaussian(sd),
        None if spec.ks_reference => Reference::Sample(reference_run(&model, spec).context("KS reference run")?),
        None => Reference::None,
    };

    let preps: Vec<((f64, usize), Result<Prepared>)> = spec
        .p0
        .iter()
        .flat_map(|&p0| (0..spec.reps).map(move |rep| (p0, rep)))
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|(p0, rep)| ((p0, rep), prepare(&model, spec, p0, &prep_key(name, p0, rep))))
        .collect();
    let find_prep = |p0: f64, rep: usize| {
        preps.iter().find(|((q, r), _)| *q == p0 && *r == rep).map(|(_, p)| p).expect("every cell has a prep")
    };

    let rows: Vec<ResultRow> = spec
        .cells()
        .into_par_iter()
        .map(|cell| {
            let (_, seed) = cell_rng(spec.seed, &cell_key(name, &cell));
            let mut row = ResultRow {
                model: name.to_string(),
                sampler: cell.sampler,
                p0: cell.p0,
                rep: cell.rep,
                seed,
                ok: false,
                error: None,
                eps: None,
                mean_batch: None,
                median_batch: None,
                l_fixed: None,
                warmup_grad_calls: None,
                learn_grad_calls: None,
                report: None,
                groups: Vec::new(),
            };
            match find_prep(cell.p0, cell.rep) {
                Err(e) => row.error = Some(format!("{e:#}")),
                Ok(prep) => {
                    row.eps = Some(prep.eps);
                    row.mean_batch = Some(prep.dist.mean());
                    row.median_batch = Some(prep.dist.median());
                    row.warmup_grad_calls = Some(prep.warmup_calls);
                    row.learn_grad_calls = Some(prep.learn_calls);
                    match production(&model, spec, prep, &cell, &reference, &mut row) {
                        Ok(()) => row.ok = true,
                        Err(e) => {
                            row.report = None;
                            row.groups.clear();
                            row.error = Some(format!("{e:#}"));
                        }
                    }
                }
            }
            if let Some(e) = &row.error {
                log::warn!("cell {} failed: {e}", cell_key(name, &cell));
            }
            row
        })
        .collect();

    Ok(Experiment {
        spec: spec.clone(),
        group_names: model.groups().into_iter().map(|g| g.name.to_string()).collect(),
        rows,
    })
}
