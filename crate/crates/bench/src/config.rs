//! Command-line and config-file settings. A TOML file may set any `run`
//! flag (kebab-case keys); flags given on the command line win.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use ehmc::SamplerKind;
use serde::Deserialize;

use crate::experiment::{default_p0_grid, ExperimentSpec, MassChoice};
use crate::model::{ModelKind, ModelSpec};
use crate::output::Format;

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ModelArgs {
    /// Target posterior.
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Data file (logistic, sv, irt); synthetic data is generated otherwise.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// MVN dimension.
    #[arg(long)]
    pub dim: Option<usize>,
    /// MVN correlation base, A_ij = rho^|i-j|.
    #[arg(long)]
    pub rho: Option<f64>,
    /// Synthetic logistic data: rows.
    #[arg(long)]
    pub n_obs: Option<usize>,
    /// Synthetic logistic data: covariates.
    #[arg(long)]
    pub n_covariates: Option<usize>,
    /// Synthetic SV series length.
    #[arg(long)]
    pub series_len: Option<usize>,
    /// Synthetic IRT items.
    #[arg(long)]
    pub items: Option<usize>,
    /// Synthetic IRT persons.
    #[arg(long)]
    pub persons: Option<usize>,
    /// Seed for synthetic data, independent of the sampling seed.
    #[arg(long)]
    pub data_seed: Option<u64>,
}

macro_rules! prefer {
    ($a:expr, $b:expr; $($f:ident),* $(,)?) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f.take(); } )*
    };
}

impl ModelArgs {
    fn merge(&mut self, mut file: ModelArgs) {
        prefer!(self, file; model, data, dim, rho, n_obs, n_covariates, series_len, items, persons, data_seed);
    }

    pub fn spec(&self) -> Result<ModelSpec> {
        let kind = self.model.context("--model is required")?;
        let mut s = ModelSpec::new(kind);
        s.data.clone_from(&self.data);
        s.dim = self.dim.unwrap_or(s.dim);
        s.rho = self.rho.unwrap_or(s.rho);
        s.n_obs = self.n_obs.unwrap_or(s.n_obs);
        s.n_covariates = self.n_covariates.unwrap_or(s.n_covariates);
        s.series_len = self.series_len.unwrap_or(s.series_len);
        s.items = self.items.unwrap_or(s.items);
        s.persons = self.persons.unwrap_or(s.persons);
        s.data_seed = self.data_seed.unwrap_or(s.data_seed);
        Ok(s)
    }
}

#[derive(Args, Clone, Debug, Default, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RunArgs {
    /// TOML file with any of these settings.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
    /// Samplers, comma separated.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub sampler: Option<Vec<SamplerKind>>,
    /// Target acceptance grid, comma separated [default: 0.6,0.65,...,0.95].
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub p0: Option<Vec<f64>>,
    /// Warmup iterations [default: 2000].
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Batch-learning iterations [default: 1000].
    #[arg(long)]
    pub batch_iters: Option<usize>,
    /// Production iterations [default: 10000].
    #[arg(long)]
    pub iters: Option<usize>,
    /// Production gradient budget per cell; with it, `iters` is only a cap.
    #[arg(long)]
    pub grad_budget: Option<u64>,
    /// Replications per p0 [default: 5].
    #[arg(long)]
    pub reps: Option<usize>,
    /// Root seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// prHMC refresh probability [default: 1].
    #[arg(long)]
    pub eta: Option<f64>,
    /// Warmup and batch-learning path length [default: 10].
    #[arg(long)]
    pub l0: Option<usize>,
    /// Baseline path length [default: median learned batch].
    #[arg(long)]
    pub l_fixed: Option<usize>,
    /// U-turn search cap [default: 10000].
    #[arg(long)]
    pub max_batch: Option<usize>,
    /// prHMC length divisor [default: 3].
    #[arg(long)]
    pub path_divisor: Option<usize>,
    /// Mass matrix [default: identity].
    #[arg(long, value_enum)]
    pub mass: Option<MassChoice>,
    /// Build an empirical KS reference for models without analytic marginals.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub ks_reference: Option<bool>,
    /// Write every production chain to this directory.
    #[arg(long)]
    pub dump_chains: Option<PathBuf>,
    /// Results file [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads [default: all cores].
    #[arg(long)]
    pub jobs: Option<usize>,
}

/// Keys accepted in a config file: every `run` flag except `--config`.
pub fn config_keys() -> BTreeSet<String> {
    RunArgs::augment_args(clap::Command::new("run"))
        .get_arguments()
        .map(|a| a.get_id().as_str().replace('_', "-"))
        .filter(|k| k != "config")
        .collect()
}

impl RunArgs {
    pub fn from_toml(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text)?;
        let known = config_keys();
        if let Some(k) = table.keys().find(|k| !known.contains(*k)) {
            bail!("unknown config key '{k}'");
        }
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Fills unset fields from `--config`, if given.
    pub fn with_config_file(mut self) -> Result<Self> {
        if let Some(path) = self.config.clone() {
            self.merge(Self::load(&path)?);
        }
        Ok(self)
    }

    fn merge(&mut self, mut file: RunArgs) {
        self.model.merge(std::mem::take(&mut file.model));
        prefer!(self, file;
            sampler, p0, warmup, batch_iters, iters, grad_budget, reps, seed, eta, l0, l_fixed, max_batch,
            path_divisor, mass, ks_reference, dump_chains, out, format, jobs,
        );
    }

    pub fn spec(&self) -> Result<ExperimentSpec> {
        let mut s = ExperimentSpec::new(self.model.spec()?);
        s.samplers = self.sampler.clone().unwrap_or(s.samplers);
        s.p0 = self.p0.clone().unwrap_or_else(default_p0_grid);
        s.warmup = self.warmup.unwrap_or(s.warmup);
        s.batch_iters = self.batch_iters.unwrap_or(s.batch_iters);
        s.iters = self.iters.unwrap_or(s.iters);
        s.grad_budget = self.grad_budget.or(s.grad_budget);
        s.reps = self.reps.unwrap_or(s.reps);
        s.seed = self.seed.unwrap_or(s.seed);
        s.eta = self.eta.unwrap_or(s.eta);
        s.l0 = self.l0.unwrap_or(s.l0);
        s.l_fixed = self.l_fixed.or(s.l_fixed);
        s.max_batch = self.max_batch.unwrap_or(s.max_batch);
        s.path_divisor = self.path_divisor.unwrap_or(s.path_divisor);
        s.mass = self.mass.unwrap_or(s.mass);
        s.ks_reference = self.ks_reference.unwrap_or(s.ks_reference);
        s.dump_chains.clone_from(&self.dump_chains);
        s.validate()?;
        Ok(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::Parser;

    #[derive(Parser)]
    struct Cli {
        #[command(flatten)]
        run: RunArgs,
    }

    #[test]
    fn flags_override_file() {
        let file = RunArgs::from_toml("model = \"mvn\"\ndim = 5\nreps = 3\nsampler = [\"ehmc\", \"prhmc\"]\np0 = [0.7]\n").unwrap();
        let mut cli = Cli::try_parse_from(["x", "--reps", "2", "--sampler", "hmc-jitter,ehmc"]).unwrap().run;
        cli.merge(file);
        let spec = cli.spec().unwrap();
        assert_eq!(spec.model.dim, 5);
        assert_eq!(spec.reps, 2);
        assert_eq!(spec.samplers, vec![SamplerKind::HmcJitter, SamplerKind::Ehmc]);
        assert_eq!(spec.p0, vec![0.7]);
        assert_eq!(spec.warmup, 2000);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        assert!(RunArgs::from_toml("modle = \"mvn\"").is_err());
        assert!(RunArgs::from_toml("config = \"x.toml\"").is_err());
        assert!(RunArgs::from_toml("sampler = [\"nuts\"]").is_err());
        let keys = config_keys();
        for k in ["model", "batch-iters", "p0", "mass", "dump-chains", "data-seed"] {
            assert!(keys.contains(k), "{k}");
        }
        let cli = Cli::try_parse_from(["x", "--model", "mvn", "--p0", "1.2"]).unwrap().run;
        assert!(cli.spec().is_err());
    }

    #[test]
    fn default_grid() {
        let cli = Cli::try_parse_from(["x", "--model", "sv"]).unwrap().run;
        let spec = cli.spec().unwrap();
        assert_eq!(spec.p0, vec![0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95]);
        assert_eq!((spec.warmup, spec.batch_iters, spec.iters, spec.reps), (2000, 1000, 10_000, 5));
    }
}
