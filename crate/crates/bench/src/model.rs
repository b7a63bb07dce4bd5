//! Model selection for the harness: one enum over the four benchmark
//! posteriors so a run can pick its target at the command line.

use std::fs::File;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use ehmc::models::{
    irt_simulate, load_logistic_csv, logistic_simulate, sv_simulate, IrtData, IrtModel, LogisticModel, MvnModel,
    MvnSpec, ParamGroup, SvData, SvModel,
};
use ehmc::Potential;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mvn,
    Logistic,
    Sv,
    Irt,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Mvn => "mvn",
            Self::Logistic => "logistic",
            Self::Sv => "sv",
            Self::Irt => "irt",
        }
    }
}

/// Everything needed to build a target. Data files win over the synthetic
/// generators; the generators are seeded by `data_seed` alone so every cell
/// sees the same data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub data: Option<PathBuf>,
    pub dim: usize,
    pub rho: f64,
    pub n_obs: usize,
    pub n_covariates: usize,
    pub series_len: usize,
    pub items: usize,
    pub persons: usize,
    pub data_seed: u64,
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            data: None,
            dim: 20,
            rho: 0.99,
            n_obs: 1000,
            n_covariates: 24,
            series_len: 100,
            items: 20,
            persons: 100,
            data_seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub enum AnyModel {
    Mvn(MvnModel<f64>),
    Logistic(LogisticModel<f64>),
    Sv(SvModel<f64>),
    Irt(IrtModel<f64>),
}

fn data_rng(spec: &ModelSpec) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(spec.data_seed)
}

impl AnyModel {
    pub fn build(spec: &ModelSpec) -> Result<Self> {
        let open = |p: &PathBuf| File::open(p).with_context(|| format!("opening {}", p.display()));
        Ok(match spec.kind {
            ModelKind::Mvn => {
                if spec.data.is_some() {
                    bail!("the mvn model takes no data file");
                }
                Self::Mvn(MvnModel::new(MvnSpec::new(spec.dim, spec.rho)?)?)
            }
            ModelKind::Logistic => Self::Logistic(LogisticModel::new(match &spec.data {
                Some(p) => load_logistic_csv(p)?,
                None => logistic_simulate(spec.n_obs, spec.n_covariates, &mut data_rng(spec))?,
            })),
            ModelKind::Sv => Self::Sv(SvModel::new(match &spec.data {
                Some(p) => SvData::read_csv(open(p)?)?,
                None => sv_simulate(spec.series_len, 0.98, 0.65, 0.15, &mut data_rng(spec))?.data,
            })),
            ModelKind::Irt => Self::Irt(IrtModel::new(match &spec.data {
                Some(p) => IrtData::read_csv(open(p)?)?,
                None => irt_simulate(spec.items, spec.persons, &mut data_rng(spec))?.0,
            })),
        })
    }

    pub fn kind(&self) -> ModelKind {
        match self {
            Self::Mvn(_) => ModelKind::Mvn,
            Self::Logistic(_) => ModelKind::Logistic,
            Self::Sv(_) => ModelKind::Sv,
            Self::Irt(_) => ModelKind::Irt,
        }
    }

    /// Parameter groups for per-group metrics.
    pub fn groups(&self) -> Vec<ParamGroup> {
        match self {
            Self::Sv(m) => m.groups(),
            Self::Irt(m) => m.groups(),
            _ => vec![ParamGroup::range("theta", 0..self.dim())],
        }
    }

    /// Where warmup starts.
    pub fn initial_point(&self) -> Vec<f64> {
        vec![0.0; self.dim()]
    }

    /// Marginal standard deviations when the target is Gaussian with zero
    /// mean.
    pub fn gaussian_marginals(&self) -> Option<Vec<f64>> {
        match self {
            Self::Mvn(m) => Some(m.marginal_sd()),
            _ => None,
        }
    }
}

impl Potential for AnyModel {
    type Scalar = f64;

    fn dim(&self) -> usize {
        match self {
            Self::Mvn(m) => m.dim(),
            Self::Logistic(m) => m.dim(),
            Self::Sv(m) => m.dim(),
            Self::Irt(m) => m.dim(),
        }
    }

    fn potential(&self, theta: &[f64]) -> ehmc::Result<f64> {
        match self {
            Self::Mvn(m) => m.potential(theta),
            Self::Logistic(m) => m.potential(theta),
            Self::Sv(m) => m.potential(theta),
            Self::Irt(m) => m.potential(theta),
        }
    }

    fn potential_and_gradient(&self, theta: &[f64], grad: &mut [f64]) -> ehmc::Result<f64> {
        match self {
            Self::Mvn(m) => m.potential_and_gradient(theta, grad),
            Self::Logistic(m) => m.potential_and_gradient(theta, grad),
            Self::Sv(m) => m.potential_and_gradient(theta, grad),
            Self::Irt(m) => m.potential_and_gradient(theta, grad),
        }
    }
}
