//! Hamiltonian Monte Carlo with learned path lengths.
//!
//! The leapfrog step count is drawn each iteration from the empirical
//! distribution of U-turn times collected along a warmup chain (eHMC), and a
//! partially refreshed variant (prHMC) reuses the cached trajectory between
//! momentum refreshes. Step sizes come from dual averaging. Everything is
//! generic over the scalar type through [`Real`]; the aliases below fix it to
//! `f64`.

pub mod adapt;
pub mod chain;
pub mod diagnostics;
pub mod error;
pub mod hamiltonian;
pub mod models;
pub mod samplers;
pub mod scalar;
pub mod uturn;

pub use adapt::{da_update, init_epsilon, tune_step_size, DualAveragingState, TuneConfig, Tuned};
pub use chain::Chain;
pub use diagnostics::{esjd, ess, ks_distance, max_ks, min_ess_per_grad, KsReference, RunReport};
pub use error::{Error, Result};
pub use hamiltonian::{
    hamiltonian, leapfrog, leapfrog_path, sample_momentum, HamiltonianValue, MassSpec, PhasePoint, Potential,
    TargetModel,
};
pub use samplers::{
    hmc_step, run_baseline_hmc, run_ehmc, run_prhmc, run_sampler, ChainState, PathCache, PrHmc, RunStats,
    SamplerConfig, SamplerKind, SamplerRun, StepOutcome,
};
pub use scalar::Real;
pub use uturn::{
    learn_batch_distribution, longest_batch, sample_batch, BatchDistribution, BatchLearnConfig, LearnOutcome,
    LongestBatch,
};

pub type PhasePoint64 = PhasePoint<f64>;
pub type MassSpec64 = MassSpec<f64>;
pub type Chain64 = Chain<f64>;
pub type SamplerConfig64 = SamplerConfig<f64>;
pub type DualAveragingState64 = DualAveragingState<f64>;
pub type MvnModel64 = models::MvnModel<f64>;
pub type LogisticModel64 = models::LogisticModel<f64>;
pub type SvModel64 = models::SvModel<f64>;
pub type IrtModel64 = models::IrtModel<f64>;

pub type PhasePoint32 = PhasePoint<f32>;
pub type MassSpec32 = MassSpec<f32>;
pub type Chain32 = Chain<f32>;
pub type MvnModel32 = models::MvnModel<f32>;
