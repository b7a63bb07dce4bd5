//! Production kernels: fixed or jittered-length HMC, empirical HMC (path
//! length drawn from a learned [`BatchDistribution`] each iteration), and
//! partially refreshed HMC, which keeps its momentum between refreshes and
//! recycles the cached leapfrog orbit.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chain::Chain;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::hamiltonian::{check_eps, MassSpec, Particle, PhasePoint, Potential, TargetModel};
use crate::scalar::Real;
use crate::uturn::BatchDistribution;

pub const DEFAULT_PATH_DIVISOR: usize = 3;
pub const DEFAULT_MAX_CACHE: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerKind {
    HmcFixed,
    HmcJitter,
    Ehmc,
    Prhmc,
}

impl SamplerKind {
    pub const ALL: [SamplerKind; 4] = [Self::HmcFixed, Self::HmcJitter, Self::Ehmc, Self::Prhmc];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::HmcFixed => "hmc-fixed",
            Self::HmcJitter => "hmc-jitter",
            Self::Ehmc => "ehmc",
            Self::Prhmc => "prhmc",
        }
    }
}

impl fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SamplerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::config(format!("unknown sampler '{s}'")))
    }
}

#[derive(Clone, Debug)]
pub struct SamplerConfig<T> {
    pub eps: T,
    pub sampler: SamplerKind,
    /// Path length for the fixed baseline, upper bound for the jittered one.
    pub l_fixed: usize,
    /// Refresh probability for prHMC.
    pub eta: T,
    /// prHMC divides each drawn length by this, rounding up.
    pub path_divisor: usize,
    pub iters: usize,
    /// Stop early once this many gradient calls have been spent.
    pub max_grad_calls: Option<u64>,
    pub max_cache: usize,
    pub seed: u64,
}

impl<T: Real> SamplerConfig<T> {
    pub fn new(sampler: SamplerKind, eps: T, iters: usize) -> Self {
        Self {
            eps,
            sampler,
            l_fixed: 10,
            eta: T::one(),
            path_divisor: DEFAULT_PATH_DIVISOR,
            iters,
            max_grad_calls: None,
            max_cache: DEFAULT_MAX_CACHE,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_eps(self.eps)?;
        if !(self.eta > T::zero() && self.eta <= T::one()) {
            return Err(Error::config(format!("eta must lie in (0, 1], got {}", self.eta)));
        }
        if self.path_divisor == 0 {
            return Err(Error::config("path divisor must be positive"));
        }
        if matches!(self.sampler, SamplerKind::HmcFixed | SamplerKind::HmcJitter) && self.l_fixed == 0 {
            return Err(Error::config("l_fixed must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainState<T> {
    pub theta: Vec<T>,
    pub v: Vec<T>,
    pub iter: usize,
}

impl<T: Real> ChainState<T> {
    pub fn new(theta: Vec<T>) -> Self {
        let v = vec![T::zero(); theta.len()];
        Self { theta, v, iter: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome<T> {
    /// `min(1, exp(H_start - H_proposal))`; zero for a divergent trajectory.
    pub accept_prob: T,
    pub accepted: bool,
    pub divergent: bool,
}

/// Bookkeeping from a sampler run. Efficiency metrics live in
/// [`crate::diagnostics::RunReport`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunStats {
    pub iterations: usize,
    pub grad_calls: u64,
    pub accepted: usize,
    pub accept_prob_sum: f64,
    pub divergences: usize,
    /// Path length used at every iteration.
    pub lengths: Vec<usize>,
    /// prHMC only.
    pub refreshes: usize,
}

impl RunStats {
    pub fn accept_rate(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accepted as f64 / self.iterations as f64
        }
    }

    pub fn mean_accept_prob(&self) -> f64 {
        if self.iterations == 0 {
            0.0
        } else {
            self.accept_prob_sum / self.iterations as f64
        }
    }

    fn record<T: Real>(&mut self, o: &StepOutcome<T>, length: usize) {
        self.iterations += 1;
        self.accepted += usize::from(o.accepted);
        self.accept_prob_sum += o.accept_prob.as_f64();
        self.divergences += usize::from(o.divergent);
        self.lengths.push(length);
    }
}

#[derive(Clone, Debug)]
pub struct SamplerRun<T> {
    pub chain: Chain<T>,
    pub stats: RunStats,
    pub final_state: ChainState<T>,
}

fn accept_prob<T: Real>(log_ratio: T) -> T {
    if log_ratio.is_nan() {
        T::zero()
    } else {
        log_ratio.min(T::zero()).exp()
    }
}

/// One Metropolis-adjusted HMC transition with a fresh momentum and `steps`
/// leapfrog steps. On acceptance the state becomes `(theta*, -v*)`; a
/// divergent trajectory is a rejection with zero acceptance probability.
pub fn hmc_step<P: Potential, R: Rng + ?Sized>(
    state: &mut ChainState<P::Scalar>,
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    eps: P::Scalar,
    steps: usize,
    rng: &mut R,
) -> Result<StepOutcome<P::Scalar>> {
    check_eps(eps)?;
    if steps == 0 {
        return Err(Error::config("hmc step needs at least one leapfrog step"));
    }
    let d = model.dim();
    let v = mass.sample_momentum(d, rng)?;
    let mut particle = Particle::new(model, state.theta.clone(), v.clone())?;
    let h0 = particle.energy(mass);
    state.v = v;
    state.iter += 1;

    match particle.advance(model, mass, eps, steps, h0, 1) {
        Ok(()) => {}
        Err(Error::Divergence { .. }) => {
            return Ok(StepOutcome {
                accept_prob: P::Scalar::zero(),
                accepted: false,
                divergent: true,
            })
        }
        Err(e) => return Err(e),
    }
    particle.negate_momentum();
    let rho = accept_prob(h0 - particle.energy(mass));
    let accepted = P::Scalar::uniform(rng) < rho;
    if accepted {
        state.theta = particle.theta;
        state.v = particle.v;
    }
    Ok(StepOutcome {
        accept_prob: rho,
        accepted,
        divergent: false,
    })
}

fn check_start<P: Potential>(model: &TargetModel<P>, mass: &MassSpec<P::Scalar>, theta0: &[P::Scalar]) -> Result<()> {
    if theta0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: theta0.len(),
        });
    }
    mass.check_dim(model.dim())
}

fn budget_spent(start_calls: u64, model_calls: u64, budget: Option<u64>) -> bool {
    budget.is_some_and(|b| model_calls - start_calls >= b)
}

fn run_hmc_with<P, R, F>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    cfg: &SamplerConfig<P::Scalar>,
    rng: &mut R,
    mut draw_length: F,
) -> Result<SamplerRun<P::Scalar>>
where
    P: Potential,
    R: Rng + ?Sized,
    F: FnMut(&mut R) -> usize,
{
    check_start(model, mass, theta0)?;
    let start_calls = model.grad_calls();
    let mut state = ChainState::new(theta0.to_vec());
    let mut chain = Chain::with_capacity(model.dim(), cfg.iters);
    let mut stats = RunStats::default();
    for _ in 0..cfg.iters {
        if budget_spent(start_calls, model.grad_calls(), cfg.max_grad_calls) {
            break;
        }
        let steps = draw_length(rng);
        let outcome = hmc_step(&mut state, model, mass, cfg.eps, steps, rng)?;
        stats.record(&outcome, steps);
        chain.push(&state.theta)?;
    }
    stats.grad_calls = model.grad_calls() - start_calls;
    Ok(SamplerRun {
        chain,
        stats,
        final_state: state,
    })
}

/// eHMC: each iteration draws its path length from `dist`, independently of
/// the chain, then performs one [`hmc_step`].
pub fn run_ehmc<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    dist: &BatchDistribution,
    cfg: &SamplerConfig<P::Scalar>,
    rng: &mut R,
) -> Result<SamplerRun<P::Scalar>> {
    cfg.validate()?;
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    run_hmc_with(model, mass, theta0, cfg, rng, |r| dist.sample(r))
}

/// Fixed-length HMC, or with `jitter` a length uniform on `1..=l_fixed` each
/// iteration.
pub fn run_baseline_hmc<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    l_fixed: usize,
    jitter: bool,
    cfg: &SamplerConfig<P::Scalar>,
    rng: &mut R,
) -> Result<SamplerRun<P::Scalar>> {
    cfg.validate()?;
    if l_fixed == 0 {
        return Err(Error::config("l_fixed must be at least 1"));
    }
    if jitter {
        run_hmc_with(model, mass, theta0, cfg, rng, |r| r.random_range(1..=l_fixed))
    } else {
        run_hmc_with(model, mass, theta0, cfg, rng, |_| l_fixed)
    }
}

/// A point on the cached orbit. Momenta are stored in forward orientation.
#[derive(Clone, Debug)]
pub struct CachedPoint<T> {
    pub theta: Vec<T>,
    pub v: Vec<T>,
    grad: Vec<T>,
    potential: T,
}

impl<T: Real> CachedPoint<T> {
    fn from_particle(p: Particle<T>, sign: T) -> Self {
        let v = if sign < T::zero() { p.v.iter().map(|&x| -x).collect() } else { p.v };
        Self {
            theta: p.theta,
            v,
            grad: p.grad,
            potential: p.potential,
        }
    }

    /// Particle at this point moving in direction `sign`.
    fn particle(&self, sign: T) -> Particle<T> {
        Particle {
            theta: self.theta.clone(),
            v: self.v.iter().map(|&x| sign * x).collect(),
            grad: self.grad.clone(),
            potential: self.potential,
        }
    }

    pub fn phase_point(&self) -> PhasePoint<T> {
        PhasePoint {
            theta: self.theta.clone(),
            v: self.v.clone(),
        }
    }
}

/// Cached leapfrog orbit with the chain's cursor and direction.
#[derive(Clone, Debug)]
pub struct PathCache<T> {
    points: VecDeque<CachedPoint<T>>,
    cursor: usize,
    sigma: i8,
}

impl<T: Real> PathCache<T> {
    fn single(p: CachedPoint<T>) -> Self {
        Self {
            points: VecDeque::from([p]),
            cursor: 0,
            sigma: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// 0-based index of the current state.
    pub fn cursor(&self) -> usize {
        self.cursor
    }

    pub fn sigma(&self) -> i8 {
        self.sigma
    }

    pub fn point(&self, k: usize) -> &CachedPoint<T> {
        &self.points[k]
    }

    pub fn points(&self) -> impl Iterator<Item = &CachedPoint<T>> {
        self.points.iter()
    }

    fn sign(&self) -> T {
        if self.sigma > 0 {
            T::one()
        } else {
            -T::one()
        }
    }

    fn current(&self) -> &CachedPoint<T> {
        &self.points[self.cursor]
    }
}

/// Partially refreshed HMC as a step-at-a-time sampler.
pub struct PrHmc<'a, P: Potential> {
    model: &'a TargetModel<P>,
    mass: &'a MassSpec<P::Scalar>,
    dist: &'a BatchDistribution,
    cfg: SamplerConfig<P::Scalar>,
    cache: PathCache<P::Scalar>,
    state: ChainState<P::Scalar>,
}

impl<'a, P: Potential> PrHmc<'a, P> {
    /// Draws the initial momentum and evaluates the gradient at `theta0`
    /// (one gradient call).
    pub fn new<R: Rng + ?Sized>(
        model: &'a TargetModel<P>,
        mass: &'a MassSpec<P::Scalar>,
        theta0: &[P::Scalar],
        dist: &'a BatchDistribution,
        cfg: &SamplerConfig<P::Scalar>,
        rng: &mut R,
    ) -> Result<Self> {
        cfg.validate()?;
        if dist.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        check_start(model, mass, theta0)?;
        let v0 = mass.sample_momentum(model.dim(), rng)?;
        let start = Particle::new(model, theta0.to_vec(), v0.clone())?;
        Ok(Self {
            model,
            mass,
            dist,
            cfg: cfg.clone(),
            cache: PathCache::single(CachedPoint::from_particle(start, P::Scalar::one())),
            state: ChainState {
                theta: theta0.to_vec(),
                v: v0,
                iter: 0,
            },
        })
    }

    pub fn cache(&self) -> &PathCache<P::Scalar> {
        &self.cache
    }

    pub fn state(&self) -> &ChainState<P::Scalar> {
        &self.state
    }

    fn energy(&self, p: &CachedPoint<P::Scalar>) -> P::Scalar {
        p.potential + self.mass.kinetic(&p.v)
    }

    /// One transition. Returns the outcome and the (rescaled) path length
    /// used.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<(StepOutcome<P::Scalar>, bool, usize)> {
        let u = P::Scalar::uniform(rng);
        let steps = self.dist.sample(rng).div_ceil(self.cfg.path_divisor);
        self.state.iter += 1;
        let refresh = u < self.cfg.eta;
        let outcome = if refresh {
            self.refresh(steps, rng)?
        } else {
            self.continue_path(steps, rng)?
        };
        let cur = self.cache.current();
        self.state.theta.clone_from(&cur.theta);
        Ok((outcome, refresh, steps))
    }

    fn refresh<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) -> Result<StepOutcome<P::Scalar>> {
        let one = P::Scalar::one();
        let v = self.mass.sample_momentum(self.model.dim(), rng)?;
        let cur = self.cache.current();
        // The gradient at the current position is already known.
        let mut particle = Particle {
            theta: cur.theta.clone(),
            v: v.clone(),
            grad: cur.grad.clone(),
            potential: cur.potential,
        };
        let h0 = particle.energy(self.mass);
        let mut points = VecDeque::with_capacity(steps + 1);
        points.push_back(CachedPoint::from_particle(particle.clone(), one));

        let mut divergent = false;
        for k in 1..=steps {
            if points.len() >= self.cfg.max_cache {
                return Err(Error::CacheOverflow(self.cfg.max_cache));
            }
            match particle.step_checked(self.model, self.mass, self.cfg.eps, h0, k) {
                Ok(()) => points.push_back(CachedPoint::from_particle(particle.clone(), one)),
                Err(Error::Divergence { .. }) => {
                    divergent = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        self.cache.points = points;

        let rho = if divergent {
            P::Scalar::zero()
        } else {
            accept_prob(h0 - self.energy(self.cache.points.back().expect("non-empty cache")))
        };
        let accepted = !divergent && P::Scalar::uniform(rng) < rho;
        if accepted {
            self.cache.cursor = self.cache.points.len() - 1;
            self.cache.sigma = 1;
            self.state.v.clone_from(&self.cache.current().v);
        } else {
            self.cache.cursor = 0;
            self.cache.sigma = -1;
            self.state.v = v.into_iter().map(|x| -x).collect();
        }
        Ok(StepOutcome {
            accept_prob: rho,
            accepted,
            divergent,
        })
    }

    fn continue_path<R: Rng + ?Sized>(&mut self, steps: usize, rng: &mut R) -> Result<StepOutcome<P::Scalar>> {
        let sign = self.cache.sign();
        let last = self.cache.len() - 1;
        let target = self.cache.cursor as i64 + i64::from(self.cache.sigma) * steps as i64;
        let mut divergent = false;

        let j = if self.cache.sigma > 0 {
            let need = target - last as i64;
            if need > 0 {
                divergent = !self.extend(need as usize, sign)?;
            }
            (target as usize).min(self.cache.len() - 1)
        } else {
            if target < 0 {
                let before = self.cache.len();
                divergent = !self.extend((-target) as usize, sign)?;
                self.cache.cursor += self.cache.len() - before;
            }
            target.max(0) as usize
        };
        // A truncated extension cannot reach the requested point.
        let reached = if self.cache.sigma > 0 { j as i64 == target } else { target >= 0 || !divergent };
        let divergent = divergent || !reached;

        let h_cur = self.cache.current().potential + self.mass.kinetic(&self.state.v);
        let rho = if divergent {
            P::Scalar::zero()
        } else {
            accept_prob(h_cur - self.energy(&self.cache.points[j]))
        };
        let accepted = !divergent && P::Scalar::uniform(rng) < rho;
        if accepted {
            self.cache.cursor = j;
            self.state.v = self.cache.points[j].v.iter().map(|&x| sign * x).collect();
        } else {
            self.cache.sigma = -self.cache.sigma;
            self.state.v.iter_mut().for_each(|x| *x = -*x);
        }
        Ok(StepOutcome {
            accept_prob: rho,
            accepted,
            divergent,
        })
    }

    /// Extends the orbit by `count` points in direction `sign`, reusing the
    /// stored endpoint gradient. Returns `false` if the extension diverged;
    /// the finite points computed before that are kept.
    fn extend(&mut self, count: usize, sign: P::Scalar) -> Result<bool> {
        if self.cache.len() + count > self.cfg.max_cache {
            return Err(Error::CacheOverflow(self.cfg.max_cache));
        }
        let forward = sign > P::Scalar::zero();
        let end = if forward {
            self.cache.points.back()
        } else {
            self.cache.points.front()
        }
        .expect("non-empty cache");
        let mut particle = end.particle(sign);
        let h0 = particle.energy(self.mass);
        for k in 1..=count {
            match particle.step_checked(self.model, self.mass, self.cfg.eps, h0, k) {
                Ok(()) => {
                    let p = CachedPoint::from_particle(particle.clone(), sign);
                    if forward {
                        self.cache.points.push_back(p);
                    } else {
                        self.cache.points.push_front(p);
                    }
                }
                Err(Error::Divergence { .. }) => return Ok(false),
                Err(e) => return Err(e),
            }
        }
        Ok(true)
    }
}

/// prHMC over `cfg.iters` iterations (or until the gradient budget runs
/// out).
pub fn run_prhmc<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    dist: &BatchDistribution,
    cfg: &SamplerConfig<P::Scalar>,
    rng: &mut R,
) -> Result<SamplerRun<P::Scalar>> {
    let start_calls = model.grad_calls();
    let mut sampler = PrHmc::new(model, mass, theta0, dist, cfg, rng)?;
    let mut chain = Chain::with_capacity(model.dim(), cfg.iters);
    let mut stats = RunStats::default();
    for _ in 0..cfg.iters {
        if budget_spent(start_calls, model.grad_calls(), cfg.max_grad_calls) {
            break;
        }
        let (outcome, refreshed, steps) = sampler.step(rng)?;
        stats.record(&outcome, steps);
        stats.refreshes += usize::from(refreshed);
        chain.push(&sampler.state.theta)?;
    }
    stats.grad_calls = model.grad_calls() - start_calls;
    Ok(SamplerRun {
        chain,
        stats,
        final_state: sampler.state.clone(),
    })
}

/// Dispatches on `cfg.sampler`. The baselines take their length from
/// `cfg.l_fixed`; `dist` is required for eHMC and prHMC.
pub fn run_sampler<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    dist: Option<&BatchDistribution>,
    cfg: &SamplerConfig<P::Scalar>,
    rng: &mut R,
) -> Result<SamplerRun<P::Scalar>> {
    match cfg.sampler {
        SamplerKind::HmcFixed => run_baseline_hmc(model, mass, theta0, cfg.l_fixed, false, cfg, rng),
        SamplerKind::HmcJitter => run_baseline_hmc(model, mass, theta0, cfg.l_fixed, true, cfg, rng),
        SamplerKind::Ehmc => run_ehmc(model, mass, theta0, dist.ok_or(Error::EmptyDistribution)?, cfg, rng),
        SamplerKind::Prhmc => run_prhmc(model, mass, theta0, dist.ok_or(Error::EmptyDistribution)?, cfg, rng),
    }
}
