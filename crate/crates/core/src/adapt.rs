//! Dual-averaging step-size adaptation and the initial step-size heuristic.

use rand::Rng;

use num_traits::{Float, One, Zero};

use crate::error::{Error, Result};
use crate::hamiltonian::{MassSpec, Particle, Potential, TargetModel};
use crate::samplers::{hmc_step, ChainState};
use crate::scalar::{all_finite, Real};

const INIT_EPS_MAX_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct DualAveragingState<T> {
    pub log_eps: T,
    pub log_eps_avg: T,
    /// Running average of `p0 - alpha`.
    pub h_bar: T,
    pub mu: T,
    pub t: u64,
    pub gamma: T,
    pub t0: T,
    pub kappa: T,
    pub p0: T,
}

impl<T: Real> DualAveragingState<T> {
    /// Standard constants: `gamma = 0.05`, `t0 = 10`, `kappa = 0.75`,
    /// `mu = log(10 * eps_init)`.
    pub fn new(eps_init: T, p0: T) -> Result<Self> {
        if !(eps_init > T::zero() && eps_init.is_finite()) {
            return Err(Error::config("initial step size must be positive"));
        }
        let s = Self {
            log_eps: eps_init.ln(),
            log_eps_avg: eps_init.ln(),
            h_bar: T::zero(),
            mu: (T::lit(10.0) * eps_init).ln(),
            t: 0,
            gamma: T::lit(0.05),
            t0: T::lit(10.0),
            kappa: T::lit(0.75),
            p0,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let (zero, one) = (T::zero(), T::one());
        if !(self.p0 > zero && self.p0 < one) {
            return Err(Error::config(format!("target acceptance must lie in (0, 1), got {}", self.p0)));
        }
        if !(self.gamma > zero && self.t0 > zero) {
            return Err(Error::config("gamma and t0 must be positive"));
        }
        if !(self.kappa > T::lit(0.5) && self.kappa <= one) {
            return Err(Error::config("kappa must lie in (0.5, 1]"));
        }
        Ok(())
    }

    pub fn eps(&self) -> T {
        self.log_eps.exp()
    }

    pub fn eps_avg(&self) -> T {
        self.log_eps_avg.exp()
    }
}

/// One dual-averaging update with acceptance statistic `alpha`.
pub fn da_update<T: Real>(state: &DualAveragingState<T>, alpha: T) -> Result<DualAveragingState<T>> {
    state.validate()?;
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(Error::config(format!("acceptance statistic must lie in [0, 1], got {alpha}")));
    }
    let mut s = state.clone();
    s.t += 1;
    let t = T::from_u64(s.t).expect("iteration count fits scalar");
    let w = (t + s.t0).recip();
    s.h_bar = (T::one() - w) * s.h_bar + w * (s.p0 - alpha);
    s.log_eps = s.mu - t.sqrt() / s.gamma * s.h_bar;
    let m = t.powf(-s.kappa);
    s.log_eps_avg = m * s.log_eps + (T::one() - m) * s.log_eps_avg;
    Ok(s)
}

/// Doubles or halves `eps` from 1 until the one-step acceptance ratio
/// `exp(H_start - H_end)` crosses 1/2.
///
/// Stops after 100 adjustments with a warning; this happens for targets on
/// which the ratio never moves, such as a constant potential.
pub fn init_epsilon<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    rng: &mut R,
) -> Result<P::Scalar> {
    if !all_finite(theta0) {
        return Err(Error::NonFinite("initial position"));
    }
    let v = mass.sample_momentum(model.dim(), rng)?;
    let start = Particle::new(model, theta0.to_vec(), v)?;
    let h0 = start.energy(mass);
    let half = P::Scalar::lit(0.5);
    let floor = P::Scalar::lit(2f64.powi(-50));

    let log_ratio_at = |eps: P::Scalar| -> Result<P::Scalar> {
        let mut p = start.clone();
        match p.step(model, mass, eps) {
            Ok(()) => {
                let h = p.energy(mass);
                Ok(if h.is_finite() { h0 - h } else { P::Scalar::neg_infinity() })
            }
            Err(e) if e.is_divergence() => Ok(P::Scalar::neg_infinity()),
            Err(e) => Err(e),
        }
    };

    let mut eps = P::Scalar::one();
    let mut log_ratio = log_ratio_at(eps)?;
    let up = log_ratio > half.ln();
    let factor = if up { P::Scalar::lit(2.0) } else { half };
    for _ in 0..INIT_EPS_MAX_ITERS {
        if (log_ratio > half.ln()) != up {
            return Ok(eps);
        }
        eps *= factor;
        if eps <= floor {
            return Err(Error::AdaptationFailed(
                "initial step size underflowed while halving; the gradient is unusable at the start point".into(),
            ));
        }
        log_ratio = log_ratio_at(eps)?;
    }
    log::warn!("initial step-size search hit its iteration cap at eps = {eps}");
    Ok(eps)
}

#[derive(Clone, Debug)]
pub struct TuneConfig<T> {
    pub p0: T,
    pub warmup_iters: usize,
    pub l_warmup: usize,
    /// Draw each warmup path length uniformly from `1..=l_warmup` (the
    /// default). With a fixed length the acceptance rate is not monotone in
    /// the step size on near-isotropic targets, and the averaged step can
    /// land on a resonance far from the target rate.
    pub jitter: bool,
    /// Estimate a diagonal mass from the second half of warmup, then re-tune
    /// the step size for another 20% of `warmup_iters`.
    pub adapt_mass: bool,
}

impl<T: Real> TuneConfig<T> {
    pub fn new(p0: T, warmup_iters: usize) -> Self {
        Self {
            p0,
            warmup_iters,
            l_warmup: crate::uturn::DEFAULT_L0,
            jitter: true,
            adapt_mass: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Tuned<T> {
    pub eps: T,
    pub theta: Vec<T>,
    pub mass: MassSpec<T>,
    pub mean_accept_prob: f64,
    pub divergences: usize,
}

fn dual_averaging_run<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta: Vec<P::Scalar>,
    p0: P::Scalar,
    iters: usize,
    l_warmup: usize,
    jitter: bool,
    rng: &mut R,
    mut record: impl FnMut(usize, &[P::Scalar]),
) -> Result<(P::Scalar, Vec<P::Scalar>, f64, usize)> {
    let eps0 = init_epsilon(model, mass, &theta, rng)?;
    let mut da = DualAveragingState::new(eps0, p0)?;
    let mut state = ChainState::new(theta);
    let (mut divergences, mut accept_sum) = (0usize, 0.0);
    for it in 0..iters {
        let steps = if jitter { rng.random_range(1..=l_warmup) } else { l_warmup };
        let out = hmc_step(&mut state, model, mass, da.eps(), steps, rng)?;
        divergences += usize::from(out.divergent);
        accept_sum += out.accept_prob.as_f64();
        da = da_update(&da, out.accept_prob)?;
        record(it, &state.theta);
    }
    if divergences == iters {
        return Err(Error::AdaptationFailed(format!("all {iters} warmup iterations diverged")));
    }
    let eps = da.eps_avg();
    if !(eps > P::Scalar::zero() && eps.is_finite()) {
        return Err(Error::AdaptationFailed(format!("adapted step size {eps} is unusable")));
    }
    Ok((eps, state.theta, accept_sum / iters as f64, divergences))
}

/// Warmup with dual averaging on an HMC chain with (by default jittered)
/// path lengths up to `cfg.l_warmup`. The adaptation
/// statistic is the clipped Metropolis ratio. Returns the averaged step size
/// frozen at the end of warmup together with the final chain position.
pub fn tune_step_size<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    cfg: &TuneConfig<P::Scalar>,
    rng: &mut R,
) -> Result<Tuned<P::Scalar>> {
    if cfg.warmup_iters == 0 {
        return Err(Error::config("warmup needs at least one iteration"));
    }
    if cfg.l_warmup == 0 {
        return Err(Error::config("warmup path length must be at least 1"));
    }
    if theta0.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: theta0.len(),
        });
    }
    mass.check_dim(model.dim())?;

    let d = model.dim();
    let n = cfg.warmup_iters;
    let mut sums = vec![0.0f64; d];
    let mut sq = vec![0.0f64; d];
    let mut count = 0usize;
    let (eps, theta, acc, div) = dual_averaging_run(model, mass, theta0.to_vec(), cfg.p0, n, cfg.l_warmup, cfg.jitter, rng, |it, th| {
        if cfg.adapt_mass && it >= n / 2 {
            count += 1;
            for (k, &x) in th.iter().enumerate() {
                let x = x.as_f64();
                sums[k] += x;
                sq[k] += x * x;
            }
        }
    })?;
    if !cfg.adapt_mass || count < 2 {
        return Ok(Tuned {
            eps,
            theta,
            mass: mass.clone(),
            mean_accept_prob: acc,
            divergences: div,
        });
    }

    // Momentum covariance is the inverse of the position variance.
    let diag: Vec<P::Scalar> = sums
        .iter()
        .zip(&sq)
        .map(|(&s, &q)| {
            let m = s / count as f64;
            let var = ((q - count as f64 * m * m) / (count - 1) as f64).max(1e-10);
            P::Scalar::lit(1.0 / var)
        })
        .collect();
    let new_mass = MassSpec::diagonal(diag)?;
    let extra = (n / 5).max(1);
    let (eps, theta, acc, div2) =
        dual_averaging_run(model, &new_mass, theta, cfg.p0, extra, cfg.l_warmup, cfg.jitter, rng, |_, _| {})?;
    Ok(Tuned {
        eps,
        theta,
        mass: new_mass,
        mean_accept_prob: acc,
        divergences: div + div2,
    })
}
