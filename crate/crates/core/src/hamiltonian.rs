//! Phase-space types, the Hamiltonian, momentum draws and the leapfrog
//! integrator.
//!
//! Gradient accounting is exact: every call into a model's gradient goes
//! through [`TargetModel`], which keeps a monotone counter. A leapfrog run of
//! `L >= 1` steps from a fresh phase point costs `L + 1` gradient calls, the
//! first one at the starting position.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};

use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::scalar::{all_finite, Real};

/// Absolute energy error beyond which a trajectory is declared divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1000.0;

/// Differentiable negative log density, up to an additive constant.
pub trait Potential {
    type Scalar: Real;

    fn dim(&self) -> usize;

    fn potential(&self, theta: &[Self::Scalar]) -> Result<Self::Scalar>;

    /// Writes `grad U(theta)` into `grad` and returns `U(theta)`.
    fn potential_and_gradient(
        &self,
        theta: &[Self::Scalar],
        grad: &mut [Self::Scalar],
    ) -> Result<Self::Scalar>;
}

macro_rules! forward_potential {
    ($($ty:ty),*) => {$(
        impl<P: Potential + ?Sized> Potential for $ty {
            type Scalar = P::Scalar;
            fn dim(&self) -> usize {
                (**self).dim()
            }
            fn potential(&self, theta: &[P::Scalar]) -> Result<P::Scalar> {
                (**self).potential(theta)
            }
            fn potential_and_gradient(&self, theta: &[P::Scalar], grad: &mut [P::Scalar]) -> Result<P::Scalar> {
                (**self).potential_and_gradient(theta, grad)
            }
        }
    )*};
}

forward_potential!(&P, Box<P>, std::sync::Arc<P>);

/// A [`Potential`] together with its gradient-evaluation counter.
///
/// The counter is atomic so a model can be shared across threads, but the
/// intended use is one instance per chain so that per-chain counts stay
/// meaningful.
#[derive(Debug)]
pub struct TargetModel<P> {
    inner: P,
    grad_calls: AtomicU64,
}

impl<P: Potential + Clone> Clone for TargetModel<P> {
    /// Clones the model with a fresh counter.
    fn clone(&self) -> Self {
        Self::new(self.inner.clone())
    }
}

impl<P: Potential> TargetModel<P> {
    pub fn new(inner: P) -> Self {
        Self {
            inner,
            grad_calls: AtomicU64::new(0),
        }
    }

    pub fn model(&self) -> &P {
        &self.inner
    }

    pub fn into_inner(self) -> P {
        self.inner
    }

    pub fn dim(&self) -> usize {
        self.inner.dim()
    }

    pub fn grad_calls(&self) -> u64 {
        self.grad_calls.load(Ordering::Relaxed)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: n,
            });
        }
        Ok(())
    }

    /// Potential only. Not counted.
    pub fn potential(&self, theta: &[P::Scalar]) -> Result<P::Scalar> {
        self.check_dim(theta.len())?;
        let u = self.inner.potential(theta)?;
        if !u.is_finite() {
            return Err(Error::NonFinite("potential"));
        }
        Ok(u)
    }

    /// Potential and gradient; increments the counter by exactly one.
    pub fn eval(&self, theta: &[P::Scalar], grad: &mut [P::Scalar]) -> Result<P::Scalar> {
        self.check_dim(theta.len())?;
        self.check_dim(grad.len())?;
        self.grad_calls.fetch_add(1, Ordering::Relaxed);
        let u = self.inner.potential_and_gradient(theta, grad)?;
        if !u.is_finite() {
            return Err(Error::NonFinite("potential"));
        }
        if !all_finite(grad) {
            return Err(Error::NonFinite("gradient"));
        }
        Ok(u)
    }

    pub fn gradient(&self, theta: &[P::Scalar]) -> Result<Vec<P::Scalar>> {
        let mut g = vec![P::Scalar::zero(); theta.len()];
        self.eval(theta, &mut g)?;
        Ok(g)
    }
}

/// A position-momentum pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint<T> {
    pub theta: Vec<T>,
    pub v: Vec<T>,
}

impl<T: Real> PhasePoint<T> {
    pub fn new(theta: Vec<T>, v: Vec<T>) -> Result<Self> {
        if theta.is_empty() {
            return Err(Error::config("phase point dimension must be at least 1"));
        }
        if theta.len() != v.len() {
            return Err(Error::DimensionMismatch {
                expected: theta.len(),
                found: v.len(),
            });
        }
        Ok(Self { theta, v })
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn flipped(&self) -> Self {
        Self {
            theta: self.theta.clone(),
            v: self.v.iter().map(|&x| -x).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        all_finite(&self.theta) && all_finite(&self.v)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum MassKind<T> {
    Identity,
    Diagonal { diag: Vec<T>, inv: Vec<T> },
}

/// Covariance of the auxiliary momentum: identity or diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct MassSpec<T> {
    kind: MassKind<T>,
}

impl<T: Real> Default for MassSpec<T> {
    fn default() -> Self {
        Self::identity()
    }
}

impl<T: Real> MassSpec<T> {
    pub fn identity() -> Self {
        Self {
            kind: MassKind::Identity,
        }
    }

    pub fn diagonal(diag: Vec<T>) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::config("diagonal mass must have at least one entry"));
        }
        if let Some(i) = diag.iter().position(|&m| !(m > T::zero() && m.is_finite())) {
            return Err(Error::config(format!(
                "diagonal mass entry {i} is not a positive finite number"
            )));
        }
        let inv = diag.iter().map(|&m| m.recip()).collect();
        Ok(Self {
            kind: MassKind::Diagonal { diag, inv },
        })
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, MassKind::Identity)
    }

    /// Diagonal entries, or `None` for the identity.
    pub fn diag(&self) -> Option<&[T]> {
        match &self.kind {
            MassKind::Identity => None,
            MassKind::Diagonal { diag, .. } => Some(diag),
        }
    }

    pub fn check_dim(&self, d: usize) -> Result<()> {
        match &self.kind {
            MassKind::Diagonal { diag, .. } if diag.len() != d => Err(Error::DimensionMismatch {
                expected: d,
                found: diag.len(),
            }),
            _ => Ok(()),
        }
    }

    #[inline]
    fn inv_at(&self, i: usize) -> T {
        match &self.kind {
            MassKind::Identity => T::one(),
            MassKind::Diagonal { inv, .. } => inv[i],
        }
    }

    /// `a . M^{-1} b`
    pub fn inv_dot(&self, a: &[T], b: &[T]) -> T {
        match &self.kind {
            MassKind::Identity => crate::scalar::dot(a, b),
            MassKind::Diagonal { inv, .. } => a
                .iter()
                .zip(b)
                .zip(inv)
                .fold(T::zero(), |acc, ((&x, &y), &m)| acc + x * m * y),
        }
    }

    /// `1/2 v^T M^{-1} v`
    pub fn kinetic(&self, v: &[T]) -> T {
        T::lit(0.5) * self.inv_dot(v, v)
    }

    /// Draws `d` independent components, the i-th from `N(0, M_ii)`.
    pub fn sample_momentum<R: Rng + ?Sized>(&self, d: usize, rng: &mut R) -> Result<Vec<T>> {
        if d == 0 {
            return Err(Error::config("momentum dimension must be at least 1"));
        }
        self.check_dim(d)?;
        Ok(match &self.kind {
            MassKind::Identity => (0..d).map(|_| T::standard_normal(rng)).collect(),
            MassKind::Diagonal { diag, .. } => diag
                .iter()
                .map(|&m| m.sqrt() * T::standard_normal(rng))
                .collect(),
        })
    }
}

/// Free-function form of [`MassSpec::sample_momentum`].
pub fn sample_momentum<T: Real, R: Rng + ?Sized>(
    mass: &MassSpec<T>,
    d: usize,
    rng: &mut R,
) -> Result<Vec<T>> {
    mass.sample_momentum(d, rng)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HamiltonianValue<T> {
    pub potential_energy: T,
    pub kinetic_energy: T,
    pub total: T,
}

/// `H(theta, v) = U(theta) + 1/2 v^T M^{-1} v`. Does not touch the gradient
/// counter.
pub fn hamiltonian<P: Potential>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    p: &PhasePoint<P::Scalar>,
) -> Result<HamiltonianValue<P::Scalar>> {
    mass.check_dim(p.dim())?;
    if !all_finite(&p.v) {
        return Err(Error::NonFinite("momentum"));
    }
    let potential_energy = model.potential(&p.theta)?;
    let kinetic_energy = mass.kinetic(&p.v);
    Ok(HamiltonianValue {
        potential_energy,
        kinetic_energy,
        total: potential_energy + kinetic_energy,
    })
}

/// Phase point plus the potential and gradient at its position, so that
/// continuing a trajectory never re-evaluates the gradient it ended on.
#[derive(Clone, Debug)]
pub(crate) struct Particle<T> {
    pub theta: Vec<T>,
    pub v: Vec<T>,
    pub grad: Vec<T>,
    pub potential: T,
}

impl<T: Real> Particle<T> {
    /// Costs one gradient call.
    pub fn new<P: Potential<Scalar = T>>(model: &TargetModel<P>, theta: Vec<T>, v: Vec<T>) -> Result<Self> {
        let mut grad = vec![T::zero(); theta.len()];
        let potential = model.eval(&theta, &mut grad)?;
        Ok(Self {
            theta,
            v,
            grad,
            potential,
        })
    }

    pub fn energy(&self, mass: &MassSpec<T>) -> T {
        self.potential + mass.kinetic(&self.v)
    }

    pub fn point(&self) -> PhasePoint<T> {
        PhasePoint {
            theta: self.theta.clone(),
            v: self.v.clone(),
        }
    }

    pub fn negate_momentum(&mut self) {
        self.v.iter_mut().for_each(|x| *x = -*x);
    }

    /// One leapfrog step (one gradient call). On error the particle is left
    /// in an unspecified state.
    pub fn step<P: Potential<Scalar = T>>(
        &mut self,
        model: &TargetModel<P>,
        mass: &MassSpec<T>,
        eps: T,
    ) -> Result<()> {
        let half = T::lit(0.5) * eps;
        for (v, &g) in self.v.iter_mut().zip(&self.grad) {
            *v -= half * g;
        }
        for (i, (x, &v)) in self.theta.iter_mut().zip(&self.v).enumerate() {
            *x += eps * mass.inv_at(i) * v;
        }
        self.potential = model.eval(&self.theta, &mut self.grad)?;
        for (v, &g) in self.v.iter_mut().zip(&self.grad) {
            *v -= half * g;
        }
        Ok(())
    }

    /// Advances `steps` leapfrog steps. Any non-finite state or an energy
    /// error against `h0` above [`DIVERGENCE_THRESHOLD`] is reported as a
    /// divergence at the 1-based step `first_step + k`.
    pub fn advance<P: Potential<Scalar = T>>(
        &mut self,
        model: &TargetModel<P>,
        mass: &MassSpec<T>,
        eps: T,
        steps: usize,
        h0: T,
        first_step: usize,
    ) -> Result<()> {
        for k in 0..steps {
            self.step_checked(model, mass, eps, h0, first_step + k)?;
        }
        Ok(())
    }

    pub fn step_checked<P: Potential<Scalar = T>>(
        &mut self,
        model: &TargetModel<P>,
        mass: &MassSpec<T>,
        eps: T,
        h0: T,
        step: usize,
    ) -> Result<()> {
        self.step(model, mass, eps)
            .map_err(|e| if e.is_divergence() { Error::Divergence { step } } else { e })?;
        let h = self.energy(mass);
        if !h.is_finite() || !all_finite(&self.v) || (h - h0).abs() > T::lit(DIVERGENCE_THRESHOLD) {
            return Err(Error::Divergence { step });
        }
        Ok(())
    }
}

pub(crate) fn check_eps<T: Real>(eps: T) -> Result<()> {
    if !(eps > T::zero() && eps.is_finite()) {
        return Err(Error::config(format!("step size must be positive and finite, got {eps}")));
    }
    Ok(())
}

fn start_particle<P: Potential>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    p: &PhasePoint<P::Scalar>,
    eps: P::Scalar,
) -> Result<Particle<P::Scalar>> {
    check_eps(eps)?;
    mass.check_dim(p.dim())?;
    if p.theta.len() != p.v.len() {
        return Err(Error::DimensionMismatch {
            expected: p.theta.len(),
            found: p.v.len(),
        });
    }
    if !p.is_finite() {
        return Err(Error::NonFinite("initial phase point"));
    }
    Particle::new(model, p.theta.clone(), p.v.clone())
}

/// State after `steps` leapfrog steps of size `eps`. `steps == 0` returns `p`
/// unchanged without touching the model.
pub fn leapfrog<P: Potential>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    p: &PhasePoint<P::Scalar>,
    eps: P::Scalar,
    steps: usize,
) -> Result<PhasePoint<P::Scalar>> {
    if steps == 0 {
        check_eps(eps)?;
        return Ok(p.clone());
    }
    let mut particle = start_particle(model, mass, p, eps)?;
    let h0 = particle.energy(mass);
    particle.advance(model, mass, eps, steps, h0, 1)?;
    Ok(particle.point())
}

/// Every intermediate state of a leapfrog run: element `k` (0-based) is the
/// state after `k + 1` steps, bitwise equal to `leapfrog(.., k + 1)`.
pub fn leapfrog_path<P: Potential>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    p: &PhasePoint<P::Scalar>,
    eps: P::Scalar,
    steps: usize,
) -> Result<Vec<PhasePoint<P::Scalar>>> {
    if steps == 0 {
        return Err(Error::config("leapfrog path needs at least one step"));
    }
    let mut particle = start_particle(model, mass, p, eps)?;
    let h0 = particle.energy(mass);
    let mut out = Vec::with_capacity(steps);
    for k in 1..=steps {
        particle.step_checked(model, mass, eps, h0, k)?;
        out.push(particle.point());
    }
    Ok(out)
}
