//! Stochastic volatility posterior.
//!
//! Observations `y_t = eps_t kappa exp(x_t / 2)`, latent AR(1) log-volatility
//! `x_t = phi x_{t-1} + eta_t`, `eta_t ~ N(0, sigma^2)`, stationary start.
//! Priors: `p(kappa) ~ 1/kappa`, `(1 + phi)/2 ~ Beta(20, 1.5)`,
//! `sigma^2 ~ Scale-inv-chi^2(10, 0.05)`. The sampler works on
//! `alpha = log((1 + phi)/(1 - phi))`, `beta = log kappa`,
//! `gamma = log sigma^2`, followed by `x_1..x_T`.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hamiltonian::Potential;
use crate::scalar::{sigmoid, softplus, Real};

use super::{check_len, ParamGroup};

#[derive(Clone, Debug, PartialEq)]
pub struct SvData<T> {
    pub y: Vec<T>,
}

impl<T: Real> SvData<T> {
    pub fn new(y: Vec<T>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::config("series must have at least one observation"));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observations"));
        }
        Ok(Self { y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["y"])?;
        for v in &self.y {
            out.write_record([format!("{:.16e}", v.as_f64())])?;
        }
        out.flush()?;
        Ok(())
    }

    /// One-column CSV, header optional.
    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let chain = crate::chain::Chain::<T>::read_csv(r)?;
        if chain.dim() != 1 {
            return Err(Error::config("volatility data must have exactly one column"));
        }
        Self::new(chain.as_slice().to_vec())
    }
}

#[derive(Clone, Debug)]
pub struct SvSimulation<T> {
    pub data: SvData<T>,
    pub x: Vec<T>,
}

/// Draws a series of length `t` from the generative model.
pub fn sv_simulate<T: Real, R: Rng + ?Sized>(
    t: usize,
    phi: T,
    kappa: T,
    sigma: T,
    rng: &mut R,
) -> Result<SvSimulation<T>> {
    if t == 0 {
        return Err(Error::config("series length must be positive"));
    }
    if !(phi.abs() < T::one()) || !(kappa > T::zero()) || !(sigma > T::zero()) {
        return Err(Error::config("need |phi| < 1, kappa > 0 and sigma > 0"));
    }
    let mut x = Vec::with_capacity(t);
    let mut prev = sigma / (T::one() - phi * phi).sqrt() * T::standard_normal(rng);
    x.push(prev);
    for _ in 1..t {
        prev = phi * prev + sigma * T::standard_normal(rng);
        x.push(prev);
    }
    let y = x
        .iter()
        .map(|&xt| T::standard_normal(rng) * kappa * (T::lit(0.5) * xt).exp())
        .collect();
    Ok(SvSimulation {
        data: SvData::new(y)?,
        x,
    })
}

#[derive(Clone, Debug)]
pub struct SvModel<T> {
    data: SvData<T>,
    y2: Vec<T>,
}

impl<T: Real> SvModel<T> {
    pub fn new(data: SvData<T>) -> Self {
        let y2 = data.y.iter().map(|&v| v * v).collect();
        Self { data, y2 }
    }

    pub fn data(&self) -> &SvData<T> {
        &self.data
    }

    pub fn series_len(&self) -> usize {
        self.data.len()
    }

    /// Maps `(phi, kappa, sigma^2, x)` to the unconstrained vector.
    pub fn to_unconstrained(phi: T, kappa: T, sigma2: T, x: &[T]) -> Vec<T> {
        let one = T::one();
        let mut out = vec![((one + phi) / (one - phi)).ln(), kappa.ln(), sigma2.ln()];
        out.extend_from_slice(x);
        out
    }

    /// `(phi, kappa, sigma)` from an unconstrained vector.
    pub fn constrained(params: &[T]) -> (T, T, T) {
        let phi = (T::lit(0.5) * params[0]).tanh();
        (phi, params[1].exp(), (T::lit(0.5) * params[2]).exp())
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        vec![
            ParamGroup::range("params", 0..3),
            ParamGroup::range("x", 3..3 + self.series_len()),
        ]
    }

    pub fn potential_grad(&self, params: &[T]) -> Result<(T, Vec<T>)> {
        let mut g = vec![T::zero(); params.len()];
        let u = self.potential_and_gradient(params, &mut g)?;
        Ok((u, g))
    }

    /// The same potential assembled from the component log densities
    /// (Gaussian likelihood and transitions, Beta, scaled inverse chi-square,
    /// Jacobians), dropping only constants. Used to cross-check the closed
    /// form; differs from [`Potential::potential`] by a constant.
    pub fn potential_from_densities(&self, params: &[T]) -> Result<T> {
        let t_len = self.series_len();
        check_len(t_len + 3, params.len())?;
        let (alpha, beta, gamma) = (params[0], params[1], params[2]);
        let x = &params[3..];
        let half = T::lit(0.5);
        let (phi, kappa, _) = Self::constrained(params);
        let sigma2 = gamma.exp();
        let normal_nll = |v: T, var: T| half * var.ln() + half * v * v / var;

        let mut u = T::zero();
        for (t, &xt) in x.iter().enumerate() {
            u += normal_nll(self.data.y[t], kappa * kappa * xt.exp());
        }
        u += normal_nll(x[0], sigma2 / (T::one() - phi * phi));
        for t in 1..t_len {
            u += normal_nll(x[t] - phi * x[t - 1], sigma2);
        }
        // kappa: p(kappa) ~ 1/kappa, Jacobian kappa.
        let _ = beta;
        // (1 + phi)/2 = s ~ Beta(20, 1.5), Jacobian ds/dalpha = s (1 - s).
        let s = sigmoid(alpha);
        u -= T::lit(19.0) * s.ln() + T::lit(0.5) * (T::one() - s).ln();
        u -= (s * (T::one() - s)).ln();
        // sigma^2 ~ Scale-inv-chi^2(nu = 10, s^2 = 0.05), Jacobian sigma^2.
        let (nu, s2) = (T::lit(10.0), T::lit(0.05));
        u += (half * nu + T::one()) * gamma + nu * s2 / (T::lit(2.0) * sigma2);
        u -= gamma;
        Ok(u)
    }
}

impl<T: Real> Potential for SvModel<T> {
    type Scalar = T;

    fn dim(&self) -> usize {
        self.series_len() + 3
    }

    fn potential(&self, params: &[T]) -> Result<T> {
        let mut g = vec![T::zero(); params.len()];
        self.potential_and_gradient(params, &mut g)
    }

    fn potential_and_gradient(&self, params: &[T], grad: &mut [T]) -> Result<T> {
        let t_len = self.series_len();
        check_len(t_len + 3, params.len())?;
        let (alpha, beta, gamma) = (params[0], params[1], params[2]);
        let x = &params[3..];
        let (half, one, two) = (T::lit(0.5), T::one(), T::lit(2.0));
        let tf = T::from_usize_lossy(t_len);

        let phi = (half * alpha).tanh();
        let one_m_phi2 = one - phi * phi;
        let s = (-gamma).exp();
        let e2b = (-two * beta).exp();

        grad.iter_mut().for_each(|g| *g = T::zero());
        let (ga, gb, gg) = (0, 1, 2);

        // T beta + sum x_t / 2 + sum y_t^2 / (2 e^{2 beta} e^{x_t})
        let mut u = tf * beta;
        grad[gb] = tf;
        for (t, &xt) in x.iter().enumerate() {
            let obs = half * self.y2[t] * e2b * (-xt).exp();
            u += half * xt + obs;
            grad[gb] -= two * obs;
            grad[3 + t] += half - obs;
        }

        // -20.5 alpha + 22.5 log(e^alpha + 1)
        u += T::lit(-20.5) * alpha + T::lit(22.5) * softplus(alpha);
        grad[ga] += T::lit(-20.5) + T::lit(22.5) * sigmoid(alpha);

        // (T/2 + 5) gamma + 1 / (4 e^gamma)
        u += (half * tf + T::lit(5.0)) * gamma + T::lit(0.25) * s;
        grad[gg] += half * tf + T::lit(5.0) - T::lit(0.25) * s;

        // 2 x_1^2 e^alpha / ((e^alpha + 1)^2 e^gamma) = x_1^2 (1 - phi^2) s / 2
        let x1 = x[0];
        let init = half * x1 * x1 * one_m_phi2 * s;
        u += init;
        grad[gg] -= init;
        grad[ga] -= half * x1 * x1 * s * phi * one_m_phi2;
        grad[3] += x1 * one_m_phi2 * s;

        // 1/2 sum_{t >= 2} e^{-gamma} (x_t - phi x_{t-1})^2
        let dphi = half * one_m_phi2;
        let mut ss = T::zero();
        let mut cross = T::zero();
        for t in 1..t_len {
            let r = x[t] - phi * x[t - 1];
            ss += r * r;
            cross += r * x[t - 1];
            grad[3 + t] += s * r;
            grad[3 + t - 1] -= s * r * phi;
        }
        u += half * s * ss;
        grad[gg] -= half * s * ss;
        grad[ga] -= s * cross * dphi;

        if !u.is_finite() {
            return Err(Error::NonFinite("volatility potential"));
        }
        Ok(u)
    }
}
