//! Hierarchical two-parameter logistic item response model.
//!
//! `logit P(y_ij = 1) = a_i (eta_j - b_i)` with `eta_j ~ N(0, s_eta^2)`,
//! `a_i ~ LogNormal(0, s_a^2)`, `b_i ~ LogNormal(mu_b, s_b^2)`,
//! half-Cauchy(0, 2) priors on the three scales and `mu_b ~ N(0, 25)`.
//!
//! Unconstrained layout (length `2I + J + 4`):
//! `log a_1..I, log b_1..I, eta_1..J, log s_eta, log s_a, mu_b, log s_b`.
//! Every log-transformed coordinate carries its Jacobian term.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::hamiltonian::Potential;
use crate::scalar::{sigmoid, softplus, Real};

use super::{check_len, ParamGroup};

const CAUCHY_SCALE: f64 = 2.0;
const MU_B_VAR: f64 = 25.0;

/// Row-major `I x J` binary responses (item `i`, person `j`).
#[derive(Clone, Debug, PartialEq)]
pub struct IrtData {
    items: usize,
    persons: usize,
    y: Vec<u8>,
}

impl IrtData {
    pub fn new(items: usize, persons: usize, y: Vec<u8>) -> Result<Self> {
        if items == 0 || persons == 0 {
            return Err(Error::config("need at least one item and one person"));
        }
        check_len(items * persons, y.len())?;
        if y.iter().any(|&v| v > 1) {
            return Err(Error::config("responses must be 0 or 1"));
        }
        Ok(Self { items, persons, y })
    }

    pub fn items(&self) -> usize {
        self.items
    }

    pub fn persons(&self) -> usize {
        self.persons
    }

    pub fn response(&self, i: usize, j: usize) -> u8 {
        self.y[i * self.persons + j]
    }

    /// One row per item, one column per person.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record((1..=self.persons).map(|j| format!("person_{j}")))?;
        for row in self.y.chunks_exact(self.persons) {
            out.write_record(row.iter().map(u8::to_string))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let chain = crate::chain::Chain::<f64>::read_csv(r)?;
        let y = chain
            .as_slice()
            .iter()
            .map(|&v| if v == 0.0 { Ok(0) } else if v == 1.0 { Ok(1) } else { Err(Error::config("responses must be 0 or 1")) })
            .collect::<Result<Vec<u8>>>()?;
        Self::new(chain.len(), chain.dim(), y)
    }
}

/// Constrained parameter values, as used by [`irt_simulate`].
#[derive(Clone, Debug, PartialEq)]
pub struct IrtParams<T> {
    pub a: Vec<T>,
    pub b: Vec<T>,
    pub eta: Vec<T>,
    pub sigma_eta: T,
    pub sigma_a: T,
    pub mu_b: T,
    pub sigma_b: T,
}

impl<T: Real> IrtParams<T> {
    pub fn to_unconstrained(&self) -> Vec<T> {
        let mut v: Vec<T> = self.a.iter().map(|x| x.ln()).collect();
        v.extend(self.b.iter().map(|x| x.ln()));
        v.extend_from_slice(&self.eta);
        v.extend([self.sigma_eta.ln(), self.sigma_a.ln(), self.mu_b, self.sigma_b.ln()]);
        v
    }
}

/// Draws responses from fixed hyperparameters `s_eta = 1`, `s_a = 0.3`,
/// `mu_b = 0`, `s_b = 0.5`.
pub fn irt_simulate<R: Rng + ?Sized>(items: usize, persons: usize, rng: &mut R) -> Result<(IrtData, IrtParams<f64>)> {
    let (sigma_eta, sigma_a, mu_b, sigma_b) = (1.0, 0.3, 0.0, 0.5);
    let a: Vec<f64> = (0..items).map(|_| (sigma_a * f64::standard_normal(rng)).exp()).collect();
    let b: Vec<f64> = (0..items).map(|_| (mu_b + sigma_b * f64::standard_normal(rng)).exp()).collect();
    let eta: Vec<f64> = (0..persons).map(|_| sigma_eta * f64::standard_normal(rng)).collect();
    let mut y = Vec::with_capacity(items * persons);
    for i in 0..items {
        for &e in &eta {
            let p = sigmoid(a[i] * (e - b[i]));
            y.push(u8::from(f64::uniform(rng) < p));
        }
    }
    let data = IrtData::new(items, persons, y)?;
    Ok((
        data,
        IrtParams {
            a,
            b,
            eta,
            sigma_eta,
            sigma_a,
            mu_b,
            sigma_b,
        },
    ))
}


#[derive(Clone, Debug)]
pub struct IrtModel<T> {
    data: IrtData,
    _scalar: std::marker::PhantomData<T>,
}

impl<T: Real> IrtModel<T> {
    pub fn new(data: IrtData) -> Self {
        Self {
            data,
            _scalar: std::marker::PhantomData,
        }
    }

    pub fn data(&self) -> &IrtData {
        &self.data
    }

    pub fn groups(&self) -> Vec<ParamGroup> {
        let (ni, nj) = (self.data.items, self.data.persons);
        vec![
            ParamGroup::range("a", 0..ni),
            ParamGroup::range("b", ni..2 * ni),
            ParamGroup::range("eta", 2 * ni..2 * ni + nj),
            ParamGroup::range("hyper", 2 * ni + nj..2 * ni + nj + 4),
        ]
    }

    pub fn potential_grad(&self, params: &[T]) -> Result<(T, Vec<T>)> {
        let mut g = vec![T::zero(); params.len()];
        let u = self.potential_and_gradient(params, &mut g)?;
        Ok((u, g))
    }
}

/// `-log` of a half-Cauchy(0, c) density in `log sigma`, Jacobian included,
/// and its derivative in `log sigma`.
fn half_cauchy_log_scale<T: Real>(log_sigma: T) -> (T, T) {
    let c2 = T::lit(CAUCHY_SCALE * CAUCHY_SCALE);
    let s2 = (T::lit(2.0) * log_sigma).exp();
    let u = (s2 / c2).ln_1p() - log_sigma;
    let du = T::lit(2.0) * s2 / (c2 + s2) - T::one();
    (u, du)
}

impl<T: Real> Potential for IrtModel<T> {
    type Scalar = T;

    fn dim(&self) -> usize {
        2 * self.data.items + self.data.persons + 4
    }

    fn potential(&self, params: &[T]) -> Result<T> {
        let mut g = vec![T::zero(); params.len()];
        self.potential_and_gradient(params, &mut g)
    }

    fn potential_and_gradient(&self, params: &[T], grad: &mut [T]) -> Result<T> {
        check_len(self.dim(), params.len())?;
        let (ni, nj) = (self.data.items, self.data.persons);
        let (oa, ob, oe) = (0, ni, 2 * ni);
        let oh = 2 * ni + nj;
        let (log_s_eta, log_s_a, mu_b, log_s_b) = (params[oh], params[oh + 1], params[oh + 2], params[oh + 3]);
        let half = T::lit(0.5);
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut u = T::zero();

        // Likelihood.
        for i in 0..ni {
            let a = params[oa + i].exp();
            let b = params[ob + i].exp();
            for j in 0..nj {
                let eta = params[oe + j];
                let z = a * (eta - b);
                let y = self.data.response(i, j);
                let r = if y == 1 {
                    u += softplus(-z);
                    -sigmoid(-z)
                } else {
                    u += softplus(z);
                    sigmoid(z)
                };
                grad[oa + i] += r * z;
                grad[ob + i] -= r * a * b;
                grad[oe + j] += r * a;
            }
        }

        // eta_j ~ N(0, s_eta^2)
        let inv_var_eta = (T::lit(-2.0) * log_s_eta).exp();
        let mut ss = T::zero();
        for j in 0..nj {
            let e = params[oe + j];
            ss += e * e;
            grad[oe + j] += e * inv_var_eta;
        }
        let njf = T::from_usize_lossy(nj);
        u += njf * log_s_eta + half * ss * inv_var_eta;
        grad[oh] += njf - ss * inv_var_eta;

        // log a_i ~ N(0, s_a^2): LogNormal density times Jacobian a_i.
        let inv_var_a = (T::lit(-2.0) * log_s_a).exp();
        let mut ss = T::zero();
        for i in 0..ni {
            let la = params[oa + i];
            ss += la * la;
            grad[oa + i] += la * inv_var_a;
        }
        let nif = T::from_usize_lossy(ni);
        u += nif * log_s_a + half * ss * inv_var_a;
        grad[oh + 1] += nif - ss * inv_var_a;

        // log b_i ~ N(mu_b, s_b^2)
        let inv_var_b = (T::lit(-2.0) * log_s_b).exp();
        let mut ss = T::zero();
        let mut dev_sum = T::zero();
        for i in 0..ni {
            let dev = params[ob + i] - mu_b;
            ss += dev * dev;
            dev_sum += dev;
            grad[ob + i] += dev * inv_var_b;
        }
        u += nif * log_s_b + half * ss * inv_var_b;
        grad[oh + 3] += nif - ss * inv_var_b;
        grad[oh + 2] -= dev_sum * inv_var_b;

        // mu_b ~ N(0, 25)
        u += half * mu_b * mu_b / T::lit(MU_B_VAR);
        grad[oh + 2] += mu_b / T::lit(MU_B_VAR);

        for k in [oh, oh + 1, oh + 3] {
            let (hu, hg) = half_cauchy_log_scale(params[k]);
            u += hu;
            grad[k] += hg;
        }

        if !u.is_finite() {
            return Err(Error::NonFinite("item response potential"));
        }
        Ok(u)
    }
}
