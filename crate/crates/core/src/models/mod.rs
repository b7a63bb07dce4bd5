//! Benchmark posteriors with analytic gradients.

mod irt;
mod logistic;
mod mvn;
mod sv;

pub use irt::{irt_simulate, IrtData, IrtModel, IrtParams};
pub use logistic::{load_logistic_csv, logistic_simulate, LogisticData, LogisticModel};
pub use mvn::{Cholesky, MvnModel, MvnSpec};
pub use sv::{sv_simulate, SvData, SvModel, SvSimulation};

use num_traits::Zero;

use crate::error::{Error, Result};
use crate::hamiltonian::Potential;
use crate::scalar::Real;

pub(crate) fn check_len(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// Named block of coordinates, used to report metrics per parameter group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamGroup {
    pub name: &'static str,
    pub indices: Vec<usize>,
}

impl ParamGroup {
    pub fn range(name: &'static str, r: std::ops::Range<usize>) -> Self {
        Self {
            name,
            indices: r.collect(),
        }
    }
}

/// Central finite-difference gradient of `model` at `theta` with step `h`.
pub fn finite_difference_gradient<P: Potential>(model: &P, theta: &[P::Scalar], h: P::Scalar) -> Result<Vec<P::Scalar>> {
    check_len(model.dim(), theta.len())?;
    let two = P::Scalar::lit(2.0);
    let mut x = theta.to_vec();
    let mut g = Vec::with_capacity(theta.len());
    for k in 0..theta.len() {
        x[k] = theta[k] + h;
        let up = model.potential(&x)?;
        x[k] = theta[k] - h;
        let down = model.potential(&x)?;
        x[k] = theta[k];
        g.push((up - down) / (two * h));
    }
    Ok(g)
}

/// `|g - g_fd| / max(|g|, |g_fd|)` in the Euclidean norm, comparing the
/// analytic gradient with [`finite_difference_gradient`].
pub fn gradient_relative_error<P: Potential>(model: &P, theta: &[P::Scalar], h: P::Scalar) -> Result<f64> {
    let mut g = vec![P::Scalar::zero(); theta.len()];
    model.potential_and_gradient(theta, &mut g)?;
    let fd = finite_difference_gradient(model, theta, h)?;
    let norm = |v: &mut dyn Iterator<Item = f64>| v.map(|x| x * x).sum::<f64>().sqrt();
    let diff = norm(&mut g.iter().zip(&fd).map(|(a, b)| (*a - *b).as_f64()));
    let scale = norm(&mut g.iter().map(|a| a.as_f64())).max(norm(&mut fd.iter().map(|a| a.as_f64())));
    Ok(if scale == 0.0 { diff } else { diff / scale })
}
