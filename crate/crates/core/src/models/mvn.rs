use crate::error::{Error, Result};
use crate::hamiltonian::Potential;
use crate::scalar::Real;

use super::check_len;

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub struct Cholesky<T> {
    n: usize,
    /// Row-major, upper triangle unused.
    l: Vec<T>,
}

impl<T: Real> Cholesky<T> {
    /// Factorizes the row-major `n x n` matrix `a`.
    pub fn factor(a: &[T], n: usize) -> Result<Self> {
        check_len(n * n, a.len())?;
        let mut l = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if !(s > T::zero()) {
                        return Err(Error::config("matrix is not positive definite"));
                    }
                    l[i * n + i] = s.sqrt();
                } else {
                    l[i * n + j] = s / l[j * n + j];
                }
            }
        }
        Ok(Self { n, l })
    }

    /// `L^{-1} b` in place.
    pub fn forward(&self, b: &mut [T]) {
        let n = self.n;
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[i * n + k] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// `L^{-T} b` in place.
    pub fn backward(&self, b: &mut [T]) {
        let n = self.n;
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in i + 1..n {
                s -= self.l[k * n + i] * b[k];
            }
            b[i] = s / self.l[i * n + i];
        }
    }

    /// `A^{-1} b` in place.
    pub fn solve(&self, b: &mut [T]) {
        self.forward(b);
        self.backward(b);
    }
}

/// Zero-mean Gaussian with covariance `A_ij = rho^{|i-j|}`.
#[derive(Clone, Debug)]
pub struct MvnSpec<T> {
    pub d: usize,
    pub rho: T,
}

impl<T: Real> MvnSpec<T> {
    pub fn new(d: usize, rho: T) -> Result<Self> {
        if d == 0 {
            return Err(Error::config("dimension must be at least 1"));
        }
        if !(rho.abs() < T::one()) {
            return Err(Error::config(format!("|rho| must be below 1, got {rho}")));
        }
        Ok(Self { d, rho })
    }

    pub fn covariance(&self) -> Vec<T> {
        let d = self.d;
        let mut a = vec![T::zero(); d * d];
        for i in 0..d {
            for j in 0..d {
                a[i * d + j] = self.rho.powi(i.abs_diff(j) as i32);
            }
        }
        a
    }
}

/// `U = theta^T A^{-1} theta / 2`, evaluated through a cached Cholesky
/// factor of `A`.
#[derive(Clone, Debug)]
pub struct MvnModel<T> {
    spec: MvnSpec<T>,
    chol: Cholesky<T>,
}

impl<T: Real> MvnModel<T> {
    pub fn new(spec: MvnSpec<T>) -> Result<Self> {
        let chol = Cholesky::factor(&spec.covariance(), spec.d)?;
        Ok(Self { spec, chol })
    }

    pub fn spec(&self) -> &MvnSpec<T> {
        &self.spec
    }

    /// Marginal standard deviation of every coordinate.
    pub fn marginal_sd(&self) -> Vec<T> {
        vec![T::one(); self.spec.d]
    }

    /// `(U, grad U)` at `theta`.
    pub fn potential_grad(&self, theta: &[T]) -> Result<(T, Vec<T>)> {
        let mut g = vec![T::zero(); self.spec.d];
        let u = self.potential_and_gradient(theta, &mut g)?;
        Ok((u, g))
    }
}

impl<T: Real> Potential for MvnModel<T> {
    type Scalar = T;

    fn dim(&self) -> usize {
        self.spec.d
    }

    fn potential(&self, theta: &[T]) -> Result<T> {
        check_len(self.spec.d, theta.len())?;
        let mut z = theta.to_vec();
        self.chol.forward(&mut z);
        Ok(T::lit(0.5) * z.iter().fold(T::zero(), |acc, &x| acc + x * x))
    }

    fn potential_and_gradient(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        check_len(self.spec.d, theta.len())?;
        grad.copy_from_slice(theta);
        self.chol.forward(grad);
        let u = T::lit(0.5) * grad.iter().fold(T::zero(), |acc, &x| acc + x * x);
        self.chol.backward(grad);
        Ok(u)
    }
}
