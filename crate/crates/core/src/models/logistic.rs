use std::fs::File;
use std::io::Write;
use std::path::Path;

use rand::Rng;


use crate::error::{Error, Result};
use crate::hamiltonian::Potential;
use crate::scalar::{sigmoid, softplus, Real};

use super::check_len;

/// Covariates (row-major `n x p`, standardized) and binary labels.
#[derive(Clone, Debug, PartialEq)]
pub struct LogisticData<T> {
    n: usize,
    p: usize,
    x: Vec<T>,
    y: Vec<T>,
}

impl<T: Real> LogisticData<T> {
    /// Standardizes every covariate column to mean 0 and (population)
    /// variance 1. `names` are used in error messages only.
    pub fn new(n: usize, p: usize, mut x: Vec<T>, y: Vec<T>, names: &[String]) -> Result<Self> {
        if n == 0 || p == 0 {
            return Err(Error::config("logistic data needs at least one row and one covariate"));
        }
        check_len(n * p, x.len())?;
        check_len(n, y.len())?;
        if let Some(i) = y.iter().position(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::config(format!("label in row {} is not 0 or 1", i + 1)));
        }
        let nf = T::from_usize_lossy(n);
        for j in 0..p {
            let mean = (0..n).fold(T::zero(), |s, i| s + x[i * p + j]) / nf;
            let var = (0..n).fold(T::zero(), |s, i| s + (x[i * p + j] - mean).powi(2)) / nf;
            if !(var > T::zero()) {
                return Err(Error::ConstantColumn {
                    column: j + 1,
                    name: names.get(j).cloned().unwrap_or_else(|| format!("x{}", j + 1)),
                });
            }
            let sd = var.sqrt();
            for i in 0..n {
                x[i * p + j] = (x[i * p + j] - mean) / sd;
            }
        }
        Ok(Self { n, p, x, y })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.x[i * self.p..(i + 1) * self.p]
    }

    pub fn labels(&self) -> &[T] {
        &self.y
    }

    /// Writes standardized covariates followed by the label column.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header: Vec<String> = (1..=self.p).map(|j| format!("x{j}")).collect();
        header.push("y".into());
        out.write_record(&header)?;
        for i in 0..self.n {
            let mut rec: Vec<String> = self.row(i).iter().map(|v| format!("{:.16e}", v.as_f64())).collect();
            rec.push(format!("{}", self.y[i].as_f64()));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Reads a numeric CSV whose last column is a 0/1 label. A first row that
/// does not parse as numbers is taken as a header.
pub fn load_logistic_csv<T: Real>(path: impl AsRef<Path>) -> Result<LogisticData<T>> {
    let path = path.as_ref();
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(File::open(path)?);
    let mut names: Vec<String> = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut width = None;
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = line + 1;
        if line == 0 && rec.iter().any(|f| f.parse::<f64>().is_err()) {
            names = rec.iter().map(str::to_owned).collect();
            width = Some(rec.len());
            continue;
        }
        let w = *width.get_or_insert(rec.len());
        if rec.len() != w {
            return Err(Error::Parse {
                path: path.into(),
                row,
                column: rec.len().min(w) + 1,
                message: format!("expected {w} fields, found {}", rec.len()),
            });
        }
        if w < 2 {
            return Err(Error::Parse {
                path: path.into(),
                row,
                column: 1,
                message: "need at least one covariate and a label".into(),
            });
        }
        for (col, f) in rec.iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| Error::Parse {
                path: path.into(),
                row,
                column: col + 1,
                message: format!("'{f}' is not a number"),
            })?;
            if col + 1 == w {
                if v != 0.0 && v != 1.0 {
                    return Err(Error::Parse {
                        path: path.into(),
                        row,
                        column: col + 1,
                        message: format!("label '{f}' is not 0 or 1"),
                    });
                }
                y.push(T::lit(v));
            } else {
                x.push(T::lit(v));
            }
        }
    }
    let n = y.len();
    let p = width.map_or(0, |w| w.saturating_sub(1));
    LogisticData::new(n, p, x, y, &names)
}

/// Synthetic data: standard normal covariates, coefficients from
/// `N(0, 0.5^2)`, Bernoulli labels.
pub fn logistic_simulate<T: Real, R: Rng + ?Sized>(n: usize, p: usize, rng: &mut R) -> Result<LogisticData<T>> {
    let beta: Vec<T> = (0..p).map(|_| T::lit(0.5) * T::standard_normal(rng)).collect();
    let mut x = Vec::with_capacity(n * p);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let row: Vec<T> = (0..p).map(|_| T::standard_normal(rng)).collect();
        let z = row.iter().zip(&beta).fold(T::zero(), |s, (&a, &b)| s + a * b);
        y.push(if T::uniform(rng) < sigmoid(z) { T::one() } else { T::zero() });
        x.extend(row);
    }
    LogisticData::new(n, p, x, y, &[])
}

/// Logistic regression posterior under a flat prior:
/// `U = sum_i log(1 + exp(x_i . theta)) - y_i x_i . theta`.
#[derive(Clone, Debug)]
pub struct LogisticModel<T> {
    data: LogisticData<T>,
}

impl<T: Real> LogisticModel<T> {
    pub fn new(data: LogisticData<T>) -> Self {
        Self { data }
    }

    pub fn data(&self) -> &LogisticData<T> {
        &self.data
    }

    pub fn potential_grad(&self, theta: &[T]) -> Result<(T, Vec<T>)> {
        let mut g = vec![T::zero(); self.data.p];
        let u = self.potential_and_gradient(theta, &mut g)?;
        Ok((u, g))
    }

    fn eta(&self, i: usize, theta: &[T]) -> T {
        self.data.row(i).iter().zip(theta).fold(T::zero(), |s, (&a, &b)| s + a * b)
    }
}

impl<T: Real> Potential for LogisticModel<T> {
    type Scalar = T;

    fn dim(&self) -> usize {
        self.data.p
    }

    fn potential(&self, theta: &[T]) -> Result<T> {
        check_len(self.data.p, theta.len())?;
        Ok((0..self.data.n).fold(T::zero(), |u, i| {
            let z = self.eta(i, theta);
            u + softplus(z) - self.data.y[i] * z
        }))
    }

    fn potential_and_gradient(&self, theta: &[T], grad: &mut [T]) -> Result<T> {
        check_len(self.data.p, theta.len())?;
        grad.iter_mut().for_each(|g| *g = T::zero());
        let mut u = T::zero();
        for i in 0..self.data.n {
            let z = self.eta(i, theta);
            let y = self.data.y[i];
            // softplus(z) - y z, with the y = 1 branch written as softplus(-z)
            // so tiny values keep their relative precision.
            u += if y == T::one() { softplus(-z) } else { softplus(z) };
            let r = if y == T::one() { -sigmoid(-z) } else { sigmoid(z) };
            for (g, &x) in grad.iter_mut().zip(self.data.row(i)) {
                *g += x * r;
            }
        }
        Ok(u)
    }
}
