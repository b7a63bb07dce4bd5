//! Efficiency and accuracy metrics: effective sample size, expected squared
//! jump distance, Kolmogorov-Smirnov distance, and their normalization by
//! gradient cost.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::chain::Chain;
use crate::error::{Error, Result};
use crate::samplers::RunStats;
use crate::scalar::Real;

pub const MIN_ESS_LEN: usize = 10;

/// Effective sample size `N / (1 + 2 sum_k rho_k)`.
///
/// Autocovariances use the biased (divide-by-N) estimator, and the sum is
/// truncated with Geyer's initial positive monotone sequence: lag pairs
/// `rho_{2m} + rho_{2m+1}` are summed while positive and forced to be
/// non-increasing. The result is clamped to `(0, N]`.
pub fn ess<T: Real>(x: &[T]) -> Result<f64> {
    let n = x.len();
    if n < MIN_ESS_LEN {
        return Err(Error::UndefinedEss("fewer than 10 draws"));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::UndefinedEss("non-finite draw"));
    }
    let xs: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    let mean = xs.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = xs.iter().map(|v| v - mean).collect();
    let acov = |k: usize| c[..n - k].iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64;
    let gamma0 = acov(0);
    if !(gamma0 > 0.0) {
        return Err(Error::UndefinedEss("constant sequence"));
    }

    let mut sum_pairs = 0.0;
    let mut prev_pair = f64::INFINITY;
    let mut m = 0;
    while 2 * m + 1 < n {
        let pair = acov(2 * m) + acov(2 * m + 1);
        if pair <= 0.0 {
            break;
        }
        let pair = pair.min(prev_pair);
        sum_pairs += pair;
        prev_pair = pair;
        m += 1;
    }
    // tau = -1 + 2 * sum_m (rho_{2m} + rho_{2m+1})
    let tau = -1.0 + 2.0 * sum_pairs / gamma0;
    let n_f = n as f64;
    let ess = if tau > 0.0 { n_f / tau } else { n_f };
    Ok(ess.clamp(f64::MIN_POSITIVE, n_f))
}

/// Per-component ESS.
pub fn ess_per_component<T: Real>(chain: &Chain<T>) -> Result<Vec<f64>> {
    (0..chain.dim()).map(|j| ess(&chain.column(j))).collect()
}

/// Smallest component ESS divided by the gradient calls spent.
pub fn min_ess_per_grad<T: Real>(chain: &Chain<T>, grad_calls: u64) -> Result<f64> {
    if grad_calls == 0 {
        return Err(Error::config("gradient call count must be positive"));
    }
    let ess = ess_per_component(chain)?;
    let min = ess.into_iter().fold(f64::INFINITY, f64::min);
    Ok(min / grad_calls as f64)
}

/// Mean squared Euclidean jump between consecutive draws.
pub fn esjd<T: Real>(chain: &Chain<T>) -> Result<f64> {
    let n = chain.len();
    if n < 2 {
        return Err(Error::config("ESJD needs at least two draws"));
    }
    let mut total = 0.0;
    let mut rows = chain.rows();
    let mut prev = rows.next().expect("n >= 2");
    for r in rows {
        total += r.iter().zip(prev).map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2)).sum::<f64>();
        prev = r;
    }
    Ok(total / (n - 1) as f64)
}

fn sorted_f64<T: Real>(xs: &[T]) -> Result<Vec<f64>> {
    if xs.is_empty() {
        return Err(Error::config("KS distance needs a non-empty sample"));
    }
    let mut v: Vec<f64> = xs.iter().map(|x| x.as_f64()).collect();
    if v.iter().any(|x| x.is_nan()) {
        return Err(Error::NonFinite("KS sample"));
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Ok(v)
}

/// Reference for a KS comparison.
pub enum KsReference<'a> {
    Sample(&'a [f64]),
    Cdf(&'a dyn Fn(f64) -> f64),
}

/// `sup_x |F_a(x) - F_b(x)|` between two empirical CDFs, evaluated exactly
/// over the merged support.
pub fn ks_two_sample<A: Real, B: Real>(a: &[A], b: &[B]) -> Result<f64> {
    let a = sorted_f64(a)?;
    let b = sorted_f64(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `sup_x |F_n(x) - F(x)|` against a continuous CDF, using both one-sided
/// gaps at every sample point.
pub fn ks_vs_cdf<T: Real>(sample: &[T], cdf: impl Fn(f64) -> f64) -> Result<f64> {
    let s = sorted_f64(sample)?;
    let n = s.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in s.iter().enumerate() {
        let f = cdf(x);
        d = d.max((i + 1) as f64 / n - f).max(f - i as f64 / n);
    }
    Ok(d)
}

pub fn ks_distance<T: Real>(sample: &[T], reference: &KsReference<'_>) -> Result<f64> {
    match reference {
        KsReference::Sample(r) => ks_two_sample(sample, r),
        KsReference::Cdf(f) => ks_vs_cdf(sample, f),
    }
}

/// Largest per-component KS distance.
pub fn max_ks<T: Real>(chain: &Chain<T>, references: &[KsReference<'_>]) -> Result<f64> {
    if references.len() != chain.dim() {
        return Err(Error::DimensionMismatch {
            expected: chain.dim(),
            found: references.len(),
        });
    }
    let mut worst: f64 = 0.0;
    for (j, r) in references.iter().enumerate() {
        worst = worst.max(ks_distance(&chain.column(j), r)?);
    }
    Ok(worst)
}

/// Summary of one production run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub n_draws: usize,
    pub grad_calls: u64,
    pub accept_rate: f64,
    pub mean_accept_prob: f64,
    pub divergences: usize,
    pub min_ess: f64,
    pub min_ess_per_grad: f64,
    pub esjd: f64,
    pub esjd_per_grad: f64,
    pub ess: Vec<f64>,
    pub max_ks: Option<f64>,
}

impl RunReport {
    pub fn from_run<T: Real>(chain: &Chain<T>, stats: &RunStats) -> Result<Self> {
        if stats.grad_calls == 0 {
            return Err(Error::config("run spent no gradient calls"));
        }
        let ess = ess_per_component(chain)?;
        let min_ess = ess.iter().copied().fold(f64::INFINITY, f64::min);
        let esjd = esjd(chain)?;
        let g = stats.grad_calls as f64;
        Ok(Self {
            n_draws: chain.len(),
            grad_calls: stats.grad_calls,
            accept_rate: stats.accept_rate(),
            mean_accept_prob: stats.mean_accept_prob(),
            divergences: stats.divergences,
            min_ess,
            min_ess_per_grad: min_ess / g,
            esjd,
            esjd_per_grad: esjd / g,
            ess,
            max_ks: None,
        })
    }

    pub fn with_max_ks(mut self, ks: f64) -> Self {
        self.max_ks = Some(ks);
        self
    }

    pub const CSV_HEADER: [&'static str; 11] = [
        "n_draws",
        "grad_calls",
        "accept_rate",
        "mean_accept_prob",
        "divergences",
        "min_ess",
        "min_ess_per_grad",
        "esjd",
        "esjd_per_grad",
        "max_ks",
        "ess",
    ];

    /// Fields in [`CSV_HEADER`](Self::CSV_HEADER) order; floats at 17
    /// significant digits, the ESS vector `;`-separated.
    pub fn csv_row(&self) -> Vec<String> {
        let f = |x: f64| format!("{x:.16e}");
        vec![
            self.n_draws.to_string(),
            self.grad_calls.to_string(),
            f(self.accept_rate),
            f(self.mean_accept_prob),
            self.divergences.to_string(),
            f(self.min_ess),
            f(self.min_ess_per_grad),
            f(self.esjd),
            f(self.esjd_per_grad),
            self.max_ks.map(f).unwrap_or_default(),
            self.ess.iter().map(|&x| f(x)).collect::<Vec<_>>().join(";"),
        ]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serializes")
    }
}
