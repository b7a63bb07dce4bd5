#![allow(dead_code)]

use ehmc::models::{
    irt_simulate, logistic_simulate, sv_simulate, IrtModel, LogisticModel, MvnModel, MvnSpec, SvModel,
};
use ehmc::Real;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal<R: Rng>(r: &mut R) -> f64 {
    f64::standard_normal(r)
}

pub fn mvn(d: usize, rho: f64) -> MvnModel<f64> {
    MvnModel::new(MvnSpec::new(d, rho).unwrap()).unwrap()
}

pub fn logistic(n: usize, p: usize, seed: u64) -> LogisticModel<f64> {
    LogisticModel::new(logistic_simulate(n, p, &mut rng(seed)).unwrap())
}

/// SV model on a simulated series, plus the true unconstrained parameters.
pub fn sv(t: usize, seed: u64) -> (SvModel<f64>, Vec<f64>) {
    let sim = sv_simulate(t, 0.98, 0.65, 0.15, &mut rng(seed)).unwrap();
    let truth = SvModel::to_unconstrained(0.98, 0.65, 0.0225, &sim.x);
    (SvModel::new(sim.data), truth)
}

pub fn irt(items: usize, persons: usize, seed: u64) -> (IrtModel<f64>, Vec<f64>) {
    let (data, params) = irt_simulate(items, persons, &mut rng(seed)).unwrap();
    (IrtModel::new(data), params.to_unconstrained())
}

pub fn jitter<R: Rng>(center: &[f64], scale: f64, r: &mut R) -> Vec<f64> {
    center.iter().map(|c| c + scale * normal(r)).collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

pub fn variance(x: &[f64]) -> f64 {
    let m = mean(x);
    x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (x.len() - 1) as f64
}

pub fn std_normal_cdf(x: f64) -> f64 {
    use statrs::distribution::{ContinuousCDF, Normal};
    Normal::standard().cdf(x)
}
