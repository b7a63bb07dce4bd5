mod common;

use common::*;
use ehmc::diagnostics::ks_vs_cdf;
use ehmc::{
    ess, learn_batch_distribution, run_sampler, tune_step_size, BatchDistribution, BatchLearnConfig, Chain, MassSpec,
    SamplerConfig, SamplerKind, TargetModel, TuneConfig,
};

const DRAWS: usize = 50_000;

struct Setup {
    eps: f64,
    theta: Vec<f64>,
    dist: BatchDistribution,
}

fn setup(model: &TargetModel<ehmc::models::MvnModel<f64>>, seed: u64) -> Setup {
    let d = model.dim();
    let mut r = rng(seed);
    let tuned = tune_step_size(model, &MassSpec::identity(), &vec![0.0; d], &TuneConfig::new(0.8, 1000), &mut r).unwrap();
    let mut cfg = BatchLearnConfig::new(tuned.eps);
    cfg.iters = 1000;
    let learned = learn_batch_distribution(model, &MassSpec::identity(), &tuned.theta, &cfg, &mut r).unwrap();
    Setup {
        eps: tuned.eps,
        theta: learned.theta,
        dist: learned.distribution,
    }
}

/// Mean within 3 Monte Carlo standard errors, variance within 5%, KS < 0.02.
fn check_standard_marginal(name: &str, x: &[f64], sd: f64) {
    let n_eff = ess(x).unwrap();
    let se = sd / n_eff.sqrt();
    let m = mean(x);
    assert!(m.abs() < 3.0 * se, "{name}: mean {m} se {se}");
    let var = variance(x);
    assert!((var / (sd * sd) - 1.0).abs() < 0.05, "{name}: variance {var}");
    let ks = ks_vs_cdf(x, |t| std_normal_cdf(t / sd)).unwrap();
    assert!(ks < 0.02, "{name}: ks {ks}");
}

fn run(kind: SamplerKind, model: &TargetModel<ehmc::models::MvnModel<f64>>, s: &Setup, eta: f64, seed: u64) -> ehmc::SamplerRun<f64> {
    let mut cfg = SamplerConfig::new(kind, s.eps, DRAWS);
    cfg.eta = eta;
    cfg.l_fixed = 10;
    run_sampler(model, &MassSpec::identity(), &s.theta, Some(&s.dist), &cfg, &mut rng(seed)).unwrap()
}

#[test]
fn all_samplers_leave_1d_gaussian_invariant() {
    let m = TargetModel::new(mvn(1, 0.0));
    let s = setup(&m, 1);
    // Fixed-length HMC has its own test below.
    for (kind, eta) in [
        (SamplerKind::HmcJitter, 1.0),
        (SamplerKind::Ehmc, 1.0),
        (SamplerKind::Prhmc, 0.25),
        (SamplerKind::Prhmc, 1.0),
    ] {
        let out = run(kind, &m, &s, eta, 2);
        assert_eq!(out.chain.len(), DRAWS);
        check_standard_marginal(&format!("{kind} eta {eta}"), &out.chain.column(0), 1.0);
    }
}

#[test]
fn samplers_on_correlated_2d_gaussian() {
    let m = TargetModel::new(mvn(2, 0.9));
    let s = setup(&m, 3);
    for (kind, eta) in [(SamplerKind::HmcJitter, 1.0), (SamplerKind::Ehmc, 1.0), (SamplerKind::Prhmc, 0.25)] {
        let out = run(kind, &m, &s, eta, 4);
        let (x, y) = (out.chain.column(0), out.chain.column(1));
        check_standard_marginal(&format!("{kind} x"), &x, 1.0);
        check_standard_marginal(&format!("{kind} y"), &y, 1.0);
        let (mx, my) = (mean(&x), mean(&y));
        let cov = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>() / (DRAWS - 1) as f64;
        assert!((cov / 0.9 - 1.0).abs() < 0.05, "{kind}: cov {cov}");
    }
}

#[test]
fn drawn_lengths_are_independent_of_the_chain() {
    let m = TargetModel::new(mvn(3, 0.5));
    let s = setup(&m, 5);
    let out = run(SamplerKind::Ehmc, &m, &s, 1.0, 6);
    let lengths: Vec<f64> = out.stats.lengths.iter().map(|&l| l as f64).collect();
    let norms: Vec<f64> = out.chain.rows().map(|r| r.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
    // Correlate the length used at t with the state it started from.
    let (l, n) = (&lengths[1..], &norms[..DRAWS - 1]);
    let (ml, mn) = (mean(l), mean(n));
    let cov = l.iter().zip(n).map(|(a, b)| (a - ml) * (b - mn)).sum::<f64>() / l.len() as f64;
    let corr = cov / (variance(l) * variance(n)).sqrt();
    // Lengths are i.i.d.; the norm series is autocorrelated, so use its ESS.
    let se = 1.0 / ess(&norms).unwrap().min(l.len() as f64).sqrt();
    assert!(corr.abs() < 3.0 * se, "corr {corr} se {se}");
}

#[test]
fn full_refresh_prhmc_matches_ehmc_with_shortened_lengths() {
    let m = TargetModel::new(mvn(2, 0.9));
    let s = setup(&m, 7);
    let short = BatchDistribution::new(s.dist.lengths().iter().map(|l| l.div_ceil(3)).collect()).unwrap();
    let pr = run(SamplerKind::Prhmc, &m, &s, 1.0, 8);
    let mut cfg = SamplerConfig::new(SamplerKind::Ehmc, s.eps, DRAWS);
    cfg.seed = 9;
    let eh = run_sampler(&m, &MassSpec::identity(), &s.theta, Some(&short), &cfg, &mut rng(9)).unwrap();
    assert_eq!(pr.stats.refreshes, DRAWS);
    for k in 0..2 {
        let (a, b) = (pr.chain.column(k), eh.chain.column(k));
        let se = (1.0 / ess(&a).unwrap() + 1.0 / ess(&b).unwrap()).sqrt();
        assert!((mean(&a) - mean(&b)).abs() < 3.0 * se);
        let sq = |x: &[f64]| x.iter().map(|v| v * v).collect::<Vec<_>>();
        let (sa, sb) = (sq(&a), sq(&b));
        // Var(theta^2) = 2 for a standard normal marginal.
        let se2 = (2.0 / ess(&sa).unwrap() + 2.0 / ess(&sb).unwrap()).sqrt();
        assert!((mean(&sa) - mean(&sb)).abs() < 3.0 * se2);
    }
}

#[test]
fn chains_write_and_read_back() {
    let m = TargetModel::new(mvn(2, 0.5));
    let s = setup(&m, 10);
    let mut cfg = SamplerConfig::new(SamplerKind::Prhmc, s.eps, 100);
    cfg.eta = 0.5;
    let out = run_sampler(&m, &MassSpec::identity(), &s.theta, Some(&s.dist), &cfg, &mut rng(11)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("chain.csv");
    out.chain.write_csv(std::fs::File::create(&path).unwrap()).unwrap();
    let back: Chain<f64> = Chain::read_csv(std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, out.chain);
}

#[test]
fn fixed_length_baseline_with_tuned_step() {
    // Ten steps at the tuned step size sit close to half an oscillation
    // period, so theta^2 can be nearly conserved from draw to draw. The band
    // is three standard errors of the mean of theta^2, from its own ESS.
    let m = TargetModel::new(mvn(1, 0.0));
    for seed in 12..20 {
        let s = setup(&m, seed);
        let out = run(SamplerKind::HmcFixed, &m, &s, 1.0, seed + 100);
        let sq: Vec<f64> = out.chain.column(0).iter().map(|v| v * v).collect();
        let se = (2.0 / ess(&sq).unwrap()).sqrt();
        let m2 = mean(&sq);
        assert!((m2 - 1.0).abs() < 3.0 * se, "seed {seed}: E[x^2] {m2} se {se}");
    }
}
