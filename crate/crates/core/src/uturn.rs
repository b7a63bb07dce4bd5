//! Longest batches: the number of leapfrog steps until a trajectory first
//! turns back toward its starting point, and the empirical distribution of
//! that quantity along a fixed-length HMC chain.

use std::io::{Read, Write};

use rand::Rng;

use num_traits::{Float, Zero};

use crate::error::{Error, Result};
use crate::hamiltonian::{check_eps, MassSpec, Particle, PhasePoint, Potential, TargetModel};
use crate::scalar::Real;

pub const DEFAULT_L0: usize = 10;
pub const DEFAULT_MAX_BATCH: usize = 10_000;
pub const DEFAULT_LEARN_ITERS: usize = 2_000;

/// Multiset of observed longest batches, sampled uniformly.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatchDistribution {
    lengths: Vec<usize>,
}

impl BatchDistribution {
    pub fn new(lengths: Vec<usize>) -> Result<Self> {
        if lengths.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if lengths.contains(&0) {
            return Err(Error::config("batch lengths must be at least 1"));
        }
        Ok(Self { lengths })
    }

    pub fn singleton(length: usize) -> Result<Self> {
        Self::new(vec![length])
    }

    pub fn lengths(&self) -> &[usize] {
        &self.lengths
    }

    pub fn len(&self) -> usize {
        self.lengths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lengths.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.lengths.iter().sum::<usize>() as f64 / self.lengths.len() as f64
    }

    /// Lower median.
    pub fn median(&self) -> usize {
        let mut s = self.lengths.clone();
        s.sort_unstable();
        s[(s.len() - 1) / 2]
    }

    pub fn max(&self) -> usize {
        self.lengths.iter().copied().max().unwrap_or(0)
    }

    /// Uniform draw over the stored entries. A singleton consumes no
    /// randomness.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match self.lengths.len() {
            1 => self.lengths[0],
            n => self.lengths[rng.random_range(0..n)],
        }
    }

    /// One-column CSV with a `length` header.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["length"])?;
        for l in &self.lengths {
            out.write_record([l.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Reads the format written by [`write_csv`](Self::write_csv); the header
    /// row is optional.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_reader(r);
        let mut lengths = Vec::new();
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let field = rec.get(0).unwrap_or("").trim();
            match field.parse::<usize>() {
                Ok(l) => lengths.push(l),
                Err(_) if row == 0 => continue,
                Err(e) => {
                    return Err(Error::Parse {
                        path: "<batch csv>".into(),
                        row: row + 1,
                        column: 1,
                        message: e.to_string(),
                    })
                }
            }
        }
        Self::new(lengths)
    }
}

/// Draw from a batch distribution. Errors on an empty one.
pub fn sample_batch<R: Rng + ?Sized>(dist: &BatchDistribution, rng: &mut R) -> Result<usize> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    Ok(dist.sample(rng))
}

#[derive(Clone, Debug)]
pub struct BatchLearnConfig<T> {
    pub epsilon: T,
    pub l0: usize,
    pub iters: usize,
    pub max_batch: usize,
}

impl<T: Real> BatchLearnConfig<T> {
    pub fn new(epsilon: T) -> Self {
        Self {
            epsilon,
            l0: DEFAULT_L0,
            iters: DEFAULT_LEARN_ITERS,
            max_batch: DEFAULT_MAX_BATCH,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_eps(self.epsilon)?;
        if self.l0 == 0 || self.iters == 0 || self.max_batch == 0 {
            return Err(Error::config("l0, iters and max_batch must be positive"));
        }
        if self.max_batch < self.l0 {
            return Err(Error::config("max_batch must be at least l0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LongestBatch<T> {
    /// State after `min(length, snapshot_at)` steps.
    pub point: PhasePoint<T>,
    /// Steps taken to reach `point`.
    pub steps_to_point: usize,
    /// First step count with a U-turn, or the cap.
    pub length: usize,
    pub capped: bool,
}

pub(crate) struct BatchScan<T> {
    pub snapshot: Particle<T>,
    pub snapshot_steps: usize,
    pub length: usize,
    pub capped: bool,
}

/// Integrates from `start` one step at a time until
/// `(theta+ - theta) . M^{-1} v+ < 0`, keeping the state at step `snapshot_at`
/// (or the last state if the U-turn comes first).
///
/// `start` must carry the gradient at its position, so the scan costs exactly
/// `length` further gradient calls.
pub(crate) fn scan_longest_batch<P: Potential>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    start: &Particle<P::Scalar>,
    eps: P::Scalar,
    snapshot_at: usize,
    max_batch: usize,
) -> Result<BatchScan<P::Scalar>> {
    let h0 = start.energy(mass);
    let mut cur = start.clone();
    let mut snapshot = None;
    let mut length = 0;
    let mut capped = false;
    let mut disp = vec![P::Scalar::zero(); cur.theta.len()];
    loop {
        for ((d, &x), &x0) in disp.iter_mut().zip(&cur.theta).zip(&start.theta) {
            *d = x - x0;
        }
        if mass.inv_dot(&disp, &cur.v) < P::Scalar::zero() {
            break;
        }
        if length == max_batch {
            capped = true;
            break;
        }
        length += 1;
        cur.step_checked(model, mass, eps, h0, length)?;
        if length == snapshot_at {
            snapshot = Some(cur.clone());
        }
    }
    let (snapshot, snapshot_steps) = match snapshot {
        Some(s) => (s, snapshot_at),
        None => (cur, length),
    };
    Ok(BatchScan {
        snapshot,
        snapshot_steps,
        length,
        capped,
    })
}

/// The longest batch from `p` with step size `eps`, capped at `max_batch`.
///
/// Costs `length + 1` gradient calls.
pub fn longest_batch<P: Potential>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    p: &PhasePoint<P::Scalar>,
    eps: P::Scalar,
    snapshot_at: usize,
    max_batch: usize,
) -> Result<LongestBatch<P::Scalar>> {
    check_eps(eps)?;
    if snapshot_at == 0 || max_batch == 0 {
        return Err(Error::config("snapshot step and max_batch must be positive"));
    }
    mass.check_dim(p.dim())?;
    let start = Particle::new(model, p.theta.clone(), p.v.clone())?;
    let scan = scan_longest_batch(model, mass, &start, eps, snapshot_at, max_batch)?;
    Ok(LongestBatch {
        point: scan.snapshot.point(),
        steps_to_point: scan.snapshot_steps,
        length: scan.length,
        capped: scan.capped,
    })
}

#[derive(Clone, Debug)]
pub struct LearnOutcome<T> {
    pub distribution: BatchDistribution,
    pub theta: Vec<T>,
    pub accept_rate: f64,
    pub capped: usize,
    pub divergent: usize,
}

/// Runs `cfg.iters` HMC iterations with `cfg.l0` leapfrog steps each,
/// recording the longest batch from every (state, fresh momentum) pair.
///
/// A divergent scan contributes the number of steps completed before the
/// divergence (at least 1) and counts as a rejection.
pub fn learn_batch_distribution<P: Potential, R: Rng + ?Sized>(
    model: &TargetModel<P>,
    mass: &MassSpec<P::Scalar>,
    theta0: &[P::Scalar],
    cfg: &BatchLearnConfig<P::Scalar>,
    rng: &mut R,
) -> Result<LearnOutcome<P::Scalar>> {
    cfg.validate()?;
    let d = model.dim();
    if theta0.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            found: theta0.len(),
        });
    }
    mass.check_dim(d)?;

    let mut theta = theta0.to_vec();
    let mut lengths = Vec::with_capacity(cfg.iters);
    let (mut accepted, mut capped, mut divergent) = (0usize, 0usize, 0usize);

    for _ in 0..cfg.iters {
        let v = mass.sample_momentum(d, rng)?;
        let start = Particle::new(model, theta.clone(), v)?;
        let h0 = start.energy(mass);

        let proposal = match scan_longest_batch(model, mass, &start, cfg.epsilon, cfg.l0, cfg.max_batch) {
            Ok(scan) => {
                lengths.push(scan.length);
                capped += usize::from(scan.capped);
                let mut end = scan.snapshot;
                if scan.snapshot_steps < cfg.l0 {
                    let done = scan.snapshot_steps;
                    end.advance(model, mass, cfg.epsilon, cfg.l0 - done, h0, done + 1)
                        .map(|_| end)
                } else {
                    Ok(end)
                }
            }
            Err(Error::Divergence { step }) => {
                lengths.push(step.saturating_sub(1).max(1));
                Err(Error::Divergence { step })
            }
            Err(e) => return Err(e),
        };

        match proposal {
            Ok(end) => {
                // H is even in v, so H(theta*, -v*) is the end energy.
                let log_ratio = h0 - end.energy(mass);
                let rho = log_ratio.min(P::Scalar::zero()).exp();
                if P::Scalar::uniform(rng) < rho {
                    theta = end.theta;
                    accepted += 1;
                }
            }
            Err(Error::Divergence { .. }) => divergent += 1,
            Err(e) => return Err(e),
        }
    }

    Ok(LearnOutcome {
        distribution: BatchDistribution::new(lengths)?,
        theta,
        accept_rate: accepted as f64 / cfg.iters as f64,
        capped,
        divergent,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hamiltonian::testing::{Flat, StdNormal};
    use crate::hamiltonian::leapfrog;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pp(theta: &[f64], v: &[f64]) -> PhasePoint<f64> {
        PhasePoint::new(theta.to_vec(), v.to_vec()).unwrap()
    }

    /// Independent brute force: re-integrate from scratch for every
    /// candidate step count.
    fn brute_force(p: &PhasePoint<f64>, eps: f64, cap: usize) -> usize {
        let m = TargetModel::new(StdNormal(p.dim()));
        let id = MassSpec::identity();
        for l in 1..=cap {
            let q = leapfrog(&m, &id, p, eps, l).unwrap();
            let dot: f64 = q.theta.iter().zip(&p.theta).zip(&q.v).map(|((a, b), v)| (a - b) * v).sum();
            if dot < 0.0 {
                return l;
            }
        }
        cap
    }

    #[test]
    fn harmonic_uturn_times() {
        let m = TargetModel::new(StdNormal(1));
        let id = MassSpec::identity();
        let a = longest_batch(&m, &id, &pp(&[0.0], &[1.0]), 0.01, 10, 10_000).unwrap();
        assert_eq!(a.length, brute_force(&pp(&[0.0], &[1.0]), 0.01, 400));
        assert!((156..=160).contains(&a.length), "{}", a.length);
        let b = longest_batch(&m, &id, &pp(&[1.0], &[0.0]), 0.01, 10, 10_000).unwrap();
        assert!((312..=318).contains(&b.length), "{}", b.length);
        assert!(!a.capped && !b.capped);
    }

    #[test]
    fn snapshot_and_accounting() {
        let m = TargetModel::new(StdNormal(1));
        let id = MassSpec::identity();
        let p = pp(&[0.0], &[1.0]);
        let out = longest_batch(&m, &id, &p, 0.01, 10, 10_000).unwrap();
        assert_eq!(out.steps_to_point, 10);
        assert_eq!(out.point, leapfrog(&m, &id, &p, 0.01, 10).unwrap());

        let before = m.grad_calls();
        let out = longest_batch(&m, &id, &p, 0.01, 500, 10_000).unwrap();
        assert_eq!(m.grad_calls() - before, out.length as u64 + 1);
        assert_eq!(out.steps_to_point, out.length);
    }

    #[test]
    fn free_particle_hits_cap() {
        let m = TargetModel::new(Flat(2));
        let out = longest_batch(&m, &MassSpec::identity(), &pp(&[0.0, 1.0], &[1.0, 0.3]), 0.1, 5, 250).unwrap();
        assert!(out.capped);
        assert_eq!(out.length, 250);

        let cfg = BatchLearnConfig {
            epsilon: 0.1,
            l0: 5,
            iters: 10,
            max_batch: 50,
        };
        let learned =
            learn_batch_distribution(&m, &MassSpec::identity(), &[0.0, 0.0], &cfg, &mut ChaCha8Rng::seed_from_u64(1))
                .unwrap();
        assert!(learned.distribution.lengths().iter().all(|&l| l == 50));
        assert_eq!(learned.capped, 10);
    }

    #[test]
    fn learning_is_reproducible() {
        let m = TargetModel::new(StdNormal(2));
        let cfg = BatchLearnConfig {
            epsilon: 0.1,
            l0: 10,
            iters: 5,
            max_batch: 1000,
        };
        let run = |seed| {
            learn_batch_distribution(&m, &MassSpec::identity(), &[0.5, -0.5], &cfg, &mut ChaCha8Rng::seed_from_u64(seed))
                .unwrap()
        };
        let (a, b) = (run(9), run(9));
        assert_eq!(a.distribution.len(), 5);
        assert_eq!(a.distribution, b.distribution);
        assert_eq!(a.theta, b.theta);
    }

    #[test]
    fn learning_validates_config() {
        let m = TargetModel::new(StdNormal(1));
        let mut cfg = BatchLearnConfig::new(0.1);
        cfg.iters = 0;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(learn_batch_distribution(&m, &MassSpec::identity(), &[0.0], &cfg, &mut rng).is_err());
        cfg.iters = 3;
        cfg.max_batch = 5;
        assert!(learn_batch_distribution(&m, &MassSpec::identity(), &[0.0], &cfg, &mut rng).is_err());
        cfg.max_batch = 100;
        assert!(learn_batch_distribution(&m, &MassSpec::identity(), &[0.0, 1.0], &cfg, &mut rng).is_err());
    }

    #[test]
    fn sampling_from_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let single = BatchDistribution::singleton(7).unwrap();
        assert!((0..100).all(|_| sample_batch(&single, &mut rng).unwrap() == 7));

        let dist = BatchDistribution::new(vec![2, 2, 8, 8]).unwrap();
        let n = 100_000;
        let eights = (0..n).filter(|_| dist.sample(&mut rng) == 8).count();
        // 3 sigma of a Binomial(1e5, 1/2) proportion is 0.0047
        assert!((eights as f64 / n as f64 - 0.5).abs() < 0.01);

        assert!(matches!(BatchDistribution::new(vec![]), Err(Error::EmptyDistribution)));
        assert!(BatchDistribution::new(vec![3, 0]).is_err());
    }

    #[test]
    fn csv_round_trip_with_optional_header() {
        let dist = BatchDistribution::new(vec![3, 1, 40]).unwrap();
        let mut buf = Vec::new();
        dist.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "length\n3\n1\n40\n");
        assert_eq!(BatchDistribution::read_csv(&buf[..]).unwrap(), dist);
        assert_eq!(BatchDistribution::read_csv(&b"3\n1\n40\n"[..]).unwrap(), dist);
        assert!(BatchDistribution::read_csv(&b"length\n3\nx\n"[..]).is_err());
        assert!(BatchDistribution::read_csv(&b"length\n"[..]).is_err());
    }

    #[test]
    fn summary_stats() {
        let dist = BatchDistribution::new(vec![5, 1, 9, 3]).unwrap();
        assert_eq!(dist.median(), 3);
        assert_eq!(dist.max(), 9);
        assert_eq!(dist.mean(), 4.5);
    }
}
