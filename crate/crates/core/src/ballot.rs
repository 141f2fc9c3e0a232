//! Cyclic ballot counts and the cluster-survival construction.

use num_integer::Integer;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::perturb::apply_perturbation;
use crate::ring::{new_state, step, InitSpec, ModelParams, RingState};
use crate::rng::{derive_seed, CounterRng};

/// Window comparisons closer than this (relative to `m`) are reported as
/// near-ties by the floating-point path.
pub const REAL_SLACK: f64 = 1e-12;

/// A sequence `k_1..k_n`, extended periodically, and a level `m`.
#[derive(Debug, Clone, PartialEq)]
pub enum BallotInstance {
    Integer {
        k: Vec<u64>,
        m: u64,
    },
    /// Entries as `(numerator, denominator)`.
    Rational {
        k: Vec<(u64, u64)>,
        m: (u64, u64),
    },
    Real {
        k: Vec<f64>,
        m: f64,
    },
}

/// Integer form: every entry multiplied by a common denominator.
struct Scaled {
    k: Vec<u128>,
    m: u128,
}

impl BallotInstance {
    pub fn len(&self) -> usize {
        match self {
            BallotInstance::Integer { k, .. } => k.len(),
            BallotInstance::Rational { k, .. } => k.len(),
            BallotInstance::Real { k, .. } => k.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn scaled(&self) -> Result<Option<Scaled>> {
        match self {
            BallotInstance::Integer { k, m } => Ok(Some(Scaled {
                k: k.iter().map(|&x| x as u128).collect(),
                m: *m as u128,
            })),
            BallotInstance::Rational { k, m } => {
                let mut den: u128 = 1;
                for &(_, d) in k.iter().chain(std::iter::once(m)) {
                    if d == 0 {
                        return Err(Error::InvalidParameter("zero denominator".into()));
                    }
                    den = den.lcm(&(d as u128));
                    if den > u64::MAX as u128 {
                        return Err(Error::InvalidParameter(
                            "common denominator overflows".into(),
                        ));
                    }
                }
                let scale = |(a, d): (u64, u64)| a as u128 * (den / d as u128);
                Ok(Some(Scaled {
                    k: k.iter().map(|&x| scale(x)).collect(),
                    m: scale(*m),
                }))
            }
            BallotInstance::Real { .. } => Ok(None),
        }
    }
}

fn check(inst: &BallotInstance) -> Result<()> {
    if inst.is_empty() {
        return Err(Error::InvalidParameter("empty sequence".into()));
    }
    match inst {
        BallotInstance::Real { k, m } => {
            if k.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(Error::InvalidParameter(
                    "entries must be finite and non-negative".into(),
                ));
            }
            let total: f64 = k.iter().sum();
            if !(*m > total) {
                return Err(Error::InvalidParameter(format!(
                    "m = {m} must exceed psi(n) = {total}"
                )));
            }
        }
        _ => {
            let s = inst.scaled()?.unwrap();
            let total: u128 = s.k.iter().sum();
            if s.m <= total {
                return Err(Error::InvalidParameter("m must exceed psi(n)".into()));
            }
        }
    }
    Ok(())
}

/// Result of a ballot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BallotCount {
    pub count: usize,
    /// Comparisons that fell inside the floating-point slack band. Always
    /// zero for integer and rational instances.
    pub near_ties: usize,
}

/// Number of good starting indices `j`: every window `k_{j+1..j+r}`,
/// `r = 1..n`, sums to strictly less than `(m / n) r`.
pub fn ballot_count(inst: &BallotInstance) -> Result<BallotCount> {
    check(inst)?;
    let n = inst.len();
    if let Some(s) = inst.scaled()? {
        let count = (0..n)
            .filter(|&j| {
                let mut sum: u128 = 0;
                (1..=n).all(|r| {
                    sum += s.k[(j + r - 1) % n];
                    // sum < (m / n) r, cleared of denominators.
                    sum * (n as u128) < s.m * r as u128
                })
            })
            .count();
        return Ok(BallotCount {
            count,
            near_ties: 0,
        });
    }
    let BallotInstance::Real { k, m } = inst else {
        unreachable!()
    };
    let slope = m / n as f64;
    let band = REAL_SLACK * m.max(1.0);
    let mut count = 0;
    let mut near_ties = 0;
    for j in 0..n {
        let mut sum = 0.0;
        let mut good = true;
        for r in 1..=n {
            sum += k[(j + r - 1) % n];
            let gap = slope * r as f64 - sum;
            if gap.abs() <= band {
                near_ties += 1;
            }
            if gap <= 0.0 {
                good = false;
                break;
            }
        }
        count += good as usize;
    }
    Ok(BallotCount { count, near_ties })
}

/// `ceil(n (1 - psi(n) / m))`, exact for integer and rational inputs.
pub fn ballot_bound(inst: &BallotInstance) -> Result<usize> {
    check(inst)?;
    let n = inst.len();
    if let Some(s) = inst.scaled()? {
        let total: u128 = s.k.iter().sum();
        let num = n as u128 * (s.m - total);
        return Ok(num.div_ceil(s.m) as usize);
    }
    let BallotInstance::Real { k, m } = inst else {
        unreachable!()
    };
    let total: f64 = k.iter().sum();
    let x = n as f64 * (1.0 - total / m);
    Ok((x - REAL_SLACK * n as f64).ceil().max(0.0) as usize)
}

/// Remove every 0 that immediately follows a 1.
///
/// The input must end in 0 and have no two adjacent 1s, which is what the
/// seed-site construction produces; the output then has length
/// `len - ones`.
pub fn collapse_holes(seq: &[u8]) -> Result<Vec<u8>> {
    if seq.iter().any(|&b| b > 1) {
        return Err(Error::MalformedSequence("entries must be 0 or 1".into()));
    }
    if seq.last() == Some(&1) {
        return Err(Error::MalformedSequence("last element must be 0".into()));
    }
    if seq.windows(2).any(|w| w == [1, 1]) {
        return Err(Error::MalformedSequence("adjacent 1s".into()));
    }
    let mut out = Vec::with_capacity(seq.len());
    let mut prev = 0;
    for &b in seq {
        if !(b == 0 && prev == 1) {
            out.push(b);
        }
        prev = b;
    }
    Ok(out)
}

/// Occupancy read leftward from the site left of `seed`, ending at `seed`
/// itself, which is reported as empty.
pub fn seed_sequence(state: &RingState, seed: usize) -> Vec<u8> {
    let n = state.n();
    (1..=n)
        .map(|i| {
            let site = (seed + n - i % n) % n;
            (i < n && state.occupied(site)) as u8
        })
        .collect()
}

/// Arrival indicators `A(t) - A(t-1)` of particles joining the seed's
/// cluster from the left, assuming every non-seed particle moves freely.
pub fn arrival_sequence(state: &RingState, seed: usize) -> Result<Vec<u8>> {
    collapse_holes(&seed_sequence(state, seed))
}

/// Explicit lower bound `delta_2` on the probability that left arrivals
/// outpace the required rate.
pub fn survival_lower_bound_left(rho: f64, p: f64) -> Result<f64> {
    let h = p / (1.0 + p);
    if !(rho > h && rho < 0.5) {
        return Err(Error::InvalidParameter(format!(
            "need h = {h} < rho = {rho} < 1/2"
        )));
    }
    let p_hat = rho / (1.0 - rho);
    let eps = (p_hat - p) / 3.0;
    Ok(eps / ((1.0 - p_hat) + 2.0 * eps))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalEstimate {
    pub trials: u64,
    /// Trials whose perturbation formed a cluster.
    pub created: u64,
    pub survived: u64,
    pub horizon: u64,
    pub p_survive: f64,
    pub std_err: f64,
}

/// Slots the cluster must outlive: `floor(factor (1 - rho) n) - 4`.
pub fn survival_horizon(params: &ModelParams, horizon_factor: f64) -> u64 {
    let slots = (horizon_factor * (1.0 - params.rho()) * params.n as f64 + 1e-9).floor();
    (slots as i64 - 4).max(0) as u64
}

/// One trial: random ideal state, one relocation, then unperturbed
/// dynamics. Returns `(created, survived)`.
pub fn survival_trial(params: &ModelParams, seed: u64, horizon: u64) -> Result<(bool, bool)> {
    let local = params.with_seed(seed);
    let mut state = new_state(&local, &InitSpec::RandomIdeal)?;
    let rng = CounterRng::new(seed);
    let rec = apply_perturbation(&mut state, &rng, local.allow_return)?;
    if !rec.created_cluster {
        return Ok((false, false));
    }
    // Without perturbations no new cluster can form, so the created one
    // survives exactly as long as the state is not ideal.
    for _ in 0..horizon {
        step(&mut state, &local, &rng);
        if state.is_ideal() {
            return Ok((true, false));
        }
    }
    Ok((true, true))
}

/// Fraction of trials where the cluster created by a single relocation of a
/// random ideal state survives the horizon. Trials run in parallel with
/// seeds derived from `params.seed` and the trial index.
pub fn survival_experiment(
    params: &ModelParams,
    trials: u64,
    horizon_factor: f64,
) -> Result<SurvivalEstimate> {
    if trials == 0 {
        return Err(Error::InvalidParameter("trials must be positive".into()));
    }
    params.validate()?;
    let horizon = survival_horizon(params, horizon_factor);
    let results: Result<Vec<(bool, bool)>> = (0..trials)
        .into_par_iter()
        .map(|i| survival_trial(params, derive_seed(params.seed, i), horizon))
        .collect();
    let results = results?;
    let created = results.iter().filter(|r| r.0).count() as u64;
    let survived = results.iter().filter(|r| r.1).count() as u64;
    let ps = survived as f64 / trials as f64;
    Ok(SurvivalEstimate {
        trials,
        created,
        survived,
        horizon,
        p_survive: ps,
        std_err: (ps * (1.0 - ps) / trials as f64).sqrt(),
    })
}
