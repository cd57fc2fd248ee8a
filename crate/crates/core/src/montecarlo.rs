//! Simulation estimates of conditional win probabilities.
//!
//! Every trial launches from a state `(u, n)` whose `n`-th arrival, at time
//! `e^u`, is a fresh record and is offered to the strategy first. A strategy
//! sees only `(log-time, count, is_record)` at arrival instants and stops on
//! the first record it accepts. A trial is won iff it stopped and no later
//! arrival is a record.
//!
//! Trial `i` draws from its own ChaCha stream `(seed, i)`. Trials are grouped
//! into fixed chunks whose tallies are merged in chunk order, so results are
//! bit-identical for any number of worker threads.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::exact_values::{pi_record_is_best, threshold_rule_value, Tolerance};
use crate::hjb_solver::{StoppingBoundary, ONE_OVER_E_THRESHOLD};
use crate::negbin::NegBinomialLaw;
use crate::pi_process::{path_rng, ArrivalStream, LogTime, ProcessState, DEFAULT_MAX_ARRIVALS};

/// Default number of trials.
pub const DEFAULT_TRIALS: u64 = 1_000_000;

const CHUNK: u64 = 4096;

#[derive(Debug, Clone, PartialEq)]
pub enum Strategy {
    /// Take the first record strictly after log-time `b`.
    FixedThreshold(LogTime),
    /// Take a record seen as the `n`-th arrival iff `u > u*_n`; counts without
    /// a resolved threshold use the `1/e` threshold.
    Boundary(StoppingBoundary),
    StopNever,
    StopFirstRecord,
}

impl Strategy {
    pub fn one_over_e() -> Self {
        Self::FixedThreshold(LogTime::new(ONE_OVER_E_THRESHOLD).expect("valid log-time"))
    }

    pub fn name(&self) -> String {
        match self {
            Self::FixedThreshold(b) if b.value() == ONE_OVER_E_THRESHOLD => "one-over-e".into(),
            Self::FixedThreshold(b) => format!("threshold({})", b.value()),
            Self::Boundary(_) => "boundary".into(),
            Self::StopNever => "never".into(),
            Self::StopFirstRecord => "first-record".into(),
        }
    }

    /// Whether a record arriving as the `n`-th arrival at log-time `u` is taken.
    pub fn accepts(&self, u: f64, n: u64) -> bool {
        match self {
            Self::FixedThreshold(b) => u > b.value(),
            Self::Boundary(boundary) => u > boundary.threshold(n as usize, ONE_OVER_E_THRESHOLD),
            Self::StopNever => false,
            Self::StopFirstRecord => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
    pub seed: u64,
}

impl MonteCarloEstimate {
    fn bernoulli(wins: u64, trials: u64, seed: u64) -> Self {
        let mean = wins as f64 / trials as f64;
        Self {
            mean,
            stderr: (mean * (1.0 - mean) / trials as f64).sqrt(),
            trials,
            seed,
        }
    }

    /// `(mean - exact) / stderr`; infinite when a zero-variance estimate misses.
    pub fn z_score(&self, exact: f64) -> f64 {
        let diff = self.mean - exact;
        if diff == 0.0 {
            0.0
        } else {
            diff / self.stderr
        }
    }

    /// Whether `exact` lies within `k` standard errors.
    pub fn agrees_with(&self, exact: f64, k: f64) -> bool {
        (self.mean - exact).abs() <= k * self.stderr
    }
}

/// `(a - b) / sqrt(se_a^2 + se_b^2)`.
pub fn combined_z(a: &MonteCarloEstimate, b: &MonteCarloEstimate) -> f64 {
    (a.mean - b.mean) / a.stderr.hypot(b.stderr)
}

fn check_trials(trials: u64) -> Result<()> {
    if trials < 1 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    Ok(())
}

/// Runs `trial` for indices `0..trials` in fixed chunks and merges in order.
fn run_chunks<T, F, M>(trials: u64, trial: F, merge: M) -> Result<T>
where
    T: Default + Send,
    F: Fn(u64, &mut T) -> Result<()> + Sync,
    M: Fn(&mut T, T),
{
    let chunks = trials.div_ceil(CHUNK);
    let partial: Vec<Result<T>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut tally = T::default();
            for i in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                trial(i, &mut tally)?;
            }
            Ok(tally)
        })
        .collect();
    let mut total = T::default();
    for p in partial {
        merge(&mut total, p?);
    }
    Ok(total)
}

/// Plays `strategy` on one path; `true` on a win.
fn play(strategy: &Strategy, state: ProcessState, seed: u64, index: u64) -> Result<bool> {
    let mut rng = path_rng(seed, index);
    let mut stream = ArrivalStream::new(state, &mut rng, DEFAULT_MAX_ARRIVALS);
    if !strategy.accepts(state.u.value(), state.n) {
        loop {
            match stream.next_arrival()? {
                None => return Ok(false),
                Some((u, k, rank)) => {
                    if rank == 1 && strategy.accepts(u, k) {
                        break;
                    }
                }
            }
        }
    }
    while let Some((_, _, rank)) = stream.next_arrival()? {
        if rank == 1 {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Estimates the win probability of `strategy` launched from `state`.
pub fn estimate_win(strategy: &Strategy, state: ProcessState, trials: u64, seed: u64) -> Result<MonteCarloEstimate> {
    check_trials(trials)?;
    if matches!(strategy, Strategy::StopNever) {
        return Ok(MonteCarloEstimate::bernoulli(0, trials, seed));
    }
    let wins = run_chunks(
        trials,
        |i, wins: &mut u64| {
            *wins += play(strategy, state, seed, i)? as u64;
            Ok(())
        },
        |a, b| *a += b,
    )?;
    Ok(MonteCarloEstimate::bernoulli(wins, trials, seed))
}

/// Two estimators of the probability that the record at `state` stays best.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiEstimate {
    /// Fraction of paths with no later record.
    pub indicator: MonteCarloEstimate,
    /// Sample mean of `n / N_1`, the conditional expectation of the indicator
    /// given the final count.
    pub rao_blackwell: MonteCarloEstimate,
}

impl PiEstimate {
    /// Difference of the two estimators in units of their combined standard error.
    pub fn disagreement(&self) -> f64 {
        let se = self.indicator.stderr.hypot(self.rao_blackwell.stderr);
        let diff = self.indicator.mean - self.rao_blackwell.mean;
        if diff == 0.0 {
            0.0
        } else {
            diff / se
        }
    }
}

#[derive(Default)]
struct PiTally {
    wins: u64,
    sum: f64,
    sum_sq: f64,
}

/// Estimates `pi~_n(u)` by simulating the arrivals after `state`.
pub fn estimate_pi(state: ProcessState, trials: u64, seed: u64) -> Result<PiEstimate> {
    check_trials(trials)?;
    let n = state.n as f64;
    let tally = run_chunks(
        trials,
        |i, t: &mut PiTally| {
            let mut rng = path_rng(seed, i);
            let mut stream = ArrivalStream::new(state, &mut rng, DEFAULT_MAX_ARRIVALS);
            let mut later_record = false;
            while let Some((_, _, rank)) = stream.next_arrival()? {
                later_record |= rank == 1;
            }
            let ratio = n / stream.count() as f64;
            t.wins += (!later_record) as u64;
            t.sum += ratio;
            t.sum_sq += ratio * ratio;
            Ok(())
        },
        |a, b| {
            a.wins += b.wins;
            a.sum += b.sum;
            a.sum_sq += b.sum_sq;
        },
    )?;
    let tf = trials as f64;
    let mean = tally.sum / tf;
    let var = if trials > 1 {
        ((tally.sum_sq - tf * mean * mean) / (tf - 1.0)).max(0.0)
    } else {
        0.0
    };
    Ok(PiEstimate {
        indicator: MonteCarloEstimate::bernoulli(tally.wins, trials, seed),
        rao_blackwell: MonteCarloEstimate {
            mean,
            stderr: (var / tf).sqrt(),
            trials,
            seed,
        },
    })
}

/// Exact win probability of `strategy` from `state`, where one is available
/// without solving the HJB system: a boundary strategy only when it takes
/// the launch record.
///
/// A threshold rule launched before its threshold `b` waits for `b`, where
/// it holds `n + Y` arrivals with `Y` negative binomial with `p = e^(u-b)`,
/// and then wins with probability `V*_{n+Y}(b)`.
pub fn exact_win(strategy: &Strategy, state: ProcessState, tol: &Tolerance) -> Result<Option<f64>> {
    let u = state.u.value();
    Ok(match strategy {
        Strategy::StopNever => Some(0.0),
        Strategy::StopFirstRecord => Some(pi_record_is_best(state)?),
        Strategy::Boundary(_) if strategy.accepts(u, state.n) => Some(pi_record_is_best(state)?),
        Strategy::Boundary(_) => None,
        Strategy::FixedThreshold(b) => {
            let b = b.value();
            if u > b {
                Some(pi_record_is_best(state)?)
            } else {
                let law = NegBinomialLaw::from_log_time(state.n, u - b)?;
                let window = law.window(tol.abs_tol, tol.max_terms)?;
                let mut value = 0.0;
                for (y, mass) in window.iter() {
                    value += mass * threshold_rule_value(ProcessState::new(b, state.n + y)?, tol)?;
                }
                Some(value)
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn state(u: f64, n: u64) -> ProcessState {
        ProcessState::new(u, n).unwrap()
    }

    #[test]
    fn never_stopping_never_wins() {
        let est = estimate_win(&Strategy::StopNever, state(-1.0, 3), 1000, 1).unwrap();
        assert_eq!(est.mean, 0.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn horizon_launch_always_wins() {
        let est = estimate_pi(state(0.0, 4), 500, 2).unwrap();
        assert_eq!(est.indicator.mean, 1.0);
        assert_eq!(est.rao_blackwell.mean, 1.0);
        let first = estimate_win(&Strategy::StopFirstRecord, state(0.0, 4), 500, 2).unwrap();
        assert_eq!(first.mean, 1.0);
    }

    #[test]
    fn zero_trials_rejected() {
        assert!(estimate_pi(state(-1.0, 1), 0, 0).is_err());
        assert!(estimate_win(&Strategy::StopFirstRecord, state(-1.0, 1), 0, 0).is_err());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = estimate_win(&Strategy::one_over_e(), state(-1.2, 2), 10_000, 77).unwrap();
        let b = estimate_win(&Strategy::one_over_e(), state(-1.2, 2), 10_000, 77).unwrap();
        assert_eq!(a, b);
        let c = estimate_win(&Strategy::one_over_e(), state(-1.2, 2), 10_000, 78).unwrap();
        assert_ne!(a.mean, c.mean);
    }

    #[test]
    fn stderr_is_bernoulli() {
        let e = estimate_win(&Strategy::StopFirstRecord, state(-1.0, 2), 5000, 3).unwrap();
        let expected = (e.mean * (1.0 - e.mean) / 5000.0).sqrt();
        assert_eq!(e.stderr, expected);
    }

    #[test]
    fn boundary_falls_back_to_one_over_e() {
        let boundary = StoppingBoundary {
            thresholds: BTreeMap::from([(1, -1.9)]),
            unresolved: vec![],
            islands: vec![],
            resolution: 1e-6,
        };
        let s = Strategy::Boundary(boundary);
        assert!(s.accepts(-1.5, 1));
        assert!(!s.accepts(-1.5, 2));
        assert!(s.accepts(-0.9, 2));
    }

    #[test]
    fn exact_win_cases() {
        let tol = Tolerance::default();
        let s = state(-1.0, 1);
        let half = exact_win(&Strategy::one_over_e(), s, &tol).unwrap().unwrap();
        assert!((half - 0.290988353434663212).abs() < 1e-12);
        let first = exact_win(&Strategy::StopFirstRecord, s, &tol).unwrap().unwrap();
        assert!((first - 0.581976706869326424).abs() < 1e-12);
        assert_eq!(exact_win(&Strategy::StopNever, s, &tol).unwrap(), Some(0.0));
        // launched after the threshold, the rule takes the launch record
        let after = exact_win(&Strategy::one_over_e(), state(-0.5, 3), &tol).unwrap().unwrap();
        assert_eq!(after, pi_record_is_best(state(-0.5, 3)).unwrap());
    }

    #[test]
    fn small_simulation_matches_exact() {
        let s = state(-1.0, 2);
        let exact = exact_win(&Strategy::one_over_e(), s, &Tolerance::default()).unwrap().unwrap();
        let est = estimate_win(&Strategy::one_over_e(), s, 40_000, 11).unwrap();
        assert!(est.agrees_with(exact, 4.0), "{est:?} vs {exact}");
    }
}
