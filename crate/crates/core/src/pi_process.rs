//! Proportional-increment counting processes.
//!
//! After its first arrival, a p.i. process has compensator `N_t / t`. In
//! log-time `u = ln t` it is a pure birth process in which every individual
//! gives birth at unit rate, so given `N_t = n` the next arrival satisfies
//! `P[T > s] = (t / s)^n` for `s >= t`. Paths are always launched from an
//! explicit state `(u, n)` with `n >= 1`; the law of the first arrival is
//! left unmodelled.
//!
//! Relative ranks follow Rényi's theorem: the `k`-th arrival has a relative
//! rank uniform on `{1, ..., k}` independently of everything else, and is a
//! record iff that rank is 1.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use crate::error::{Error, Result};
pub use crate::negbin::NegBinomialLaw;

/// Default cap on the number of simulated arrivals in one path.
pub const DEFAULT_MAX_ARRIVALS: u64 = 10_000_000;

/// Log-time `u = ln t`, always `<= 0`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct LogTime(f64);

impl LogTime {
    pub fn new(u: f64) -> Result<Self> {
        if u.is_finite() && u <= 0.0 {
            Ok(Self(u))
        } else {
            Err(Error::InvalidLogTime(u))
        }
    }

    pub const HORIZON: LogTime = LogTime(0.0);

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn clock(self) -> ClockTime {
        ClockTime(self.0.exp())
    }
}

/// Clock time `t` in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct ClockTime(f64);

impl ClockTime {
    pub fn new(t: f64) -> Result<Self> {
        if t > 0.0 && t <= 1.0 {
            Ok(Self(t))
        } else {
            Err(Error::InvalidArgument(format!(
                "clock time must lie in (0, 1], got {t}"
            )))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn log(self) -> LogTime {
        LogTime(self.0.ln().min(0.0))
    }
}

/// `n` arrivals observed, the latest of them at log-time `u`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProcessState {
    pub u: LogTime,
    pub n: u64,
}

impl ProcessState {
    pub fn new(u: f64, n: u64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidCount(n));
        }
        Ok(Self {
            u: LogTime::new(u)?,
            n,
        })
    }

    pub fn clock(&self) -> f64 {
        self.u.0.exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Arrival {
    pub time: ClockTime,
    /// 1-based position in the overall arrival order.
    pub index: u64,
    pub relative_rank: u64,
    pub is_record: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedPath {
    pub origin: ProcessState,
    pub arrivals: Vec<Arrival>,
}

impl SimulatedPath {
    /// Total count at the horizon, `N_1`.
    pub fn final_count(&self) -> u64 {
        self.origin.n + self.arrivals.len() as u64
    }

    /// Index of the last record among the simulated arrivals, if any.
    ///
    /// When this is `None` the overall best is among the first `origin.n`
    /// arrivals.
    pub fn last_record(&self) -> Option<u64> {
        self.arrivals.iter().rev().find(|a| a.is_record).map(|a| a.index)
    }

    /// Number of arrivals at or before clock time `t`.
    pub fn count_at(&self, t: f64) -> u64 {
        self.origin.n + self.arrivals.iter().take_while(|a| a.time.0 <= t).count() as u64
    }
}

/// Generator for path `index` of a run seeded with `seed`.
///
/// The seed fixes the ChaCha key and the index selects the stream, so the
/// draws of a path do not depend on how paths are scheduled across workers.
pub fn path_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Inverse-transform draw of the next arrival time.
///
/// Returns `t * U^(-1/n)`; a value above 1 means no further arrival before the
/// horizon.
pub fn next_arrival_time(state: ProcessState, uniform_draw: f64) -> Result<f64> {
    if state.n < 1 {
        return Err(Error::InvalidCount(state.n));
    }
    if !(uniform_draw > 0.0 && uniform_draw < 1.0) {
        return Err(Error::InvalidUniform(uniform_draw));
    }
    Ok((state.u.0 - uniform_draw.ln() / state.n as f64).exp())
}

/// Streams the arrivals of one path without materialising it.
pub struct ArrivalStream<'a, R: Rng> {
    rng: &'a mut R,
    log_time: f64,
    count: u64,
    simulated: u64,
    cap: u64,
}

impl<'a, R: Rng> ArrivalStream<'a, R> {
    pub fn new(state: ProcessState, rng: &'a mut R, cap: u64) -> Self {
        Self {
            rng,
            log_time: state.u.0,
            count: state.n,
            simulated: 0,
            cap,
        }
    }

    /// Next arrival as `(log_time, index, relative_rank)`, or `None` at the horizon.
    pub fn next_arrival(&mut self) -> Result<Option<(f64, u64, u64)>> {
        let draw: f64 = self.rng.sample(Open01);
        let next = self.log_time - draw.ln() / self.count as f64;
        if next > 0.0 {
            return Ok(None);
        }
        self.simulated += 1;
        if self.simulated > self.cap {
            return Err(Error::RunawayPath { cap: self.cap });
        }
        self.count += 1;
        self.log_time = next;
        let rank = self.rng.random_range(1..=self.count);
        Ok(Some((next, self.count, rank)))
    }

    pub fn count(&self) -> u64 {
        self.count
    }
}

/// Simulates one path from `state` to the horizon `t = 1`.
pub fn simulate_path(state: ProcessState, rng_seed: u64) -> Result<SimulatedPath> {
    let mut rng = path_rng(rng_seed, 0);
    simulate_path_with(state, &mut rng, DEFAULT_MAX_ARRIVALS)
}

pub fn simulate_path_with<R: Rng>(
    state: ProcessState,
    rng: &mut R,
    max_arrivals: u64,
) -> Result<SimulatedPath> {
    if state.n < 1 {
        return Err(Error::InvalidCount(state.n));
    }
    let mut stream = ArrivalStream::new(state, rng, max_arrivals);
    let mut arrivals = Vec::new();
    while let Some((u, index, relative_rank)) = stream.next_arrival()? {
        arrivals.push(Arrival {
            time: ClockTime(u.exp()),
            index,
            relative_rank,
            is_record: relative_rank == 1,
        });
    }
    Ok(SimulatedPath {
        origin: state,
        arrivals,
    })
}

/// Counts at the given log-time checkpoints, simulated as a pure birth
/// process in which every individual carries its own unit-rate birth clock.
///
/// Each individual (the `n` present at `state.u` and every newborn) is given
/// independent exponential waiting times; the earliest pending birth is
/// taken from a priority queue. This is the log-time construction directly,
/// independent of the aggregate inverse-transform used by
/// [`next_arrival_time`]. Checkpoints must be sorted ascending and lie in
/// `[state.u, 0]`.
pub fn simulate_pure_birth_counts<R: Rng>(
    state: ProcessState,
    checkpoints: &[f64],
    rng: &mut R,
    max_arrivals: u64,
) -> Result<Vec<u64>> {
    if checkpoints.windows(2).any(|w| w[0] > w[1])
        || checkpoints.iter().any(|&c| c < state.u.0 || c > 0.0)
    {
        return Err(Error::InvalidArgument(
            "checkpoints must be sorted and lie in [u, 0]".into(),
        ));
    }
    let mut pending: BinaryHeap<Reverse<Birth>> = (0..state.n)
        .map(|_| Reverse(Birth(state.u.0 + rng.sample::<f64, _>(Exp1))))
        .collect();
    let mut counts = Vec::with_capacity(checkpoints.len());
    let mut k = state.n;
    let mut born = 0u64;
    let mut next_check = 0;
    while next_check < checkpoints.len() {
        let Reverse(Birth(at)) = pending.pop().expect("population never empties");
        while next_check < checkpoints.len() && checkpoints[next_check] < at {
            counts.push(k);
            next_check += 1;
        }
        born += 1;
        if born > max_arrivals {
            return Err(Error::RunawayPath { cap: max_arrivals });
        }
        k += 1;
        // parent's next birth and the newborn's first
        pending.push(Reverse(Birth(at + rng.sample::<f64, _>(Exp1))));
        pending.push(Reverse(Birth(at + rng.sample::<f64, _>(Exp1))));
    }
    Ok(counts)
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Birth(f64);

impl Eq for Birth {}

impl PartialOrd for Birth {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Birth {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// `E[z^N_0 | N_u = n] = {z e^u / (1 - z (1 - e^u))}^n`.
pub fn total_count_pgf(state: ProcessState, z: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&z) {
        return Err(Error::InvalidArgument(format!("z must lie in [0, 1], got {z}")));
    }
    let p = state.u.0.exp();
    let q = -state.u.0.exp_m1();
    // 1 - z q written as p + (1 - z) q so that z = 1 gives exactly 1
    Ok((z * p / (p + (1.0 - z) * q)).powi(state.n as i32))
}

/// `P[N_1 - n = y]` under the further-arrivals law.
pub fn further_arrivals_pmf(law: &NegBinomialLaw, y: u64) -> f64 {
    law.pmf(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(u: f64, n: u64) -> ProcessState {
        ProcessState::new(u, n).unwrap()
    }

    #[test]
    fn next_arrival_examples() {
        let s = state(0.5f64.ln(), 1);
        let t = next_arrival_time(s, 1.0 - 1e-12).unwrap();
        assert!(t > 0.5 && t - 0.5 < 1e-11);
        assert!((next_arrival_time(s, 0.5).unwrap() - 1.0).abs() < 1e-15);
        let s = state(0.25f64.ln(), 2);
        assert!((next_arrival_time(s, 0.25).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn next_arrival_rejects_bad_draws() {
        let s = state(-1.0, 1);
        for bad in [0.0, 1.0, -0.5, 2.0, f64::NAN] {
            assert!(matches!(next_arrival_time(s, bad), Err(Error::InvalidUniform(_))));
        }
        let bad_state = ProcessState {
            u: LogTime::new(-1.0).unwrap(),
            n: 0,
        };
        assert!(matches!(next_arrival_time(bad_state, 0.5), Err(Error::InvalidCount(0))));
    }

    #[test]
    fn state_validation() {
        assert!(ProcessState::new(-1.0, 0).is_err());
        assert!(ProcessState::new(0.1, 1).is_err());
        assert!(ProcessState::new(f64::NEG_INFINITY, 1).is_err());
        assert!(ClockTime::new(0.0).is_err());
        assert!(ClockTime::new(1.0).is_ok());
    }

    #[test]
    fn horizon_state_has_no_arrivals() {
        let path = simulate_path(state(0.0, 5), 42).unwrap();
        assert!(path.arrivals.is_empty());
        assert_eq!(path.final_count(), 5);
    }

    #[test]
    fn path_structure() {
        let origin = state(-2.0, 3);
        for seed in 0..50 {
            let path = simulate_path(origin, seed).unwrap();
            let mut prev = origin.clock();
            for (i, a) in path.arrivals.iter().enumerate() {
                assert_eq!(a.index, origin.n + 1 + i as u64);
                assert!(a.time.value() > prev && a.time.value() <= 1.0);
                assert!(a.relative_rank >= 1 && a.relative_rank <= a.index);
                assert_eq!(a.is_record, a.relative_rank == 1);
                prev = a.time.value();
            }
        }
    }

    #[test]
    fn paths_are_deterministic_per_seed() {
        let origin = state(-1.5, 2);
        assert_eq!(simulate_path(origin, 7).unwrap(), simulate_path(origin, 7).unwrap());
    }

    #[test]
    fn runaway_cap_is_enforced() {
        let mut rng = path_rng(1, 0);
        let err = simulate_path_with(state(-20.0, 10), &mut rng, 1000).unwrap_err();
        assert!(matches!(err, Error::RunawayPath { cap: 1000 }));
    }

    #[test]
    fn pgf_examples() {
        let s = state(-1.0, 1);
        let expected = 0.5 * (-1.0f64).exp() / (1.0 - 0.5 * (1.0 - (-1.0f64).exp()));
        assert!((total_count_pgf(s, 0.5).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.26894).abs() < 1e-5);
        assert_eq!(total_count_pgf(state(-3.0, 4), 1.0).unwrap(), 1.0);
        for k in 1..6 {
            let v = total_count_pgf(state(0.0, k), 0.3).unwrap();
            assert!((v - 0.3f64.powi(k as i32)).abs() < 1e-15);
        }
        assert!(total_count_pgf(s, 1.5).is_err());
    }

    #[test]
    fn pgf_matches_series_of_pmf() {
        let s = state(-0.7, 3);
        let law = NegBinomialLaw::from_log_time(3, -0.7).unwrap();
        let z: f64 = 0.6;
        let series: f64 = (0..400)
            .map(|y| z.powi(3 + y as i32) * further_arrivals_pmf(&law, y))
            .sum();
        assert!((series - total_count_pgf(s, z).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn pure_birth_checkpoints() {
        let mut rng = path_rng(3, 0);
        let counts =
            simulate_pure_birth_counts(state(-1.0, 2), &[-0.5, -0.2, 0.0], &mut rng, 1000)
                .unwrap();
        assert_eq!(counts.len(), 3);
        assert!(counts[0] >= 2 && counts[0] <= counts[1] && counts[1] <= counts[2]);
        assert!(simulate_pure_birth_counts(state(-1.0, 2), &[-2.0], &mut rng, 10).is_err());
    }
}
