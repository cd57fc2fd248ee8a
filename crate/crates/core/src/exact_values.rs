//! Exact win probabilities for record-stopping rules.
//!
//! * `pi_record_is_best`: probability that a record arriving as the `n`-th
//!   observation at log-time `u` is the overall best, `E[n / N_1 | N_t = n]`.
//!   Evaluated as a negative binomial series and, independently, by adaptive
//!   quadrature of its generating-function integral; the two must agree.
//! * `threshold_rule_value`: win probability of "take the first record after
//!   log-time `b`" given `n` arrivals by `b`.
//! * Closed forms for `n = 1` and the gap between them.
//!
//! Every infinite sum is cut by a proven tail envelope, never by a fixed
//! number of terms.

use crate::error::{Error, Result};
use crate::negbin::NegBinomialLaw;
use crate::pi_process::{LogTime, ProcessState};
use crate::quadrature;

/// Largest tolerated disagreement between the series and quadrature routes.
pub const DUAL_ROUTE_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerance {
    pub abs_tol: f64,
    pub max_terms: u64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Self {
            abs_tol: 1e-12,
            max_terms: 10_000_000,
        }
    }
}

impl Tolerance {
    pub fn new(abs_tol: f64, max_terms: u64) -> Result<Self> {
        if !(abs_tol > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "abs_tol must be positive, got {abs_tol}"
            )));
        }
        Ok(Self { abs_tol, max_terms })
    }
}

/// A series value together with a bound on its truncation error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounded {
    pub value: f64,
    pub bound: f64,
}

/// `f_j(t) = sum_{k >= j} t^k / k` for `0 < t < 1`.
pub fn f_j(j: u64, t: f64, tol: &Tolerance) -> Result<f64> {
    if j < 1 {
        return Err(Error::InvalidArgument("f_j needs j >= 1".into()));
    }
    if !(t > 0.0 && t < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "f_j needs 0 < t < 1 (the series diverges at t = 1), got {t}"
        )));
    }
    let mut power = t.powi(j as i32);
    let mut sum = 0.0;
    let mut k = j;
    loop {
        // sum_{m >= k} t^m / m <= t^k / (k (1 - t))
        let tail = power / (k as f64 * (1.0 - t));
        if tail < tol.abs_tol {
            return Ok(sum);
        }
        if k - j >= tol.max_terms {
            return Err(Error::SeriesNotConverged {
                terms: tol.max_terms,
                bound: tail,
            });
        }
        sum += power / k as f64;
        power *= t;
        k += 1;
    }
}

/// `pi~_n(u)` via `sum_y n / (n + y) P[Y = y]`.
pub fn pi_series(state: ProcessState, tol: &Tolerance) -> Result<Bounded> {
    let n = state.n;
    let law = NegBinomialLaw::from_log_time(n, state.u.value())?;
    let window = law.window(tol.abs_tol, tol.max_terms)?;
    let nf = n as f64;
    let value = window
        .iter()
        .map(|(y, mass)| mass * nf / (nf + y as f64))
        .sum::<f64>();
    Ok(Bounded {
        value,
        bound: window.truncated_mass,
    })
}

/// `pi~_n(u)` by adaptive quadrature of `n ∫_0^1 z^{-1} {z t / (1 - z q)}^n dz`.
///
/// The substitution `z = s^{1/n}` turns the integrand into
/// `{t / (1 - q s^{1/n})}^n`, bounded between `t^n` and 1, which keeps the
/// node count flat as `n` grows.
pub fn pi_quadrature(state: ProcessState, tol: &Tolerance) -> Result<f64> {
    let u = state.u.value();
    if u == 0.0 {
        return Ok(1.0);
    }
    let q = -u.exp_m1();
    let n = state.n as f64;
    let integrand = |s: f64| {
        let w = if s > 0.0 { (s.ln() / n).exp() } else { 0.0 };
        (n * (u - (-q * w).ln_1p())).exp()
    };
    let integral = quadrature::integrate(integrand, 0.0, 1.0, tol.abs_tol, 20_000)?;
    Ok(integral.value)
}

/// Probability that a record seen as the `n`-th arrival at log-time `u` is the
/// overall best.
pub fn pi_record_is_best(state: ProcessState) -> Result<f64> {
    pi_record_is_best_with(state, &Tolerance::default())
}

pub fn pi_record_is_best_with(state: ProcessState, tol: &Tolerance) -> Result<f64> {
    let series = pi_series(state, tol)?;
    let quadrature = pi_quadrature(state, tol)?;
    let diff = (series.value - quadrature).abs();
    if diff > DUAL_ROUTE_TOLERANCE.max(series.bound) {
        return Err(Error::Inconsistent {
            what: format!("pi~_{}({})", state.n, state.u.value()),
            series: series.value,
            quadrature,
            diff,
        });
    }
    Ok(series.value)
}

/// `pi~_n(u)` for every `n` in `0..=n_max` at once (entry 0 is unused and set to 0).
///
/// Uses `pi~_n = n p J_n` with `J_n = ∫_0^1 w^{n-1} / (p + q w) dw`, which
/// obeys `q J_{n+1} + p J_n = 1 / n`. The recursion runs forward from
/// `J_1 = -u / q` when `p < 1/2` and backward from a convergent series for
/// `J_{n_max}` otherwise; in both directions errors are damped by
/// `min(p, q) / max(p, q)` per step.
pub fn pi_record_is_best_row(u: LogTime, n_max: usize) -> Vec<f64> {
    let u = u.value();
    let mut row = vec![0.0; n_max + 1];
    if n_max == 0 {
        return row;
    }
    let p = u.exp();
    let q = -u.exp_m1();
    if q == 0.0 {
        row[1..].iter_mut().for_each(|v| *v = 1.0);
        return row;
    }
    let mut j = vec![0.0; n_max + 1];
    if p < 0.5 {
        j[1] = -u / q;
        for n in 1..n_max {
            j[n + 1] = (1.0 / n as f64 - p * j[n]) / q;
        }
    } else {
        let m = n_max as f64;
        // J_m = sum_k k! q^k / (m (m+1) ... (m+k)), term ratio <= q (k+1) / (m+k+1)
        let mut term = 1.0 / m;
        let mut sum = 0.0f64;
        let mut k = 0.0;
        while term > 1e-18 * sum.max(f64::MIN_POSITIVE) || sum == 0.0 {
            sum += term;
            term *= q * (k + 1.0) / (m + k + 1.0);
            k += 1.0;
        }
        j[n_max] = sum;
        for n in (1..n_max).rev() {
            j[n] = (1.0 / n as f64 - q * j[n + 1]) / p;
        }
    }
    for n in 1..=n_max {
        row[n] = (n as f64 * p * j[n]).clamp(0.0, 1.0);
    }
    row
}

/// Win probability of the threshold rule at its threshold `b = state.u`
/// with `n = state.n` arrivals so far:
/// `sum_{y >= 1} P[Y = y] n / (n + y) sum_{j=1}^{y} 1 / (n + j - 1)`.
pub fn threshold_rule_value(state_at_threshold: ProcessState, tol: &Tolerance) -> Result<f64> {
    threshold_rule_value_bounded(state_at_threshold, tol).map(|b| b.value)
}

/// As [`threshold_rule_value`], also returning the truncation bound.
///
/// The weight `n / (n + y) H` is the classical win probability of skipping
/// the first `n` of `n + y` candidates, hence at most 1, so the truncated
/// mass of the further-arrivals law bounds the truncation error.
pub fn threshold_rule_value_bounded(state: ProcessState, tol: &Tolerance) -> Result<Bounded> {
    let n = state.n;
    let law = NegBinomialLaw::from_log_time(n, state.u.value())?;
    let window = law.window(tol.abs_tol, tol.max_terms)?;
    let nf = n as f64;
    let mut harmonic: f64 = (1..=window.start).map(|j| 1.0 / (nf + j as f64 - 1.0)).sum();
    let mut value = 0.0;
    for (y, mass) in window.iter() {
        if y > window.start {
            harmonic += 1.0 / (nf + y as f64 - 1.0);
        }
        if y >= 1 {
            value += mass * nf / (nf + y as f64) * harmonic;
        }
    }
    Ok(Bounded {
        value,
        bound: window.truncated_mass,
    })
}

/// `p = e^u` and `q = 1 - p` without cancellation near `u = 0`.
fn p_q(u: f64) -> (f64, f64) {
    (u.exp(), -u.exp_m1())
}

/// `pi~_1(u) = -(p / q) log(1 - q)`; since `1 - q = e^u` this is `-(p / q) u`.
pub fn pi_one_closed_form(u: LogTime) -> f64 {
    let u = u.value();
    if u == 0.0 {
        return 1.0;
    }
    let (p, q) = p_q(u);
    -(p / q) * u
}

/// `V*_1(b) = (1/2) (p / q) (log(1 - q))^2 = (1/2) (p / q) b^2`.
pub fn threshold_value_one_closed_form(b: LogTime) -> f64 {
    let b = b.value();
    if b == 0.0 {
        return 0.0;
    }
    let (p, q) = p_q(b);
    0.5 * (p / q) * b * b
}

/// `pi~_1(u) - V*_1(u) = (p / 2q) [-2 log(1 - q) - (log(1 - q))^2]`.
pub fn gap_n1(u: LogTime) -> Result<f64> {
    let u = u.value();
    if u >= 0.0 {
        return Err(Error::InvalidArgument(format!("gap_n1 needs u < 0, got {u}")));
    }
    let (p, q) = p_q(u);
    Ok(p / (2.0 * q) * (-2.0 * u - u * u))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn st(u: f64, n: u64) -> ProcessState {
        ProcessState::new(u, n).unwrap()
    }

    fn lt(u: f64) -> LogTime {
        LogTime::new(u).unwrap()
    }

    const TOL: Tolerance = Tolerance {
        abs_tol: 1e-12,
        max_terms: 10_000_000,
    };

    // Reference values from a 40-digit evaluation of the integral and series
    // definitions (independent of the code paths here).
    const PI_REFERENCE: [(u64, f64, f64); 5] = [
        (1, -1.0, 0.581_976_706_869_326_424),
        (3, -1.0, 0.448_215_495_648_986_880),
        (10, -0.5, 0.629_794_933_261_656_744),
        (50, -2.0, 0.137_710_087_485_895_426),
        (400, -4.0, 0.018_360_697_840_171_327_8),
    ];

    const VSTAR_REFERENCE: [(u64, f64, f64); 6] = [
        (1, -1.0, 0.290_988_353_434_663_212),
        (2, -1.0, 0.338_696_887_338_465_895),
        (5, -1.0, 0.362_176_815_641_526_159),
        (20, -1.5, 0.338_797_108_153_638_721),
        (50, -1.0, 0.367_820_491_375_688_323),
        (7, -0.1, 0.080_466_351_453_054_472_2),
    ];

    #[test]
    fn f_j_examples() {
        assert!((f_j(1, 0.5, &TOL).unwrap() - 2f64.ln()).abs() < 1e-12);
        for t in [0.1f64, 0.5, 0.9] {
            let expected = -(1.0 - t).ln() - t;
            assert!((f_j(2, t, &TOL).unwrap() - expected).abs() < 1e-12);
        }
        assert!((f_j(3, 0.5, &TOL).unwrap() - 0.068_147_180_559_945_309).abs() < 1e-12);
    }

    #[test]
    fn f_j_matches_integral_form() {
        for &(j, t) in &[(1u64, 0.3), (4, 0.8), (10, 0.95)] {
            let integral = quadrature::integrate(
                |s: f64| s.powi(j as i32 - 1) / (1.0 - s),
                0.0,
                t,
                1e-14,
                1000,
            )
            .unwrap();
            assert!((f_j(j, t, &TOL).unwrap() - integral.value).abs() < 1e-12);
        }
    }

    #[test]
    fn f_j_rejects_divergent_arguments() {
        assert!(f_j(1, 1.0, &TOL).is_err());
        assert!(f_j(0, 0.5, &TOL).is_err());
        assert!(f_j(1, 0.0, &TOL).is_err());
    }

    #[test]
    fn pi_matches_reference_values() {
        for &(n, u, expected) in &PI_REFERENCE {
            let v = pi_record_is_best(st(u, n)).unwrap();
            assert!((v - expected).abs() < 1e-12, "n={n} u={u}: {v} vs {expected}");
        }
        let v = pi_record_is_best(st(0.1f64.ln(), 200)).unwrap();
        assert!((v - 0.100_451_805_171_193_578).abs() < 1e-12);
    }

    #[test]
    fn pi_at_horizon_is_one() {
        for n in [1, 2, 17, 300] {
            assert_eq!(pi_record_is_best(st(0.0, n)).unwrap(), 1.0);
        }
    }

    #[test]
    fn pi_one_closed_form_values() {
        let v = pi_one_closed_form(lt(-1.0));
        assert!((v - 0.581_976_7).abs() < 1e-7);
        for u in [-3.0, -2.0, -1.0, -0.5, -0.1, -1e-6] {
            let series = pi_record_is_best(st(u, 1)).unwrap();
            assert!((series - pi_one_closed_form(lt(u))).abs() < 1e-10, "u = {u}");
        }
    }

    #[test]
    fn row_recurrence_matches_series() {
        for u in [-4.0, -2.0, -0.9, -0.5, -0.1, -1e-4] {
            let row = pi_record_is_best_row(lt(u), 60);
            for n in [1usize, 2, 5, 13, 40, 60] {
                let series = pi_series(st(u, n as u64), &TOL).unwrap().value;
                assert!((row[n] - series).abs() < 1e-12, "u={u} n={n}: {} vs {series}", row[n]);
            }
        }
        let row = pi_record_is_best_row(lt(-4.0), 400);
        assert!((row[400] - PI_REFERENCE[4].2).abs() < 1e-12);
        assert!(pi_record_is_best_row(lt(0.0), 5)[1..].iter().all(|&v| v == 1.0));
    }

    #[test]
    fn threshold_rule_reference_values() {
        for &(n, b, expected) in &VSTAR_REFERENCE {
            let v = threshold_rule_value(st(b, n), &TOL).unwrap();
            assert!((v - expected).abs() < 1e-12, "n={n} b={b}: {v} vs {expected}");
        }
    }

    #[test]
    fn threshold_rule_at_horizon_is_zero() {
        for n in [1, 4, 99] {
            assert_eq!(threshold_rule_value(st(0.0, n), &TOL).unwrap(), 0.0);
        }
    }

    #[test]
    fn threshold_rule_matches_n1_closed_form() {
        let v = threshold_value_one_closed_form(lt(-1.0));
        assert!((v - 0.290_988_4).abs() < 1e-7);
        for b in [-2.0, -1.0, -0.5, -0.1] {
            let series = threshold_rule_value(st(b, 1), &TOL).unwrap();
            assert!((series - threshold_value_one_closed_form(lt(b))).abs() < 1e-10);
        }
    }

    #[test]
    fn gap_examples() {
        let p = (-1.0f64).exp();
        let g = gap_n1(lt(-1.0)).unwrap();
        assert!((g - p / (2.0 * (1.0 - p))).abs() < 1e-15);
        assert!((g - threshold_value_one_closed_form(lt(-1.0))).abs() < 1e-15);
        assert!(gap_n1(lt(0.0)).is_err());
        for u in [-2.5, -1.0, -0.3] {
            let machinery = pi_record_is_best(st(u, 1)).unwrap()
                - threshold_rule_value(st(u, 1), &TOL).unwrap();
            assert!((gap_n1(lt(u)).unwrap() - machinery).abs() < 1e-10);
        }
    }

    #[test]
    fn truncation_bounds_are_reported() {
        let loose = Tolerance::new(1e-6, 10_000_000).unwrap();
        let b = threshold_rule_value_bounded(st(-2.0, 3), &loose).unwrap();
        assert!(b.bound < 1e-6);
        let exact = threshold_rule_value(st(-2.0, 3), &TOL).unwrap();
        assert!((b.value - exact).abs() <= b.bound + 1e-15);
    }

    #[test]
    fn term_cap_is_reported() {
        let tight = Tolerance::new(1e-12, 50).unwrap();
        let err = threshold_rule_value(st(-3.0, 5), &tight).unwrap_err();
        assert!(matches!(err, Error::SeriesNotConverged { terms: 50, .. }));
        assert!(Tolerance::new(0.0, 10).is_err());
    }
}
