//! Negative binomial law of the number of further arrivals.
//!
//! Given `n` arrivals by log-time `b`, the number `Y` of arrivals in `(b, 0]`
//! satisfies `P[Y = y] = q^y p^n C(n+y-1, y)` with `p = e^b`, `q = 1 - p`.
//!
//! Single probabilities are evaluated with Loader's saddle-point form
//! (`stirlerr` + `bd0`), which keeps full relative precision for counts in
//! the tens of thousands where a naive `ln_gamma` difference loses digits.
//! Sums are taken over a window anchored at the mode and grown outward by
//! exact term ratios until rigorous tail envelopes fall below tolerance.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Parameters `(n, p)` of the further-arrivals law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NegBinomialLaw {
    n: u64,
    p: f64,
    q: f64,
}

impl NegBinomialLaw {
    pub fn new(n: u64, p: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidCount(n));
        }
        if !(p > 0.0 && p <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "negative binomial p must lie in (0, 1], got {p}"
            )));
        }
        Ok(Self { n, p, q: 1.0 - p })
    }

    /// Law of further arrivals after log-time `b <= 0` given `n` arrivals so far.
    pub fn from_log_time(n: u64, b: f64) -> Result<Self> {
        if !(b.is_finite() && b <= 0.0) {
            return Err(Error::InvalidLogTime(b));
        }
        let mut law = Self::new(n, b.exp().max(f64::MIN_POSITIVE))?;
        law.q = -b.exp_m1();
        Ok(law)
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn q(&self) -> f64 {
        self.q
    }

    pub fn mean(&self) -> f64 {
        self.n as f64 * self.q() / self.p
    }

    /// Smallest mode of the law.
    pub fn mode(&self) -> u64 {
        if self.n <= 1 || self.q <= 0.0 {
            return 0;
        }
        ((self.n - 1) as f64 * self.q() / self.p).floor() as u64
    }

    pub fn ln_pmf(&self, y: u64) -> f64 {
        ln_nb_pmf(self.n, self.p, self.q, y)
    }

    pub fn pmf(&self, y: u64) -> f64 {
        self.ln_pmf(y).exp()
    }

    /// Ratio `pmf(y + 1) / pmf(y)`.
    fn ratio(&self, y: u64) -> f64 {
        self.q() * (self.n + y) as f64 / (y + 1) as f64
    }

    /// Contiguous block of probabilities covering all but `tol` of the mass.
    ///
    /// Below the mode the terms increase in `y`, so the mass left of `start`
    /// is at most `start * pmf(start)`. Above the mode the ratio
    /// `q (n + y) / (y + 1)` is nonincreasing, so the mass right of the last
    /// term `y` is at most `pmf(y) r / (1 - r)` once `r < 1`.
    pub fn window(&self, tol: f64, max_terms: u64) -> Result<PmfWindow> {
        if self.q <= 0.0 {
            return Ok(PmfWindow {
                start: 0,
                pmf: vec![1.0],
                truncated_mass: 0.0,
            });
        }
        let half = 0.5 * tol;
        let mode = self.mode();
        let peak = self.pmf(mode);

        let mut lower = Vec::new();
        let mut y = mode;
        let mut term = peak;
        let mut lower_bound = 0.0;
        while y > 0 {
            let next = term * y as f64 / (self.q() * (self.n + y - 1) as f64);
            y -= 1;
            term = next;
            lower.push(term);
            if (y as f64) * term < half {
                lower_bound = y as f64 * term;
                break;
            }
            if lower.len() as u64 > max_terms {
                return Err(Error::SeriesNotConverged {
                    terms: max_terms,
                    bound: y as f64 * term,
                });
            }
        }
        let start = mode - lower.len() as u64;
        lower.reverse();

        let mut pmf = lower;
        pmf.push(peak);
        let mut y = mode;
        let mut term = peak;
        let upper_bound = loop {
            let r = self.ratio(y);
            if r < 1.0 {
                let bound = term * r / (1.0 - r);
                if bound < half {
                    break bound;
                }
            }
            if pmf.len() as u64 >= max_terms {
                let bound = if r < 1.0 { term * r / (1.0 - r) } else { f64::INFINITY };
                return Err(Error::SeriesNotConverged {
                    terms: max_terms,
                    bound,
                });
            }
            term *= r;
            y += 1;
            pmf.push(term);
        };

        Ok(PmfWindow {
            start,
            pmf,
            truncated_mass: lower_bound + upper_bound,
        })
    }
}

/// Probabilities `pmf[i] = P[Y = start + i]` plus a bound on the mass outside.
#[derive(Debug, Clone)]
pub struct PmfWindow {
    pub start: u64,
    pub pmf: Vec<f64>,
    pub truncated_mass: f64,
}

impl PmfWindow {
    pub fn iter(&self) -> impl Iterator<Item = (u64, f64)> + '_ {
        self.pmf
            .iter()
            .enumerate()
            .map(move |(i, &w)| (self.start + i as u64, w))
    }

    pub fn end(&self) -> u64 {
        self.start + self.pmf.len() as u64
    }
}

/// `ln P[Y = y]` for the law `(n, p)`.
fn ln_nb_pmf(n: u64, p: f64, q: f64, y: u64) -> f64 {
    if q <= 0.0 {
        return if y == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    let trials = (n + y) as f64;
    // P[Y = y] = n / (n + y) * Binomial(n + y, p) at n successes.
    (n as f64 / trials).ln() + ln_binom_raw(n as f64, trials, p, q)
}

/// Loader's saddle-point evaluation of `ln C(m, x) p^x q^(m-x)`.
fn ln_binom_raw(x: f64, m: f64, p: f64, q: f64) -> f64 {
    if x == 0.0 {
        return if p < 0.1 { -bd0(m, m * q) - m * p } else { m * q.ln() };
    }
    if x == m {
        return if q < 0.1 { -bd0(m, m * p) - m * q } else { m * p.ln() };
    }
    let lc = stirlerr(m) - stirlerr(x) - stirlerr(m - x) - bd0(x, m * p) - bd0(m - x, m * q);
    let lf = (2.0 * PI).ln() + x.ln() + (-x / m).ln_1p();
    lc - 0.5 * lf
}

// ln(k!) - [(k + 1/2) ln k - k + ln sqrt(2 pi)] for k = 1..15
const STIRLERR_SMALL: [f64; 15] = [
    0.081_061_466_795_327_258,
    0.041_340_695_955_409_294,
    0.027_677_925_684_998_339,
    0.020_790_672_103_765_093,
    0.016_644_691_189_821_192,
    0.013_876_128_823_070_748,
    0.011_896_709_945_891_770,
    0.010_411_265_261_972_096,
    0.009_255_462_182_712_733,
    0.008_330_563_433_362_871,
    0.007_573_675_487_951_841,
    0.006_942_840_107_209_530,
    0.006_408_994_188_004_207,
    0.005_951_370_112_758_848,
    0.005_554_733_551_962_801,
];

/// Error of Stirling's approximation to `ln k!` (integer `k >= 1`).
fn stirlerr(k: f64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if k <= 15.0 {
        return STIRLERR_SMALL[k as usize - 1];
    }
    let kk = k * k;
    if k > 500.0 {
        (S0 - S1 / kk) / k
    } else if k > 80.0 {
        (S0 - (S1 - S2 / kk) / kk) / k
    } else if k > 35.0 {
        (S0 - (S1 - (S2 - S3 / kk) / kk) / kk) / k
    } else {
        (S0 - (S1 - (S2 - (S3 - S4 / kk) / kk) / kk) / kk) / k
    }
}

/// Deviance term `x ln(x / np) + np - x`, computed without cancellation.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive_pmf(n: u64, p: f64, y: u64) -> f64 {
        // direct product, fine for small arguments
        let mut c = 1.0;
        for j in 1..=y {
            c *= (n + j - 1) as f64 / j as f64;
        }
        c * (1.0 - p).powi(y as i32) * p.powi(n as i32)
    }

    #[test]
    fn y_zero_is_p_to_the_n() {
        for &(n, p) in &[(1, 0.3), (4, 0.5), (17, 0.9), (3, 0.05)] {
            let law = NegBinomialLaw::new(n, p).unwrap();
            let expected = p.powi(n as i32);
            assert!((law.pmf(0) - expected).abs() < 1e-15 * expected.max(1e-300));
        }
    }

    #[test]
    fn n_one_is_geometric() {
        let p = (-1.0f64).exp();
        let law = NegBinomialLaw::new(1, p).unwrap();
        for y in 0..30 {
            let expected = (1.0 - p).powi(y) * p;
            assert!((law.pmf(y as u64) / expected - 1.0).abs() < 1e-13, "y = {y}");
        }
    }

    #[test]
    fn matches_direct_product_for_small_arguments() {
        for &(n, p) in &[(2u64, 0.4), (5, (-1.0f64).exp()), (12, 0.7), (30, 0.2)] {
            for y in 0..60u64 {
                let a = NegBinomialLaw::new(n, p).unwrap().pmf(y);
                let b = naive_pmf(n, p, y);
                assert!((a - b).abs() <= 1e-13 * b + 1e-300, "n={n} p={p} y={y}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn window_is_normalised() {
        let law = NegBinomialLaw::new(5, (-1.0f64).exp()).unwrap();
        let w = law.window(1e-14, 10_000_000).unwrap();
        let total: f64 = w.pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-12, "total = {total}");
        assert!(w.truncated_mass < 1e-14);
    }

    #[test]
    fn window_handles_underflowing_edges() {
        // p^n underflows here: 0.018^400 ~ 1e-698
        let law = NegBinomialLaw::from_log_time(400, -4.0).unwrap();
        assert_eq!(law.pmf(0), 0.0);
        let w = law.window(1e-13, 10_000_000).unwrap();
        let total: f64 = w.pmf.iter().sum();
        assert!((total - 1.0).abs() < 1e-11, "total = {total}");
        let mean: f64 = w.iter().map(|(y, m)| y as f64 * m).sum();
        assert!((mean / law.mean() - 1.0).abs() < 1e-11);
    }

    #[test]
    fn degenerate_law_at_horizon() {
        let law = NegBinomialLaw::from_log_time(7, 0.0).unwrap();
        assert_eq!(law.pmf(0), 1.0);
        assert_eq!(law.pmf(3), 0.0);
        let w = law.window(1e-12, 10).unwrap();
        assert_eq!(w.pmf, vec![1.0]);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(NegBinomialLaw::new(0, 0.5).is_err());
        assert!(NegBinomialLaw::new(1, 0.0).is_err());
        assert!(NegBinomialLaw::new(1, 1.5).is_err());
        assert!(NegBinomialLaw::from_log_time(1, 0.1).is_err());
    }
}
