//! Backward integration of the HJB system for the optimal value functions.
//!
//! `V_n(u)` is the optimal win probability at log-time `u` with `n` arrivals
//! so far, none of them being offered at `u`. With `pi~` the record-is-best
//! probability,
//!
//! ```text
//! dV_n/du = -[ n (V_{n+1} - V_n) + n/(n+1) (pi~_{n+1} - V_{n+1})^+ ],   V_n(0) = 0,
//! ```
//!
//! and a record seen as the `n`-th arrival at `u` should be taken iff
//! `pi~_n(u) > V_n(u)`. A fixed-threshold policy replaces the positive part
//! by the plain gain on `u > b` and by zero before `b`.
//!
//! The sweep is classical RK4 on a uniform grid from `u = 0` down to
//! `u_min`, with steps split exactly at a policy threshold. The infinite
//! system is closed at `n_max + 1`; see [`Closure`].

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::exact_values::{pi_record_is_best_row, threshold_rule_value, Tolerance};
use crate::pi_process::{LogTime, ProcessState};

/// Log-time of the classical `1/e` threshold.
pub const ONE_OVER_E_THRESHOLD: f64 = -1.0;

/// Value assigned to `V_{n_max+1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Closure {
    /// Value of the threshold rule with `n_max + 1` arrivals, frozen at the
    /// threshold before it: `V*_{n_max+1}(max(u, b))`. The threshold is
    /// `b = -1` for the optimal system and the policy's own threshold
    /// otherwise. For a policy this is exact on `[b, 0]`; for the optimal
    /// system it is exact on `[-1, 0]` as long as every large-count
    /// stopping threshold lies below `-1`.
    ThresholdRule,
    /// Large-population limit: `-t ln t` after the threshold, its value at the
    /// threshold before it.
    ClassicalLimit,
    /// `V_{n_max+1} := V_{n_max}`.
    Frozen,
}

impl std::str::FromStr for Closure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "threshold-rule" | "threshold_rule" => Ok(Self::ThresholdRule),
            "classical-limit" | "classical_limit" => Ok(Self::ClassicalLimit),
            "frozen" => Ok(Self::Frozen),
            other => Err(Error::InvalidArgument(format!("unknown closure `{other}`"))),
        }
    }
}

impl std::fmt::Display for Closure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ThresholdRule => "threshold-rule",
            Self::ClassicalLimit => "classical-limit",
            Self::Frozen => "frozen",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub u_min: f64,
    pub step: f64,
    pub n_max: usize,
    pub closure: Closure,
    /// Number of value functions kept in the table (`None` keeps all `n_max`).
    pub keep_n: Option<usize>,
    pub tol: Tolerance,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            u_min: -4.0,
            step: 1e-4,
            n_max: 400,
            closure: Closure::ThresholdRule,
            keep_n: None,
            tol: Tolerance::default(),
        }
    }
}

impl SolverConfig {
    fn validate(&self) -> Result<usize> {
        if !(self.u_min.is_finite() && self.u_min < 0.0) {
            return Err(Error::InvalidArgument(format!("u_min must be < 0, got {}", self.u_min)));
        }
        if !(self.step > 0.0 && self.step <= -self.u_min) {
            return Err(Error::InvalidArgument(format!(
                "step must lie in (0, |u_min|], got {}",
                self.step
            )));
        }
        if self.n_max < 2 {
            return Err(Error::InvalidArgument(format!("n_max must be >= 2, got {}", self.n_max)));
        }
        if let Some(k) = self.keep_n {
            if k < 1 || k > self.n_max {
                return Err(Error::InvalidArgument(format!(
                    "keep_n must lie in [1, n_max], got {k}"
                )));
            }
        }
        Ok((-self.u_min / self.step).round().max(1.0) as usize)
    }

    /// Number of grid steps between `u_min` and 0.
    pub fn steps(&self) -> Result<usize> {
        self.validate()
    }
}

/// Which problem a table solves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TableKind {
    Optimal,
    Policy { threshold: f64 },
}

/// Defect of the computed values against the ODE, measured by Simpson's rule
/// over pairs of steps: `V(u - h) - V(u + h) + h/3 (f(u-h) + 4 f(u) + f(u+h))`.
/// Stencils straddling a kink of the right-hand side, or of any of the next
/// few equations, are tallied separately.
///
/// Near the horizon `V_n` varies on the scale `1/n`, so the smooth defect is
/// held to `10 h^4 (1 + h (n+1)^4)` plus a rounding floor.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResidualReport {
    pub step: f64,
    /// Largest smooth-stencil defect for each `n` (index 0 unused).
    pub by_n: Vec<f64>,
    /// Largest smooth defect and where it occurred.
    pub max_smooth: f64,
    pub max_smooth_at: (f64, usize),
    /// Largest ratio of a smooth defect to its limit, and where it occurred.
    pub worst_ratio: f64,
    pub worst_at: (f64, usize),
    pub max_kink: f64,
    pub kink_stencils: usize,
}

impl ResidualReport {
    pub fn limit(&self, n: usize) -> f64 {
        let h = self.step;
        10.0 * h.powi(4) * (1.0 + h * ((n + 1) as f64).powi(4)) + 64.0 * f64::EPSILON
    }

    pub fn passed(&self) -> bool {
        self.worst_ratio <= 1.0
    }
}

#[derive(Debug, Clone)]
pub struct ValueTable {
    kind: TableKind,
    config: SolverConfig,
    grid: Vec<f64>,
    width: usize,
    /// Row-major: `values[i * width + (n - 1)] = V_n(grid[i])`.
    values: Vec<f64>,
    residual: ResidualReport,
}

impl ValueTable {
    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn config(&self) -> &SolverConfig {
        &self.config
    }

    /// Grid nodes in ascending order, from `u_min` to exactly 0.
    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn step(&self) -> f64 {
        self.config.step
    }

    /// Largest `n` with stored values.
    pub fn stored_n(&self) -> usize {
        self.width
    }

    pub fn residual(&self) -> &ResidualReport {
        &self.residual
    }

    pub fn value(&self, n: usize, index: usize) -> f64 {
        assert!(n >= 1 && n <= self.width, "n = {n} not stored");
        self.values[index * self.width + n - 1]
    }

    /// Grid index of `u` if it is a node (within a thousandth of a step).
    pub fn index_of(&self, u: f64) -> Option<usize> {
        let k = (-u / self.config.step).round();
        if k < 0.0 || k as usize >= self.grid.len() {
            return None;
        }
        let index = self.grid.len() - 1 - k as usize;
        ((self.grid[index] - u).abs() < 1e-3 * self.config.step).then_some(index)
    }

    /// `V_n(u)` at any `u` in `[u_min, 0]`, by cubic Hermite interpolation
    /// using the ODE right-hand side for the nodal slopes. Only first-order
    /// accurate on a cell containing a kink.
    pub fn value_at(&self, n: usize, u: f64) -> Result<f64> {
        if n < 1 || n > self.width {
            return Err(Error::InvalidArgument(format!("n = {n} not stored")));
        }
        let first = self.grid[0];
        if !(u >= first && u <= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "u = {u} outside the grid [{first}, 0]"
            )));
        }
        if let Some(i) = self.index_of(u) {
            return Ok(self.value(n, i));
        }
        let h = self.config.step;
        let hi = self.grid.partition_point(|&g| g < u).min(self.grid.len() - 1);
        let lo = hi - 1;
        let (u0, u1) = (self.grid[lo], self.grid[hi]);
        let (v0, v1) = (self.value(n, lo), self.value(n, hi));
        let (d0, d1) = (self.slope(n, lo)?, self.slope(n, hi)?);
        let s = (u - u0) / h;
        let h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
        let h10 = s * (1.0 - s) * (1.0 - s);
        let h01 = s * s * (3.0 - 2.0 * s);
        let h11 = s * s * (s - 1.0);
        Ok(h00 * v0 + h10 * (u1 - u0) * d0 + h01 * v1 + h11 * (u1 - u0) * d1)
    }

    /// Simpson defect of `V_n` over the two steps around interior node
    /// `index`: `V(u - h) - V(u + h) + h/3 (f(u - h) + 4 f(u) + f(u + h))`.
    pub fn residual_at(&self, n: usize, index: usize) -> Result<f64> {
        if index == 0 || index + 1 >= self.grid.len() {
            return Err(Error::InvalidArgument(format!("node {index} is not interior")));
        }
        let h = self.config.step;
        let f = |i| self.slope(n, i);
        Ok(self.value(n, index - 1) - self.value(n, index + 1)
            + h / 3.0 * (f(index - 1)? + 4.0 * f(index)? + f(index + 1)?))
    }

    /// `dV_n/du` at grid node `index`.
    fn slope(&self, n: usize, index: usize) -> Result<f64> {
        let u = self.grid[index];
        let next = if n < self.width {
            self.value(n + 1, index)
        } else if n == self.config.n_max {
            let closure = ClosureEval::new(&self.config, self.kind)?;
            closure.value(u, self.value(n, index))?
        } else {
            return Err(Error::InvalidArgument(format!(
                "slope of V_{n} needs V_{} which is not stored",
                n + 1
            )));
        };
        let pi_next = pi_record_is_best_row(LogTime::new(u)?, n + 1)[n + 1];
        let stop = match self.kind {
            TableKind::Optimal => StopTerm::Optimal,
            TableKind::Policy { threshold } if u > threshold => StopTerm::Always,
            TableKind::Policy { .. } => StopTerm::Never,
        };
        Ok(rhs_component(n, self.value(n, index), next, pi_next, stop))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum StopTerm {
    Optimal,
    Always,
    Never,
}

#[inline]
fn rhs_component(n: usize, v: f64, next: f64, pi_next: f64, stop: StopTerm) -> f64 {
    let nf = n as f64;
    let gain = pi_next - next;
    let stop_value = match stop {
        StopTerm::Optimal => gain.max(0.0),
        StopTerm::Always => gain,
        StopTerm::Never => 0.0,
    };
    -(nf * (next - v) + nf / (nf + 1.0) * stop_value)
}

/// Evaluates `V_{n_max+1}(u)`.
struct ClosureEval {
    closure: Closure,
    threshold: f64,
    n: u64,
    tol: Tolerance,
    before_threshold: f64,
}

impl ClosureEval {
    fn new(config: &SolverConfig, kind: TableKind) -> Result<Self> {
        let threshold = match kind {
            TableKind::Optimal => ONE_OVER_E_THRESHOLD,
            TableKind::Policy { threshold } => threshold,
        };
        let n = config.n_max as u64 + 1;
        let before_threshold = match config.closure {
            Closure::ThresholdRule => {
                threshold_rule_value(ProcessState::new(threshold, n)?, &config.tol)?
            }
            Closure::ClassicalLimit => -threshold * threshold.exp(),
            Closure::Frozen => 0.0,
        };
        Ok(Self {
            closure: config.closure,
            threshold,
            n,
            tol: config.tol,
            before_threshold,
        })
    }

    fn value(&self, u: f64, v_last: f64) -> Result<f64> {
        if self.closure == Closure::Frozen {
            return Ok(v_last);
        }
        if u <= self.threshold {
            return Ok(self.before_threshold);
        }
        Ok(match self.closure {
            Closure::ThresholdRule => threshold_rule_value(ProcessState::new(u, self.n)?, &self.tol)?,
            _ => -u * u.exp(),
        })
    }
}

/// Right-hand side of the truncated system with per-`u` caches.
struct System {
    n_max: usize,
    kind: TableKind,
    closure: ClosureEval,
}

struct Slice {
    pi: Vec<f64>,
    closure_at: f64,
}

impl System {
    fn slice(&self, u: f64, v_last: f64) -> Result<Slice> {
        Ok(Slice {
            pi: pi_record_is_best_row(LogTime::new(u.min(0.0))?, self.n_max + 1),
            closure_at: self.closure.value(u, v_last)?,
        })
    }

    fn eval(&self, slice: &Slice, v: &[f64], stop: StopTerm, out: &mut [f64]) {
        let n_max = self.n_max;
        for n in 1..=n_max {
            let next = if n == n_max {
                if self.closure.closure == Closure::Frozen {
                    v[n_max]
                } else {
                    slice.closure_at
                }
            } else {
                v[n + 1]
            };
            out[n] = rhs_component(n, v[n], next, slice.pi[n + 1], stop);
        }
    }

    /// Stop term in force on the open interval `(lo, hi)`.
    fn stop_on(&self, lo: f64, hi: f64) -> StopTerm {
        match self.kind {
            TableKind::Optimal => StopTerm::Optimal,
            TableKind::Policy { threshold } => {
                if 0.5 * (lo + hi) > threshold {
                    StopTerm::Always
                } else {
                    StopTerm::Never
                }
            }
        }
    }

    /// One RK4 step from `hi` down to `lo`; `start` is the slice at `hi`.
    fn rk4(&self, v: &mut Vec<f64>, hi: f64, lo: f64, start: &Slice, scratch: &mut Scratch) -> Result<Slice> {
        let h = hi - lo;
        let mid_u = hi - 0.5 * h;
        let stop = self.stop_on(lo, hi);
        let Scratch { k1, k2, k3, k4, tmp } = scratch;

        self.eval(start, v, stop, k1);
        for i in 1..v.len() {
            tmp[i] = v[i] - 0.5 * h * k1[i];
        }
        let mid = self.slice(mid_u, tmp[self.n_max])?;
        self.eval(&mid, tmp, stop, k2);
        for i in 1..v.len() {
            tmp[i] = v[i] - 0.5 * h * k2[i];
        }
        let mid = if self.closure.closure == Closure::Frozen {
            self.slice(mid_u, tmp[self.n_max])?
        } else {
            mid
        };
        self.eval(&mid, tmp, stop, k3);
        for i in 1..v.len() {
            tmp[i] = v[i] - h * k3[i];
        }
        let end = self.slice(lo, tmp[self.n_max])?;
        self.eval(&end, tmp, stop, k4);
        for i in 1..v.len() {
            v[i] -= h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (n, &x) in v.iter().enumerate().skip(1) {
            if !x.is_finite() {
                return Err(Error::NonFinite { u: lo, n });
            }
        }
        Ok(end)
    }
}

struct Scratch {
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Scratch {
    fn new(len: usize) -> Self {
        Self {
            k1: vec![0.0; len],
            k2: vec![0.0; len],
            k3: vec![0.0; len],
            k4: vec![0.0; len],
            tmp: vec![0.0; len],
        }
    }
}

/// Solves the optimal HJB system.
pub fn solve_optimal(config: &SolverConfig) -> Result<ValueTable> {
    sweep(config, TableKind::Optimal)
}

/// Value functions of the rule "take the first record after log-time `b`".
pub fn solve_policy(threshold_b: LogTime, config: &SolverConfig) -> Result<ValueTable> {
    sweep(
        config,
        TableKind::Policy {
            threshold: threshold_b.value(),
        },
    )
}

fn sweep(config: &SolverConfig, kind: TableKind) -> Result<ValueTable> {
    let steps = config.validate()?;
    let h = config.step;
    let n_max = config.n_max;
    let width = match config.keep_n {
        Some(k) if k < n_max => k + 1,
        _ => n_max,
    };
    let system = System {
        n_max,
        kind,
        closure: ClosureEval::new(config, kind)?,
    };
    // adding 0.0 turns -0.0 into 0.0 at the horizon
    let node = |j: usize| -(j as f64) * h + 0.0;
    let threshold = match kind {
        TableKind::Policy { threshold } => Some(threshold),
        TableKind::Optimal => None,
    };

    let mut values = vec![0.0; (steps + 1) * width];
    let mut v = vec![0.0; n_max + 1];
    let mut scratch = Scratch::new(n_max + 1);
    let mut residual = Residual::new(config, kind, n_max);

    // V_n(0) = 0 is set, not integrated.
    let mut slice = system.slice(0.0, 0.0)?;
    residual.push(&system, 0.0, &v, &slice)?;
    for j in 0..steps {
        let hi = node(j);
        let lo = node(j + 1);
        slice = match threshold {
            Some(b) if b < hi && b > lo => {
                let at_b = system.rk4(&mut v, hi, b, &slice, &mut scratch)?;
                system.rk4(&mut v, b, lo, &at_b, &mut scratch)?
            }
            _ => system.rk4(&mut v, hi, lo, &slice, &mut scratch)?,
        };
        let row = steps - (j + 1);
        values[row * width..(row + 1) * width].copy_from_slice(&v[1..=width]);
        residual.push(&system, lo, &v, &slice)?;
    }

    let grid = (0..=steps).map(|i| node(steps - i)).collect();
    let report = residual.finish();
    if !report.passed() {
        let (u, n) = report.worst_at;
        return Err(Error::ConvergenceFailure {
            residual: report.by_n[n],
            limit: report.limit(n),
            u,
            n,
        });
    }
    Ok(ValueTable {
        kind,
        config: config.clone(),
        grid,
        width,
        values,
        residual: report,
    })
}

const KINK_REACH: usize = 3;

/// Rolling Simpson-defect check over the last three nodes of the sweep.
struct Residual {
    h: f64,
    n_max: usize,
    kind: TableKind,
    closure_kink: Option<f64>,
    nodes: Vec<(f64, Vec<f64>, Vec<f64>, Vec<f64>)>,
    report: ResidualReport,
}

impl Residual {
    fn new(config: &SolverConfig, kind: TableKind, n_max: usize) -> Self {
        let closure_kink = match (config.closure, kind) {
            (Closure::Frozen, _) => None,
            (_, TableKind::Optimal) => Some(ONE_OVER_E_THRESHOLD),
            (_, TableKind::Policy { threshold }) => Some(threshold),
        };
        let h = config.step;
        Self {
            h,
            n_max,
            kind,
            closure_kink,
            nodes: Vec::with_capacity(3),
            report: ResidualReport {
                // Simpson's defect is O(h^5) on smooth stretches; the floor
                // covers rounding in differences of O(1) values.
                step: h,
                by_n: vec![0.0; n_max + 1],
                ..Default::default()
            },
        }
    }

    /// Records node `u` with values `v`, slopes and stop gains.
    fn push(&mut self, system: &System, u: f64, v: &[f64], slice: &Slice) -> Result<()> {
        let n_max = self.n_max;
        let mut slope = vec![0.0; n_max + 1];
        let stop = match self.kind {
            TableKind::Optimal => StopTerm::Optimal,
            // at the threshold itself either side will do; such stencils are skipped
            TableKind::Policy { threshold } if u > threshold => StopTerm::Always,
            TableKind::Policy { .. } => StopTerm::Never,
        };
        system.eval(slice, v, stop, &mut slope);
        let mut gain = vec![0.0; n_max + 1];
        for n in 1..=n_max {
            let next = if n == n_max { slice.closure_at } else { v[n + 1] };
            gain[n] = slice.pi[n + 1] - next;
        }
        if self.nodes.len() == 3 {
            self.nodes.remove(0);
        }
        self.nodes.push((u, v.to_vec(), slope, gain));
        if self.nodes.len() == 3 {
            self.check();
        }
        Ok(())
    }

    fn check(&mut self) {
        let (hi_u, hi_v, hi_f, hi_g) = &self.nodes[0];
        let (mid_u, _, mid_f, mid_g) = &self.nodes[1];
        let (lo_u, lo_v, lo_f, lo_g) = &self.nodes[2];
        let straddles = |x: f64| x >= *lo_u && x <= *hi_u;
        let policy_kink = matches!(self.kind, TableKind::Policy { threshold } if straddles(threshold));
        let closure_kink = self.closure_kink.is_some_and(straddles);
        let n_max = self.n_max;
        // a kink in equation m puts jumps in the 2nd..5th derivatives of V_m .. V_{m-3}
        let crossing: Vec<bool> = (0..=n_max)
            .map(|n| {
                n >= 1
                    && matches!(self.kind, TableKind::Optimal)
                    && !(hi_g[n] > 0.0 && mid_g[n] > 0.0 && lo_g[n] > 0.0
                        || hi_g[n] < 0.0 && mid_g[n] < 0.0 && lo_g[n] < 0.0)
            })
            .collect();
        for n in 1..=n_max {
            let defect =
                (hi_v[n] - lo_v[n] - self.h / 3.0 * (hi_f[n] + 4.0 * mid_f[n] + lo_f[n])).abs();
            let reach = (n + KINK_REACH).min(n_max);
            let kink = policy_kink
                || crossing[n..=reach].iter().any(|&c| c)
                || (closure_kink && reach == n_max);
            if kink {
                self.report.kink_stencils += 1;
                self.report.max_kink = self.report.max_kink.max(defect);
            } else {
                self.report.by_n[n] = self.report.by_n[n].max(defect);
                if defect > self.report.max_smooth {
                    self.report.max_smooth = defect;
                    self.report.max_smooth_at = (*mid_u, n);
                }
                let ratio = defect / self.report.limit(n);
                if ratio > self.report.worst_ratio {
                    self.report.worst_ratio = ratio;
                    self.report.worst_at = (*mid_u, n);
                }
            }
        }
    }

    fn finish(self) -> ResidualReport {
        self.report
    }
}

/// Per-count stopping thresholds `u*_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct StoppingBoundary {
    /// `u*_n`: records seen as the `n`-th arrival are taken iff `u > u*_n`.
    pub thresholds: BTreeMap<usize, f64>,
    /// Counts for which `pi~_n - V_n` keeps its sign on the whole grid.
    pub unresolved: Vec<usize>,
    /// Counts whose stopping region has a component below `u*_n`.
    pub islands: Vec<usize>,
    pub resolution: f64,
}

impl StoppingBoundary {
    /// Threshold for count `n`, falling back to `fallback` when `n` was not resolved.
    pub fn threshold(&self, n: usize, fallback: f64) -> f64 {
        self.thresholds.get(&n).copied().unwrap_or(fallback)
    }
}

/// Default bisection resolution of [`extract_boundary`].
pub const BOUNDARY_RESOLUTION: f64 = 1e-6;

/// Locates, for each stored `n`, the crossing of `pi~_n - V_n` closest to the
/// horizon: grid scan downward from `u = 0`, then bisection on the Hermite
/// interpolant of `V_n`.
pub fn extract_boundary(table: &ValueTable) -> Result<StoppingBoundary> {
    if table.kind != TableKind::Optimal {
        return Err(Error::InvalidArgument(
            "stopping boundary requires a table from solve_optimal".into(),
        ));
    }
    let last_n = if table.width < table.config.n_max { table.width - 1 } else { table.width };
    let grid = table.grid();

    // one pass from the horizon down: first index with diff <= 0, and whether
    // diff turns positive again below it
    let mut crossing: Vec<Option<usize>> = vec![None; last_n + 1];
    let mut island = vec![false; last_n + 1];
    for i in (0..grid.len() - 1).rev() {
        let row = pi_record_is_best_row(LogTime::new(grid[i])?, last_n);
        for n in 1..=last_n {
            let diff = row[n] - table.value(n, i);
            match crossing[n] {
                None if diff <= 0.0 => crossing[n] = Some(i),
                Some(_) if diff > 0.0 => island[n] = true,
                _ => {}
            }
        }
    }

    let mut boundary = StoppingBoundary {
        thresholds: BTreeMap::new(),
        unresolved: Vec::new(),
        islands: Vec::new(),
        resolution: BOUNDARY_RESOLUTION,
    };
    for n in 1..=last_n {
        let Some(i) = crossing[n] else {
            boundary.unresolved.push(n);
            continue;
        };
        if island[n] {
            boundary.islands.push(n);
        }
        let mut lo = grid[i];
        let mut hi = grid[i + 1];
        let g = |u: f64| -> Result<f64> {
            let pi = pi_record_is_best_row(LogTime::new(u)?, n)[n];
            Ok(pi - table.value_at(n, u)?)
        };
        while hi - lo > BOUNDARY_RESOLUTION {
            let mid = 0.5 * (lo + hi);
            if g(mid)? > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        boundary.thresholds.insert(n, 0.5 * (lo + hi));
    }
    Ok(boundary)
}
