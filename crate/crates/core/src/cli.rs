//! Command-line front end: `figure1`, `values`, `hjb`, `simulate`, `verify`.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exact_values::{
    gap_n1, pi_one_closed_form, pi_quadrature, pi_record_is_best_row, pi_record_is_best_with, pi_series,
    threshold_rule_value, threshold_rule_value_bounded, threshold_value_one_closed_form, Tolerance,
    DUAL_ROUTE_TOLERANCE,
};
use crate::hjb_solver::{
    extract_boundary, solve_optimal, solve_policy, Closure, SolverConfig, StoppingBoundary, ValueTable,
    BOUNDARY_RESOLUTION, ONE_OVER_E_THRESHOLD,
};
use crate::montecarlo::{combined_z, estimate_win, exact_win, MonteCarloEstimate, Strategy, DEFAULT_TRIALS};
use crate::negbin::NegBinomialLaw;
use crate::pi_process::{total_count_pgf, LogTime, ProcessState};

pub const DEFAULT_SEED: u64 = 20_240_601;

#[derive(Debug, Parser)]
#[command(name = "pi-stop", version, about = "Record stopping on proportional-increment processes")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    #[arg(long, global = true, env = "PI_STOP_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Absolute truncation tolerance of every series.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub tol: f64,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Gap between the record-is-best probability and the 1/e rule at u = -1.
    Figure1 {
        #[arg(long, default_value_t = 100)]
        n_max: u64,
    },
    /// Tabulate exact values with truncation bounds.
    Values {
        #[arg(long, allow_hyphen_values = true)]
        u: f64,
        /// Counts, e.g. `1,2,5` or `1..10`.
        #[arg(long, default_value = "1")]
        n: String,
        #[arg(long, value_enum, default_value_t = Mode::Both)]
        mode: Mode,
    },
    /// Solve the HJB system; writes values.csv and boundary.csv.
    Hjb(HjbArgs),
    /// Monte Carlo estimate of a strategy's win probability.
    Simulate(SimulateArgs),
    /// Run the invariant checks; writes verify.json.
    Verify,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Pi,
    Vstar,
    Both,
}

#[derive(Debug, Args)]
pub struct HjbArgs {
    #[arg(long, default_value_t = -4.0, allow_hyphen_values = true)]
    pub u_min: f64,
    #[arg(long, default_value_t = 1e-4)]
    pub step: f64,
    #[arg(long, default_value_t = 400)]
    pub n_max: usize,
    /// threshold-rule, classical-limit or frozen.
    #[arg(long, default_value = "threshold-rule")]
    pub closure: Closure,
    /// Largest n whose stopping threshold is extracted.
    #[arg(long, default_value_t = 200)]
    pub boundary_n_max: usize,
    /// Write every k-th grid point to values.csv.
    #[arg(long, default_value_t = 100)]
    pub csv_every: usize,
    /// Largest n written to values.csv.
    #[arg(long, default_value_t = 20)]
    pub csv_n_max: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// one-over-e, never, first-record, boundary or threshold:<b>.
    #[arg(long, default_value = "one-over-e")]
    pub strategy: String,
    #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
    pub u: f64,
    #[arg(long, default_value_t = 1)]
    pub n: u64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    pub trials: u64,
    /// boundary.csv from `hjb` (default: <out>/boundary.csv).
    #[arg(long)]
    pub boundary: Option<PathBuf>,
    /// Second strategy for comparison, simulated with seed + 1 so the two
    /// estimates are independent.
    #[arg(long)]
    pub versus: Option<String>,
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    let tol = Tolerance::new(cli.common.tol, Tolerance::default().max_terms)?;
    std::fs::create_dir_all(&cli.common.out)?;
    let out = cli.common.out.as_path();
    match cli.command {
        Command::Figure1 { n_max } => cmd_figure1(out, n_max, &tol),
        Command::Values { u, n, mode } => cmd_values(out, u, &parse_counts(&n)?, mode, &tol),
        Command::Hjb(args) => cmd_hjb(out, &args, &tol),
        Command::Simulate(args) => cmd_simulate(out, &args, cli.common.seed, &tol),
        Command::Verify => cmd_verify(out, &tol),
    }
}

/// Full-precision rendering used in every CSV.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `contents` to `path` via a temporary file in the same directory.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn csv_bytes(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

fn parse_counts(spec: &str) -> Result<Vec<u64>> {
    let bad = || Error::InvalidArgument(format!("cannot parse counts `{spec}`"));
    let mut counts = Vec::new();
    for part in spec.split(',').map(str::trim) {
        if let Some((a, b)) = part.split_once("..") {
            let a: u64 = a.parse().map_err(|_| bad())?;
            let b: u64 = b.trim_start_matches('=').parse().map_err(|_| bad())?;
            counts.extend(a..=b);
        } else {
            counts.push(part.parse().map_err(|_| bad())?);
        }
    }
    if counts.is_empty() || counts.contains(&0) {
        return Err(bad());
    }
    Ok(counts)
}

/// One row of the figure: `(n, pi~_n(-1), V*_n(-1), gap)`.
pub fn figure1_rows(n_max: u64, tol: &Tolerance) -> Result<Vec<(u64, f64, f64, f64)>> {
    (1..=n_max)
        .map(|n| {
            let state = ProcessState::new(-1.0, n)?;
            let pi = pi_record_is_best_with(state, tol)?;
            let v = threshold_rule_value(state, tol)?;
            Ok((n, pi, v, pi - v))
        })
        .collect()
}

fn cmd_figure1(out: &Path, n_max: u64, tol: &Tolerance) -> Result<ExitCode> {
    if n_max < 1 {
        return Err(Error::InvalidArgument("n_max must be >= 1".into()));
    }
    let rows = figure1_rows(n_max, tol)?;
    let csv = csv_bytes(
        &["n", "pi_tilde", "v_star", "gap"],
        rows.iter().map(|&(n, pi, v, gap)| vec![n.to_string(), num(pi), num(v), num(gap)]),
    )?;
    write_atomic(&out.join("figure1.csv"), &csv)?;
    let points: Vec<(f64, f64)> = rows.iter().map(|&(n, _, _, g)| (n as f64, g)).collect();
    write_atomic(&out.join("figure1.svg"), gap_svg(&points).as_bytes())?;

    let nonpositive: Vec<u64> = rows.iter().filter(|r| r.3 <= 0.0).map(|r| r.0).collect();
    let decreasing = rows.windows(2).all(|w| w[1].3 < w[0].3);
    let last = rows.last().expect("n_max >= 1");
    println!("gap(n=1) = {}", num(rows[0].3));
    println!("gap(n={}) = {}", last.0, num(last.3));
    println!("gap strictly decreasing over 1..={n_max}: {decreasing}");
    if nonpositive.is_empty() {
        println!("gap > 0 for every n in 1..={n_max}");
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("gap <= 0 at n = {nonpositive:?}");
        Ok(ExitCode::FAILURE)
    }
}

/// Self-contained SVG scatter-and-line plot of gap against n.
pub fn gap_svg(points: &[(f64, f64)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const L: f64 = 70.0;
    const R: f64 = 20.0;
    const T: f64 = 20.0;
    const B: f64 = 55.0;
    let x_max = points.iter().map(|p| p.0).fold(1.0, f64::max);
    let y_max = points.iter().map(|p| p.1).fold(0.0, f64::max);
    let y_top = if y_max > 0.0 { nice_ceiling(y_max) } else { 1.0 };
    let x_of = |x: f64| L + (x - 0.0) / x_max * (W - L - R);
    let y_of = |y: f64| H - B - (y / y_top).clamp(-0.05, 1.05) * (H - T - B);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let (x0, y0) = (x_of(0.0), y_of(0.0));
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1} {:.1} V{y0:.1} H{:.1}" stroke="black" fill="none"/>"#,
        T,
        W - R
    );
    for k in 0..=5 {
        let v = y_top * k as f64 / 5.0;
        let y = y_of(v);
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{x0:.1}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            y + 4.0,
            trim_float(v)
        );
    }
    let x_step = nice_ceiling(x_max / 5.0);
    let mut tick = 0.0;
    while tick <= x_max + 1e-9 {
        let x = x_of(tick);
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{y0:.1}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y0 + 5.0,
            y0 + 19.0,
            trim_float(tick)
        );
        tick += x_step;
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle" font-size="14">n</text>"#,
        0.5 * (L + W - R),
        H - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.1}" text-anchor="middle" font-size="14" transform="rotate(-90 18 {:.1})">gap</text>"#,
        0.5 * (T + H - B),
        0.5 * (T + H - B)
    );
    let path: Vec<String> = points
        .iter()
        .map(|&(x, y)| format!("{:.2},{:.2}", x_of(x), y_of(y)))
        .collect();
    let _ = writeln!(
        s,
        r##"<polyline points="{}" fill="none" stroke="#1f4e9a" stroke-width="1.5"/>"##,
        path.join(" ")
    );
    for &(x, y) in points {
        let _ = writeln!(
            s,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f4e9a"/>"##,
            x_of(x),
            y_of(y)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn nice_ceiling(x: f64) -> f64 {
    let mag = 10f64.powf(x.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= x {
            return m * mag;
        }
    }
    10.0 * mag
}

fn trim_float(x: f64) -> String {
    let s = format!("{x:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn cmd_values(out: &Path, u: f64, counts: &[u64], mode: Mode, tol: &Tolerance) -> Result<ExitCode> {
    if !(u < 0.0) {
        return Err(Error::InvalidLogTime(u));
    }
    let mut rows = Vec::new();
    for &n in counts {
        let state = ProcessState::new(u, n)?;
        let mut row = vec![num(u), n.to_string()];
        if mode != Mode::Vstar {
            let pi = pi_record_is_best_with(state, tol)?;
            let bound = pi_series(state, tol)?.bound;
            row.extend([num(pi), num(bound)]);
        } else {
            row.extend([String::new(), String::new()]);
        }
        if mode != Mode::Pi {
            let v = threshold_rule_value_bounded(state, tol)?;
            row.extend([num(v.value), num(v.bound)]);
        } else {
            row.extend([String::new(), String::new()]);
        }
        println!("{}", row.join(","));
        rows.push(row);
    }
    let csv = csv_bytes(&["u", "n", "pi_tilde", "pi_tilde_bound", "v_star", "v_star_bound"], rows)?;
    write_atomic(&out.join("values.csv"), &csv)?;
    Ok(ExitCode::SUCCESS)
}

/// Searches the table for `(n, u)` with `u < -1` and `pi~_n(u) > V_n(u)`,
/// preferring the grid point furthest below `-1`.
pub fn non_optimality_witness(table: &ValueTable, boundary: &StoppingBoundary) -> Result<Option<(usize, f64, f64, f64)>> {
    let mut best: Option<(usize, f64, f64, f64)> = None;
    for (&n, &u_star) in &boundary.thresholds {
        if u_star >= ONE_OVER_E_THRESHOLD || n >= table.stored_n() {
            continue;
        }
        let target = 0.5 * (u_star + ONE_OVER_E_THRESHOLD);
        let Some(i) = table.index_of((target / table.step()).round() * table.step()) else {
            continue;
        };
        let u = table.grid()[i];
        let pi = pi_record_is_best_row(LogTime::new(u)?, n)[n];
        let v = table.value(n, i);
        if u < ONE_OVER_E_THRESHOLD && pi > v && best.is_none_or(|b| pi - v > b.2 - b.3) {
            best = Some((n, u, pi, v));
        }
    }
    Ok(best)
}

fn cmd_hjb(out: &Path, args: &HjbArgs, tol: &Tolerance) -> Result<ExitCode> {
    let keep = args.boundary_n_max.max(args.csv_n_max).max(1).min(args.n_max);
    let config = SolverConfig {
        u_min: args.u_min,
        step: args.step,
        n_max: args.n_max,
        closure: args.closure,
        keep_n: Some(keep),
        tol: *tol,
    };
    let table = solve_optimal(&config)?;
    let boundary = extract_boundary(&table)?;

    let every = args.csv_every.max(1);
    let csv_n = args.csv_n_max.min(table.stored_n());
    let last = table.grid().len() - 1;
    let mut rows = Vec::new();
    for (i, &u) in table.grid().iter().enumerate() {
        // count grid points from the horizon so that u = 0 is always written
        if (last - i) % every != 0 {
            continue;
        }
        for n in 1..=csv_n {
            rows.push(vec![num(u), n.to_string(), num(table.value(n, i))]);
        }
    }
    write_atomic(&out.join("values.csv"), &csv_bytes(&["u", "n", "V"], rows)?)?;
    let rows = boundary.thresholds.iter().map(|(n, u)| vec![n.to_string(), num(*u)]);
    write_atomic(&out.join("boundary.csv"), &csv_bytes(&["n", "u_star"], rows)?)?;

    let r = table.residual();
    println!(
        "residual: max smooth defect {:.3e} at (u = {:.4}, n = {}), worst ratio to limit {:.3e}; {} kink stencils",
        r.max_smooth, r.max_smooth_at.0, r.max_smooth_at.1, r.worst_ratio, r.kink_stencils
    );
    if let Some(u1) = boundary.thresholds.get(&1) {
        println!("u*_1 = {u1:.7} (resolution {BOUNDARY_RESOLUTION:e})");
    }
    if !boundary.unresolved.is_empty() {
        println!("no sign change for n = {:?}", boundary.unresolved);
    }
    if !boundary.islands.is_empty() {
        println!("stopping region not an interval for n = {:?}", boundary.islands);
    }
    match non_optimality_witness(&table, &boundary)? {
        Some((n, u, pi, v)) => println!(
            "non-optimality witness: n = {n}, u = {u:.4}: pi_tilde = {pi:.10} > V = {v:.10}"
        ),
        None => println!("no non-optimality witness found"),
    }
    if let Some(i) = table.index_of(ONE_OVER_E_THRESHOLD) {
        let row = pi_record_is_best_row(LogTime::new(ONE_OVER_E_THRESHOLD)?, table.stored_n());
        let min_gap = (1..table.stored_n())
            .map(|n| row[n] - table.value(n, i))
            .fold(f64::INFINITY, f64::min);
        println!("min over n of pi_tilde_n(-1) - V_n(-1): {min_gap:.6e}");
    }
    Ok(ExitCode::SUCCESS)
}

/// Reads a `boundary.csv` written by `hjb`.
pub fn read_boundary(path: &Path) -> Result<StoppingBoundary> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut boundary = StoppingBoundary {
        thresholds: Default::default(),
        unresolved: Vec::new(),
        islands: Vec::new(),
        resolution: BOUNDARY_RESOLUTION,
    };
    for record in reader.records() {
        let record = record?;
        let parse_err = || Error::InvalidArgument(format!("malformed row in {}", path.display()));
        let n: usize = record.get(0).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
        let u: f64 = record.get(1).and_then(|s| s.parse().ok()).ok_or_else(parse_err)?;
        boundary.thresholds.insert(n, u);
    }
    Ok(boundary)
}

fn parse_strategy(spec: &str, boundary_path: &Path) -> Result<Strategy> {
    Ok(match spec {
        "one-over-e" => Strategy::one_over_e(),
        "never" => Strategy::StopNever,
        "first-record" => Strategy::StopFirstRecord,
        "boundary" => Strategy::Boundary(read_boundary(boundary_path)?),
        other => {
            let b = other
                .strip_prefix("threshold:")
                .and_then(|b| b.parse::<f64>().ok())
                .ok_or_else(|| Error::InvalidArgument(format!("unknown strategy `{other}`")))?;
            Strategy::FixedThreshold(LogTime::new(b)?)
        }
    })
}

fn cmd_simulate(out: &Path, args: &SimulateArgs, seed: u64, tol: &Tolerance) -> Result<ExitCode> {
    let state = ProcessState::new(args.u, args.n)?;
    let boundary_path = args.boundary.clone().unwrap_or_else(|| out.join("boundary.csv"));
    let mut specs = vec![args.strategy.as_str()];
    specs.extend(args.versus.as_deref());

    let mut rows = Vec::new();
    let mut estimates: Vec<MonteCarloEstimate> = Vec::new();
    for (k, spec) in specs.into_iter().enumerate() {
        let seed = seed.wrapping_add(k as u64);
        let strategy = parse_strategy(spec, &boundary_path)?;
        let est = estimate_win(&strategy, state, args.trials, seed)?;
        let exact = exact_win(&strategy, state, tol)?;
        print!(
            "{spec}: mean = {:.7} stderr = {:.2e} ({} trials, seed {seed})",
            est.mean, est.stderr, est.trials
        );
        match exact {
            Some(x) => println!("; exact = {x:.7}, z = {:.3}", est.z_score(x)),
            None => println!(),
        }
        rows.push(vec![
            spec.to_string(),
            num(args.u),
            args.n.to_string(),
            est.trials.to_string(),
            est.seed.to_string(),
            num(est.mean),
            num(est.stderr),
        ]);
        estimates.push(est);
    }
    if let [a, b] = estimates[..] {
        println!("difference = {:.7}, combined z = {:.3}", a.mean - b.mean, combined_z(&a, &b));
    }
    let csv = csv_bytes(&["strategy", "u", "n", "trials", "seed", "mean", "stderr"], rows)?;
    write_atomic(&out.join("simulate.csv"), &csv)?;
    Ok(ExitCode::SUCCESS)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub observed: f64,
    pub expected: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub passed: bool,
    pub checks: Vec<Check>,
}

struct Checks(Vec<Check>);

impl Checks {
    fn close(&mut self, name: &str, observed: f64, expected: f64, within: f64) {
        self.0.push(Check {
            name: name.into(),
            passed: (observed - expected).abs() <= within,
            observed,
            expected,
            detail: format!("|observed - expected| <= {within:e}"),
        });
    }

    fn holds(&mut self, name: &str, passed: bool, observed: f64, expected: f64, detail: String) {
        self.0.push(Check {
            name: name.into(),
            passed,
            observed,
            expected,
            detail,
        });
    }

    fn failed(&mut self, name: &str, err: &Error) {
        self.0.push(Check {
            name: name.into(),
            passed: false,
            observed: f64::NAN,
            expected: f64::NAN,
            detail: err.to_string(),
        });
    }
}

/// Runs every invariant check.
pub fn verify(tol: &Tolerance) -> VerifyReport {
    let mut checks = Checks(Vec::new());
    let groups: [(&str, fn(&mut Checks, &Tolerance) -> Result<()>); 9] = [
        ("gap identity", check_gap_identity),
        ("closed forms", check_closed_forms),
        ("dual evaluators", check_dual_routes),
        ("monotonicity", check_monotonicity),
        ("large-n limit", check_large_n),
        ("figure gap", check_figure_gap),
        ("pgf law", check_pgf),
        ("negative binomial normalisation", check_normalisation),
        ("hjb policy", check_hjb_policy),
    ];
    for (name, group) in groups {
        if let Err(e) = group(&mut checks, tol) {
            checks.failed(name, &e);
        }
    }
    let checks = checks.0;
    VerifyReport {
        passed: checks.iter().all(|c| c.passed),
        checks,
    }
}

fn check_gap_identity(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    let u = LogTime::new(-1.0)?;
    let p = (-1.0f64).exp();
    let exact = p / (2.0 * (1.0 - p));
    let state = ProcessState::new(-1.0, 1)?;
    let pi = pi_record_is_best_with(state, tol)?;
    let v = threshold_rule_value(state, tol)?;
    c.close("gap_n1(-1) = p/2q", gap_n1(u)?, exact, 1e-12);
    c.close("pi_1(-1) - V*_1(-1) = p/2q", pi - v, exact, 1e-12);
    c.close("pi_1(-1) = 2 V*_1(-1)", pi, 2.0 * v, 1e-12);
    Ok(())
}

fn check_closed_forms(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    for u in [-2.0, -1.0, -0.5, -0.1] {
        let lt = LogTime::new(u)?;
        let state = ProcessState::new(u, 1)?;
        c.close(
            &format!("pi_1({u}) series vs closed form"),
            pi_series(state, tol)?.value,
            pi_one_closed_form(lt),
            1e-10,
        );
        c.close(
            &format!("pi_1({u}) quadrature vs closed form"),
            pi_quadrature(state, tol)?,
            pi_one_closed_form(lt),
            1e-10,
        );
        c.close(
            &format!("V*_1({u}) vs closed form"),
            threshold_rule_value(state, tol)?,
            threshold_value_one_closed_form(lt),
            1e-10,
        );
        let series_gap = pi_series(state, tol)?.value - threshold_rule_value(state, tol)?;
        c.close(&format!("gap_n1({u}) vs series"), gap_n1(lt)?, series_gap, 1e-10);
    }
    Ok(())
}

fn check_dual_routes(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    let mut worst = (0.0f64, 0.0, 0);
    let mut worst_row = 0.0f64;
    for u in [-3.0, -2.0, -1.0, -0.5, -0.1, -0.01] {
        let row = pi_record_is_best_row(LogTime::new(u)?, 200);
        for n in [1u64, 2, 3, 5, 10, 20, 50, 100, 200] {
            let state = ProcessState::new(u, n)?;
            let series = pi_series(state, tol)?.value;
            let quad = pi_quadrature(state, tol)?;
            if (series - quad).abs() > worst.0 {
                worst = ((series - quad).abs(), u, n);
            }
            worst_row = worst_row.max((row[n as usize] - series).abs());
        }
    }
    c.holds(
        "series vs quadrature",
        worst.0 <= DUAL_ROUTE_TOLERANCE,
        worst.0,
        0.0,
        format!("max |diff| at u = {}, n = {}; limit {DUAL_ROUTE_TOLERANCE:e}", worst.1, worst.2),
    );
    c.holds(
        "row recurrence vs series",
        worst_row <= DUAL_ROUTE_TOLERANCE,
        worst_row,
        0.0,
        format!("limit {DUAL_ROUTE_TOLERANCE:e}"),
    );
    Ok(())
}

fn check_monotonicity(c: &mut Checks, _tol: &Tolerance) -> Result<()> {
    let ts: Vec<f64> = (1..=9).map(|k| k as f64 / 10.0).collect();
    let rows: Vec<Vec<f64>> = ts
        .iter()
        .map(|&t| LogTime::new(t.ln()).map(|u| pi_record_is_best_row(u, 200)))
        .collect::<Result<_>>()?;
    let mut strict_t = true;
    let mut nonincreasing_n = true;
    let mut in_unit = true;
    for n in 1..=200 {
        for k in 0..ts.len() {
            in_unit &= (0.0..=1.0).contains(&rows[k][n]);
            if k > 0 {
                strict_t &= rows[k][n] > rows[k - 1][n];
            }
            if n > 1 {
                nonincreasing_n &= rows[k][n] <= rows[k][n - 1];
            }
        }
    }
    let grid = "n = 1..200, t = 0.1..0.9".to_string();
    c.holds("pi strictly increasing in t", strict_t, strict_t as u8 as f64, 1.0, grid.clone());
    c.holds("pi nonincreasing in n", nonincreasing_n, nonincreasing_n as u8 as f64, 1.0, grid.clone());
    c.holds("pi within [0, 1]", in_unit, in_unit as u8 as f64, 1.0, grid);
    Ok(())
}

fn check_large_n(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    for t in [0.2, 0.5, (-1.0f64).exp()] {
        let pi = pi_record_is_best_with(ProcessState::new(t.ln(), 200)?, tol)?;
        c.close(&format!("pi_200({t:.6}) near t"), pi, t, 0.01);
    }
    Ok(())
}

fn check_figure_gap(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    let rows = figure1_rows(100, tol)?;
    let min = rows.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    c.holds("gap > 0 for n = 1..100", min > 0.0, min, 0.0, "smallest gap, must be > 0".into());
    let decreasing = rows.windows(2).all(|w| w[1].3 < w[0].3);
    c.holds(
        "gap strictly decreasing for n = 1..100",
        decreasing,
        decreasing as u8 as f64,
        1.0,
        "consecutive differences".into(),
    );
    let v_unit = rows.iter().all(|r| (0.0..=1.0).contains(&r.2));
    c.holds("V* within [0, 1]", v_unit, v_unit as u8 as f64, 1.0, "n = 1..100 at u = -1".into());
    Ok(())
}

fn check_pgf(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    for (u, n) in [(-1.0, 1u64), (-0.5, 4), (-2.0, 3)] {
        let state = ProcessState::new(u, n)?;
        c.close(&format!("pgf({u}, {n}) at z = 1"), total_count_pgf(state, 1.0)?, 1.0, 1e-15);
        let zs: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
        let g: Vec<f64> = zs.iter().map(|&z| total_count_pgf(state, z)).collect::<Result<_>>()?;
        let monotone = g.windows(2).all(|w| w[1] >= w[0]);
        let convex = g.windows(3).all(|w| w[2] - 2.0 * w[1] + w[0] >= -1e-15);
        c.holds(
            &format!("pgf({u}, {n}) nondecreasing and convex"),
            monotone && convex,
            (monotone && convex) as u8 as f64,
            1.0,
            "z on a 0.01 grid".into(),
        );
        let law = NegBinomialLaw::from_log_time(n, u)?;
        let z = 0.7f64;
        let series: f64 = law
            .window(tol.abs_tol, tol.max_terms)?
            .iter()
            .map(|(y, m)| m * z.powi((n + y) as i32))
            .sum();
        c.close(&format!("pgf({u}, {n}) vs law at z = 0.7"), total_count_pgf(state, z)?, series, 1e-11);
    }
    Ok(())
}

fn check_normalisation(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    for (n, b) in [(5u64, -1.0), (1, -1.0), (50, -2.0), (400, -4.0), (3, -0.01)] {
        let law = NegBinomialLaw::from_log_time(n, b)?;
        let total: f64 = law.window(tol.abs_tol, tol.max_terms)?.pmf.iter().sum();
        c.close(&format!("sum of pmf (n = {n}, b = {b})"), total, 1.0, 1e-11);
    }
    Ok(())
}

fn check_hjb_policy(c: &mut Checks, tol: &Tolerance) -> Result<()> {
    let config = SolverConfig {
        u_min: -2.0,
        step: 1e-3,
        n_max: 120,
        keep_n: Some(50),
        tol: *tol,
        ..SolverConfig::default()
    };
    let table = solve_policy(LogTime::new(-1.0)?, &config)?;
    let i = table.index_of(-1.0).expect("-1 is a node");
    let mut worst = 0.0f64;
    for n in 1..=50u64 {
        let exact = threshold_rule_value(ProcessState::new(-1.0, n)?, tol)?;
        worst = worst.max((table.value(n as usize, i) - exact).abs());
    }
    c.holds(
        "policy ODE reproduces V*_n(-1), n <= 50",
        worst <= 1e-6,
        worst,
        0.0,
        "limit 1e-6".into(),
    );
    Ok(())
}

fn cmd_verify(out: &Path, tol: &Tolerance) -> Result<ExitCode> {
    let report = verify(tol);
    let json = serde_json::to_string_pretty(&report).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    write_atomic(&out.join("verify.json"), format!("{json}\n").as_bytes())?;
    println!("{json}");
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    eprintln!("{} checks, {failed} failed", report.checks.len());
    Ok(if report.passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
