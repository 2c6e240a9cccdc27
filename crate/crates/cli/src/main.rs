//! `semicycle`: thresholds, simulation, classification, spectra and
//! reproduction runs for `x''(t) + p(t) x(t - tau(t)) = 0`.
//!
//! Exit status: 0 on success, 1 on domain or I/O errors, 2 on parse errors.

// Negated float comparisons double as NaN rejection.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod cache;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Parser, Subcommand, ValueEnum};

use semicycle::analysis::{classify_with, find_zeros, semicycles, zero_times, ClassifyOptions};
use semicycle::harness::{self, ComparisonRow, DecayRow, MarginRow, WronskianRow};
use semicycle::integrator::{integrate, normalize, DelayProblem, Trajectory};
use semicycle::repro::{build_example_problem, ExampleKind, ExampleSpec};
use semicycle::spectral::{char_roots, eigen_semicycle, EquationSign};
use semicycle::thresholds::{beta_iterate, semicycle_threshold, theta, DEFAULT_GRID, DEFAULT_MAX_ITER, DEFAULT_TOL};

#[derive(Parser, Debug)]
#[command(name = "semicycle", version, about = "Semicycle-length analysis of second-order delay equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Descent time theta, ascent time Psi and the semicycle threshold over a delay range.
    Thresholds {
        /// `start:end:step` or a single value.
        #[arg(long, default_value = "0:3:0.1", value_parser = parse_range)]
        delta: Range,
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        rho: f64,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Psi over a (rho, delta) grid, cached on disk.
    Table {
        #[arg(long, value_parser = parse_range)]
        delta: Range,
        #[arg(long, value_parser = parse_range)]
        rho: Range,
        #[arg(long, default_value_t = DEFAULT_GRID)]
        grid: usize,
        /// Recompute even when a cached table exists.
        #[arg(long)]
        refresh: bool,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate a problem given as JSON and write `t,x,dx` at every node.
    Simulate {
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Integrate and classify; writes a JSON report.
    Classify {
        input: PathBuf,
        #[arg(long, allow_negative_numbers = true)]
        horizon: f64,
        #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
        step: f64,
        #[arg(long, default_value_t = 1e-3)]
        margin: f64,
        #[arg(long, default_value_t = 1.5)]
        growth_factor: f64,
        #[arg(long, default_value_t = 1e-10)]
        zero_tol: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Characteristic roots of `x'' = -sign x(t - delay)` and eigen semicycles.
    Spectrum {
        #[arg(long, allow_negative_numbers = true)]
        delay: f64,
        #[arg(long, default_value = "+", allow_hyphen_values = true, value_parser = EquationSign::from_str)]
        sign: EquationSign,
        /// Inclusive branch range `lo..hi`.
        #[arg(long, default_value = "0..2", allow_hyphen_values = true, value_parser = parse_branches)]
        branches: (i64, i64),
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Integrate one of the closed-form examples and compare per semicycle.
    Repro {
        #[arg(value_parser = ExampleKind::from_str)]
        which: ExampleKind,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        epsilon: f64,
        #[arg(long, default_value_t = 3)]
        periods: usize,
        #[arg(long, default_value_t = 1e-3, allow_negative_numbers = true)]
        step: f64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Seeded randomized checks; one CSV row per instance (per semicycle for margins).
    Harness {
        #[arg(long, value_enum, default_value_t = HarnessKind::Margins)]
        kind: HarnessKind,
        #[arg(long, default_value_t = harness::DEFAULT_SEED)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        instances: usize,
        /// Defaults: 40 (margins), 10 (comparison), 50 (wronskian); unused for decay.
        #[arg(long, allow_negative_numbers = true)]
        horizon: Option<f64>,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum HarnessKind {
    Margins,
    Comparison,
    Wronskian,
    Decay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Range {
    start: f64,
    end: f64,
    step: f64,
}

impl Range {
    /// Grid values, rounded to 12 decimals so `0:1:0.1` prints as `0.3`, not
    /// `0.30000000000000004`.
    fn values(&self) -> Vec<f64> {
        let n = ((self.end - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|i| ((self.start + i as f64 * self.step) * 1e12).round() / 1e12).collect()
    }
}

fn parse_range(s: &str) -> Result<Range, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let num = |p: &str| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}"));
    let r = match parts.as_slice() {
        [v] => Range { start: num(v)?, end: num(v)?, step: 1.0 },
        [a, b, st] => Range { start: num(a)?, end: num(b)?, step: num(st)? },
        _ => return Err(format!("expected start:end:step or a single value, got {s:?}")),
    };
    if !(r.step > 0.0) || !(r.end >= r.start) || !r.start.is_finite() || !r.end.is_finite() {
        return Err(format!("range {s:?} must have start <= end and a positive step"));
    }
    Ok(r)
}

fn parse_branches(s: &str) -> Result<(i64, i64), String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected lo..hi, got {s:?}"))?;
    let b = b.strip_prefix('=').unwrap_or(b);
    let lo = a.trim().parse::<i64>().map_err(|e| format!("{a:?}: {e}"))?;
    let hi = b.trim().parse::<i64>().map_err(|e| format!("{b:?}: {e}"))?;
    if lo > hi {
        return Err(format!("empty branch range {s:?}"));
    }
    Ok((lo, hi))
}

#[derive(Debug)]
enum Failure {
    Parse(String),
    Domain(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Parse(_) => 2,
            Failure::Domain(_) => 1,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Parse(m) => write!(f, "parse error: {m}"),
            Failure::Domain(m) => write!(f, "{m}"),
        }
    }
}

type Outcome<T> = Result<T, Failure>;

/// Tags a core error with the operation that raised it.
fn op<T>(name: &str, r: semicycle::Result<T>) -> Outcome<T> {
    r.map_err(|e| Failure::Domain(format!("{name}: {e}")))
}

fn write(path: Option<&Path>, contents: &str) -> Outcome<()> {
    output::emit(path, contents).map_err(|e| {
        let target = path.map_or_else(|| "stdout".to_string(), |p| p.display().to_string());
        Failure::Domain(format!("writing {target}: {e}"))
    })
}

fn read_problem(path: &Path) -> Outcome<DelayProblem> {
    let text =
        if path.as_os_str() == "-" { std::io::read_to_string(std::io::stdin()) } else { std::fs::read_to_string(path) }
            .map_err(|e| Failure::Domain(format!("reading {}: {e}", path.display())))?;
    let problem: DelayProblem = serde_json::from_str(&text)
        .map_err(|e| Failure::Parse(format!("{}:{}:{}: {e}", path.display(), e.line(), e.column())))?;
    op("validate", problem.validate())?;
    Ok(problem)
}

fn check_positive(name: &str, v: f64) -> Outcome<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Failure::Domain(format!("--{name} must be positive, got {v}")))
    }
}

fn trajectory_points(traj: &Trajectory) -> Vec<(f64, f64)> {
    traj.times().iter().copied().zip(traj.values().iter().copied()).collect()
}

/// Thins a polyline to at most `n` points for plotting.
fn thin(points: &[(f64, f64)], n: usize) -> Vec<(f64, f64)> {
    let stride = points.len().div_ceil(n).max(1);
    let mut out: Vec<_> = points.iter().copied().step_by(stride).collect();
    if let (Some(&last), Some(&kept)) = (points.last(), out.last()) {
        if last != kept {
            out.push(last);
        }
    }
    out
}

fn run(cli: Cli) -> Outcome<()> {
    match cli.command {
        Command::Thresholds { delta, rho, grid, jobs, out } => {
            check_positive("rho", rho)?;
            let deltas = delta.values();
            let rows = op(
                "thresholds",
                harness::run_parallel(jobs, deltas.len(), |i| {
                    let d = deltas[i];
                    let th = theta(d)?;
                    let psi_one = beta_iterate(1.0, d, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)?.psi;
                    let psi = if rho == 1.0 {
                        psi_one
                    } else {
                        beta_iterate(rho, d, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)?.psi
                    };
                    Ok(format!("{d},{th},{psi},{}", psi_one + th))
                }),
            )?;
            write(out.as_deref(), &output::csv("delta,theta,psi,threshold", rows))
        }
        Command::Table { delta, rho, grid, refresh, jobs, out } => {
            let key =
                cache::key("psi-table", &[delta.start, delta.end, delta.step, rho.start, rho.end, rho.step], &[grid]);
            let cached = if refresh { None } else { cache::load(&key) };
            let table = match cached {
                Some(t) => t,
                None => {
                    let cells: Vec<(f64, f64)> = rho
                        .values()
                        .into_iter()
                        .flat_map(|r| delta.values().into_iter().map(move |d| (r, d)))
                        .collect();
                    let rows = op(
                        "table",
                        harness::run_parallel(jobs, cells.len(), |i| {
                            let (r, d) = cells[i];
                            let psi = beta_iterate(r, d, grid, DEFAULT_TOL, DEFAULT_MAX_ITER)?.psi;
                            Ok(format!("{r},{d},{psi},{}", theta(d)?))
                        }),
                    )?;
                    let t = output::csv("rho,delta,psi,theta", rows);
                    cache::store(&key, &t);
                    t
                }
            };
            write(out.as_deref(), &table)
        }
        Command::Simulate { input, horizon, step, out, svg } => {
            check_positive("step", step)?;
            let problem = read_problem(&input)?;
            let traj = op("integrate", integrate(&problem, horizon, step))?;
            let rows =
                (0..traj.len()).map(|i| format!("{},{},{}", traj.times()[i], traj.values()[i], traj.slopes()[i]));
            write(out.as_deref(), &output::csv("t,x,dx", rows))?;
            if let Some(path) = svg {
                let pts = thin(&trajectory_points(&traj), 4000);
                write(Some(&path), &output::svg_plot(&format!("x(t), {}", input.display()), &[("x", &pts)]))?;
            }
            Ok(())
        }
        Command::Classify { input, horizon, step, margin, growth_factor, zero_tol, out } => {
            check_positive("step", step)?;
            check_positive("margin", margin)?;
            check_positive("zero-tol", zero_tol)?;
            let problem = read_problem(&input)?;
            let (normalized, _) = op("normalize", normalize(&problem))?;
            let tau_norm = normalized.tau_m();
            let threshold = if tau_norm > 0.0 {
                let key = cache::key("threshold", &[tau_norm], &[DEFAULT_GRID]);
                Some(op("semicycle_threshold", cache::scalar(&key, || semicycle_threshold(tau_norm)))?)
            } else {
                None
            };
            let traj = op("integrate", integrate(&problem, horizon, step))?;
            let opts = ClassifyOptions { margin, growth_factor, zero_tol, threshold };
            let report = op("classify", classify_with(&problem, &traj, &opts))?;
            let json = serde_json::to_string_pretty(&report).expect("report serializes");
            write(out.as_deref(), &(json + "\n"))
        }
        Command::Spectrum { delay, sign, branches, out } => {
            let roots = op("char_roots", char_roots(delay, sign, branches.0..=branches.1))?;
            let rows = roots.iter().map(|r| {
                let semi = eigen_semicycle(r).map_or_else(|_| String::new(), |s| s.to_string());
                format!("{},{},{},{},{},{:e}", r.branch, r.side, r.lambda.re, r.lambda.im, semi, r.residual)
            });
            write(out.as_deref(), &output::csv("branch,side,re,im,semicycle,residual", rows))
        }
        Command::Repro { which, epsilon, periods, step, out, svg } => {
            check_positive("step", step)?;
            let spec = op("repro", ExampleSpec::new(which, epsilon, periods))?;
            let problem = op("build_example_problem", build_example_problem(&spec))?;
            let traj = op("integrate", integrate(&problem, spec.horizon(), step))?;
            let mut zeros = zero_times(&op("find_zeros", find_zeros(&traj, 1e-10))?);
            // the window ends on a zero; rounding can hide it from the root finder
            let end = traj.end();
            if zeros.last().is_none_or(|&z| end - z > 1e-6) && op("eval", traj.eval(end))?.abs() < 1e-9 {
                zeros.push(end);
            }
            let cycles = op("semicycles", semicycles(&traj, &zeros, 1e-10))?;
            let mut rows = Vec::new();
            let mut prev_peak: Option<f64> = None;
            for (k, sc) in cycles.iter().enumerate() {
                let mut err: f64 = 0.0;
                for i in 0..=400 {
                    let t = sc.a + sc.length() * i as f64 / 400.0;
                    err = err.max((op("eval", traj.eval(t))? - spec.closed_form(t)).abs());
                }
                let ratio = prev_peak.map_or_else(String::new, |p| (sc.peak / p).to_string());
                rows.push(format!(
                    "{k},{},{},{},{},{},{ratio},{},{err:e}",
                    sc.a,
                    sc.b,
                    sc.length(),
                    spec.semicycle_length(),
                    sc.peak,
                    spec.growth_factor()
                ));
                prev_peak = Some(sc.peak);
            }
            let header = "semicycle,a,b,length,expected_length,peak,peak_ratio,expected_ratio,max_abs_error";
            write(out.as_deref(), &output::csv(header, rows))?;
            if let Some(path) = svg {
                let pts = thin(&trajectory_points(&traj), 4000);
                let exact: Vec<(f64, f64)> = pts.iter().map(|&(t, _)| (t, spec.closed_form(t))).collect();
                let title = format!("{which:?}, epsilon = {epsilon}");
                write(Some(&path), &output::svg_plot(&title, &[("integrated", &pts), ("closed form", &exact)]))?;
            }
            Ok(())
        }
        Command::Harness { kind, seed, instances, horizon, jobs, out } => {
            let csv = match kind {
                HarnessKind::Margins => {
                    let h = horizon.unwrap_or(40.0);
                    check_positive("horizon", h)?;
                    let rows = op("harness", harness::margin_harness(seed, instances, h, jobs))?;
                    output::csv(MarginRow::CSV_HEADER, rows.iter().map(MarginRow::csv_row))
                }
                HarnessKind::Comparison => {
                    let h = horizon.unwrap_or(harness::COMPARISON_HORIZON);
                    check_positive("horizon", h)?;
                    let rows = op("harness", harness::comparison_harness(seed, instances, h, jobs))?;
                    output::csv(ComparisonRow::CSV_HEADER, rows.iter().map(ComparisonRow::csv_row))
                }
                HarnessKind::Wronskian => {
                    let h = horizon.unwrap_or(50.0);
                    check_positive("horizon", h)?;
                    let rows = op("harness", harness::wronskian_harness(seed, instances, h, jobs))?;
                    output::csv(WronskianRow::CSV_HEADER, rows.iter().map(WronskianRow::csv_row))
                }
                HarnessKind::Decay => {
                    let rows = op("harness", harness::decay_harness(seed, instances, jobs))?;
                    output::csv(DecayRow::CSV_HEADER, rows.iter().map(DecayRow::csv_row))
                }
            };
            write(out.as_deref(), &csv)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("semicycle: {f}");
            ExitCode::from(f.code())
        }
    }
}
