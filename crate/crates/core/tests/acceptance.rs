//! Acceptance checks, one line per criterion. Runs as a plain binary so the
//! PASS/FAIL lines show up in `cargo test` output.

use std::f64::consts::{E, FRAC_PI_2, PI, SQRT_2};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use semicycle::analysis::{classify, find_zeros, semicycles, zero_times, Semicycle, Verdict};
use semicycle::harness::{self, DEFAULT_SEED};
use semicycle::integrator::{integrate, DelayProblem, Trajectory};
use semicycle::repro::{build_example_problem, ExampleKind, ExampleSpec};
use semicycle::spectral::{char_roots, eigen_semicycle, EquationSign};
use semicycle::thresholds::{
    beta_iterate, gamma_constant, psi, psi_oracle_bvp, semicycle_threshold, theta, DEFAULT_BVP_MESH,
};

type Check = Result<String, String>;
type Criterion = (&'static str, fn() -> Check);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within_budget(elapsed: Duration, budget: Duration) -> Result<(), String> {
    ensure(elapsed <= budget, || format!("took {elapsed:.2?}, budget {budget:?}"))
}

fn theta_special_values() -> Check {
    let t0 = Instant::now();
    let zero = theta(0.0).map_err(|e| e.to_string())?;
    ensure((zero - FRAC_PI_2).abs() <= 1e-6, || format!("theta(0) = {zero}"))?;
    let mut worst: f64 = 0.0;
    for d in [1.5, 2.0, 5.0] {
        let v = theta(d).map_err(|e| e.to_string())?;
        worst = worst.max((v - SQRT_2).abs());
    }
    ensure(worst <= 1e-9, || format!("theta off sqrt 2 by {worst:e}"))?;
    within_budget(t0.elapsed(), Duration::from_secs(1))?;
    Ok(format!("theta(0) - pi/2 = {:.1e}, max |theta - sqrt2| = {worst:.1e}", zero - FRAC_PI_2))
}

fn psi_special_values() -> Check {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for rho in [0.5, 1.0, 2.0] {
        worst = worst.max((psi(rho, 0.0).map_err(|e| e.to_string())? - FRAC_PI_2).abs());
    }
    let mut worst2: f64 = 0.0;
    for d in [2.0 * SQRT_2, 3.0, 4.0] {
        worst2 = worst2.max((psi(1.0, d).map_err(|e| e.to_string())? - SQRT_2).abs());
    }
    ensure(worst <= 2e-3 && worst2 <= 2e-3, || format!("errors {worst:e}, {worst2:e}"))?;
    within_budget(t0.elapsed(), Duration::from_secs(30))?;
    Ok(format!("max |psi(rho,0) - pi/2| = {worst:.1e}, max |psi(1,D) - sqrt2| = {worst2:.1e}"))
}

fn oracle_agreement() -> Check {
    let t0 = Instant::now();
    let mut worst: f64 = 0.0;
    for i in 0..5 {
        let rho = 0.5 + 1.5 * i as f64 / 4.0;
        for j in 0..5 {
            let d = 3.0 * j as f64 / 4.0;
            let a = beta_iterate(rho, d, 4096, 1e-10, 500).map_err(|e| e.to_string())?.psi;
            let b = psi_oracle_bvp(rho, d, DEFAULT_BVP_MESH).map_err(|e| e.to_string())?;
            worst = worst.max((a - b).abs());
        }
    }
    ensure(worst < 1e-4, || format!("iteration and shooting differ by {worst:e}"))?;
    within_budget(t0.elapsed(), Duration::from_secs(120))?;
    Ok(format!("max |iteration - shooting| over 5x5 grid = {worst:.1e}"))
}

fn gamma_bracket() -> Check {
    let g = gamma_constant(1e-10).map_err(|e| e.to_string())?;
    let residual = (psi(1.0, g).map_err(|e| e.to_string())? - g).abs();
    ensure((SQRT_2..=FRAC_PI_2).contains(&g), || format!("gamma = {g}"))?;
    ensure(residual < 1e-5, || format!("residual {residual:e}"))?;
    Ok(format!("gamma = {g:.10}, |Psi(1,gamma) - gamma| = {residual:.1e}"))
}

fn spectrum_table() -> Check {
    let t0 = Instant::now();
    let roots = char_roots(4.0, EquationSign::Plus, 0..=2).map_err(|e| e.to_string())?;
    let expected = [
        (0, 1, 0.34, 0.37, 8.45),
        (1, 1, -0.57, 3.05, 1.03),
        (1, -1, -0.21, 1.50, 2.09),
        (2, 1, -0.92, 6.21, 0.51),
        (2, -1, -0.77, 4.63, 0.68),
    ];
    for (branch, side, re, im, semi) in expected {
        let r = roots
            .iter()
            .find(|r| r.branch == branch && r.side == side)
            .ok_or_else(|| format!("missing root on branch {branch}, side {side}"))?;
        let s = eigen_semicycle(r).map_err(|e| e.to_string())?;
        let rounds = |v: f64, want: f64| (v * 100.0).round() / 100.0 == want;
        ensure(rounds(r.lambda.re, re) && rounds(r.lambda.im, im), || format!("root {}", r.lambda))?;
        ensure(rounds(s, semi), || format!("semicycle {s} for root {}", r.lambda))?;
        ensure(r.residual < 1e-10, || format!("residual {:e}", r.residual))?;
        ensure((r.lambda.re > 0.0) == (s > 2.0 * SQRT_2), || format!("growth/length dichotomy fails at {}", r.lambda))?;
    }
    within_budget(t0.elapsed(), Duration::from_secs(1))?;
    Ok(format!("{} roots to 2 decimals, growing exactly when semicycle > 2 sqrt 2", expected.len()))
}

struct ExampleRun {
    spec: ExampleSpec,
    problem: DelayProblem,
    traj: Trajectory,
    cycles: Vec<Semicycle>,
    max_error: f64,
}

fn run_example(which: ExampleKind, epsilon: f64, periods: usize) -> Result<ExampleRun, String> {
    let spec = ExampleSpec::new(which, epsilon, periods).map_err(|e| e.to_string())?;
    let problem = build_example_problem(&spec).map_err(|e| e.to_string())?;
    let traj = integrate(&problem, spec.horizon(), 1e-3).map_err(|e| e.to_string())?;
    let n = 20 * 400 * periods.max(1);
    let mut max_error: f64 = 0.0;
    for i in 0..=n {
        let t = spec.horizon() * i as f64 / n as f64;
        max_error = max_error.max((traj.eval(t).map_err(|e| e.to_string())? - spec.closed_form(t)).abs());
    }
    let zeros = zero_times(&find_zeros(&traj, 1e-10).map_err(|e| e.to_string())?);
    let cycles = semicycles(&traj, &zeros, 1e-10).map_err(|e| e.to_string())?;
    Ok(ExampleRun { spec, problem, traj, cycles, max_error })
}

/// Lengths match the closed form and consecutive peaks grow by the expected factor.
fn check_semicycles(run: &ExampleRun) -> Result<(), String> {
    ensure(run.cycles.len() >= 2, || format!("only {} semicycles", run.cycles.len()))?;
    let want = run.spec.semicycle_length();
    for c in &run.cycles {
        ensure((c.length() - want).abs() <= 1e-6, || format!("length {} vs {want}", c.length()))?;
    }
    let g = run.spec.growth_factor();
    for w in run.cycles.windows(2) {
        let ratio = w[1].peak / w[0].peak;
        ensure((ratio - g).abs() <= 1e-6, || format!("peak ratio {ratio} vs {g}"))?;
    }
    Ok(())
}

fn example2() -> Check {
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.1] {
        let run = run_example(ExampleKind::Example2, eps, 5)?;
        ensure(run.max_error < 1e-6, || format!("eps {eps}: error {:e}", run.max_error))?;
        check_semicycles(&run).map_err(|e| format!("eps {eps}: {e}"))?;
        if eps == 0.0 {
            ensure(run.spec.growth_factor() == 1.0, || "envelope factor at eps = 0".into())?;
        } else {
            let want = eps.sinh().hypot(eps.cosh());
            ensure((run.spec.growth_factor() - want).abs() < 1e-15, || "growth factor formula".into())?;
        }
        worst = worst.max(run.max_error);
    }
    Ok(format!("max error {worst:.1e}; lengths = A, envelope ratios = sqrt(sinh^2 + cosh^2)"))
}

fn example3() -> Check {
    let mut worst: f64 = 0.0;
    for eps in [0.0, 0.1] {
        let run = run_example(ExampleKind::Example3, eps, 5)?;
        ensure(run.max_error < 1e-6, || format!("eps {eps}: error {:e}", run.max_error))?;
        ensure((run.spec.semicycle_length() - (2.0 * SQRT_2 + 2.0 * eps)).abs() < 1e-15, || "B formula".into())?;
        check_semicycles(&run).map_err(|e| format!("eps {eps}: {e}"))?;
        worst = worst.max(run.max_error);
    }
    // classification needs enough semicycles for the 1.5 growth factor
    let mut verdicts = Vec::new();
    for eps in [0.0, 0.1, 0.2] {
        let run = run_example(ExampleKind::Example3, eps, 50)?;
        let c = classify(&run.problem, &run.traj).map_err(|e| e.to_string())?;
        if eps > 0.0 {
            ensure(c.verdict == Verdict::UnboundedObserved, || format!("eps {eps}: {:?}", c.verdict))?;
            let theta =
                semicycle_threshold(run.problem.tau_m() * run.problem.p_sup_abs().sqrt()).map_err(|e| e.to_string())?;
            let longest = c.semicycles.iter().map(|s| s.length()).fold(0.0, f64::max);
            ensure(longest > theta - 1e-6, || "unbounded without a long semicycle".into())?;
        } else {
            let peaks: Vec<f64> = run.cycles.iter().map(|c| c.peak).collect();
            let spread = peaks.iter().fold(0.0f64, |m, p| m.max((p - peaks[0]).abs()));
            ensure(spread < 1e-6, || format!("eps = 0 envelope varies by {spread:e}"))?;
            ensure(c.verdict != Verdict::TendsToZeroCertified, || "eps = 0 classified as decaying".into())?;
        }
        verdicts.push(format!("eps {eps}: {}", c.verdict.as_str()));
    }
    Ok(format!("max error {worst:.1e}; lengths = 2 sqrt2 + 2 eps; {}", verdicts.join(", ")))
}

fn decay_property() -> Check {
    let t0 = Instant::now();
    let rows = harness::decay_harness(DEFAULT_SEED, 50, None).map_err(|e| e.to_string())?;
    ensure(rows.len() == 50, || format!("{} rows", rows.len()))?;
    let mut worst_ratio: f64 = 0.0;
    for r in &rows {
        ensure(r.max_length <= r.threshold - harness::DECAY_GAP + 1e-6, || {
            format!("instance {}: semicycle too long", r.instance)
        })?;
        ensure(r.fitted_ratio < 1.0, || format!("instance {}: fitted ratio {}", r.instance, r.fitted_ratio))?;
        worst_ratio = worst_ratio.max(r.fitted_ratio);
    }
    within_budget(t0.elapsed(), Duration::from_secs(300))?;
    let certified = rows.iter().filter(|r| r.verdict == Verdict::TendsToZeroCertified).count();
    Ok(format!("50 constructions, largest fitted window ratio {worst_ratio:.3}, {certified}/50 certified decaying"))
}

fn descent_ascent_margins() -> Check {
    let rows = harness::margin_harness(DEFAULT_SEED, 200, 40.0, None).map_err(|e| e.to_string())?;
    let d: Vec<f64> = rows.iter().filter_map(|r| r.descent_margin).collect();
    let a: Vec<f64> = rows.iter().filter_map(|r| r.ascent_margin).collect();
    ensure(!d.is_empty() && !a.is_empty(), || "no applicable semicycles".into())?;
    let dmin = d.iter().copied().fold(f64::INFINITY, f64::min);
    let amin = a.iter().copied().fold(f64::INFINITY, f64::min);
    ensure(dmin >= -1e-3 && amin >= -1e-3, || format!("min margins {dmin}, {amin}"))?;
    let instances = rows.iter().map(|r| r.instance).collect::<std::collections::BTreeSet<_>>().len();
    Ok(format!(
        "{instances} of 200 instances oscillate; min descent margin {dmin:.3} over {} checks, min ascent margin {amin:.3} over {} checks",
        d.len(),
        a.len()
    ))
}

fn comparison() -> Check {
    let rows =
        harness::comparison_harness(DEFAULT_SEED, 200, harness::COMPARISON_HORIZON, None).map_err(|e| e.to_string())?;
    ensure(rows.len() == 200, || format!("{} rows", rows.len()))?;
    let fwd = rows.iter().map(|r| r.forward_violation).fold(0.0, f64::max);
    let bwd = rows.iter().map(|r| r.backward_violation).fold(0.0, f64::max);
    ensure(fwd <= 1e-6 && bwd <= 1e-6, || format!("violations {fwd:e}, {bwd:e}"))?;
    Ok(format!("200 pairs, worst forward violation {fwd:.1e}, worst backward violation {bwd:.1e}"))
}

fn wronskian() -> Check {
    let rows = harness::wronskian_harness(DEFAULT_SEED, 100, 50.0, None).map_err(|e| e.to_string())?;
    ensure(rows.len() == 100, || format!("{} rows", rows.len()))?;
    for r in &rows {
        ensure(r.delay_scale <= 2.0 / E * (1.0 + 1e-12), || format!("instance {} violates the bound", r.instance))?;
        ensure(r.positive, || format!("instance {}: W changes sign", r.instance))?;
    }
    let on_bound = rows.iter().filter(|r| (r.delay_scale - 2.0 / E).abs() < 1e-12).count();
    let min_log = rows.iter().map(|r| r.min_log_w).fold(f64::INFINITY, f64::min);
    Ok(format!("W > 0 on [0, 50] for 100 instances ({on_bound} on the 2/e bound), min ln W = {min_log:.1}"))
}

fn sin_boundary() -> Check {
    let run = run_example(ExampleKind::SinPi, 0.0, 6)?;
    ensure(run.max_error < 1e-6, || format!("error {:e}", run.max_error))?;
    let c = classify(&run.problem, &run.traj).map_err(|e| e.to_string())?;
    ensure(c.verdict == Verdict::Inconclusive, || format!("verdict {:?}", c.verdict))?;
    ensure((run.problem.tau_m() - PI).abs() < 1e-15, || "delay".into())?;
    Ok(format!("max |x - sin| over 3 periods = {:.1e}; verdict {}", run.max_error, c.verdict.as_str()))
}

fn main() {
    let criteria: [Criterion; 12] = [
        ("theta special values", theta_special_values),
        ("Psi special values", psi_special_values),
        ("iteration vs shooting oracle", oracle_agreement),
        ("gamma fixed point", gamma_bracket),
        ("delay-4 spectrum table", spectrum_table),
        ("example2 reproduction", example2),
        ("example3 reproduction", example3),
        ("decay below the threshold", decay_property),
        ("descent/ascent margins", descent_ascent_margins),
        ("comparison harness", comparison),
        ("2/e Wronskian positivity", wronskian),
        ("sin boundary case", sin_boundary),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let t0 = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t0.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name}: {detail} ({secs:.2} s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why} ({secs:.2} s)", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
