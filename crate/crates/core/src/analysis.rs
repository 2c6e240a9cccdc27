//! Zeros, semicycles, descent/ascent margins, and classification of
//! oscillatory solutions.

use std::f64::consts::{PI, SQRT_2};
use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::integrator::{integrate, DelayProblem, Trajectory};
use crate::poly;
use crate::thresholds::{gamma_constant, psi, semicycle_threshold, theta};

/// Outcome of a check whose hypotheses may not hold for the data at hand.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", content = "detail", rename_all = "snake_case")]
pub enum Applicability<T> {
    Applies(T),
    NotApplicable(String),
}

impl<T> Applicability<T> {
    pub fn applies(&self) -> Option<&T> {
        match self {
            Self::Applies(v) => Some(v),
            Self::NotApplicable(_) => None,
        }
    }

    pub fn into_applies(self) -> Option<T> {
        match self {
            Self::Applies(v) => Some(v),
            Self::NotApplicable(_) => None,
        }
    }

    pub fn is_applicable(&self) -> bool {
        matches!(self, Self::Applies(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Zero {
    pub t: f64,
    /// `x` touches zero without changing sign.
    pub degenerate: bool,
}

/// All zeros of the dense output on `[start, end]`, merged within `tol`.
pub fn find_zeros(traj: &Trajectory, tol: f64) -> Result<Vec<Zero>> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let times = traj.times();
    let mut found: Vec<f64> = Vec::new();
    if traj.cubics().is_empty() && traj.values()[0] == 0.0 {
        found.push(times[0]);
    }
    for (i, c) in traj.cubics().iter().enumerate() {
        let h = times[i + 1] - times[i];
        for u in poly::roots_in(c, 0.0, h) {
            found.push(times[i] + u);
        }
    }
    found.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::new();
    for t in found {
        if merged.last().is_none_or(|&l| t - l > tol) {
            merged.push(t);
        }
    }
    let (start, end) = (traj.start(), traj.end());
    let probe = (10.0 * tol).max(1e-9);
    Ok(merged
        .into_iter()
        .map(|t| {
            let left = if t - probe >= start { traj.eval(t - probe).ok() } else { None };
            let right = if t + probe <= end { traj.eval(t + probe).ok() } else { None };
            let degenerate = match (left, right) {
                (Some(l), Some(r)) => l * r > 0.0,
                (None, Some(_)) | (Some(_), None) => traj.eval_derivative(t) == Ok(0.0),
                (None, None) => false,
            };
            Zero { t, degenerate }
        })
        .collect())
}

pub fn zero_times(zeros: &[Zero]) -> Vec<f64> {
    zeros.iter().map(|z| z.t).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Semicycle {
    pub a: f64,
    pub b: f64,
    /// First point where `|x|` reaches its maximum on `[a, b]`.
    pub w: f64,
    pub peak: f64,
    pub sign: i8,
}

impl Semicycle {
    pub fn length(&self) -> f64 {
        self.b - self.a
    }
}

/// Candidate extremum locations of `|x|` on `[a, b]`, in time order.
fn extremum_candidates(traj: &Trajectory, a: f64, b: f64) -> Vec<f64> {
    let times = traj.times();
    let cubics = traj.cubics();
    let mut out = vec![a];
    let first = times.partition_point(|&t| t <= a).saturating_sub(1);
    for i in first..cubics.len() {
        let t0 = times[i];
        if t0 >= b {
            break;
        }
        let lo = (a - t0).max(0.0);
        let hi = (b - t0).min(times[i + 1] - t0);
        if lo > hi {
            continue;
        }
        let mut local: Vec<f64> =
            poly::roots_in(&poly::derivative(&cubics[i]), lo, hi).into_iter().map(|u| t0 + u).collect();
        if times[i + 1] < b {
            local.push(times[i + 1]);
        }
        local.sort_by(f64::total_cmp);
        out.extend(local);
    }
    out.push(b);
    out
}

/// Semicycles between consecutive zeros.
pub fn semicycles(traj: &Trajectory, zeros: &[f64], tol: f64) -> Result<Vec<Semicycle>> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut out = Vec::with_capacity(zeros.len().saturating_sub(1));
    for pair in zeros.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        if b < a {
            return Err(Error::Domain(format!("zeros must be sorted ({a} then {b})")));
        }
        if b - a < 10.0 * tol {
            return Err(Error::Resolution { a, b, resolution: 10.0 * tol });
        }
        let cands = extremum_candidates(traj, a, b);
        let vals: Vec<f64> = cands.iter().map(|&t| traj.eval(t).map(f64::abs)).collect::<Result<_>>()?;
        let peak = vals.iter().copied().fold(0.0, f64::max);
        if !(peak > 0.0) {
            return Err(Error::Domain(format!("solution vanishes identically on [{a}, {b}]")));
        }
        let k = vals.iter().position(|&v| v >= peak * (1.0 - 1e-12)).unwrap();
        let w = cands[k];
        let sign = if traj.eval(w)? > 0.0 { 1 } else { -1 };
        out.push(Semicycle { a, b, w, peak, sign });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MarginCheck {
    pub satisfied: bool,
    pub margin: f64,
    /// The bound the measured time was compared against.
    pub bound: f64,
}

pub const MARGIN_SLACK: f64 = 1e-3;

/// Descent from the extremum to the right zero compared with
/// `theta(tau_m)`, for a normalized problem (`esssup |p| <= 1`).
///
/// Applies when the peak dominates `|x|` over `[w - tau_m - theta, w]`.
pub fn check_descent(traj: &Trajectory, sc: &Semicycle, tau_m: f64) -> Result<Applicability<MarginCheck>> {
    let th = theta(tau_m)?;
    let lo = (sc.w - tau_m - th).max(traj.start() - tau_m);
    let before = traj.max_abs_on(lo, sc.w)?;
    if before > sc.peak * (1.0 + 1e-9) {
        return Ok(Applicability::NotApplicable(format!(
            "peak {} at {} does not dominate the preceding window (max {before})",
            sc.peak, sc.w
        )));
    }
    let margin = (sc.b - sc.w) - th;
    Ok(Applicability::Applies(MarginCheck { satisfied: margin >= -MARGIN_SLACK, margin, bound: th }))
}

/// `max |x|` over `[a - delta - theta(delta), a]` relative to the peak.
pub fn ascent_rho_hat(traj: &Trajectory, sc: &Semicycle, delta: f64) -> Result<f64> {
    let th = theta(delta)?;
    Ok(traj.max_abs_on(sc.a - delta - th, sc.a)? / sc.peak)
}

/// Ascent from the left zero to the extremum compared with
/// `Psi(rho_hat, delta)`, for a normalized problem with `tau_m <= delta`.
///
/// Applies when the solution is defined on `[a - theta(delta), a]`, so that
/// the window feeding `rho_hat` is made of solution and initial data.
pub fn check_ascent(traj: &Trajectory, sc: &Semicycle, delta: f64, rho_hat: f64) -> Result<Applicability<MarginCheck>> {
    let th = theta(delta)?;
    if sc.a - th < traj.start() {
        return Ok(Applicability::NotApplicable(format!(
            "semicycle starts at {} with less than theta = {th} of solution before it",
            sc.a
        )));
    }
    if !(rho_hat > 0.0) {
        return Ok(Applicability::NotApplicable(format!("history ratio {rho_hat} is not positive")));
    }
    let bound = psi(rho_hat, delta)?;
    let margin = (sc.w - sc.a) - bound;
    Ok(Applicability::Applies(MarginCheck { satisfied: margin >= -MARGIN_SLACK, margin, bound }))
}

/// Fixed point `Psi(1, g) = g`, computed once per process.
pub fn gamma() -> f64 {
    static GAMMA: OnceLock<f64> = OnceLock::new();
    *GAMMA.get_or_init(|| gamma_constant(1e-10).expect("gamma bisection on a valid bracket"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    TendsToZeroCertified,
    BoundedCertified,
    UnboundedObserved,
    NonoscillatoryObserved,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::TendsToZeroCertified => "tends_to_zero_certified",
            Self::BoundedCertified => "bounded_certified",
            Self::UnboundedObserved => "unbounded_observed",
            Self::NonoscillatoryObserved => "nonoscillatory_observed",
            Self::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub criterion: String,
    pub value: f64,
    /// `None` for context-only records.
    pub threshold: Option<f64>,
}

fn evidence(criterion: &str, value: f64, threshold: f64) -> Evidence {
    Evidence { criterion: criterion.to_string(), value, threshold: Some(threshold) }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub evidence: Vec<Evidence>,
    /// Semicycles in the original time units.
    pub semicycles: Vec<Semicycle>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassifyOptions {
    /// Required gap below the threshold for the decay certificate.
    pub margin: f64,
    /// Minimal last-to-first peak ratio for `unbounded_observed`.
    pub growth_factor: f64,
    pub zero_tol: f64,
    /// Precomputed `semicycle_threshold` of the normalized delay, e.g. from a
    /// persisted table; computed on demand when `None`.
    pub threshold: Option<f64>,
}

impl Default for ClassifyOptions {
    fn default() -> Self {
        Self { margin: 1e-3, growth_factor: 1.5, zero_tol: 1e-10, threshold: None }
    }
}

/// Tolerance on semicycle lengths when comparing with the threshold itself.
const LENGTH_TOL: f64 = 1e-6;

pub fn classify(problem: &DelayProblem, traj: &Trajectory) -> Result<Classification> {
    classify_with(problem, traj, &ClassifyOptions::default())
}

/// Classifies the solution on its finite window.
///
/// Lengths are measured in normalized time (`esssup |p| = 1`), which is the
/// same as rescaling the problem first.
pub fn classify_with(problem: &DelayProblem, traj: &Trajectory, opts: &ClassifyOptions) -> Result<Classification> {
    let p_sup = problem.p_sup_abs();
    let unit = p_sup.sqrt();
    let tau_norm = problem.tau_m() * unit;
    let zeros = find_zeros(traj, opts.zero_tol)?;
    let times = zero_times(&zeros);
    let cycles = semicycles(traj, &times, opts.zero_tol)?;
    let mut notes = Vec::new();
    if zeros.iter().any(|z| z.degenerate) {
        notes.push("tangential zeros present; they split semicycles".to_string());
    }

    let mut ev = vec![Evidence { criterion: "normalized_tau_m".into(), value: tau_norm, threshold: None }];
    let theta_norm = match opts.threshold {
        _ if tau_norm == 0.0 => PI,
        Some(t) => t,
        None => semicycle_threshold(tau_norm)?,
    };
    let window = (traj.end() - traj.start()) * unit;

    // a long zero-free tail means the solution stopped oscillating
    let tail_from = times.last().copied().unwrap_or(traj.start());
    let tail = (traj.end() - tail_from) * unit;
    if tail >= 2.0 * theta_norm + tau_norm {
        ev.push(evidence("zero_free_tail", tail, 2.0 * theta_norm + tau_norm));
        let nonpositive = problem.p.range(problem.start, f64::INFINITY)?.1 <= 0.0;
        if nonpositive {
            let x = traj.eval(traj.end())?;
            let v = traj.eval_derivative(traj.end())?;
            let growing = x * v > 0.0;
            notes.push(if growing {
                "p <= 0: the tail moves away from zero together with its slope (Kamenskii: x, x' diverge)".to_string()
            } else {
                "p <= 0: the tail approaches zero monotonically (Kamenskii: x, x' tend to 0)".to_string()
            });
        } else {
            notes.push("coefficient changes sign; the Kamenskii dichotomy needs p <= 0".to_string());
        }
        return Ok(Classification {
            verdict: Verdict::NonoscillatoryObserved,
            evidence: ev,
            semicycles: cycles,
            notes,
        });
    }
    if cycles.len() < 3 {
        return Err(Error::InsufficientWindow(format!(
            "{} semicycles in a window of normalized length {window}; need at least 3",
            cycles.len()
        )));
    }

    let longest = cycles.iter().map(|c| c.length()).fold(0.0, f64::max) * unit;
    ev.push(evidence("max_semicycle_length", longest, theta_norm));

    if longest <= theta_norm - opts.margin {
        return Ok(Classification { verdict: Verdict::TendsToZeroCertified, evidence: ev, semicycles: cycles, notes });
    }

    let nonpositive = problem.p.range(problem.start, f64::INFINITY)?.1 <= 0.0;
    if nonpositive {
        let g = gamma();
        ev.push(evidence("negative_coefficient_delay_scale", tau_norm, g));
        if tau_norm < g * (1.0 - 1e-12) {
            return Ok(Classification {
                verdict: Verdict::TendsToZeroCertified,
                evidence: ev,
                semicycles: cycles,
                notes,
            });
        }
        if tau_norm <= g * (1.0 + 1e-12) {
            return Ok(Classification { verdict: Verdict::BoundedCertified, evidence: ev, semicycles: cycles, notes });
        }
    }

    if tau_norm > 0.0 && longest <= theta_norm + LENGTH_TOL {
        return Ok(Classification { verdict: Verdict::BoundedCertified, evidence: ev, semicycles: cycles, notes });
    }
    if tau_norm == 0.0 && longest < theta_norm - LENGTH_TOL {
        return Ok(Classification { verdict: Verdict::BoundedCertified, evidence: ev, semicycles: cycles, notes });
    }
    if tau_norm == 0.0 && (longest - theta_norm).abs() <= LENGTH_TOL {
        notes.push("longest semicycle equals pi with no delay: boundary case without a verdict".to_string());
    }

    let peaks: Vec<f64> = cycles.iter().map(|c| c.peak).collect();
    let monotone = peaks.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-9));
    let ratio = peaks.last().unwrap() / peaks[0];
    ev.push(evidence("peak_growth", ratio, opts.growth_factor));
    if monotone && ratio >= opts.growth_factor {
        return Ok(Classification { verdict: Verdict::UnboundedObserved, evidence: ev, semicycles: cycles, notes });
    }
    Ok(Classification { verdict: Verdict::Inconclusive, evidence: ev, semicycles: cycles, notes })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MyshkisCheck {
    pub holds: bool,
    pub strict: bool,
    pub value: f64,
}

/// `tau_m sqrt(sup p) <= 2 sqrt 2` for nonnegative `p`: rapidly oscillating
/// solutions stay bounded.
pub fn criterion_myshkis(problem: &DelayProblem) -> Result<Applicability<MyshkisCheck>> {
    let (lo, hi) = problem.p.range(problem.start, f64::INFINITY)?;
    if lo < 0.0 {
        return Ok(Applicability::NotApplicable(format!("coefficient takes the negative value {lo}")));
    }
    let value = problem.tau_m() * hi.sqrt();
    let bound = 2.0 * SQRT_2;
    let equal = (value - bound).abs() <= 1e-12 * bound;
    Ok(Applicability::Applies(MyshkisCheck { holds: value <= bound || equal, strict: value < bound && !equal, value }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GustafsonCheck {
    pub holds: bool,
    pub sup_value: f64,
}

/// Finite-horizon surrogate for `limsup I(t) > 1` with
/// `I(t) = int_{t - tau(t)}^t (s - t + tau(t)) |p(s)| ds`, for `p <= 0`.
pub fn criterion_gustafson(problem: &DelayProblem, horizon: f64) -> Result<Applicability<GustafsonCheck>> {
    let s = problem.start;
    if !(horizon > s) {
        return Err(Error::Domain(format!("horizon {horizon} must exceed the start time {s}")));
    }
    let (_, hi) = problem.p.range(s - problem.tau_m(), horizon)?;
    if hi > 0.0 {
        return Ok(Applicability::NotApplicable(format!("coefficient takes the positive value {hi}")));
    }
    const GRID: usize = 4000;
    let mut sup: f64 = f64::NEG_INFINITY;
    let mut prev_d = f64::NEG_INFINITY;
    for i in 0..=GRID {
        let t = s + (horizon - s) * i as f64 / GRID as f64;
        let d = t - problem.tau.eval(t);
        if d < prev_d - 1e-12 {
            return Ok(Applicability::NotApplicable(format!("t - tau(t) decreases near t = {t}")));
        }
        prev_d = d;
        // weight s - d about origin d; p <= 0 so |p| = -p
        let integral = -problem.p.integrate_weighted(&[0.0, 1.0], d, d, t);
        sup = sup.max(integral);
    }
    Ok(Applicability::Applies(GustafsonCheck { holds: sup > 1.0, sup_value: sup }))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WronskianCheck {
    pub holds: bool,
    pub value: f64,
}

/// `tau_m sqrt(esssup |p|) <= 2 / e`.
pub fn criterion_wronskian_2e(problem: &DelayProblem) -> WronskianCheck {
    let value = problem.tau_m() * problem.p_sup_abs().sqrt();
    WronskianCheck { holds: value <= 2.0 / std::f64::consts::E, value }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ComparisonCheck {
    pub ok: bool,
    pub worst_violation: f64,
    /// End of the compared interval: the majorant's first zero or the horizon.
    pub until: f64,
}

const HYPOTHESIS_SAMPLES: usize = 2000;
const HYPOTHESIS_TOL: f64 = 1e-12;
pub const COMPARISON_STEP: f64 = 1e-3;

fn sample_times(lo: f64, hi: f64, extra: &[f64]) -> Vec<f64> {
    let mut ts: Vec<f64> =
        (0..=HYPOTHESIS_SAMPLES).map(|i| lo + (hi - lo) * i as f64 / HYPOTHESIS_SAMPLES as f64).collect();
    ts.extend(extra.iter().copied().filter(|&b| b >= lo && b <= hi));
    ts
}

/// Checks that the majorant dominates coefficient and delay and that its
/// initial data are positive and nonincreasing.
fn majorant_hypotheses(minorant: &DelayProblem, majorant: &DelayProblem, horizon: f64) -> Option<String> {
    if minorant.start != majorant.start {
        return Some("problems must share the start time".into());
    }
    let s = majorant.start;
    let mut marks: Vec<f64> = minorant.p.breakpoints.clone();
    marks.extend(&majorant.p.breakpoints);
    marks.extend(&minorant.tau.breakpoints);
    marks.extend(&majorant.tau.breakpoints);
    for t in sample_times(s, horizon, &marks) {
        if majorant.p.eval(t) < minorant.p.eval(t).abs() - HYPOTHESIS_TOL {
            return Some(format!("majorant coefficient below |p| at t = {t}"));
        }
        if majorant.tau.eval(t) < minorant.tau.eval(t) - HYPOTHESIS_TOL {
            return Some(format!("majorant delay below tau at t = {t}"));
        }
    }
    let tm = majorant.tau_m();
    for t in sample_times(s - tm, s, &majorant.history.breakpoints) {
        let (y, dy) = if t < s {
            (majorant.history.eval(t), majorant.history.eval_derivative(t))
        } else {
            (majorant.initial_value, majorant.initial_slope)
        };
        if !(y > 0.0) {
            return Some(format!("majorant initial data not positive at t = {t}"));
        }
        if dy > HYPOTHESIS_TOL {
            return Some(format!("majorant initial data increasing at t = {t}"));
        }
    }
    None
}

fn left_value(problem: &DelayProblem, t: f64) -> f64 {
    if t < problem.start {
        problem.history.eval(t)
    } else {
        problem.initial_value
    }
}

/// Forward comparison: with `P >= |p|`, `T >= tau`, a positive nonincreasing
/// majorant start and `|z/z(s)| <= y/y(s)` on the minorant's delay window,
/// `z/z(s) >= y/y(s)` holds up to the first zero of `y`. Returns the largest
/// amount by which this fails on the computed solutions.
pub fn verify_comparison(
    minorant: &DelayProblem,
    majorant: &DelayProblem,
    horizon: f64,
) -> Result<Applicability<ComparisonCheck>> {
    verify_comparison_with_step(minorant, majorant, horizon, COMPARISON_STEP)
}

pub fn verify_comparison_with_step(
    minorant: &DelayProblem,
    majorant: &DelayProblem,
    horizon: f64,
    step: f64,
) -> Result<Applicability<ComparisonCheck>> {
    minorant.validate()?;
    majorant.validate()?;
    if let Some(why) = majorant_hypotheses(minorant, majorant, horizon) {
        return Ok(Applicability::NotApplicable(why));
    }
    let s = minorant.start;
    let (z0, y0) = (minorant.initial_value, majorant.initial_value);
    if z0 == 0.0 {
        return Ok(Applicability::NotApplicable("minorant starts at zero".into()));
    }
    let tau_m = minorant.tau_m();
    if tau_m > 0.0 {
        for t in sample_times(s - tau_m, s, &minorant.history.breakpoints) {
            if (left_value(minorant, t) / z0).abs() > left_value(majorant, t) / y0 + HYPOTHESIS_TOL {
                return Ok(Applicability::NotApplicable(format!("initial ratio bound fails at t = {t}")));
            }
        }
        // a C^1 start is needed for the ratio bound to reach past s
        let piece = minorant.history.piece_at(s - 1e-12);
        let left_slope = poly::eval(&poly::derivative(&minorant.history.piece_poly_about(piece, s)), 0.0);
        let left_val = minorant.history.eval_piece(piece, s);
        if (left_val - z0).abs() > 1e-9 || (left_slope - minorant.initial_slope).abs() > 1e-9 {
            return Ok(Applicability::NotApplicable("minorant initial data are not C^1 at the start".into()));
        }
    } else if minorant.initial_slope / z0 < majorant.initial_slope / y0 - HYPOTHESIS_TOL {
        return Ok(Applicability::NotApplicable("initial log-derivative bound fails".into()));
    }
    let z = integrate(minorant, horizon, step)?;
    let y = integrate(majorant, horizon, step)?;
    let until = find_zeros(&y, 1e-12)?.into_iter().map(|z| z.t).find(|&t| t > s).unwrap_or(horizon);
    let mut worst: f64 = 0.0;
    for t in sample_times(s, until, &[]) {
        let gap = y.eval(t)? / y0 - z.eval(t)? / z0;
        worst = worst.max(gap);
    }
    Ok(Applicability::Applies(ComparisonCheck { ok: worst <= 1e-6, worst_violation: worst, until }))
}

/// Backward comparison: rescale the minorant so that `|z(b)| = y(b)`; if then
/// `|z| <= y` on the minorant's delay window, `|z| <= y` holds on `[s, b]`.
/// `b` must precede the first zero of `y`.
pub fn verify_backward_comparison(
    minorant: &DelayProblem,
    majorant: &DelayProblem,
    b: f64,
    step: f64,
) -> Result<Applicability<ComparisonCheck>> {
    minorant.validate()?;
    majorant.validate()?;
    if let Some(why) = majorant_hypotheses(minorant, majorant, b) {
        return Ok(Applicability::NotApplicable(why));
    }
    let s = minorant.start;
    let z = integrate(minorant, b, step)?;
    let y = integrate(majorant, b, step)?;
    if find_zeros(&y, 1e-12)?.iter().any(|zz| zz.t > s && zz.t < b) {
        return Ok(Applicability::NotApplicable("majorant vanishes before b".into()));
    }
    let (zb, yb) = (z.eval(b)?, y.eval(b)?);
    if zb == 0.0 || !(yb > 0.0) {
        return Ok(Applicability::NotApplicable("no boundary scaling at b".into()));
    }
    let kappa = yb / zb.abs();
    let tau_m = minorant.tau_m();
    for t in sample_times(s - tau_m, s, &minorant.history.breakpoints) {
        if kappa * left_value(minorant, t).abs() > left_value(majorant, t) + HYPOTHESIS_TOL {
            return Ok(Applicability::NotApplicable(format!("scaled initial bound fails at t = {t}")));
        }
    }
    let mut worst: f64 = 0.0;
    for t in sample_times(s, b, &[]) {
        worst = worst.max(kappa * z.eval(t)?.abs() - y.eval(t)?);
    }
    Ok(Applicability::Applies(ComparisonCheck { ok: worst <= 1e-6, worst_violation: worst, until: b }))
}

/// Largest gap `|x(t)| - M r_Delta(t - t0)` over `[t0, zero]`, where the
/// stretch ends at a zero of `x` after `theta(Delta)` and `M` is the maximum of
/// `|x|` over `[t0 - tau_m, t0]`. Nonpositive when the descent profile
/// dominates.
pub fn descent_profile_gap(traj: &Trajectory, t0: f64, delta: f64, tau_m: f64) -> Result<f64> {
    let th = theta(delta)?;
    let m = traj.max_abs_on(t0 - tau_m, t0)?;
    let mut worst = f64::NEG_INFINITY;
    for i in 0..=400 {
        let t = t0 + th * i as f64 / 400.0;
        let r = crate::thresholds::eval_r(delta, t - t0)?;
        worst = worst.max(traj.eval(t)?.abs() - m * r);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::rescale;
    use crate::repro::{build_example_problem, ExampleKind, ExampleSpec};
    use crate::signals::PiecewiseSignal;
    use std::f64::consts::FRAC_PI_2;

    fn sine_problem() -> DelayProblem {
        DelayProblem {
            p: PiecewiseSignal::constant(1.0),
            tau: PiecewiseSignal::constant(0.0),
            start: 0.0,
            history: PiecewiseSignal::constant(0.0),
            initial_value: 0.0,
            initial_slope: 1.0,
        }
    }

    fn constant(p: f64, tau: f64) -> DelayProblem {
        DelayProblem {
            p: PiecewiseSignal::constant(p),
            tau: PiecewiseSignal::constant(tau),
            start: 0.0,
            history: PiecewiseSignal::constant(1.0),
            initial_value: 1.0,
            initial_slope: 0.0,
        }
    }

    #[test]
    fn zeros_of_sine() {
        let traj = integrate(&sine_problem(), 10.0, 1e-3).unwrap();
        let zeros = find_zeros(&traj, 1e-12).unwrap();
        let want = [0.0, PI, 2.0 * PI, 3.0 * PI];
        assert_eq!(zeros.len(), 4);
        for (z, w) in zeros.iter().zip(want) {
            assert!((z.t - w).abs() < 1e-9);
            assert!(!z.degenerate);
        }
    }

    #[test]
    fn zeros_of_comparison_solution_and_constant() {
        let traj = integrate(&constant(1.0, 2.0), 2.0, 1e-3).unwrap();
        let zeros = find_zeros(&traj, 1e-12).unwrap();
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0].t - SQRT_2).abs() < 1e-9);
        let flat = integrate(&constant(0.0, 1.0), 5.0, 1e-2).unwrap();
        assert!(find_zeros(&flat, 1e-12).unwrap().is_empty());
    }

    #[test]
    fn tangential_zero_is_flagged() {
        // x = 1 - cos t touches 0 at t = 2 pi: x'' = cos t = -(x - 1)... use p = 1 with
        // a shifted sine instead: x(t) = (t - 1)^2 on a zero-coefficient problem
        let prob = DelayProblem {
            p: PiecewiseSignal::constant(0.0),
            tau: PiecewiseSignal::constant(0.0),
            start: 0.0,
            history: PiecewiseSignal::constant(0.0),
            initial_value: 1.0,
            initial_slope: -1.0,
        };
        // x = 1 - t: plain crossing
        let traj = integrate(&prob, 2.0, 1e-2).unwrap();
        let zeros = find_zeros(&traj, 1e-12).unwrap();
        assert_eq!(zeros.len(), 1);
        assert!(!zeros[0].degenerate);
        // x = 1 - cos(t) via x'' + x = 1 is not of our form; check the flag on a
        // hand-made trajectory instead: integrate x'' = -x(t-0) from x = 0, x' = 0 is zero
        let sq = DelayProblem {
            p: PiecewiseSignal::constant(-2.0),
            tau: PiecewiseSignal::constant(10.0),
            start: 0.0,
            history: PiecewiseSignal::constant(1.0),
            initial_value: 1.0,
            initial_slope: -2.0,
        };
        // x'' = 2 on [0, 10]: x = 1 - 2t + t^2 = (t - 1)^2
        let traj = integrate(&sq, 2.0, 1e-2).unwrap();
        let zeros = find_zeros(&traj, 1e-12).unwrap();
        assert_eq!(zeros.len(), 1);
        assert!((zeros[0].t - 1.0).abs() < 1e-6);
        assert!(zeros[0].degenerate);
    }

    #[test]
    fn semicycles_of_sine() {
        let traj = integrate(&sine_problem(), 2.0 * PI + 0.1, 1e-3).unwrap();
        let zeros = zero_times(&find_zeros(&traj, 1e-12).unwrap());
        let sc = semicycles(&traj, &zeros, 1e-12).unwrap();
        assert_eq!(sc.len(), 2);
        assert!((sc[0].w - FRAC_PI_2).abs() < 1e-8 && (sc[0].peak - 1.0).abs() < 1e-9 && sc[0].sign == 1);
        assert!((sc[1].w - 1.5 * PI).abs() < 1e-8 && sc[1].sign == -1);
        assert!(matches!(semicycles(&traj, &[1.0, 1.0 + 1e-13], 1e-12), Err(Error::Resolution { .. })));
    }

    #[test]
    fn descent_and_ascent_on_cosine() {
        let traj = integrate(&sine_problem(), 3.0 * PI, 1e-3).unwrap();
        let zeros = zero_times(&find_zeros(&traj, 1e-12).unwrap());
        let sc = semicycles(&traj, &zeros, 1e-12).unwrap();
        let d = check_descent(&traj, &sc[1], 0.0).unwrap().into_applies().unwrap();
        assert!(d.margin.abs() < 1e-8 && d.satisfied);
        let rho = ascent_rho_hat(&traj, &sc[1], 0.0).unwrap();
        let a = check_ascent(&traj, &sc[1], 0.0, rho).unwrap().into_applies().unwrap();
        assert!(a.margin.abs() < 1e-6 && a.satisfied);
    }

    #[test]
    fn descent_of_comparison_solution_is_extremal() {
        let traj = integrate(&constant(1.0, 2.0), 2.0, 1e-3).unwrap();
        let sc = Semicycle { a: -1.0, b: SQRT_2, w: 0.0, peak: 1.0, sign: 1 };
        let d = check_descent(&traj, &sc, 2.0).unwrap().into_applies().unwrap();
        assert!(d.margin.abs() < 1e-8);
    }

    #[test]
    fn ascent_on_example3_is_tight() {
        let spec = ExampleSpec::new(ExampleKind::Example3, 0.0, 4).unwrap();
        let prob = build_example_problem(&spec).unwrap();
        let traj = integrate(&prob, spec.horizon(), 1e-3).unwrap();
        let zeros = zero_times(&find_zeros(&traj, 1e-10).unwrap());
        let sc = semicycles(&traj, &zeros, 1e-10).unwrap();
        let delta = prob.tau_m();
        let last = sc.last().unwrap();
        let rho = ascent_rho_hat(&traj, last, delta).unwrap();
        let a = check_ascent(&traj, last, delta, rho).unwrap().into_applies().unwrap();
        assert!(a.margin.abs() < 1e-6, "margin {}", a.margin);
        assert!((last.w - last.a - SQRT_2).abs() < 1e-8);
    }

    #[test]
    fn myshkis_examples() {
        let m = criterion_myshkis(&constant(1.0, 2.0)).unwrap().into_applies().unwrap();
        assert!(m.holds && m.strict && m.value == 2.0);
        let m = criterion_myshkis(&constant(1.0, 2.0 * SQRT_2)).unwrap().into_applies().unwrap();
        assert!(m.holds && !m.strict);
        let m = criterion_myshkis(&constant(1.0, 3.0)).unwrap().into_applies().unwrap();
        assert!(!m.holds);
        assert!(!criterion_myshkis(&constant(-1.0, 1.0)).unwrap().is_applicable());
    }

    #[test]
    fn gustafson_examples() {
        let g = criterion_gustafson(&constant(-1.0, 2.0), 10.0).unwrap().into_applies().unwrap();
        assert!(g.holds && (g.sup_value - 2.0).abs() < 1e-12);
        let g = criterion_gustafson(&constant(-1.0, 1.0), 10.0).unwrap().into_applies().unwrap();
        assert!(!g.holds && (g.sup_value - 0.5).abs() < 1e-12);
        let g = criterion_gustafson(&constant(-2.0, 1.0), 10.0).unwrap().into_applies().unwrap();
        assert!(!g.holds && (g.sup_value - 1.0).abs() < 1e-12);
        assert!(!criterion_gustafson(&constant(1.0, 1.0), 10.0).unwrap().is_applicable());
    }

    #[test]
    fn two_over_e_examples() {
        assert!(criterion_wronskian_2e(&constant(-1.0, 0.7)).holds);
        assert!(!criterion_wronskian_2e(&constant(-1.0, 0.8)).holds);
    }

    #[test]
    fn comparison_identical_and_ordered_delays() {
        let y = constant(1.0, 1.0);
        let c = verify_comparison(&y, &y, 3.0).unwrap().into_applies().unwrap();
        assert_eq!(c.worst_violation, 0.0);
        let z = constant(1.0, 0.5);
        let c = verify_comparison(&z, &y, 3.0).unwrap().into_applies().unwrap();
        assert!(c.ok, "{c:?}");
        assert!((c.until - theta(1.0).unwrap()).abs() < 1e-8);
        // swapped roles break the majorant hypothesis
        assert!(!verify_comparison(&y, &z, 3.0).unwrap().is_applicable());
    }

    #[test]
    fn classify_sine_boundary_and_decay() {
        let traj = integrate(&sine_problem(), 20.0, 1e-3).unwrap();
        let c = classify(&sine_problem(), &traj).unwrap();
        assert_eq!(c.verdict, Verdict::Inconclusive);
        let short = integrate(&sine_problem(), 4.0, 1e-3).unwrap();
        assert!(matches!(classify(&sine_problem(), &short), Err(Error::InsufficientWindow(_))));
    }

    #[test]
    fn classify_is_scale_invariant() {
        let spec = ExampleSpec::new(ExampleKind::Example3, 0.2, 16).unwrap();
        let prob = build_example_problem(&spec).unwrap();
        let traj = integrate(&prob, spec.horizon(), 1e-3).unwrap();
        let base = classify(&prob, &traj).unwrap();
        assert_eq!(
            base.verdict,
            Verdict::UnboundedObserved,
            "{:?} {:?}",
            base.evidence,
            base.semicycles.iter().map(|c| c.peak).collect::<Vec<_>>()
        );
        for k in [0.5, 2.0] {
            let scaled = rescale(&prob, k).unwrap();
            let t = integrate(&scaled, spec.horizon() / k, 1e-3).unwrap();
            assert_eq!(classify(&scaled, &t).unwrap().verdict, base.verdict);
        }
    }

    #[test]
    fn nonoscillatory_negative_coefficient() {
        let prob = constant(-1.0, 0.5);
        let traj = integrate(&prob, 20.0, 1e-3).unwrap();
        let c = classify(&prob, &traj).unwrap();
        assert_eq!(c.verdict, Verdict::NonoscillatoryObserved);
        assert!(c.notes.iter().any(|n| n.contains("diverge")));
    }
}
