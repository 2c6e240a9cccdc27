//! Seeded randomized instances that exercise the analysis inequalities.
//!
//! Every instance draws from its own ChaCha stream (`seed`, stream = instance
//! index), so results do not depend on the number of worker threads.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    ascent_rho_hat, check_ascent, check_descent, classify, find_zeros, semicycles, verify_backward_comparison,
    verify_comparison_with_step, zero_times, Verdict,
};
use crate::error::{Error, Result};
use crate::integrator::{fundamental_system, integrate, DelayProblem};
use crate::signals::PiecewiseSignal;
use crate::thresholds::{semicycle_threshold, theta};

pub const DEFAULT_SEED: u64 = 0x5e41_c7c1_e000_0001;

/// Independent stream for instance `index` under `seed`.
pub fn instance_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Maps `f` over `0..n` on a pool of `jobs` threads (all cores when `None`),
/// keeping input order.
pub fn run_parallel<T, F>(jobs: Option<usize>, n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let work = || (0..n).into_par_iter().map(&f).collect::<Result<Vec<T>>>();
    match jobs {
        None => work(),
        Some(0) => Err(Error::Domain("--jobs must be at least 1".into())),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(work),
    }
}

/// Breakpoints `0 = t_0 < t_1 < ... >= horizon` with gaps in `[min_gap, max_gap]`.
fn random_breakpoints(rng: &mut ChaCha8Rng, horizon: f64, min_gap: f64, max_gap: f64) -> Vec<f64> {
    let mut bps = vec![0.0];
    while *bps.last().unwrap() < horizon {
        let next = bps.last().unwrap() + rng.gen_range(min_gap..max_gap);
        bps.push(next);
    }
    bps
}

fn piecewise(bps: Vec<f64>, values: &[f64]) -> Result<PiecewiseSignal> {
    let (first, last) = (values[0], *values.last().unwrap());
    PiecewiseSignal::piecewise_constant(bps, values, first, last)
}

fn cubic_history(len: f64, coeffs: [f64; 4]) -> Result<PiecewiseSignal> {
    PiecewiseSignal::from_global(vec![-len, 0.0], &[coeffs.to_vec()], 0.0, coeffs[0])
}

// ---------------------------------------------------------------- margins

/// Random problem with `esssup |p| = 1`: piecewise-constant coefficient of
/// either sign (mostly positive), piecewise-constant delay up to 3.5 and a
/// C^1 cubic initial function.
pub fn random_normalized_problem(rng: &mut ChaCha8Rng, horizon: f64) -> Result<DelayProblem> {
    let p_bps = random_breakpoints(rng, horizon, 0.5, 3.0);
    let mut p: Vec<f64> = (1..p_bps.len())
        .map(|_| if rng.gen_bool(0.8) { rng.gen_range(0.2..1.0) } else { rng.gen_range(-1.0..0.2) })
        .collect();
    let scale = p.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    p.iter_mut().for_each(|v| *v /= scale);
    let tau_bps = random_breakpoints(rng, horizon, 0.5, 4.0);
    let tau: Vec<f64> = (1..tau_bps.len()).map(|_| rng.gen_range(0.0..3.5)).collect();
    let tau_m = tau.iter().copied().fold(0.0, f64::max);
    let c = [
        rng.gen_range(0.2..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 },
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-0.5..0.5),
        rng.gen_range(-0.2..0.2),
    ];
    Ok(DelayProblem {
        p: piecewise(p_bps, &p)?,
        tau: piecewise(tau_bps, &tau)?,
        start: 0.0,
        history: cubic_history(tau_m.max(0.05), c)?,
        initial_value: c[0],
        initial_slope: c[1],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MarginRow {
    pub instance: usize,
    pub semicycle: usize,
    pub a: f64,
    pub b: f64,
    pub w: f64,
    pub peak: f64,
    pub tau_m: f64,
    /// `None` when the check does not apply to this semicycle.
    pub descent_margin: Option<f64>,
    pub ascent_margin: Option<f64>,
}

impl MarginRow {
    pub const CSV_HEADER: &'static str = "instance,semicycle,a,b,w,peak,tau_m,descent_margin,ascent_margin";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.semicycle,
            self.a,
            self.b,
            self.w,
            self.peak,
            self.tau_m,
            opt(self.descent_margin),
            opt(self.ascent_margin)
        )
    }
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

pub const MARGIN_STEP: f64 = 2e-3;

/// Descent and ascent margins on every semicycle of one random instance.
pub fn margin_instance(seed: u64, instance: usize, horizon: f64) -> Result<Vec<MarginRow>> {
    let mut rng = instance_rng(seed, instance as u64);
    let problem = random_normalized_problem(&mut rng, horizon)?;
    let tau_m = problem.tau_m();
    let traj = integrate(&problem, horizon, MARGIN_STEP)?;
    let zeros = zero_times(&find_zeros(&traj, 1e-10)?);
    let mut rows = Vec::new();
    for (k, sc) in semicycles(&traj, &zeros, 1e-10)?.iter().enumerate() {
        let descent = check_descent(&traj, sc, tau_m)?.into_applies().map(|m| m.margin);
        let ascent = if sc.a - theta(tau_m)? >= problem.start {
            let rho = ascent_rho_hat(&traj, sc, tau_m)?;
            check_ascent(&traj, sc, tau_m, rho)?.into_applies().map(|m| m.margin)
        } else {
            None
        };
        rows.push(MarginRow {
            instance,
            semicycle: k,
            a: sc.a,
            b: sc.b,
            w: sc.w,
            peak: sc.peak,
            tau_m,
            descent_margin: descent,
            ascent_margin: ascent,
        });
    }
    Ok(rows)
}

pub fn margin_harness(seed: u64, instances: usize, horizon: f64, jobs: Option<usize>) -> Result<Vec<MarginRow>> {
    Ok(run_parallel(jobs, instances, |i| margin_instance(seed, i, horizon))?.into_iter().flatten().collect())
}

// ------------------------------------------------------------- comparison

/// Minorant/majorant pair satisfying the forward comparison hypotheses:
/// `P = |p| + noise`, `T = tau + noise`, majorant start `1 - sigma t`,
/// minorant start `(1 - sigma t)(1 + b t - c t^2)` with `b tau_m + c tau_m^2 <= 2`.
pub fn random_comparison_pair(rng: &mut ChaCha8Rng, horizon: f64) -> Result<(DelayProblem, DelayProblem)> {
    let p_bps = random_breakpoints(rng, horizon, 0.3, 2.0);
    let n_p = p_bps.len() - 1;
    let p: Vec<f64> = (0..n_p).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let big_p: Vec<f64> =
        p.iter().map(|v| v.abs() + if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..0.3) }).collect();
    let tau_bps = random_breakpoints(rng, horizon, 0.3, 3.0);
    let n_t = tau_bps.len() - 1;
    let tau: Vec<f64> = (0..n_t).map(|_| if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..2.5) }).collect();
    let big_t: Vec<f64> =
        tau.iter().map(|v| v + if rng.gen_bool(0.3) { 0.0 } else { rng.gen_range(0.0..0.5) }).collect();
    let tau_m = tau.iter().copied().fold(0.0, f64::max);
    let big_tm = big_t.iter().copied().fold(0.0, f64::max);
    let sigma = rng.gen_range(0.0..1.0);
    let (b, c) = if tau_m > 0.0 {
        let b = rng.gen_range(0.0..1.0) * 2.0 / tau_m;
        let c = rng.gen_range(0.0..1.0) * (2.0 - b * tau_m) / (tau_m * tau_m);
        (b, c)
    } else {
        (rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0))
    };
    let z_hist = [1.0, b - sigma, -c - sigma * b, sigma * c];
    let y_hist = [1.0, -sigma, 0.0, 0.0];
    let minorant = DelayProblem {
        p: piecewise(p_bps.clone(), &p)?,
        tau: piecewise(tau_bps.clone(), &tau)?,
        start: 0.0,
        history: cubic_history(tau_m.max(0.05), z_hist)?,
        initial_value: 1.0,
        initial_slope: b - sigma,
    };
    let majorant = DelayProblem {
        p: piecewise(p_bps, &big_p)?,
        tau: piecewise(tau_bps, &big_t)?,
        start: 0.0,
        history: cubic_history(big_tm.max(0.05), y_hist)?,
        initial_value: 1.0,
        initial_slope: -sigma,
    };
    Ok((minorant, majorant))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub instance: usize,
    /// End of the forward comparison: the majorant's first zero or the horizon.
    pub until: f64,
    pub forward_violation: f64,
    /// Point where the backward comparison matches `|z|` to `y`.
    pub backward_end: f64,
    pub backward_violation: f64,
}

impl ComparisonRow {
    pub const CSV_HEADER: &'static str = "instance,until,forward_violation,backward_end,backward_violation";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.instance, self.until, self.forward_violation, self.backward_end, self.backward_violation
        )
    }
}

pub const COMPARISON_HORIZON: f64 = 10.0;

pub fn comparison_instance(seed: u64, instance: usize, horizon: f64) -> Result<ComparisonRow> {
    let mut rng = instance_rng(seed, instance as u64);
    let (z, y) = random_comparison_pair(&mut rng, horizon)?;
    let step = 1e-3;
    let fwd = verify_comparison_with_step(&z, &y, horizon, step)?
        .into_applies()
        .ok_or_else(|| Error::Oracle(format!("comparison instance {instance} violates its own hypotheses")))?;
    // stop short of the majorant's zero where y / |z| degenerates
    let end = if fwd.until < horizon { 0.9 * fwd.until } else { horizon };
    let bwd = verify_backward_comparison(&z, &y, end, step)?
        .into_applies()
        .ok_or_else(|| Error::Oracle(format!("backward comparison not applicable on instance {instance}")))?;
    Ok(ComparisonRow {
        instance,
        until: fwd.until,
        forward_violation: fwd.worst_violation,
        backward_end: end,
        backward_violation: bwd.worst_violation,
    })
}

pub fn comparison_harness(
    seed: u64,
    instances: usize,
    horizon: f64,
    jobs: Option<usize>,
) -> Result<Vec<ComparisonRow>> {
    run_parallel(jobs, instances, |i| comparison_instance(seed, i, horizon))
}

// -------------------------------------------------------------- wronskian

/// Nonpositive piecewise-constant coefficient and a delay with
/// `tau_m sqrt(esssup |p|) <= 2 / e`; about one instance in five sits on the bound.
pub fn random_two_over_e_instance(rng: &mut ChaCha8Rng, horizon: f64) -> Result<(PiecewiseSignal, PiecewiseSignal)> {
    let m: f64 = rng.gen_range(0.3..1.0);
    let p_bps = random_breakpoints(rng, horizon, 0.5, 4.0);
    let mut p: Vec<f64> = (1..p_bps.len()).map(|_| -rng.gen_range(0.0..m)).collect();
    let k = rng.gen_range(0..p.len());
    p[k] = -m;
    let cap = 2.0 / std::f64::consts::E / m.sqrt();
    let top = if rng.gen_bool(0.2) { cap } else { cap * rng.gen_range(0.5..1.0) };
    let tau_bps = random_breakpoints(rng, horizon, 0.5, 4.0);
    let mut tau: Vec<f64> = (1..tau_bps.len()).map(|_| rng.gen_range(0.0..top)).collect();
    let k = rng.gen_range(0..tau.len());
    tau[k] = top;
    Ok((piecewise(p_bps, &p)?, piecewise(tau_bps, &tau)?))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WronskianRow {
    pub instance: usize,
    pub delay_scale: f64,
    /// Smallest `ln W` over the sample grid (`W` is positive at every sample
    /// iff `positive` holds).
    pub min_log_w: f64,
    pub positive: bool,
}

impl WronskianRow {
    pub const CSV_HEADER: &'static str = "instance,delay_scale,min_log_w,positive";

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{}", self.instance, self.delay_scale, self.min_log_w, self.positive)
    }
}

pub fn wronskian_instance(seed: u64, instance: usize, horizon: f64) -> Result<WronskianRow> {
    let mut rng = instance_rng(seed, instance as u64);
    let (p, tau) = random_two_over_e_instance(&mut rng, horizon)?;
    let esssup = p.esssup_abs(0.0, f64::INFINITY)?;
    let tau_m = tau.range(0.0, f64::INFINITY)?.1;
    let fs = fundamental_system(&p, &tau, 0.0, horizon)?;
    let samples = (horizon * 100.0).ceil() as usize;
    let mut min_log: f64 = f64::INFINITY;
    let mut positive = true;
    for i in 0..=samples {
        let t = horizon * i as f64 / samples as f64;
        let (sign, log) = fs.wronskian_log(t)?;
        positive &= sign > 0.0;
        min_log = min_log.min(log);
    }
    Ok(WronskianRow { instance, delay_scale: tau_m * esssup.sqrt(), min_log_w: min_log, positive })
}

pub fn wronskian_harness(seed: u64, instances: usize, horizon: f64, jobs: Option<usize>) -> Result<Vec<WronskianRow>> {
    run_parallel(jobs, instances, |i| wronskian_instance(seed, i, horizon))
}

// ------------------------------------------------------------------ decay

/// Self-similar oscillation whose amplitude shrinks by `rho` per semicycle.
///
/// Semicycle `n` occupies `[nL, (n+1)L]` with sign `(-1)^n` and peak `rho^n`;
/// it rises along a parabola for `alpha` and falls along another for
/// `alpha / rho`, which keeps `x` C^1 at the zeros. On the rise the delay
/// points at the extremum `k1` semicycles back, on the fall `k2` back
/// (`k1`, `k2` even, so the delayed value has the current sign). This makes
/// `x''` constant on each piece; with `alpha = sqrt(2 rho^k1 / q1)` the
/// coefficient is `q1` on rises and `q1 rho^(k2 + 2 - k1) <= q1` on falls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayConstruction {
    pub rho: f64,
    pub k1: u32,
    pub k2: u32,
    pub q1: f64,
}

impl DecayConstruction {
    pub fn new(rho: f64, k1: u32, k2: u32, q1: f64) -> Result<Self> {
        if !(rho > 0.0 && rho <= 1.0) {
            return Err(Error::Domain(format!("rho must lie in (0, 1], got {rho}")));
        }
        if k1 == 0 || !k1.is_multiple_of(2) || !k2.is_multiple_of(2) || k2 + 2 < k1 {
            return Err(Error::Domain(format!("need even k1 >= 2, even k2 >= k1 - 2; got {k1}, {k2}")));
        }
        if !(q1 > 0.0 && q1 <= 1.0) {
            return Err(Error::Domain(format!("q1 must lie in (0, 1], got {q1}")));
        }
        Ok(Self { rho, k1, k2, q1 })
    }

    pub fn rise(&self) -> f64 {
        (2.0 * self.rho.powi(self.k1 as i32) / self.q1).sqrt()
    }

    pub fn fall(&self) -> f64 {
        self.rise() / self.rho
    }

    pub fn semicycle_length(&self) -> f64 {
        self.rise() + self.fall()
    }

    pub fn tau_m(&self) -> f64 {
        let l = self.semicycle_length();
        (self.k1 as f64 * l).max((self.k2 + 1) as f64 * l - self.rise())
    }

    /// Semicycle length and delay in units where `esssup |p| = 1`.
    pub fn normalized(&self) -> (f64, f64) {
        let s = self.q1.sqrt();
        (self.semicycle_length() * s, self.tau_m() * s)
    }

    fn peak_point(&self, n: i64) -> f64 {
        n as f64 * self.semicycle_length() + self.rise()
    }

    /// Peak of the semicycle containing `t`.
    pub fn envelope(&self, t: f64) -> f64 {
        self.rho.powf((t / self.semicycle_length()).floor())
    }

    pub fn value(&self, t: f64) -> f64 {
        let l = self.semicycle_length();
        let n = (t / l).floor();
        let u = t - n * l;
        let amp = self.rho.powf(n) * if (n as i64).rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        let (a, d) = (self.rise(), self.fall());
        if u < a {
            amp * (1.0 - (1.0 - u / a).powi(2))
        } else {
            amp * (1.0 - ((u - a) / d).powi(2))
        }
    }

    /// The delay problem started at the zero `t = 0`, with `semicycles`
    /// semicycles of coefficient and delay data.
    pub fn problem(&self, semicycles: usize) -> Result<DelayProblem> {
        let (l, a, d) = (self.semicycle_length(), self.rise(), self.fall());
        let p_fall = self.q1 * self.rho.powi(self.k2 as i32 + 2 - self.k1 as i32);
        let mut bps = Vec::new();
        let (mut p, mut tau) = (Vec::new(), Vec::new());
        for n in 0..semicycles as i64 {
            let (an, wn) = (n as f64 * l, self.peak_point(n));
            bps.extend([an, wn]);
            p.extend([vec![self.q1], vec![p_fall]]);
            tau.push(vec![an - self.peak_point(n - self.k1 as i64), 1.0]);
            tau.push(vec![wn - self.peak_point(n - self.k2 as i64), 1.0]);
        }
        bps.push(semicycles as f64 * l);
        let back = self.k1.max(self.k2) as i64 + 2;
        let mut h_bps = Vec::new();
        let mut h = Vec::new();
        for n in -back..0 {
            let amp = self.rho.powi(n as i32) * if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
            h_bps.extend([n as f64 * l, self.peak_point(n)]);
            h.push(vec![0.0, 2.0 * amp / a, -amp / (a * a)]);
            h.push(vec![amp, 0.0, -amp / (d * d)]);
        }
        h_bps.push(0.0);
        Ok(DelayProblem {
            p: PiecewiseSignal::new(bps.clone(), p, 0.0, 0.0)?,
            tau: PiecewiseSignal::new(bps, tau, 0.0, 0.0)?,
            start: 0.0,
            history: PiecewiseSignal::new(h_bps, h, 0.0, 0.0)?,
            initial_value: 0.0,
            initial_slope: 2.0 / a,
        })
    }
}

/// Random construction whose normalized semicycles stay `gap` below the
/// threshold for its delay.
pub fn random_decay_construction(rng: &mut ChaCha8Rng, gap: f64) -> Result<DecayConstruction> {
    for _ in 0..1000 {
        let rho = rng.gen_range(0.6..0.95);
        let k1 = 2 * rng.gen_range(1..=3u32);
        let k2 = if rng.gen_bool(0.5) { k1 - 2 } else { k1 };
        let q1 = rng.gen_range(0.5..=1.0);
        let c = DecayConstruction::new(rho, k1, k2, q1)?;
        let (len, tau) = c.normalized();
        if len <= semicycle_threshold(tau)? - gap {
            return Ok(c);
        }
    }
    Err(Error::NonConvergence("no admissible decay construction in 1000 draws".into()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DecayRow {
    pub instance: usize,
    pub rho: f64,
    pub k1: u32,
    pub k2: u32,
    pub q1: f64,
    /// Longest observed semicycle, normalized.
    pub max_length: f64,
    pub threshold: f64,
    /// Integrated solution against the construction, relative to the
    /// current semicycle's peak.
    pub max_error: f64,
    pub windows: usize,
    /// Per-window envelope ratio fitted by least squares on `ln max |x|`.
    pub fitted_ratio: f64,
    pub verdict: Verdict,
}

impl DecayRow {
    pub const CSV_HEADER: &'static str =
        "instance,rho,k1,k2,q1,max_length,threshold,max_error,windows,fitted_ratio,verdict";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.instance,
            self.rho,
            self.k1,
            self.k2,
            self.q1,
            self.max_length,
            self.threshold,
            self.max_error,
            self.windows,
            self.fitted_ratio,
            self.verdict.as_str()
        )
    }
}

/// Least-squares slope of `ys` against `0, 1, 2, ...`.
pub fn fit_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let mx = (n - 1.0) / 2.0;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mx;
        sxy += dx * (y - my);
        sxx += dx * dx;
    }
    sxy / sxx
}

pub const DECAY_WINDOWS: usize = 4;
pub const DECAY_GAP: f64 = 0.05;

/// Integrates a construction over `DECAY_WINDOWS` windows of length
/// `tau_m + theta(tau_m)` (normalized) and fits the envelope ratio.
pub fn decay_run(instance: usize, c: &DecayConstruction) -> Result<DecayRow> {
    let (_, tau_norm) = c.normalized();
    let unit = c.q1.sqrt();
    let window = (tau_norm + theta(tau_norm)?) / unit * 1.001;
    let horizon = window * DECAY_WINDOWS as f64;
    let count = (horizon / c.semicycle_length()).ceil() as usize + 1;
    let problem = c.problem(count)?;
    let traj = integrate(&problem, horizon, 2e-3)?;
    let max_error = (0..=4000)
        .map(|i| {
            let t = horizon * i as f64 / 4000.0;
            traj.eval(t).map(|x| (x - c.value(t)).abs() / c.envelope(t))
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    let zeros = zero_times(&find_zeros(&traj, 1e-10)?);
    let cycles = semicycles(&traj, &zeros, 1e-10)?;
    let max_length = cycles.iter().map(|s| s.length()).fold(0.0, f64::max) * unit;
    let logs = (0..DECAY_WINDOWS)
        .map(|k| traj.max_abs_on(k as f64 * window, (k + 1) as f64 * window).map(f64::ln))
        .collect::<Result<Vec<_>>>()?;
    let verdict = classify(&problem, &traj)?.verdict;
    Ok(DecayRow {
        instance,
        rho: c.rho,
        k1: c.k1,
        k2: c.k2,
        q1: c.q1,
        max_length,
        threshold: semicycle_threshold(tau_norm)?,
        max_error,
        windows: DECAY_WINDOWS,
        fitted_ratio: fit_slope(&logs).exp(),
        verdict,
    })
}

pub fn decay_instance(seed: u64, instance: usize) -> Result<DecayRow> {
    let mut rng = instance_rng(seed, instance as u64);
    let c = random_decay_construction(&mut rng, DECAY_GAP)?;
    decay_run(instance, &c)
}

pub fn decay_harness(seed: u64, instances: usize, jobs: Option<usize>) -> Result<Vec<DecayRow>> {
    run_parallel(jobs, instances, |i| decay_instance(seed, i))
}
