//! Method-of-steps integration of `x''(t) + p(t) x(t - tau(t)) = 0`.
//!
//! The solver is a fixed-step classical Runge-Kutta scheme on `(x, x')` with a
//! cubic Hermite interpolant per step. Step ends are forced onto every
//! breakpoint of `p` and `tau` and onto every time where the delayed argument
//! `t - tau(t)` crosses the start time or a breakpoint of the history, so the
//! right-hand side is smooth inside each step.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;
use crate::signals::PiecewiseSignal;
use crate::thresholds::hermite;

/// Nodes closer than this are merged.
const NODE_MERGE: f64 = 1e-9;
/// Tolerance for keeping an evaluation on the piece of the step midpoint.
const SLACK: f64 = 1e-8;
/// Basis renormalization interval for the fundamental system.
const RENORM_EVERY: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayProblem {
    pub p: PiecewiseSignal,
    pub tau: PiecewiseSignal,
    pub start: f64,
    /// Initial function, consulted strictly left of `start`.
    pub history: PiecewiseSignal,
    /// `x(start+)`; may differ from the history's left limit.
    pub initial_value: f64,
    /// `x'(start+)`.
    pub initial_slope: f64,
}

impl DelayProblem {
    /// Problem whose initial value and slope continue the history at `start`.
    pub fn continuing(p: PiecewiseSignal, tau: PiecewiseSignal, start: f64, history: PiecewiseSignal) -> Self {
        let piece = history.piece_at(start - 1e-12);
        let value = history.eval_piece(piece, start);
        let slope = poly::eval(&poly::derivative(&history.piece_poly_about(piece, start)), 0.0);
        Self { p, tau, start, history, initial_value: value, initial_slope: slope }
    }

    pub fn validate(&self) -> Result<()> {
        self.p.validate()?;
        self.tau.validate()?;
        self.history.validate()?;
        for (name, v) in
            [("start", self.start), ("initial_value", self.initial_value), ("initial_slope", self.initial_slope)]
        {
            if !v.is_finite() {
                return Err(Error::Domain(format!("{name} must be finite, got {v}")));
            }
        }
        let (lo, _) = self.tau.range(self.start, f64::INFINITY)?;
        if lo < 0.0 {
            return Err(Error::Domain(format!("delay takes the negative value {lo} after the start time")));
        }
        Ok(())
    }

    /// `esssup tau` over `[start, inf)`.
    pub fn tau_m(&self) -> f64 {
        self.tau.sup_from(self.start).max(0.0)
    }

    /// `esssup |p|` over `[start, inf)`.
    pub fn p_sup_abs(&self) -> f64 {
        self.p.esssup_abs(self.start, f64::INFINITY).unwrap_or(0.0)
    }
}

/// Time change `t -> k t`: the returned problem is solved by `x(k t)`.
///
/// The coefficient becomes `k^2 p(k t)` and the delay `tau(k t) / k`.
pub fn rescale(problem: &DelayProblem, k: f64) -> Result<DelayProblem> {
    if !(k > 0.0) || !k.is_finite() {
        return Err(Error::Domain(format!("scale factor must be positive and finite, got {k}")));
    }
    if k == 1.0 {
        return Ok(problem.clone());
    }
    let k2 = k * k;
    let p = problem.p.compose_scale(k).map_pieces(|c| c.iter().map(|v| v * k2).collect());
    let tau = problem.tau.compose_scale(k).map_pieces(|c| c.iter().map(|v| v / k).collect());
    Ok(DelayProblem {
        p,
        tau,
        start: problem.start / k,
        history: problem.history.compose_scale(k),
        initial_value: problem.initial_value,
        initial_slope: problem.initial_slope * k,
    })
}

/// Rescales so that `esssup |p| = 1`; returns the problem and the factor
/// used. A problem with `p = 0` is returned unchanged with factor 1.
pub fn normalize(problem: &DelayProblem) -> Result<(DelayProblem, f64)> {
    let sup = problem.p_sup_abs();
    if sup == 0.0 {
        return Ok((problem.clone(), 1.0));
    }
    let k = 1.0 / sup.sqrt();
    Ok((rescale(problem, k)?, k))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Zero,
    Extremum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub value: f64,
}

/// Dense numerical solution on `[start, end]`, plus the history to the left.
#[derive(Debug, Clone)]
pub struct Trajectory {
    start: f64,
    history: PiecewiseSignal,
    t: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    cubics: Vec<[f64; 4]>,
    events: Vec<Event>,
}

fn hermite_cubic(x0: f64, v0: f64, x1: f64, v1: f64, h: f64) -> [f64; 4] {
    let slope = (x1 - x0) / h;
    [x0, v0, (3.0 * slope - 2.0 * v0 - v1) / h, (v0 + v1 - 2.0 * slope) / (h * h)]
}

fn hermite_derivative(x0: f64, v0: f64, x1: f64, v1: f64, h: f64, s: f64) -> f64 {
    let c = hermite_cubic(x0, v0, x1, v1, h);
    c[1] + s * (2.0 * c[2] + 3.0 * s * c[3])
}

impl Trajectory {
    fn from_nodes(start: f64, history: PiecewiseSignal, t: Vec<f64>, x: Vec<f64>, v: Vec<f64>) -> Self {
        let cubics: Vec<[f64; 4]> = (0..t.len().saturating_sub(1))
            .map(|i| hermite_cubic(x[i], v[i], x[i + 1], v[i + 1], t[i + 1] - t[i]))
            .collect();
        let mut traj = Self { start, history, t, x, v, cubics, events: Vec::new() };
        traj.events = traj.scan_events();
        traj
    }

    fn scan_events(&self) -> Vec<Event> {
        let mut events = Vec::new();
        for (i, c) in self.cubics.iter().enumerate() {
            let (t0, h) = (self.t[i], self.t[i + 1] - self.t[i]);
            let zeros = if i == 0 {
                poly::roots_in(c, 0.0, h)
            } else {
                poly::roots_in(c, 0.0, h).into_iter().filter(|&u| u > 0.0).collect()
            };
            for u in zeros {
                events.push(Event { t: t0 + u, kind: EventKind::Zero, value: 0.0 });
            }
            let dc = poly::derivative(c);
            for u in poly::roots_in(&dc, 0.0, h) {
                if u > 0.0 && u < h {
                    events.push(Event { t: t0 + u, kind: EventKind::Extremum, value: poly::eval(c, u) });
                }
            }
            // extrema sitting exactly on nodes
            if i + 1 < self.cubics.len() && self.v[i + 1] == 0.0 {
                events.push(Event { t: self.t[i + 1], kind: EventKind::Extremum, value: self.x[i + 1] });
            }
        }
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        events.dedup_by(|a, b| a.kind == b.kind && (a.t - b.t).abs() < 1e-12);
        events
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        *self.t.last().unwrap()
    }

    pub fn history(&self) -> &PiecewiseSignal {
        &self.history
    }

    /// Node times.
    pub fn times(&self) -> &[f64] {
        &self.t
    }

    pub fn values(&self) -> &[f64] {
        &self.x
    }

    pub fn slopes(&self) -> &[f64] {
        &self.v
    }

    /// Per-step cubic coefficients in `u = t - times()[i]`.
    pub fn cubics(&self) -> &[[f64; 4]] {
        &self.cubics
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    fn step_index(&self, t: f64) -> usize {
        let i = self.t.partition_point(|&n| n <= t);
        i.saturating_sub(1).min(self.cubics.len().saturating_sub(1))
    }

    fn check_domain(&self, t: f64) -> Result<()> {
        let end = self.end();
        if t.is_nan() || t > end + 1e-12 * end.abs().max(1.0) {
            return Err(Error::Domain(format!("t = {t} is past the end of the trajectory at {end}")));
        }
        Ok(())
    }

    /// `x(t)`; the history for `t < start`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        if t < self.start {
            return Ok(self.history.eval(t));
        }
        if self.cubics.is_empty() {
            return Ok(self.x[0]);
        }
        let i = self.step_index(t);
        Ok(poly::eval(&self.cubics[i], t - self.t[i]))
    }

    /// `x'(t)`; the history's derivative for `t < start`.
    pub fn eval_derivative(&self, t: f64) -> Result<f64> {
        self.check_domain(t)?;
        if t < self.start {
            return Ok(self.history.eval_derivative(t));
        }
        if self.cubics.is_empty() {
            return Ok(self.v[0]);
        }
        let i = self.step_index(t);
        let c = &self.cubics[i];
        let u = t - self.t[i];
        Ok(c[1] + u * (2.0 * c[2] + 3.0 * u * c[3]))
    }

    /// Maximum of `|x|` over `[lo, hi]`, using the history left of the start.
    pub fn max_abs_on(&self, lo: f64, hi: f64) -> Result<f64> {
        if !(lo <= hi) {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        self.check_domain(hi)?;
        let mut best: f64 = 0.0;
        if lo < self.start {
            best = best.max(self.history.esssup_abs(lo, hi.min(self.start))?);
            if hi < self.start {
                return Ok(best);
            }
        }
        let lo = lo.max(self.start);
        if self.cubics.is_empty() {
            return Ok(best.max(self.x[0].abs()));
        }
        let (first, last) = (self.step_index(lo), self.step_index(hi));
        for i in first..=last {
            let a = (lo - self.t[i]).max(0.0);
            let b = (hi - self.t[i]).min(self.t[i + 1] - self.t[i]);
            if a <= b {
                best = best.max(poly::max_abs_on(&self.cubics[i], a, b));
            }
        }
        Ok(best)
    }

    /// `n` evenly spaced samples `(t, x, x')` over `[start, end]`.
    pub fn sample(&self, n: usize) -> Vec<(f64, f64, f64)> {
        let n = n.max(2);
        let (a, b) = (self.start, self.end());
        (0..n)
            .map(|i| {
                let t = if i + 1 == n { b } else { a + (b - a) * i as f64 / (n - 1) as f64 };
                (t, self.eval(t).unwrap(), self.eval_derivative(t).unwrap())
            })
            .collect()
    }
}

/// Node states for `M` solutions sharing one coefficient and delay.
#[derive(Debug, Clone, Default)]
struct Store<const M: usize> {
    t: Vec<f64>,
    x: Vec<[f64; M]>,
    v: Vec<[f64; M]>,
}

impl<const M: usize> Store<M> {
    fn push(&mut self, t: f64, x: [f64; M], v: [f64; M]) {
        self.t.push(t);
        self.x.push(x);
        self.v.push(v);
    }

    fn last(&self) -> (f64, [f64; M], [f64; M]) {
        let n = self.t.len() - 1;
        (self.t[n], self.x[n], self.v[n])
    }

    fn eval(&self, j: usize, d: f64) -> f64 {
        let n = self.t.len();
        if n == 1 {
            return self.x[0][j] + (d - self.t[0]) * self.v[0][j];
        }
        let i = self.t.partition_point(|&n| n <= d).saturating_sub(1).min(n - 2);
        let h = self.t[i + 1] - self.t[i];
        hermite(self.x[i][j], self.v[i][j], self.x[i + 1][j], self.v[i + 1][j], h, d - self.t[i])
    }
}

/// Estimate of the current step used when the delayed argument falls inside it.
struct Provisional<const M: usize> {
    t0: f64,
    h: f64,
    x0: [f64; M],
    v0: [f64; M],
    x1: [f64; M],
    v1: [f64; M],
}

struct Engine<'a, const M: usize> {
    p: &'a PiecewiseSignal,
    tau: &'a PiecewiseSignal,
    start: f64,
    histories: [&'a PiecewiseSignal; M],
    history_lo: f64,
    store: Store<M>,
}

impl<'a, const M: usize> Engine<'a, M> {
    fn new(
        p: &'a PiecewiseSignal,
        tau: &'a PiecewiseSignal,
        start: f64,
        histories: [&'a PiecewiseSignal; M],
        x0: [f64; M],
        v0: [f64; M],
    ) -> Self {
        let history_lo =
            histories.iter().filter_map(|h| h.breakpoints.first().copied()).fold(f64::NEG_INFINITY, f64::max);
        let mut store = Store::default();
        store.push(start, x0, v0);
        Self { p, tau, start, histories, history_lo, store }
    }

    /// Delayed values `x_j(t - tau(t))` at a stage.
    fn delayed(&self, t: f64, t_mid: f64, d_ref: f64, stage_x: &[f64; M], prov: &Provisional<M>) -> Result<[f64; M]> {
        let tau = self.tau.eval_near(t, t_mid, SLACK);
        if tau == 0.0 {
            return Ok(*stage_x);
        }
        let d = t - tau;
        let on_history = if (d - self.start).abs() <= SLACK { d_ref < self.start } else { d < self.start };
        let mut out = [0.0; M];
        if on_history {
            if d < self.history_lo - SLACK {
                return Err(Error::UnderResolvedHistory { t, delayed: d, history_start: self.history_lo });
            }
            for (j, h) in self.histories.iter().enumerate() {
                out[j] = h.eval_near(d, d_ref, SLACK);
            }
        } else if d <= prov.t0 + 1e-14 * prov.t0.abs().max(1.0) {
            for (j, o) in out.iter_mut().enumerate() {
                *o = self.store.eval(j, d.max(self.start));
            }
        } else {
            let u = (d - prov.t0).min(prov.h);
            for (j, o) in out.iter_mut().enumerate() {
                *o = hermite(prov.x0[j], prov.v0[j], prov.x1[j], prov.v1[j], prov.h, u);
            }
        }
        Ok(out)
    }

    fn overlaps(&self, t0: f64, h: f64, t_mid: f64) -> bool {
        [t0 + 0.5 * h, t0 + h].iter().any(|&t| {
            let tau = self.tau.eval_near(t, t_mid, SLACK);
            tau > 0.0 && t - tau > t0
        })
    }

    fn rk4_pass(&self, h: f64, prov: &Provisional<M>) -> Result<([f64; M], [f64; M])> {
        let t0 = prov.t0;
        let t_mid = t0 + 0.5 * h;
        let d_ref = t_mid - self.tau.eval_near(t_mid, t_mid, SLACK);
        let accel = |t: f64, x: &[f64; M]| -> Result<[f64; M]> {
            let p = self.p.eval_near(t, t_mid, SLACK);
            let del = self.delayed(t, t_mid, d_ref, x, prov)?;
            Ok(del.map(|d| -p * d))
        };
        let (x0, v0) = (prov.x0, prov.v0);
        let add = |a: &[f64; M], b: &[f64; M], s: f64| -> [f64; M] {
            let mut o = *a;
            for j in 0..M {
                o[j] += s * b[j];
            }
            o
        };
        let k1x = v0;
        let k1v = accel(t0, &x0)?;
        let x2 = add(&x0, &k1x, 0.5 * h);
        let k2x = add(&v0, &k1v, 0.5 * h);
        let k2v = accel(t_mid, &x2)?;
        let x3 = add(&x0, &k2x, 0.5 * h);
        let k3x = add(&v0, &k2v, 0.5 * h);
        let k3v = accel(t_mid, &x3)?;
        let x4 = add(&x0, &k3x, h);
        let k4x = add(&v0, &k3v, h);
        let k4v = accel(t0 + h, &x4)?;
        let mut x1 = x0;
        let mut v1 = v0;
        for j in 0..M {
            x1[j] += h / 6.0 * (k1x[j] + 2.0 * k2x[j] + 2.0 * k3x[j] + k4x[j]);
            v1[j] += h / 6.0 * (k1v[j] + 2.0 * k2v[j] + 2.0 * k3v[j] + k4v[j]);
        }
        Ok((x1, v1))
    }

    /// Advances from the last stored node to `t1`.
    fn step_to(&mut self, t1: f64) -> Result<()> {
        let (t0, x0, v0) = self.store.last();
        let h = t1 - t0;
        let mut prov = Provisional { t0, h, x0, v0, x1: x0, v1: v0 };
        for j in 0..M {
            prov.x1[j] = x0[j] + h * v0[j];
        }
        let passes = if self.overlaps(t0, h, t0 + 0.5 * h) { 3 } else { 1 };
        let mut result = (x0, v0);
        for _ in 0..passes {
            result = self.rk4_pass(h, &prov)?;
            prov.x1 = result.0;
            prov.v1 = result.1;
        }
        self.store.push(t1, result.0, result.1);
        Ok(())
    }
}

/// Step ends for `[start, horizon]`: breakpoints of `p` and `tau`, and the
/// times where `t - tau(t)` meets `start` or a history breakpoint.
fn forced_nodes(
    p: &PiecewiseSignal,
    tau: &PiecewiseSignal,
    start: f64,
    horizon: f64,
    histories: &[&PiecewiseSignal],
) -> Vec<f64> {
    let mut nodes = vec![start, horizon];
    let inside = |b: &f64| *b > start && *b < horizon;
    nodes.extend(p.breakpoints.iter().filter(|b| inside(b)));
    nodes.extend(tau.breakpoints.iter().filter(|b| inside(b)));
    let mut levels = vec![start];
    for h in histories {
        levels.extend(h.breakpoints.iter().copied().filter(|&b| b < start));
    }
    for (piece, lo, hi) in tau.pieces_on(start, horizon) {
        let tau_local = tau.piece_poly_about(piece, lo);
        for &c in &levels {
            // t - tau(t) - c in u = t - lo
            let mut q: Vec<f64> = tau_local.iter().map(|v| -v).collect();
            if q.len() < 2 {
                q.resize(2, 0.0);
            }
            q[0] += lo - c;
            q[1] += 1.0;
            let scale = q.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1.0);
            if q.iter().all(|v| v.abs() <= 1e-13 * scale) {
                continue;
            }
            nodes.extend(poly::roots_in(&q, 0.0, hi - lo).into_iter().map(|u| lo + u).filter(inside));
        }
    }
    nodes.sort_by(f64::total_cmp);
    let mut merged: Vec<f64> = Vec::with_capacity(nodes.len());
    for n in nodes {
        match merged.last() {
            Some(&last) if n - last < NODE_MERGE => {
                if n == horizon {
                    *merged.last_mut().unwrap() = horizon;
                }
            }
            _ => merged.push(n),
        }
    }
    merged
}

fn step_grid(forced: &[f64], step: f64) -> Vec<f64> {
    let mut out = vec![forced[0]];
    for w in forced.windows(2) {
        let len = w[1] - w[0];
        let n = ((len / step) - 1e-9).ceil().max(1.0) as usize;
        for k in 1..n {
            out.push(w[0] + len * k as f64 / n as f64);
        }
        out.push(w[1]);
    }
    out
}

fn check_run(start: f64, horizon: f64, step: f64) -> Result<()> {
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Domain(format!("step must be positive, got {step}")));
    }
    if !(horizon > start) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon {horizon} must exceed the start time {start}")));
    }
    Ok(())
}

/// Integrates `problem` on `[start, horizon]` with step at most `step`.
pub fn integrate(problem: &DelayProblem, horizon: f64, step: f64) -> Result<Trajectory> {
    problem.validate()?;
    check_run(problem.start, horizon, step)?;
    let grid = step_grid(&forced_nodes(&problem.p, &problem.tau, problem.start, horizon, &[&problem.history]), step);
    let mut engine = Engine::<1>::new(
        &problem.p,
        &problem.tau,
        problem.start,
        [&problem.history],
        [problem.initial_value],
        [problem.initial_slope],
    );
    for &t in &grid[1..] {
        engine.step_to(t)?;
    }
    let store = engine.store;
    Ok(Trajectory::from_nodes(
        problem.start,
        problem.history.clone(),
        store.t,
        store.x.into_iter().map(|x| x[0]).collect(),
        store.v.into_iter().map(|v| v[0]).collect(),
    ))
}

/// One stretch of the fundamental system between renormalizations. The
/// stored solutions `u` relate to the original pair by `(z, y) = u * basis`,
/// with `basis = exp(log_scale) * basis_unit`.
#[derive(Debug, Clone)]
struct Era {
    from: f64,
    store: Store<2>,
    basis_unit: [[f64; 2]; 2],
    log_scale: f64,
    log_abs_det: f64,
    det_sign: f64,
}

impl Era {
    fn state(&self, t: f64) -> ([f64; 2], [f64; 2]) {
        let n = self.store.t.len();
        let i = self.store.t.partition_point(|&n| n <= t).saturating_sub(1).min(n - 2);
        let h = self.store.t[i + 1] - self.store.t[i];
        let s = t - self.store.t[i];
        let (xa, va, xb, vb) = (self.store.x[i], self.store.v[i], self.store.x[i + 1], self.store.v[i + 1]);
        let x = [0, 1].map(|j| hermite(xa[j], va[j], xb[j], vb[j], h, s));
        let v = [0, 1].map(|j| hermite_derivative(xa[j], va[j], xb[j], vb[j], h, s));
        (x, v)
    }
}

/// The pair `z, y` with zero initial function, `z(s) = 1, z'(s) = 0`,
/// `y(s) = 0, y'(s) = 1`.
///
/// Both solutions are integrated together in a basis that is
/// re-orthonormalized every half time unit, which keeps the Wronskian
/// accurate when the solutions grow exponentially.
#[derive(Debug, Clone)]
pub struct FundamentalSystem {
    start: f64,
    end: f64,
    eras: Vec<Era>,
}

pub fn fundamental_system(
    p: &PiecewiseSignal,
    tau: &PiecewiseSignal,
    s: f64,
    horizon: f64,
) -> Result<FundamentalSystem> {
    fundamental_system_with_step(p, tau, s, horizon, 1e-3)
}

pub fn fundamental_system_with_step(
    p: &PiecewiseSignal,
    tau: &PiecewiseSignal,
    s: f64,
    horizon: f64,
    step: f64,
) -> Result<FundamentalSystem> {
    let zero = PiecewiseSignal::constant(0.0);
    DelayProblem {
        p: p.clone(),
        tau: tau.clone(),
        start: s,
        history: zero.clone(),
        initial_value: 1.0,
        initial_slope: 0.0,
    }
    .validate()?;
    check_run(s, horizon, step)?;
    let tau_m = tau.sup_from(s).max(0.0);
    let grid = step_grid(&forced_nodes(p, tau, s, horizon, &[]), step);
    let mut engine = Engine::<2>::new(p, tau, s, [&zero, &zero], [1.0, 0.0], [0.0, 1.0]);
    let mut eras = Vec::new();
    let mut basis_unit = [[1.0, 0.0], [0.0, 1.0]];
    let (mut log_scale, mut log_abs_det, mut det_sign) = (0.0, 0.0, 1.0);
    let mut era_from = s;
    for &t in &grid[1..] {
        engine.step_to(t)?;
        if t - era_from < RENORM_EVERY || t >= horizon {
            continue;
        }
        // Gram-Schmidt on the state columns (x_j, v_j): S = Q R
        let (_, x, v) = engine.store.last();
        let n0 = x[0].hypot(v[0]);
        let q0 = [x[0] / n0, v[0] / n0];
        let r01 = q0[0] * x[1] + q0[1] * v[1];
        let w = [x[1] - r01 * q0[0], v[1] - r01 * q0[1]];
        let n1 = w[0].hypot(w[1]);
        if !(n0 > 0.0 && n1 > 0.0 && n0.is_finite() && n1.is_finite()) {
            return Err(Error::NonConvergence(format!("fundamental system lost rank at t = {t}")));
        }
        let r = [[n0, r01], [0.0, n1]];
        let rinv = [[1.0 / n0, -r01 / (n0 * n1)], [0.0, 1.0 / n1]];
        let transform = |a: [f64; 2]| [a[0] * rinv[0][0] + a[1] * rinv[1][0], a[0] * rinv[0][1] + a[1] * rinv[1][1]];
        // keep enough past for every later delayed lookup
        let keep_from = t - tau_m;
        let first = engine.store.t.partition_point(|&n| n <= keep_from).saturating_sub(1);
        let mut fresh = Store::<2>::default();
        for i in first..engine.store.t.len() {
            fresh.push(engine.store.t[i], transform(engine.store.x[i]), transform(engine.store.v[i]));
        }
        let finished = std::mem::replace(&mut engine.store, fresh);
        eras.push(Era { from: era_from, store: finished, basis_unit, log_scale, log_abs_det, det_sign });
        // new basis = R * old basis
        let mut nb = [[0.0; 2]; 2];
        for (i, row) in nb.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                *cell = r[i][0] * basis_unit[0][j] + r[i][1] * basis_unit[1][j];
            }
        }
        let norm = nb.iter().flatten().fold(0.0_f64, |m, v| m.max(v.abs()));
        basis_unit = nb.map(|row| row.map(|v| v / norm));
        log_scale += norm.ln();
        log_abs_det += (n0 * n1).ln();
        det_sign *= (n0 * n1).signum();
        era_from = t;
    }
    eras.push(Era { from: era_from, store: engine.store, basis_unit, log_scale, log_abs_det, det_sign });
    Ok(FundamentalSystem { start: s, end: horizon, eras })
}

impl FundamentalSystem {
    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    fn era(&self, t: f64) -> Result<&Era> {
        if t.is_nan() || t < self.start || t > self.end + 1e-12 * self.end.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "t = {t} outside the fundamental system's domain [{}, {}]",
                self.start, self.end
            )));
        }
        let k = self.eras.partition_point(|e| e.from < t).saturating_sub(1);
        Ok(&self.eras[k])
    }

    /// Sign and `ln |W(t)|` of the Wronskian `z y' - z' y`.
    pub fn wronskian_log(&self, t: f64) -> Result<(f64, f64)> {
        let era = self.era(t)?;
        let (x, v) = era.state(t);
        let local = x[0] * v[1] - v[0] * x[1];
        Ok((local.signum() * era.det_sign, local.abs().ln() + era.log_abs_det))
    }

    pub fn wronskian(&self, t: f64) -> Result<f64> {
        let (sign, log) = self.wronskian_log(t)?;
        Ok(if sign == 0.0 { 0.0 } else { sign * log.exp() })
    }

    /// `(z, z', y, y')` at `t` in the original basis.
    pub fn state(&self, t: f64) -> Result<[f64; 4]> {
        let era = self.era(t)?;
        let (x, v) = era.state(t);
        let b = era.basis_unit;
        let scale = era.log_scale.exp();
        let col = |a: [f64; 2], j: usize| scale * (a[0] * b[0][j] + a[1] * b[1][j]);
        Ok([col(x, 0), col(v, 0), col(x, 1), col(v, 1)])
    }

    /// The two solutions as separate trajectories in the original basis. Their
    /// values overflow when the system grows faster than `f64` allows.
    pub fn pair(&self) -> (Trajectory, Trajectory) {
        let (mut t, mut z, mut zp, mut y, mut yp) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for era in &self.eras {
            let b = era.basis_unit;
            let scale = era.log_scale.exp();
            for i in 0..era.store.t.len() {
                let ti = era.store.t[i];
                if ti < era.from || t.last().is_some_and(|&last| ti <= last) {
                    continue;
                }
                let (x, v) = (era.store.x[i], era.store.v[i]);
                t.push(ti);
                z.push(scale * (x[0] * b[0][0] + x[1] * b[1][0]));
                zp.push(scale * (v[0] * b[0][0] + v[1] * b[1][0]));
                y.push(scale * (x[0] * b[0][1] + x[1] * b[1][1]));
                yp.push(scale * (v[0] * b[0][1] + v[1] * b[1][1]));
            }
        }
        let zero = PiecewiseSignal::constant(0.0);
        (
            Trajectory::from_nodes(self.start, zero.clone(), t.clone(), z, zp),
            Trajectory::from_nodes(self.start, zero, t, y, yp),
        )
    }
}

/// `z(t) y'(t) - z'(t) y(t)` from two dense outputs.
pub fn wronskian(z: &Trajectory, y: &Trajectory, t: f64) -> Result<f64> {
    let lo = z.start().max(y.start());
    if t < lo {
        return Err(Error::Domain(format!("t = {t} precedes the start time {lo}")));
    }
    Ok(z.eval(t)? * y.eval_derivative(t)? - z.eval_derivative(t)? * y.eval(t)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thresholds::eval_r;
    use std::f64::consts::{PI, SQRT_2};

    fn constant_problem(p: f64, tau: f64, history: PiecewiseSignal, x0: f64, v0: f64) -> DelayProblem {
        DelayProblem {
            p: PiecewiseSignal::constant(p),
            tau: PiecewiseSignal::constant(tau),
            start: 0.0,
            history,
            initial_value: x0,
            initial_slope: v0,
        }
    }

    fn cos_error(step: f64) -> f64 {
        let prob = constant_problem(1.0, 0.0, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        let traj = integrate(&prob, 2.0 * PI, step).unwrap();
        (0..=2000)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / 2000.0;
                (traj.eval(t).unwrap() - t.cos()).abs()
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn harmonic_oscillator() {
        assert!(cos_error(1e-3) < 1e-8);
    }

    #[test]
    fn fourth_order_convergence() {
        let e1 = cos_error(0.1);
        let e2 = cos_error(0.05);
        let e3 = cos_error(0.025);
        for ratio in [e1 / e2, e2 / e3] {
            assert!(ratio > 12.0 && ratio < 20.0, "ratio {ratio}");
        }
    }

    #[test]
    fn comparison_solution_large_delay() {
        let prob = constant_problem(1.0, 2.0, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        let traj = integrate(&prob, 2.0, 1e-3).unwrap();
        for i in 0..=200 {
            let t = SQRT_2 * i as f64 / 200.0;
            assert!((traj.eval(t).unwrap() - eval_r(2.0, t).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn comparison_solution_unit_delay_crosses_generations() {
        let prob = constant_problem(1.0, 1.0, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        let traj = integrate(&prob, 2.5, 1e-3).unwrap();
        for i in 0..=250 {
            let t = 2.5 * i as f64 / 250.0;
            assert!((traj.eval(t).unwrap() - eval_r(1.0, t).unwrap()).abs() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn small_delay_overlap_converges() {
        // delay shorter than the step: x'' = -x(t - 0.01) stays close to the ODE
        let prob = constant_problem(1.0, 0.004, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        let coarse = integrate(&prob, 3.0, 0.01).unwrap();
        let fine = integrate(&prob, 3.0, 0.001).unwrap();
        for i in 0..=30 {
            let t = 0.1 * i as f64;
            assert!((coarse.eval(t).unwrap() - fine.eval(t).unwrap()).abs() < 1e-6);
        }
    }

    #[test]
    fn nodes_include_discontinuity_points() {
        let p = PiecewiseSignal::piecewise_constant(vec![0.3, 0.7], &[2.0], 1.0, 1.0).unwrap();
        let tau = PiecewiseSignal::constant(0.5);
        let nodes = forced_nodes(&p, &tau, 0.0, 2.0, &[]);
        for want in [0.0, 0.3, 0.5, 0.7, 2.0] {
            assert!(nodes.iter().any(|n| (n - want).abs() < 1e-12), "missing {want} in {nodes:?}");
        }
    }

    #[test]
    fn rescale_examples() {
        let prob = constant_problem(4.0, 1.0, PiecewiseSignal::constant(1.0), 1.0, 0.5);
        assert_eq!(rescale(&prob, 1.0).unwrap(), prob);
        let half = rescale(&prob, 0.5).unwrap();
        assert_eq!(half.p.eval(3.0), 1.0);
        assert_eq!(half.tau.eval(3.0), 2.0);
        assert_eq!(half.initial_slope, 0.25);
        let (norm, k) = normalize(&prob).unwrap();
        assert_eq!(k, 0.5);
        assert_eq!(norm.p_sup_abs(), 1.0);
        assert!(rescale(&prob, 0.0).is_err());
    }

    #[test]
    fn rescaled_solution_matches() {
        let p = PiecewiseSignal::from_global(vec![0.0, 2.0], &[vec![1.0, 0.3]], 1.0, 1.6).unwrap();
        let tau = PiecewiseSignal::from_global(vec![0.0, 3.0], &[vec![0.5, 0.1]], 0.5, 0.8).unwrap();
        let prob = DelayProblem::continuing(
            p,
            tau,
            0.0,
            PiecewiseSignal::from_global(vec![-2.0, 0.0], &[vec![1.0, 0.5]], 0.0, 1.0).unwrap(),
        );
        let k = 0.7;
        let scaled = rescale(&prob, k).unwrap();
        let a = integrate(&prob, 6.0, 1e-3).unwrap();
        let b = integrate(&scaled, 6.0 / k, 1e-3).unwrap();
        for i in 0..=60 {
            let t = 0.1 * i as f64;
            assert!((a.eval(t).unwrap() - b.eval(t / k).unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn dense_output_matches_nodes() {
        let prob = constant_problem(1.0, 0.7, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        let traj = integrate(&prob, 5.0, 0.01).unwrap();
        for (i, &t) in traj.times().iter().enumerate() {
            assert_eq!(traj.eval(t).unwrap(), traj.values()[i]);
        }
        assert!(traj.eval(5.1).is_err());
        assert_eq!(traj.eval(-0.3).unwrap(), 1.0);
    }

    #[test]
    fn history_jump_at_start() {
        // zero history, unit jump: with tau = 1 the solution is 1 - 0 on [0, 1]
        let prob = constant_problem(1.0, 1.0, PiecewiseSignal::constant(0.0), 1.0, 0.0);
        let traj = integrate(&prob, 2.0, 1e-3).unwrap();
        assert!((traj.eval(0.9).unwrap() - 1.0).abs() < 1e-12);
        let t: f64 = 1.6;
        assert!((traj.eval(t).unwrap() - (1.0 - 0.5 * (t - 1.0).powi(2))).abs() < 1e-10);
    }

    #[test]
    fn under_resolved_history() {
        let hist = PiecewiseSignal::new(vec![-0.5, 0.0], vec![vec![1.0]], 1.0, 1.0).unwrap();
        let prob = constant_problem(1.0, 1.0, hist, 1.0, 0.0);
        match integrate(&prob, 2.0, 1e-2) {
            Err(Error::UnderResolvedHistory { history_start, .. }) => assert_eq!(history_start, -0.5),
            other => panic!("expected history error, got {other:?}"),
        }
    }

    #[test]
    fn domain_errors() {
        let prob = constant_problem(1.0, 1.0, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        assert!(integrate(&prob, 2.0, 0.0).is_err());
        assert!(integrate(&prob, -1.0, 0.1).is_err());
        let neg = constant_problem(1.0, -1.0, PiecewiseSignal::constant(1.0), 1.0, 0.0);
        assert!(integrate(&neg, 2.0, 0.1).is_err());
    }

    #[test]
    fn fundamental_system_ode_case() {
        let p = PiecewiseSignal::constant(1.0);
        let tau = PiecewiseSignal::constant(0.0);
        let fs = fundamental_system(&p, &tau, 1.0, 8.0).unwrap();
        let (z, y) = fs.pair();
        for i in 0..=70 {
            let t = 1.0 + 0.1 * i as f64;
            assert!((z.eval(t).unwrap() - (t - 1.0).cos()).abs() < 1e-9);
            assert!((y.eval(t).unwrap() - (t - 1.0).sin()).abs() < 1e-9);
            assert!((fs.wronskian(t).unwrap() - 1.0).abs() < 1e-9);
            assert!((wronskian(&z, &y, t).unwrap() - 1.0).abs() < 1e-8);
        }
        assert!(fs.wronskian(0.5).is_err());
    }

    #[test]
    fn fundamental_system_abel_identity_variable_p() {
        let p = PiecewiseSignal::from_global(vec![0.0, 3.0, 5.0], &[vec![-2.0, 0.5], vec![4.0]], -2.0, -1.0).unwrap();
        let fs = fundamental_system(&p, &PiecewiseSignal::constant(0.0), 0.0, 20.0).unwrap();
        for i in 0..=40 {
            let t = 0.5 * i as f64;
            assert!((fs.wronskian(t).unwrap() - 1.0).abs() < 1e-9, "W({t})");
        }
    }

    #[test]
    fn renormalized_wronskian_matches_naive_when_both_work() {
        let p = PiecewiseSignal::constant(-1.0);
        let tau = PiecewiseSignal::constant(0.6);
        let fs = fundamental_system(&p, &tau, 0.0, 6.0).unwrap();
        let (z, y) = fs.pair();
        for i in 0..=12 {
            let t = 0.5 * i as f64;
            let a = fs.wronskian(t).unwrap();
            let b = wronskian(&z, &y, t).unwrap();
            assert!((a - b).abs() < 1e-7 * a.abs().max(1.0), "t={t}: {a} vs {b}");
        }
    }
}
