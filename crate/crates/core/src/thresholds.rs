//! Extremal descent and ascent times.
//!
//! * [`eval_r`] / [`theta`]: the autonomous comparison solution
//!   `r'' + r(t - delta) = 0`, `r = 1` on `t <= 0`, `r'(0) = 0`, and its first
//!   zero. `theta` is the shortest possible descent from a normalized maximum
//!   to the next zero.
//! * [`beta_iterate`] / [`psi`]: the monotone iteration whose limit is the
//!   shortest possible ascent from a zero to a maximum, given that the history
//!   is bounded by `rho` times the peak. [`psi_oracle_bvp`] computes the same
//!   number independently by shooting on the limit boundary value problem.
//! * [`gamma_constant`]: the fixed point `psi(1, g) = g`.
//! * [`semicycle_threshold`]: `psi(1, tau_m) + theta(tau_m)`.

use std::f64::consts::{FRAC_PI_2, SQRT_2};

use crate::error::{Error, Result};
use crate::poly;
use crate::signals::GridFunction;

pub const DEFAULT_GRID: usize = 4096;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_MAX_ITER: usize = 500;
pub const DEFAULT_BVP_MESH: usize = 4096;

/// Left end of the grid carrying the iterates. The limit never exceeds pi/2;
/// the extra margin keeps the root bracket valid when the discrete iterate
/// lands a rounding error above it (delta = 0).
const GRID_LO: f64 = -(FRAC_PI_2 + 1.0 / 64.0);

const ROOT_TOL: f64 = 1e-12;

fn check_delta(delta: f64) -> Result<()> {
    if delta.is_nan() || delta < 0.0 {
        return Err(Error::Domain(format!("delay bound must be nonnegative, got {delta}")));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("rho must be positive and finite, got {rho}")));
    }
    Ok(())
}

/// `r_delta(t)`: 1 for `t <= 0`, `cos t` for `delta = 0`, otherwise the
/// closed-form partial sum on `[(n - 1) delta, n delta]`.
pub fn eval_r(delta: f64, t: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(r_unchecked(delta, t))
}

pub(crate) fn r_unchecked(delta: f64, t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if delta == 0.0 {
        return t.cos();
    }
    let n = (t / delta).ceil().max(1.0) as usize;
    let mut sum = 0.0;
    let mut fact = 1.0_f64;
    for k in 0..=n {
        if k > 0 {
            let kk = 2.0 * k as f64;
            fact *= (kk - 1.0) * kk;
        }
        let x = t - (k as f64 - 1.0) * delta;
        let term = x.powi(2 * k as i32) / fact;
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
        // past the peak of x^{2k}/(2k)! and x_k shrinks with k, so the tail is smaller
        if k >= 2 && x < 2.0 * k as f64 && term < 1e-18 {
            break;
        }
    }
    sum
}

/// First positive zero of `r_delta`; lies in `[sqrt 2, pi/2]`.
pub fn theta(delta: f64) -> Result<f64> {
    check_delta(delta)?;
    Ok(theta_unchecked(delta))
}

pub(crate) fn theta_unchecked(delta: f64) -> f64 {
    if delta == 0.0 {
        return FRAC_PI_2;
    }
    // r > 0 on [0, theta) and theta <= pi/2
    let (mut lo, mut hi) = (1.0, FRAC_PI_2);
    if r_unchecked(delta, hi) > 0.0 {
        return hi;
    }
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if r_unchecked(delta, mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// The history bound felt at reversed time `w`: `rho * r(theta - w - delta)`
/// on `[-delta, 0]`, zero elsewhere.
pub fn forcing_term(rho: f64, delta: f64, w: f64) -> Result<f64> {
    check_rho(rho)?;
    check_delta(delta)?;
    Ok(Forcing::new(rho, delta).at(w))
}

#[derive(Debug, Clone, Copy)]
struct Forcing {
    rho: f64,
    delta: f64,
    theta: f64,
}

impl Forcing {
    fn new(rho: f64, delta: f64) -> Self {
        Self { rho, delta, theta: theta_unchecked(delta) }
    }

    fn at(&self, w: f64) -> f64 {
        if self.delta > 0.0 && w >= -self.delta && w <= 0.0 {
            self.rho * r_unchecked(self.delta, self.theta - w - self.delta)
        } else {
            0.0
        }
    }

    /// Points in reversed time where the forcing is not smooth.
    fn kinks(&self) -> [f64; 2] {
        [-self.delta, self.theta - self.delta]
    }
}

#[derive(Debug, Clone)]
pub struct ThresholdResult {
    pub psi: f64,
    pub iterations: usize,
    pub omega_sequence: Vec<f64>,
    /// The limit profile on `[-psi, 0]`, close to 1 at `-psi` and 0 at `0`.
    pub limit_profile: GridFunction,
}

/// One pass of the ascent-bound iteration over a fixed grid.
///
/// Each call to [`BetaIteration::advance`] computes `omega_n` from the current
/// iterate `beta_n` and then replaces it with `beta_{n+1}`. The first iterate
/// is identically 1.
#[derive(Debug, Clone)]
pub struct BetaIteration {
    forcing: Forcing,
    nodes: Vec<f64>,
    forcing_at_nodes: Vec<f64>,
    beta: Vec<f64>,
    spacing: f64,
}

impl BetaIteration {
    pub fn new(rho: f64, delta: f64, grid_size: usize) -> Result<Self> {
        check_rho(rho)?;
        check_delta(delta)?;
        if grid_size < 64 {
            return Err(Error::Domain(format!("grid_size must be at least 64, got {grid_size}")));
        }
        let forcing = Forcing::new(rho, delta);
        let spacing = -GRID_LO / (grid_size - 1) as f64;
        let nodes: Vec<f64> =
            (0..grid_size).map(|i| if i + 1 == grid_size { 0.0 } else { GRID_LO + spacing * i as f64 }).collect();
        let forcing_at_nodes = nodes.iter().map(|&w| forcing.at(w)).collect();
        Ok(Self { forcing, nodes, forcing_at_nodes, beta: vec![1.0; grid_size], spacing })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    /// Current iterate sampled on the grid.
    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    fn integrand(&self) -> Vec<f64> {
        self.beta.iter().zip(&self.forcing_at_nodes).map(|(&b, &f)| b.max(f)).collect()
    }

    /// Computes `omega_n` for the current iterate and advances to the next one.
    pub fn advance(&mut self) -> Result<f64> {
        let f = self.integrand();
        let v = solve_unit_level(&self.nodes, &f, self.spacing)?;
        self.beta = next_iterate(&self.nodes, &f, self.spacing, v);
        Ok(-v)
    }

    /// The iterate after the last `advance`, re-sampled on its own grid over
    /// `[-omega, 0]` so that second differences are meaningful there.
    fn profile_on(&self, omega: f64, n: usize) -> Result<GridFunction> {
        let lo = -omega;
        let h = omega / (n - 1) as f64;
        let nodes: Vec<f64> = (0..n).map(|i| if i + 1 == n { 0.0 } else { lo + h * i as f64 }).collect();
        let current = GridFunction::new(GRID_LO, 0.0, self.beta.clone())?;
        let f: Vec<f64> = nodes.iter().map(|&w| current.eval(w).max(self.forcing.at(w))).collect();
        let values = next_iterate(&nodes, &f, h, lo);
        GridFunction::new(lo, 0.0, values)
    }
}

/// `h(v) = int_v^0 int_v^s f(w) dw ds = int_v^0 (-w) f(w) dw`; returns the
/// `v` with `h(v) = 1`.
fn solve_unit_level(nodes: &[f64], f: &[f64], spacing: f64) -> Result<f64> {
    let n = nodes.len();
    let g: Vec<f64> = nodes.iter().zip(f).map(|(&w, &fv)| -w * fv).collect();
    // tail[i] = int_{nodes[i]}^0 g
    let mut tail = vec![0.0; n];
    for i in (0..n - 1).rev() {
        tail[i] = tail[i + 1] + 0.5 * (g[i] + g[i + 1]) * (nodes[i + 1] - nodes[i]);
    }
    if tail[0] <= 1.0 {
        return Err(Error::Domain(format!("ascent level not reached on [{}, 0]; h = {}", nodes[0], tail[0])));
    }
    // cell containing the root: tail is decreasing in the index
    let i = tail.partition_point(|&h| h > 1.0) - 1;
    let h_at = |v: f64| {
        let frac = (v - nodes[i]) / spacing;
        let gv = g[i] + (g[i + 1] - g[i]) * frac;
        tail[i + 1] + 0.5 * (gv + g[i + 1]) * (nodes[i + 1] - v)
    };
    let (mut lo, mut hi) = (nodes[i], nodes[i + 1]);
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if h_at(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rough = 0.5 * (lo + hi);
    // polish with the quadrature used by `next_iterate`, so the next iterate
    // vanishes at 0 to rounding
    let at_zero = |v: f64| second_integrals(nodes, f, spacing, v, |_, _| {});
    let (mut lo, mut hi) = ((rough - 4.0 * spacing).max(nodes[0]), (rough + 4.0 * spacing).min(0.0));
    if at_zero(lo) < 1.0 || at_zero(hi) > 1.0 {
        return Ok(rough);
    }
    while hi - lo > ROOT_TOL {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if at_zero(mid) > 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `1 - int_v^t (t - u) f(u) du` on nodes right of `v`, 1 elsewhere.
fn next_iterate(nodes: &[f64], f: &[f64], spacing: f64, v: f64) -> Vec<f64> {
    let mut out = vec![1.0; nodes.len()];
    second_integrals(nodes, f, spacing, v, |j, second| out[j] = 1.0 - second);
    out
}

/// Cumulative trapezoid twice from `v`, reporting each node right of `v`;
/// returns the value at the last node.
fn second_integrals(nodes: &[f64], f: &[f64], spacing: f64, v: f64, mut sink: impl FnMut(usize, f64)) -> f64 {
    let n = nodes.len();
    let i = (((v - nodes[0]) / spacing).floor().max(0.0) as usize).min(n - 2);
    let f_at_v = f[i] + (f[i + 1] - f[i]) * ((v - nodes[i]) / spacing);
    // running first and second integrals from v
    let mut first_prev = 0.0;
    let mut second = 0.0;
    let mut t_prev = v;
    let mut f_prev = f_at_v;
    for j in (i + 1)..n {
        let t = nodes[j];
        if t <= v {
            continue;
        }
        let dt = t - t_prev;
        let first = first_prev + 0.5 * (f_prev + f[j]) * dt;
        second += 0.5 * (first_prev + first) * dt;
        sink(j, second);
        first_prev = first;
        t_prev = t;
        f_prev = f[j];
    }
    second
}

/// Runs the iteration until successive omegas differ by less than `tol`.
pub fn beta_iterate(rho: f64, delta: f64, grid_size: usize, tol: f64, max_iter: usize) -> Result<ThresholdResult> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let mut it = BetaIteration::new(rho, delta, grid_size)?;
    let mut omegas: Vec<f64> = Vec::new();
    loop {
        let omega = it.advance()?;
        omegas.push(omega);
        let k = omegas.len();
        if k >= 2 && (omegas[k - 1] - omegas[k - 2]).abs() < tol {
            break;
        }
        if k >= max_iter {
            return Err(Error::IterationLimit {
                iterations: k,
                previous: if k >= 2 { omegas[k - 2] } else { f64::NAN },
                last: omegas[k - 1],
            });
        }
    }
    let psi = *omegas.last().unwrap();
    let limit_profile = it.profile_on(psi, grid_size)?;
    Ok(ThresholdResult { psi, iterations: omegas.len(), omega_sequence: omegas, limit_profile })
}

/// `Psi(rho, delta)` with the default grid and stopping rule.
pub fn psi(rho: f64, delta: f64) -> Result<f64> {
    beta_iterate(rho, delta, DEFAULT_GRID, DEFAULT_TOL, DEFAULT_MAX_ITER).map(|r| r.psi)
}

/// Independent computation of `Psi` by shooting.
///
/// In reversed time `u = -w` the limit profile solves
/// `Y'' = -max(Y, F(u))`, `Y(0) = 0`, and first becomes stationary exactly
/// when it reaches 1. The initial slope is bisected until that happens; the
/// elapsed `u` is returned.
pub fn psi_oracle_bvp(rho: f64, delta: f64, mesh: usize) -> Result<f64> {
    check_rho(rho)?;
    check_delta(delta)?;
    if mesh < 256 {
        return Err(Error::Domain(format!("mesh must be at least 256, got {mesh}")));
    }
    let shooter = Shooter::new(rho, delta, mesh);
    let mut lo = 0.0;
    let mut hi = 1.0 + rho;
    let mut grow = 0;
    while shooter.peak(hi).0 <= 1.0 {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 40 {
            return Err(Error::Oracle("could not bracket the shooting slope".into()));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if shooter.peak(mid).0 > 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let (peak, at) = shooter.peak(0.5 * (lo + hi));
    if (peak - 1.0).abs() > 1e-6 || !at.is_finite() {
        return Err(Error::Oracle(format!("shooting converged to peak {peak} at {at}")));
    }
    Ok(at)
}

struct Shooter {
    forcing: Forcing,
    knots: Vec<f64>,
    mesh: usize,
}

impl Shooter {
    const SPAN: f64 = FRAC_PI_2 + 0.5;

    fn new(rho: f64, delta: f64, mesh: usize) -> Self {
        let forcing = Forcing::new(rho, delta);
        let mut knots = vec![0.0, Self::SPAN];
        for w in forcing.kinks() {
            let u = -w;
            if u > 0.0 && u < Self::SPAN {
                knots.push(u);
            }
        }
        knots.sort_by(f64::total_cmp);
        knots.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        Self { forcing, knots, mesh }
    }

    fn accel(&self, u: f64, y: f64) -> f64 {
        -y.max(self.forcing.at(-u))
    }

    /// Value and location of the first stationary point for initial slope `s`;
    /// `(inf, inf)` if none occurs on the span.
    fn peak(&self, slope: f64) -> (f64, f64) {
        let (mut y, mut yp) = (0.0_f64, slope);
        if slope <= 0.0 {
            return (0.0, 0.0);
        }
        for piece in self.knots.windows(2) {
            let (a, b) = (piece[0], piece[1]);
            let steps = ((b - a) / Self::SPAN * self.mesh as f64).ceil().max(1.0) as usize;
            let h = (b - a) / steps as f64;
            // evaluate the forcing inside the piece only, so kinks sit on step ends
            for k in 0..steps {
                let u = a + h * k as f64;
                let mid = |du: f64| (u + du).clamp(a, b);
                let k1y = yp;
                let k1v = self.accel(mid(0.0), y);
                let k2y = yp + 0.5 * h * k1v;
                let k2v = self.accel(mid(0.5 * h), y + 0.5 * h * k1y);
                let k3y = yp + 0.5 * h * k2v;
                let k3v = self.accel(mid(0.5 * h), y + 0.5 * h * k2y);
                let k4y = yp + h * k3v;
                let k4v = self.accel(mid(h), y + h * k3y);
                let y1 = y + h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
                let yp1 = yp + h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
                if yp1 <= 0.0 {
                    let a0 = self.accel(mid(0.0), y);
                    let a1 = self.accel(mid(h), y1);
                    // Hermite cubic for y' using y'' at both ends; y' is decreasing here
                    let dy = |s: f64| hermite(yp, a0, yp1, a1, h, s);
                    let root = poly::bisect(dy, 0.0, h, yp);
                    let val = hermite(y, yp, y1, yp1, h, root);
                    return (val, u + root);
                }
                y = y1;
                yp = yp1;
            }
        }
        (f64::INFINITY, f64::INFINITY)
    }
}

/// Cubic Hermite interpolant on `[0, h]` evaluated at `s`.
pub(crate) fn hermite(y0: f64, d0: f64, y1: f64, d1: f64, h: f64, s: f64) -> f64 {
    let x = s / h;
    let h00 = (1.0 + 2.0 * x) * (1.0 - x) * (1.0 - x);
    let h10 = x * (1.0 - x) * (1.0 - x);
    let h01 = x * x * (3.0 - 2.0 * x);
    let h11 = x * x * (x - 1.0);
    h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1
}

/// Unique `g` in `[sqrt 2, pi/2]` with `psi(1, g) = g`, by bisection to `tol`.
pub fn gamma_constant(tol: f64) -> Result<f64> {
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("tolerance must be positive, got {tol}")));
    }
    let gap = |g: f64| psi(1.0, g).map(|p| p - g);
    let (mut lo, mut hi) = (SQRT_2, FRAC_PI_2);
    if gap(lo)? <= 0.0 {
        return Ok(lo);
    }
    if gap(hi)? >= 0.0 {
        return Ok(hi);
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if gap(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `psi(1, tau_m) + theta(tau_m)`: semicycles no longer than this keep an
/// oscillatory solution of a normalized equation bounded.
pub fn semicycle_threshold(tau_m: f64) -> Result<f64> {
    check_delta(tau_m)?;
    Ok(psi(1.0, tau_m)? + theta_unchecked(tau_m))
}
