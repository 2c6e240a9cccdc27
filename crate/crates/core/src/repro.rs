//! Closed-form periodic-envelope solutions used as integrator oracles.
//!
//! * `Example2`: `x'' + p x = 0` with `p` switching between `-1` on
//!   `[nA, nA + eps]` and `+1` on `[nA + eps, (n + 1)A]`; semicycles of
//!   length `A = pi + eps - atan(tanh eps)`, amplitude factor
//!   `sqrt(sinh^2 eps + cosh^2 eps)` per semicycle.
//! * `Example3`: a sign-changing coefficient with delay up to `2 sqrt 2`;
//!   piecewise-quadratic semicycles of length `B = 2 sqrt 2 + 2 eps`,
//!   amplitude factor `1 + eps^2` per semicycle. Semicycle `n` occupies
//!   `[nB, (n + 1)B]`.
//! * `SinPi`: `y'' = y(t - pi)` solved by `sin`.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrator::DelayProblem;
use crate::poly;
use crate::signals::PiecewiseSignal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExampleKind {
    Example2,
    Example3,
    SinPi,
}

impl std::str::FromStr for ExampleKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "example2" => Ok(Self::Example2),
            "example3" => Ok(Self::Example3),
            "sin" | "sin_pi" => Ok(Self::SinPi),
            other => Err(Error::Domain(format!("unknown example {other:?} (expected example2, example3 or sin)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleSpec {
    pub which: ExampleKind,
    pub epsilon: f64,
    /// Number of semicycles to cover.
    pub periods: usize,
}

impl ExampleSpec {
    pub fn new(which: ExampleKind, epsilon: f64, periods: usize) -> Result<Self> {
        let spec = Self { which, epsilon, periods };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Domain(format!("epsilon must be nonnegative, got {}", self.epsilon)));
        }
        if self.periods == 0 {
            return Err(Error::Domain("periods must be at least 1".into()));
        }
        Ok(())
    }

    /// Length of one semicycle.
    pub fn semicycle_length(&self) -> f64 {
        match self.which {
            ExampleKind::Example2 => example2_length(self.epsilon),
            ExampleKind::Example3 => example3_length(self.epsilon),
            ExampleKind::SinPi => PI,
        }
    }

    /// Amplitude ratio between consecutive semicycles.
    pub fn growth_factor(&self) -> f64 {
        let e = self.epsilon;
        match self.which {
            ExampleKind::Example2 => e.sinh().hypot(e.cosh()),
            ExampleKind::Example3 => 1.0 + e * e,
            ExampleKind::SinPi => 1.0,
        }
    }

    /// End of the last requested semicycle.
    pub fn horizon(&self) -> f64 {
        self.periods as f64 * self.semicycle_length()
    }

    pub fn closed_form(&self, t: f64) -> f64 {
        match self.which {
            ExampleKind::Example2 => example2_closed_form(self.epsilon, t),
            ExampleKind::Example3 => example3_closed_form(self.epsilon, t),
            ExampleKind::SinPi => t.sin(),
        }
    }

    /// Times where the closed form switches formula, within the horizon.
    pub fn junctions(&self) -> Vec<f64> {
        let (len, offsets): (f64, Vec<f64>) = match self.which {
            ExampleKind::Example2 => (self.semicycle_length(), vec![0.0, self.epsilon]),
            ExampleKind::Example3 => {
                let e = self.epsilon;
                (self.semicycle_length(), vec![0.0, SQRT_2, SQRT_2 + e, SQRT_2 + 2.0 * e])
            }
            ExampleKind::SinPi => return Vec::new(),
        };
        let mut out = Vec::new();
        for n in 0..=self.periods {
            for &o in &offsets {
                let t = n as f64 * len + o;
                if t <= self.horizon() + 1e-12 && out.last().is_none_or(|&l: &f64| t > l) {
                    out.push(t);
                }
            }
        }
        out
    }

    /// Value and slope of the formulas just left and right of a junction,
    /// `((x-, x'-), (x+, x'+))`.
    pub fn one_sided(&self, t: f64) -> ((f64, f64), (f64, f64)) {
        const SIDE: f64 = 1e-9;
        let e = self.epsilon;
        match self.which {
            ExampleKind::Example2 => {
                (example2_piece(e, example2_locate(e, t - SIDE), t), example2_piece(e, example2_locate(e, t + SIDE), t))
            }
            ExampleKind::Example3 => {
                (example3_piece(e, example3_locate(e, t - SIDE), t), example3_piece(e, example3_locate(e, t + SIDE), t))
            }
            ExampleKind::SinPi => ((t.sin(), t.cos()), (t.sin(), t.cos())),
        }
    }
}

fn example2_length(e: f64) -> f64 {
    PI + e - e.tanh().atan()
}

fn example3_length(e: f64) -> f64 {
    2.0 * SQRT_2 + 2.0 * e
}

/// Piece `(n, k)` of `example2`: `k = 0` the hyperbolic stretch, `k = 1` the
/// trigonometric one. Returns value and slope at `t`.
fn example2_piece(e: f64, (n, k): (i64, usize), t: f64) -> (f64, f64) {
    let a = example2_length(e);
    let amp = e.sinh().hypot(e.cosh());
    let start = n as f64 * a;
    let sgn = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    match k {
        0 => {
            let c = sgn * amp.powi(n as i32);
            (c * (t - start).sinh(), c * (t - start).cosh())
        }
        _ => {
            let c = sgn * amp.powi(n as i32 + 1);
            let phase = t - start - e + e.tanh().atan();
            (c * phase.sin(), c * phase.cos())
        }
    }
}

fn example2_locate(e: f64, t: f64) -> (i64, usize) {
    let a = example2_length(e);
    let n = (t / a).floor() as i64;
    let k = if t - n as f64 * a < e { 0 } else { 1 };
    (n, k)
}

/// `example2` solution: `x(0) = 0`, `x'(0) = 1`.
pub fn example2_closed_form(epsilon: f64, t: f64) -> f64 {
    example2_piece(epsilon, example2_locate(epsilon, t), t).0
}

pub fn example2_closed_form_derivative(epsilon: f64, t: f64) -> f64 {
    example2_piece(epsilon, example2_locate(epsilon, t), t).1
}

/// Piece `(n, k)` of `example3` as a polynomial in the global `t`.
fn example3_poly(e: f64, (n, k): (i64, usize)) -> Vec<f64> {
    let b = example3_length(e);
    let start = n as f64 * b;
    let sgn = if n.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
    let g = 1.0 + e * e;
    let c = sgn * g.powi(n as i32);
    // local polynomials in u = t - origin
    let (origin, local): (f64, Vec<f64>) = match k {
        // 1 - (sqrt2 - u)^2 / 2 with u = t - start
        0 => (start, vec![0.0, SQRT_2, -0.5]),
        // 1 + u^2 / 2 with u = t - start - sqrt2
        1 => (start + SQRT_2, vec![1.0, 0.0, 0.5]),
        // 1 + eps^2/2 - u^2/2 + eps u with u = t - start - sqrt2 - eps
        2 => (start + SQRT_2 + e, vec![1.0 + 0.5 * e * e, e, -0.5]),
        // g (1 - u^2 / 2) with u = t - start - sqrt2 - 2 eps
        _ => (start + SQRT_2 + 2.0 * e, vec![g, 0.0, -0.5 * g]),
    };
    let scaled: Vec<f64> = local.iter().map(|v| v * c).collect();
    poly::shift(&scaled, -origin)
}

fn example3_piece(e: f64, piece: (i64, usize), t: f64) -> (f64, f64) {
    let q = example3_poly(e, piece);
    (poly::eval(&q, t), poly::eval(&poly::derivative(&q), t))
}

fn example3_offsets(e: f64) -> [f64; 4] {
    [0.0, SQRT_2, SQRT_2 + e, SQRT_2 + 2.0 * e]
}

fn example3_locate(e: f64, t: f64) -> (i64, usize) {
    let b = example3_length(e);
    let n = (t / b).floor() as i64;
    let u = t - n as f64 * b;
    let offs = example3_offsets(e);
    let k = (0..4).rev().find(|&k| u >= offs[k]).unwrap_or(0);
    (n, k)
}

/// `example3` solution: zero at `0` with slope `sqrt 2`, valued `-1` at
/// `-sqrt 2`. For negative `t` the same formula with negative `n` gives
/// the history.
pub fn example3_closed_form(epsilon: f64, t: f64) -> f64 {
    example3_piece(epsilon, example3_locate(epsilon, t), t).0
}

pub fn example3_closed_form_derivative(epsilon: f64, t: f64) -> f64 {
    example3_piece(epsilon, example3_locate(epsilon, t), t).1
}

/// Encodes coefficient, delay and initial data of an example.
pub fn build_example_problem(spec: &ExampleSpec) -> Result<DelayProblem> {
    spec.validate()?;
    match spec.which {
        ExampleKind::Example2 => build_example2(spec),
        ExampleKind::Example3 => build_example3(spec),
        ExampleKind::SinPi => build_sin_pi(),
    }
}

/// Closes consecutive pieces into a signal; pieces must tile their span.
fn assemble(pieces: Vec<(f64, f64, Vec<f64>)>, left: f64, right: f64) -> Result<PiecewiseSignal> {
    let mut bps: Vec<f64> = Vec::new();
    let mut segs = Vec::new();
    for (lo, hi, global) in pieces {
        if hi <= lo {
            continue;
        }
        match bps.last() {
            Some(&last) if last == lo => {}
            Some(&last) => {
                return Err(Error::Domain(format!("pieces leave a gap between {last} and {lo}")));
            }
            None => bps.push(lo),
        }
        segs.push(poly::shift(&global, lo));
        bps.push(hi);
    }
    PiecewiseSignal::new(bps, segs, left, right)
}

fn build_example2(spec: &ExampleSpec) -> Result<DelayProblem> {
    let e = spec.epsilon;
    let a = example2_length(e);
    let mut pieces = Vec::new();
    for n in 0..=spec.periods {
        // shared endpoints: (n + 1) a, not n a + a, so consecutive pieces meet exactly
        let (s, next) = (n as f64 * a, (n + 1) as f64 * a);
        pieces.push((s, s + e, vec![-1.0]));
        pieces.push((s + e, next, vec![1.0]));
    }
    let p = assemble(pieces, 1.0, 1.0)?;
    Ok(DelayProblem {
        p,
        tau: PiecewiseSignal::constant(0.0),
        start: 0.0,
        history: PiecewiseSignal::constant(0.0),
        initial_value: 0.0,
        initial_slope: 1.0,
    })
}

fn build_example3(spec: &ExampleSpec) -> Result<DelayProblem> {
    let e = spec.epsilon;
    let b = example3_length(e);
    let mut p_pieces = Vec::new();
    let mut tau_pieces = Vec::new();
    for n in 0..=spec.periods {
        let (s, next) = (n as f64 * b, (n + 1) as f64 * b);
        p_pieces.push((s, s + SQRT_2 + e, vec![-1.0]));
        p_pieces.push((s + SQRT_2 + e, next, vec![1.0]));
        // tau = t - c so that the delayed argument is the constant c
        tau_pieces.push((s, s + SQRT_2, vec![-(s - SQRT_2), 1.0]));
        tau_pieces.push((s + SQRT_2, s + SQRT_2 + 2.0 * e, vec![-(s + SQRT_2), 1.0]));
        tau_pieces.push((s + SQRT_2 + 2.0 * e, next, vec![-(s + SQRT_2 + 2.0 * e), 1.0]));
    }
    let p = assemble(p_pieces, -1.0, 1.0)?;
    let tau = assemble(tau_pieces, 0.0, 0.0)?;
    // history: the semicycle n = -1 of the closed form on [-B, 0]
    let offs = example3_offsets(e);
    let mut h_pieces = Vec::new();
    for k in 0..4 {
        let lo = -b + offs[k];
        let hi = if k == 3 { 0.0 } else { -b + offs[k + 1] };
        h_pieces.push((lo, hi, example3_poly(e, (-1, k))));
    }
    let history = assemble(h_pieces, 0.0, 0.0)?;
    Ok(DelayProblem { p, tau, start: 0.0, history, initial_value: 0.0, initial_slope: SQRT_2 })
}

/// `sin` on `[-pi, 0]` as degree-9 Taylor pieces, accurate to about 1e-14.
fn sin_history() -> Result<PiecewiseSignal> {
    const PIECES: usize = 16;
    let width = PI / PIECES as f64;
    let bps: Vec<f64> = (0..=PIECES).map(|i| -PI + width * i as f64).collect();
    let segs = bps[..PIECES]
        .iter()
        .map(|&c| {
            let (s, co) = c.sin_cos();
            let derivs = [s, co, -s, -co];
            let mut fact = 1.0;
            (0..10)
                .map(|j| {
                    if j > 0 {
                        fact *= j as f64;
                    }
                    derivs[j % 4] / fact
                })
                .collect()
        })
        .collect();
    PiecewiseSignal::new(bps, segs, 0.0, 0.0)
}

fn build_sin_pi() -> Result<DelayProblem> {
    Ok(DelayProblem {
        p: PiecewiseSignal::constant(-1.0),
        tau: PiecewiseSignal::constant(PI),
        start: 0.0,
        history: sin_history()?,
        initial_value: 0.0,
        initial_slope: 1.0,
    })
}
