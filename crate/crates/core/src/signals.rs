//! Piecewise-polynomial time signals and uniform grid functions.
//!
//! A [`PiecewiseSignal`] carries the coefficient `p(t)`, the delay `tau(t)` and
//! the initial history of a delay problem. Segment `i` covers
//! `[breakpoints[i], breakpoints[i + 1])` and stores its polynomial in the
//! local variable `u = t - breakpoints[i]`, lowest degree first. Below the
//! first breakpoint the signal equals `left`, at or above the last one it
//! equals `right`. Evaluation is right-continuous at every breakpoint.
//!
//! The JSON form is exactly the serde form of the struct:
//!
//! ```json
//! {"breakpoints": [0.0, 1.0, 2.5], "segments": [[1.0], [0.0, 2.0]], "left": 1.0, "right": 3.0}
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseSignal {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<Vec<f64>>,
    pub left: f64,
    pub right: f64,
}

/// Which piece of a signal a time falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Piece {
    Left,
    Segment(usize),
    Right,
}

impl PiecewiseSignal {
    /// Validating constructor.
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Vec<f64>>, left: f64, right: f64) -> Result<Self> {
        let sig = Self { breakpoints, segments, left, right };
        sig.validate()?;
        Ok(sig)
    }

    /// A signal equal to `value` everywhere.
    pub fn constant(value: f64) -> Self {
        Self { breakpoints: Vec::new(), segments: Vec::new(), left: value, right: value }
    }

    /// Piecewise-constant signal: `values[i]` on `[breakpoints[i], breakpoints[i+1])`.
    pub fn piecewise_constant(breakpoints: Vec<f64>, values: &[f64], left: f64, right: f64) -> Result<Self> {
        Self::new(breakpoints, values.iter().map(|&v| vec![v]).collect(), left, right)
    }

    /// Builds a signal from polynomials written in the global variable `t`.
    pub fn from_global(breakpoints: Vec<f64>, global: &[Vec<f64>], left: f64, right: f64) -> Result<Self> {
        if global.len() + 1 != breakpoints.len() {
            return Err(Error::Domain(format!(
                "{} breakpoints need {} segments, got {}",
                breakpoints.len(),
                breakpoints.len().saturating_sub(1),
                global.len()
            )));
        }
        let segments = global.iter().zip(&breakpoints).map(|(c, &b)| poly::shift(c, b)).collect();
        Self::new(breakpoints, segments, left, right)
    }

    pub fn validate(&self) -> Result<()> {
        let expected = self.breakpoints.len().saturating_sub(1);
        if self.segments.len() != expected {
            return Err(Error::Domain(format!(
                "{} breakpoints need {} segments, got {}",
                self.breakpoints.len(),
                expected,
                self.segments.len()
            )));
        }
        if self.breakpoints.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("breakpoints must be finite".into()));
        }
        if let Some(w) = self.breakpoints.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::Domain(format!("breakpoints must be strictly increasing ({} then {})", w[0], w[1])));
        }
        if self.segments.iter().any(|s| s.is_empty() || s.iter().any(|c| !c.is_finite())) {
            return Err(Error::Domain("every segment needs at least one finite coefficient".into()));
        }
        if !self.left.is_finite() || !self.right.is_finite() {
            return Err(Error::Domain("extension values must be finite".into()));
        }
        Ok(())
    }

    pub fn piece_at(&self, t: f64) -> Piece {
        let n = self.breakpoints.len();
        if n == 0 || t < self.breakpoints[0] {
            return Piece::Left;
        }
        if t >= self.breakpoints[n - 1] {
            return Piece::Right;
        }
        // last breakpoint <= t
        let idx = self.breakpoints.partition_point(|&b| b <= t) - 1;
        Piece::Segment(idx)
    }

    /// Evaluates the polynomial of `piece` at `t`, even if `t` lies slightly
    /// outside that piece.
    pub fn eval_piece(&self, piece: Piece, t: f64) -> f64 {
        match piece {
            Piece::Left => self.left,
            Piece::Right => self.right,
            Piece::Segment(i) => poly::eval(&self.segments[i], t - self.breakpoints[i]),
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.eval_piece(self.piece_at(t), t)
    }

    /// Derivative at `t` (right derivative at breakpoints).
    pub fn eval_derivative(&self, t: f64) -> f64 {
        match self.piece_at(t) {
            Piece::Segment(i) => poly::eval(&poly::derivative(&self.segments[i]), t - self.breakpoints[i]),
            _ => 0.0,
        }
    }

    /// Evaluates at `t` using the piece that contains `reference` whenever `t`
    /// lies within `slack` of that piece. Used to keep a whole integration
    /// step on one side of a breakpoint despite rounding.
    pub fn eval_near(&self, t: f64, reference: f64, slack: f64) -> f64 {
        let piece = self.piece_at(reference);
        let (lo, hi) = self.piece_bounds(piece);
        if t >= lo - slack && t <= hi + slack {
            self.eval_piece(piece, t)
        } else {
            self.eval(t)
        }
    }

    /// Closed bounds of a piece; tails are unbounded.
    pub fn piece_bounds(&self, piece: Piece) -> (f64, f64) {
        match piece {
            Piece::Left => (f64::NEG_INFINITY, self.breakpoints.first().copied().unwrap_or(f64::INFINITY)),
            Piece::Right => (self.breakpoints.last().copied().unwrap_or(f64::NEG_INFINITY), f64::INFINITY),
            Piece::Segment(i) => (self.breakpoints[i], self.breakpoints[i + 1]),
        }
    }

    /// The pieces overlapping `[lo, hi]`, each with its clipped sub-interval.
    pub fn pieces_on(&self, lo: f64, hi: f64) -> Vec<(Piece, f64, f64)> {
        let mut out = Vec::new();
        let mut push = |piece: Piece| {
            let (a, b) = self.piece_bounds(piece);
            let (a, b) = (a.max(lo), b.min(hi));
            if a < b || (a == b && lo == hi) {
                out.push((piece, a, b));
            }
        };
        push(Piece::Left);
        for i in 0..self.segments.len() {
            push(Piece::Segment(i));
        }
        if !self.breakpoints.is_empty() {
            push(Piece::Right);
        }
        out
    }

    /// Polynomial of a piece in the global variable `t`, as local coefficients
    /// relative to `origin`.
    pub fn piece_poly_about(&self, piece: Piece, origin: f64) -> Vec<f64> {
        match piece {
            Piece::Left => vec![self.left],
            Piece::Right => vec![self.right],
            Piece::Segment(i) => poly::shift(&self.segments[i], origin - self.breakpoints[i]),
        }
    }

    /// Maximum of `|value|` over `[lo, hi]`. Infinite ends pull in the tails.
    pub fn esssup_abs(&self, lo: f64, hi: f64) -> Result<f64> {
        let (min, max) = self.range(lo, hi)?;
        Ok(min.abs().max(max.abs()))
    }

    /// Minimum and maximum over `[lo, hi]`.
    pub fn range(&self, lo: f64, hi: f64) -> Result<(f64, f64)> {
        if !(lo <= hi) {
            return Err(Error::Domain(format!("empty interval [{lo}, {hi}]")));
        }
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for (piece, a, b) in self.pieces_on(lo, hi) {
            let (pmin, pmax) = match piece {
                Piece::Left => (self.left, self.left),
                Piece::Right => (self.right, self.right),
                Piece::Segment(i) => {
                    let o = self.breakpoints[i];
                    poly::range_on(&self.segments[i], a - o, b - o)
                }
            };
            min = min.min(pmin);
            max = max.max(pmax);
        }
        Ok((min, max))
    }

    /// Largest value over `[lo, +inf)`; for delay signals this is `tau_m`.
    pub fn sup_from(&self, lo: f64) -> f64 {
        self.range(lo, f64::INFINITY).map(|(_, max)| max).unwrap_or(self.right)
    }

    /// Exact integral of `weight(t) * signal(t)` over `[a, b]`, where `weight`
    /// is a polynomial in the global variable `t` given about `origin`.
    pub fn integrate_weighted(&self, weight_about_origin: &[f64], origin: f64, a: f64, b: f64) -> f64 {
        if !(a < b) {
            return 0.0;
        }
        self.pieces_on(a, b)
            .into_iter()
            .map(|(piece, lo, hi)| {
                let base = self.piece_poly_about(piece, origin);
                let integrand = poly::multiply(&base, weight_about_origin);
                poly::integrate(&integrand, lo - origin, hi - origin)
            })
            .sum()
    }

    /// Same breakpoints, each piece mapped through `f` applied to its
    /// polynomial (and to the tail constants).
    pub fn map_pieces(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self {
            breakpoints: self.breakpoints.clone(),
            segments: self.segments.iter().map(|s| f(s)).collect(),
            left: f(&[self.left])[0],
            right: f(&[self.right])[0],
        }
    }

    /// The signal `t -> self(k t)`.
    pub fn compose_scale(&self, k: f64) -> Self {
        Self {
            breakpoints: self.breakpoints.iter().map(|b| b / k).collect(),
            segments: self.segments.iter().map(|s| poly::scale_argument(s, k)).collect(),
            left: self.left,
            right: self.right,
        }
    }
}

/// A function sampled on a uniform grid over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    lo: f64,
    hi: f64,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(lo: f64, hi: f64, values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::Domain("a grid function needs at least two samples".into()));
        }
        if !(hi > lo) {
            return Err(Error::Domain(format!("grid domain [{lo}, {hi}] must have positive length")));
        }
        Ok(Self { lo, hi, values })
    }

    pub fn from_fn(lo: f64, hi: f64, n: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = (hi - lo) / (n.max(2) - 1) as f64;
        let values = (0..n).map(|i| f(node(lo, hi, h, n, i))).collect();
        Self::new(lo, hi, values)
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / (self.values.len() - 1) as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        node(self.lo, self.hi, self.spacing(), self.values.len(), i)
    }

    /// Linear interpolation inside, constant extension outside.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.values.len();
        if t <= self.lo {
            return self.values[0];
        }
        if t >= self.hi {
            return self.values[n - 1];
        }
        let h = self.spacing();
        let i = (((t - self.lo) / h).floor() as usize).min(n - 2);
        let frac = (t - self.node(i)) / h;
        self.values[i] + (self.values[i + 1] - self.values[i]) * frac
    }
}

fn node(lo: f64, hi: f64, h: f64, n: usize, i: usize) -> f64 {
    if i + 1 == n {
        hi
    } else {
        lo + h * i as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    #[test]
    fn constant_signal_everywhere() {
        let s = PiecewiseSignal::constant(1.0);
        for t in [-1e6, 0.0, 3.5, 1e9] {
            assert_eq!(s.eval(t), 1.0);
        }
    }

    #[test]
    fn right_continuity_at_breakpoint() {
        let eps = 0.25;
        let a = 3.0;
        let s = PiecewiseSignal::piecewise_constant(vec![0.0, eps, a], &[-1.0, 1.0], 1.0, 1.0).unwrap();
        assert_eq!(s.eval(eps), 1.0);
        assert_eq!(s.eval(eps - 1e-12), -1.0);
        assert_eq!(s.eval(-0.1), 1.0);
    }

    #[test]
    fn affine_delay_segment() {
        // tau(t) = t - (2nB - sqrt2) on [2nB, 2nB + sqrt2] with n = 0
        let s = PiecewiseSignal::new(vec![0.0, SQRT_2], vec![vec![SQRT_2, 1.0]], 0.0, 0.0).unwrap();
        assert!((s.eval(0.0) - SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn esssup_examples() {
        let one = PiecewiseSignal::constant(1.0);
        assert_eq!(one.esssup_abs(0.0, 10.0).unwrap(), 1.0);
        let lin = PiecewiseSignal::new(vec![0.0, 3.0], vec![vec![0.0, 2.0]], 0.0, 0.0).unwrap();
        assert!((lin.esssup_abs(0.0, 3.0).unwrap() - 6.0).abs() < 1e-14);
        let pm = PiecewiseSignal::piecewise_constant(vec![0.0, 0.1, 3.2], &[-1.0, 1.0], 1.0, 1.0).unwrap();
        assert_eq!(pm.esssup_abs(0.0, 3.2).unwrap(), 1.0);
        assert!(one.esssup_abs(2.0, 1.0).is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(PiecewiseSignal::new(vec![0.0, 0.0], vec![vec![1.0]], 0.0, 0.0).is_err());
        assert!(PiecewiseSignal::new(vec![0.0, 1.0], vec![], 0.0, 0.0).is_err());
        assert!(PiecewiseSignal::new(vec![0.0, 1.0], vec![vec![]], 0.0, 0.0).is_err());
    }

    #[test]
    fn global_form_round_trips() {
        // 1 - (t - 2)^2 / 2 on [1, 3]
        let s = PiecewiseSignal::from_global(vec![1.0, 3.0], &[vec![-1.0, 2.0, -0.5]], 0.0, 0.0).unwrap();
        assert!((s.eval(2.0) - 1.0).abs() < 1e-14);
        assert!((s.eval(1.0) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn scaled_composition() {
        let s = PiecewiseSignal::new(vec![0.0, 2.0], vec![vec![1.0, 0.5, 0.25]], 0.0, 7.0).unwrap();
        let k = 0.5;
        let c = s.compose_scale(k);
        for t in [0.0, 0.7, 3.9, 5.0] {
            assert!((c.eval(t) - s.eval(k * t)).abs() < 1e-13);
        }
    }

    #[test]
    fn weighted_integral_is_exact() {
        // integral_{0}^{2} (u) * 1 du = 2
        let s = PiecewiseSignal::constant(-1.0);
        let v = s.integrate_weighted(&[0.0, 1.0], 0.0, 0.0, 2.0);
        assert!((v + 2.0).abs() < 1e-14);
    }

    #[test]
    fn grid_function_interpolates_linearly() {
        let g = GridFunction::from_fn(-1.0, 1.0, 5, |t| 2.0 * t + 1.0).unwrap();
        assert!((g.eval(0.3) - 1.6).abs() < 1e-14);
        assert_eq!(g.eval(-5.0), -1.0);
        assert_eq!(g.eval(5.0), 3.0);
        assert!(GridFunction::new(0.0, 1.0, vec![1.0]).is_err());
    }

    fn arb_signal() -> impl Strategy<Value = PiecewiseSignal> {
        (1usize..6, proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 1..5), 5))
            .prop_flat_map(|(n, segs)| {
                (proptest::collection::vec(0.1f64..2.0, n), Just(segs[..n].to_vec()), -2.0f64..2.0, -2.0f64..2.0)
            })
            .prop_map(|(widths, segs, left, right)| {
                let mut bps = vec![-1.0];
                for w in widths {
                    let last = *bps.last().unwrap();
                    bps.push(last + w);
                }
                PiecewiseSignal::new(bps, segs, left, right).unwrap()
            })
    }

    proptest! {
        #[test]
        fn eval_matches_direct_polynomial(sig in arb_signal(), frac in 0.0f64..1.0, pick in 0usize..5) {
            let i = pick % sig.segments.len();
            let (a, b) = (sig.breakpoints[i], sig.breakpoints[i + 1]);
            let t = a + frac * (b - a) * 0.999_999;
            let u = t - a;
            let direct: f64 = sig.segments[i].iter().enumerate().map(|(k, c)| c * u.powi(k as i32)).sum();
            prop_assert!((sig.eval(t) - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
        }

        #[test]
        fn esssup_monotone_under_inclusion(sig in arb_signal(), a in -2.0f64..6.0, w1 in 0.0f64..3.0, w0 in 0.0f64..1.0, w2 in 0.0f64..1.0) {
            let inner = sig.esssup_abs(a, a + w1).unwrap();
            let outer = sig.esssup_abs(a - w0, a + w1 + w2).unwrap();
            prop_assert!(inner <= outer + 1e-12);
        }
    }
}
