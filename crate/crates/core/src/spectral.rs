//! Characteristic roots of `x''(t) = -/+ x(t - c)` through the Lambert W
//! function, and the semicycle length of the matching eigensolutions.

use std::f64::consts::{E, PI};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

const W_TOL: f64 = 1e-13;
const W_MAX_ITER: usize = 100;

/// Branch `k` of the Lambert W function: `w e^w = z`.
///
/// Initial guesses: near the branch point `-1/e` the square-root series, near
/// 0 the Taylor series, elsewhere the two-term logarithmic asymptotic
/// `L - ln L` with `L = ln z + 2 pi i k`. Halley's method polishes.
pub fn lambert_w(branch: i64, z: Complex64) -> Result<Complex64> {
    if !z.re.is_finite() || !z.im.is_finite() {
        return Err(Error::Domain(format!("argument must be finite, got {z}")));
    }
    if z == Complex64::new(0.0, 0.0) {
        return if branch == 0 {
            Ok(Complex64::new(0.0, 0.0))
        } else {
            Err(Error::Domain(format!("branch {branch} is singular at 0")))
        };
    }
    let mut w = initial_guess(branch, z);
    let scale = z.norm().max(1.0);
    for _ in 0..W_MAX_ITER {
        let ew = w.exp();
        let f = w * ew - z;
        if f.norm() <= W_TOL * scale {
            return Ok(w);
        }
        let wp1 = w + 1.0;
        let denom = ew * wp1 - (w + 2.0) * f / (2.0 * wp1);
        let step = f / denom;
        if !step.re.is_finite() || !step.im.is_finite() {
            break;
        }
        w -= step;
    }
    let residual = (w * w.exp() - z).norm();
    if residual <= 1e3 * W_TOL * scale {
        return Ok(w);
    }
    Err(Error::NonConvergence(format!("Lambert W branch {branch} at {z} stalled with residual {residual:e}")))
}

fn initial_guess(branch: i64, z: Complex64) -> Complex64 {
    let i = Complex64::i();
    let near_branch_point = (z + 1.0 / E).norm() < 0.3;
    if branch == 0 && near_branch_point {
        let p = (2.0 * (E * z + 1.0)).sqrt();
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    }
    if branch == 0 && z.norm() < 0.1 {
        return z - z * z + 1.5 * z * z * z;
    }
    if branch == 0 && z.norm() < 3.0 {
        return (1.0 + z).ln();
    }
    if branch == -1 && near_branch_point && z.im == 0.0 {
        let p = -(2.0 * (E * z + 1.0)).sqrt();
        return -1.0 + p - p * p / 3.0 + 11.0 / 72.0 * p * p * p;
    }
    let l1 = z.ln() + 2.0 * PI * branch as f64 * i;
    if l1.norm() < 1e-3 {
        return Complex64::new(0.0, 0.0);
    }
    l1 - l1.ln()
}

/// Sign of the coefficient in `x'' + sign * x(t - c) = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EquationSign {
    /// `p = +1`: characteristic function `lambda^2 + e^{-c lambda}`.
    Plus,
    /// `p = -1`: characteristic function `lambda^2 - e^{-c lambda}`.
    Minus,
}

impl EquationSign {
    fn factor(self) -> f64 {
        match self {
            Self::Plus => 1.0,
            Self::Minus => -1.0,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Self::Plus => '+',
            Self::Minus => '-',
        }
    }
}

impl std::str::FromStr for EquationSign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "+" | "plus" | "+1" | "1" => Ok(Self::Plus),
            "-" | "minus" | "-1" => Ok(Self::Minus),
            other => Err(Error::Domain(format!("sign must be + or -, got {other:?}"))),
        }
    }
}

/// A root of the characteristic function with the Lambert W branch and the
/// side (`+1` or `-1`) of the argument that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CharRoot {
    pub branch: i64,
    pub side: i8,
    pub lambda: Complex64,
    pub sign: EquationSign,
    pub residual: f64,
}

fn characteristic(lambda: Complex64, c: f64, sign: EquationSign) -> Complex64 {
    lambda * lambda + sign.factor() * (-c * lambda).exp()
}

fn characteristic_derivative(lambda: Complex64, c: f64, sign: EquationSign) -> Complex64 {
    2.0 * lambda - sign.factor() * c * (-c * lambda).exp()
}

/// `|lambda^2 + sign e^{-c lambda}|`.
pub fn residual(lambda: Complex64, c: f64, sign: EquationSign) -> f64 {
    characteristic(lambda, c, sign).norm()
}

fn polish(mut lambda: Complex64, c: f64, sign: EquationSign) -> Complex64 {
    for _ in 0..50 {
        let f = characteristic(lambda, c, sign);
        let df = characteristic_derivative(lambda, c, sign);
        if df.norm() == 0.0 {
            break;
        }
        let step = f / df;
        lambda -= step;
        if step.norm() <= 1e-16 * lambda.norm().max(1.0) {
            break;
        }
    }
    lambda
}

/// Roots with `Im lambda >= 0` for every branch in `branches` and both sides
/// of the argument, sorted by branch then side (`+` first).
///
/// With `u = c lambda / 2`: for `Plus`, `lambda^2 = -e^{-c lambda}` gives
/// `u e^u = +/- i c / 2`; for `Minus`, `u e^u = +/- c / 2`. Conjugate roots and
/// duplicates across branches are dropped.
pub fn char_roots(c: f64, sign: EquationSign, branches: std::ops::RangeInclusive<i64>) -> Result<Vec<CharRoot>> {
    if !(c > 0.0) || !c.is_finite() {
        return Err(Error::Domain(format!("delay must be positive, got {c}")));
    }
    let mut roots: Vec<CharRoot> = Vec::new();
    for branch in branches {
        for side in [1i8, -1] {
            let arg = match sign {
                EquationSign::Plus => Complex64::new(0.0, side as f64 * c / 2.0),
                EquationSign::Minus => Complex64::new(side as f64 * c / 2.0, 0.0),
            };
            let w = lambert_w(branch, arg)?;
            let lambda = polish(2.0 * w / c, c, sign);
            if lambda.im < -1e-12 {
                continue;
            }
            let lambda = if lambda.im.abs() <= 1e-12 { Complex64::new(lambda.re, 0.0) } else { lambda };
            if roots.iter().any(|r| (r.lambda - lambda).norm() < 1e-8) {
                continue;
            }
            roots.push(CharRoot { branch, side, lambda, sign, residual: residual(lambda, c, sign) });
        }
    }
    Ok(roots)
}

/// Half period `pi / |Im lambda|` of the eigensolution `Re e^{lambda t}`.
pub fn eigen_semicycle(root: &CharRoot) -> Result<f64> {
    if root.lambda.im == 0.0 {
        return Err(Error::Domain(format!("real root {} gives a nonoscillatory eigensolution", root.lambda.re)));
    }
    Ok(PI / root.lambda.im.abs())
}
