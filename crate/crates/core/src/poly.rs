//! Dense real polynomials in a local variable, stored lowest degree first.
//!
//! Every segment of a [`PiecewiseSignal`](crate::signals::PiecewiseSignal) is
//! one of these, written in `u = t - left_breakpoint`.

/// Horner evaluation.
pub fn eval(coeffs: &[f64], u: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |acc, &c| acc * u + c)
}

pub fn derivative(coeffs: &[f64]) -> Vec<f64> {
    coeffs.iter().enumerate().skip(1).map(|(k, &c)| c * k as f64).collect()
}

/// Antiderivative vanishing at `u = 0`.
pub fn antiderivative(coeffs: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(coeffs.len() + 1);
    out.push(0.0);
    out.extend(coeffs.iter().enumerate().map(|(k, &c)| c / (k + 1) as f64));
    out
}

/// Exact integral over `[a, b]`.
pub fn integrate(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let anti = antiderivative(coeffs);
    eval(&anti, b) - eval(&anti, a)
}

pub fn multiply(a: &[f64], b: &[f64]) -> Vec<f64> {
    if a.is_empty() || b.is_empty() {
        return Vec::new();
    }
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Re-expands `q(u)` as a polynomial in `v` where `u = v + shift`.
pub fn shift(coeffs: &[f64], shift: f64) -> Vec<f64> {
    // Taylor expansion about `shift` via repeated synthetic division.
    let mut work = coeffs.to_vec();
    let n = work.len();
    for i in 0..n {
        for j in (i..n - 1).rev() {
            work[j] += shift * work[j + 1];
        }
    }
    work
}

/// Substitutes `u = k v`, i.e. returns coefficients `c_j k^j`.
pub fn scale_argument(coeffs: &[f64], k: f64) -> Vec<f64> {
    let mut factor = 1.0;
    coeffs
        .iter()
        .map(|&c| {
            let out = c * factor;
            factor *= k;
            out
        })
        .collect()
}

/// Degree after trimming trailing exact zeros; `None` for the zero polynomial.
pub fn degree(coeffs: &[f64]) -> Option<usize> {
    coeffs.iter().rposition(|&c| c != 0.0)
}

/// All real roots of `coeffs` in `[a, b]`, ascending.
///
/// Critical points are isolated recursively from the derivative, so the
/// polynomial is monotone between consecutive candidates and each sign change
/// is refined by bisection. Roots of even multiplicity are caught when a
/// critical value is exactly zero or within `1e-14` of it relative to the
/// coefficient scale.
pub fn roots_in(coeffs: &[f64], a: f64, b: f64) -> Vec<f64> {
    if !(a <= b) {
        return Vec::new();
    }
    let deg = match degree(coeffs) {
        None => return Vec::new(),
        Some(d) => d,
    };
    let coeffs = &coeffs[..=deg];
    if deg == 0 {
        return Vec::new();
    }
    if deg == 1 {
        let r = -coeffs[0] / coeffs[1];
        return if r >= a && r <= b { vec![r] } else { Vec::new() };
    }
    let scale = coeffs.iter().fold(0.0_f64, |m, c| m.max(c.abs()));
    let touch_tol = 1e-14 * scale.max(1.0);
    let mut knots = vec![a];
    knots.extend(roots_in(&derivative(coeffs), a, b));
    knots.push(b);
    let mut roots: Vec<f64> = Vec::new();
    let push = |r: f64, roots: &mut Vec<f64>| {
        if roots.last().is_none_or(|&last| (r - last).abs() > 1e-13 * (1.0 + r.abs())) {
            roots.push(r);
        }
    };
    for w in knots.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let (flo, fhi) = (eval(coeffs, lo), eval(coeffs, hi));
        if flo == 0.0 || flo.abs() <= touch_tol && is_critical(coeffs, lo) {
            push(lo, &mut roots);
        }
        if flo * fhi < 0.0 {
            push(bisect(|u| eval(coeffs, u), lo, hi, flo), &mut roots);
        }
    }
    let fb = eval(coeffs, b);
    if fb == 0.0 || fb.abs() <= touch_tol && is_critical(coeffs, b) {
        push(b, &mut roots);
    }
    roots
}

fn is_critical(coeffs: &[f64], u: f64) -> bool {
    let d = derivative(coeffs);
    let scale = d.iter().fold(0.0_f64, |m, c| m.max(c.abs())).max(1.0);
    eval(&d, u).abs() <= 1e-10 * scale
}

/// Bisection on a bracket with a known sign at `lo`; stops at floating-point
/// resolution.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, flo: f64) -> f64 {
    let lo_positive = flo > 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return mid;
        }
        if (fm > 0.0) == lo_positive {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Maximum of `|q|` over `[a, b]`, from endpoints and interior critical points.
pub fn max_abs_on(coeffs: &[f64], a: f64, b: f64) -> f64 {
    let mut best = eval(coeffs, a).abs().max(eval(coeffs, b).abs());
    for r in roots_in(&derivative(coeffs), a, b) {
        best = best.max(eval(coeffs, r).abs());
    }
    best
}

/// Maximum and minimum of `q` over `[a, b]`.
pub fn range_on(coeffs: &[f64], a: f64, b: f64) -> (f64, f64) {
    let mut lo = eval(coeffs, a).min(eval(coeffs, b));
    let mut hi = eval(coeffs, a).max(eval(coeffs, b));
    for r in roots_in(&derivative(coeffs), a, b) {
        let v = eval(coeffs, r);
        lo = lo.min(v);
        hi = hi.max(v);
    }
    (lo, hi)
}
