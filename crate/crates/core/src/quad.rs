//! Gauss–Legendre rules and adaptive one-dimensional quadrature.

use crate::scalar::C64;

/// Nodes and weights of the `m`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; m];
    let mut weights = vec![0.0; m];
    let mf = m as f64;
    for i in 0..m.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (mf + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=m {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            let p = if m == 0 { 1.0 } else if m == 1 { x } else { p1 };
            let pm1 = if m == 1 { 1.0 } else { p0 };
            dp = mf * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[m - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[m - 1 - i] = w;
    }
    (nodes, weights)
}

/// Gauss–Legendre rule mapped to `[a, b]`.
pub fn gauss_legendre_on(m: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (x, w) = gauss_legendre(m);
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    (
        x.iter().map(|t| c + h * t).collect(),
        w.iter().map(|v| h * v).collect(),
    )
}

fn gl16(f: &dyn Fn(f64) -> C64, a: f64, b: f64, rule: &(Vec<f64>, Vec<f64>)) -> C64 {
    let h = 0.5 * (b - a);
    let c = 0.5 * (b + a);
    rule.0
        .iter()
        .zip(&rule.1)
        .map(|(x, w)| f(c + h * x) * (h * w))
        .sum()
}

/// Adaptive bisection with a 16-point rule on each panel.
///
/// A panel is accepted when its estimate and the sum over its two halves
/// differ by less than `abs_tol`; the tolerance is split between halves.
pub fn adaptive(f: &dyn Fn(f64) -> C64, a: f64, b: f64, abs_tol: f64) -> C64 {
    let rule = gauss_legendre(16);
    let whole = gl16(f, a, b, &rule);
    adaptive_rec(f, a, b, whole, abs_tol, &rule, 0)
}

fn adaptive_rec(
    f: &dyn Fn(f64) -> C64,
    a: f64,
    b: f64,
    whole: C64,
    tol: f64,
    rule: &(Vec<f64>, Vec<f64>),
    depth: u32,
) -> C64 {
    let m = 0.5 * (a + b);
    let left = gl16(f, a, m, rule);
    let right = gl16(f, m, b, rule);
    let split = left + right;
    if (split - whole).norm() <= tol || depth >= 40 {
        return split;
    }
    adaptive_rec(f, a, m, left, 0.5 * tol, rule, depth + 1)
        + adaptive_rec(f, m, b, right, 0.5 * tol, rule, depth + 1)
}

/// Integral over `[0, ∞)` of a function with at least Gaussian-type decay,
/// truncated where `bound(t)` (an upper bound for `|f|` on `[t, ∞)` times the
/// tail length) drops below `abs_tol`.
pub fn half_line(f: &dyn Fn(f64) -> C64, tail_bound: &dyn Fn(f64) -> f64, abs_tol: f64) -> C64 {
    let mut upper = 1.0;
    while tail_bound(upper) > 0.1 * abs_tol && upper < 1e8 {
        upper *= 2.0;
    }
    let mut total = C64::new(0.0, 0.0);
    let mut lo = 0.0;
    let width = upper / 64.0;
    while lo < upper {
        let hi = (lo + width).min(upper);
        total += adaptive(f, lo, hi, 0.5 * abs_tol * (hi - lo) / upper);
        lo = hi;
    }
    total
}
