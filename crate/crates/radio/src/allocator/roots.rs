//! Scalar inverses used by the closed-form radio KKT points.
//!
//! All three are solved in the variable `x = ln(1 + omega)`, where they are
//! smooth and monotone, with a bracketed Newton iteration that falls back to
//! bisection whenever a step leaves the bracket.

use std::f64::consts::LN_2;

const MAX_ITERS: usize = 300;

/// Newton's method on an increasing or decreasing `f` with a sign change in
/// `[lo, hi]`. `f_df` returns `(f(x), f'(x))`.
fn bracketed_newton(f_df: impl Fn(f64) -> (f64, f64), mut lo: f64, mut hi: f64, x0: f64) -> f64 {
    let increasing = f_df(hi).0 > f_df(lo).0;
    let mut x = x0.clamp(lo, hi);
    for _ in 0..MAX_ITERS {
        let (f, df) = f_df(x);
        if f == 0.0 {
            return x;
        }
        if (f < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let step = f / df;
        let mut next = x - step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * next.abs().max(1e-300) || hi - lo <= f64::EPSILON * hi {
            return next;
        }
        x = next;
    }
    x
}

/// Root of a continuous monotone `f` bracketed by `[a, b]`, where `fa` and
/// `fb` are `f(a)` and `f(b)` with opposite signs, by the Illinois variant of
/// regula falsi. Returns the final bracket `(a, b)`: `f(a)` keeps the sign of
/// the original `fa` (or is zero) and likewise for `b`.
pub(crate) fn illinois(
    mut f: impl FnMut(f64) -> f64,
    mut a: f64,
    mut b: f64,
    mut fa: f64,
    mut fb: f64,
    rtol: f64,
) -> (f64, f64) {
    if fa == 0.0 {
        return (a, a);
    }
    if fb == 0.0 {
        return (b, b);
    }
    let mut last_side = 0i8;
    for _ in 0..MAX_ITERS {
        if (b - a).abs() <= rtol * a.abs().max(b.abs()) {
            break;
        }
        let mut x = (a * fb - b * fa) / (fb - fa);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        if !(x > lo && x < hi) {
            x = 0.5 * (a + b);
        }
        let fx = f(x);
        if fx == 0.0 {
            return (x, x);
        }
        if (fx < 0.0) == (fb < 0.0) {
            b = x;
            fb = fx;
            if last_side == -1 {
                fa *= 0.5;
            }
            last_side = -1;
        } else {
            a = x;
            fa = fx;
            if last_side == 1 {
                fb *= 0.5;
            }
            last_side = 1;
        }
    }
    (a, b)
}

/// `h(omega) = log2(1 + omega) - omega / ((1 + omega) ln 2)`, increasing on
/// `omega > 0` from 0.
pub(crate) fn h(omega: f64) -> f64 {
    let x = omega.ln_1p();
    (x + (-x).exp_m1()) / LN_2
}

/// `k(omega) = ((1 + omega) ln(1 + omega) - omega) / ln 2`, increasing on
/// `omega > 0` from 0.
#[cfg(test)]
pub(crate) fn k(omega: f64) -> f64 {
    let x = omega.ln_1p();
    (x * x.exp() - x.exp_m1()) / LN_2
}

/// Solves `h(omega) = y` for `y > 0`.
#[cfg(test)]
pub(crate) fn h_inv(y: f64) -> f64 {
    let target = y * LN_2;
    let hi = target + 1.0;
    let x = bracketed_newton(|x| (x + (-x).exp_m1() - target, -(-x).exp_m1()), 0.0, hi, hi);
    x.exp_m1()
}

/// Solves `k(omega) = y` for `y > 0`.
pub(crate) fn k_inv(y: f64) -> f64 {
    let target = y * LN_2;
    let hi = 1.0 + target.ln_1p();
    let x = bracketed_newton(|x| (x * x.exp() - x.exp_m1() - target, x * x.exp()), 0.0, hi, hi);
    x.exp_m1()
}

/// Solves `ln(1 + u) / u = q` for `0 < q < 1`, returning `u > 0`.
pub(crate) fn log_ratio_inv(q: f64) -> f64 {
    let phi = |x: f64| if x == 0.0 { 1.0 } else { x / x.exp_m1() };
    let mut hi = 1.0;
    while phi(hi) > q {
        hi *= 2.0;
    }
    let x = bracketed_newton(
        |x| {
            if x == 0.0 {
                return (1.0 - q, -0.5);
            }
            let e = x.exp_m1();
            (x / e - q, (e - x * x.exp()) / (e * e))
        },
        0.0,
        hi,
        0.0,
    );
    x.exp_m1()
}
