//! Safeguarded Newton iteration on a positive half-line.

use crate::error::{Error, Result};

/// Solves F(x) = 0 for x > 0 where F is monotone (`increasing` gives its
/// direction) and `f` returns (F, F'). The root is kept inside [lo, hi]; any
/// Newton step leaving the bracket is replaced by a bisection step, geometric
/// when the bracket spans orders of magnitude.
pub(crate) fn newton_bracketed(
    f: impl Fn(f64) -> (f64, f64),
    mut lo: f64,
    mut hi: f64,
    x0: f64,
    increasing: bool,
    ftol: f64,
    what: &'static str,
) -> Result<f64> {
    let mut x = x0;
    if !(x > lo && x < hi) {
        x = bisection_point(lo, hi, x);
    }
    const MAX_ITER: usize = 300;
    for _ in 0..MAX_ITER {
        let (v, dv) = f(x);
        if v == 0.0 || v.abs() <= ftol {
            return Ok(x);
        }
        if (v < 0.0) == increasing {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = x - v / dv;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = bisection_point(lo, hi, x);
        }
        if (next - x).abs() <= 4.0 * f64::EPSILON * x.abs() {
            return Ok(next);
        }
        if hi.is_finite() && hi - lo <= 4.0 * f64::EPSILON * hi {
            return Ok(0.5 * (lo + hi));
        }
        x = next;
    }
    Err(Error::Convergence { what, iterations: MAX_ITER })
}

pub(crate) fn bisection_point(lo: f64, hi: f64, x: f64) -> f64 {
    if !hi.is_finite() {
        return 2.0 * x.max(lo).max(f64::MIN_POSITIVE);
    }
    if lo <= 0.0 {
        return 0.25 * if x > 0.0 { x.min(hi) } else { hi };
    }
    if hi / lo > 4.0 {
        (lo * hi).sqrt()
    } else {
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_square_root() {
        let r = newton_bracketed(|x| (x * x - 2.0, 2.0 * x), 0.0, f64::INFINITY, 1.0, true, 1e-15, "t").unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn survives_bad_newton_steps() {
        // atan has Newton overshoot far from the root
        let r = newton_bracketed(
            |x| ((x - 3.0).atan(), 1.0 / (1.0 + (x - 3.0).powi(2))),
            0.0,
            100.0,
            40.0,
            true,
            1e-15,
            "t",
        )
        .unwrap();
        assert!((r - 3.0).abs() < 1e-12);
    }

    #[test]
    fn decreasing_function_with_tiny_root() {
        let r = newton_bracketed(|x| (-x.ln() - 100.0, -1.0 / x), 0.0, 1.0, 0.5, false, 1e-14, "t").unwrap();
        assert!(((r / (-100f64).exp()) - 1.0).abs() < 1e-12);
    }
}
