//! Regularized incomplete beta function, its inverse, and the finite
//! binomial-sum form used as an oracle at integer parameters.

use super::gamma::log_binom_density;
use crate::error::{domain, Error, Result};

const TINY: f64 = 1e-300;
pub const BINOMIAL_SUM_CAP: u64 = 120;

/// Parameters of I_x(p, q).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaParams {
    pub x: f64,
    pub p: f64,
    pub q: f64,
}

impl BetaParams {
    pub fn new(x: f64, p: f64, q: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&x) || !(p > 0.0) || !(q > 0.0) || !p.is_finite() || !q.is_finite()
        {
            return domain(format!("incomplete beta needs 0 <= x <= 1, p, q > 0; got x={x}, p={p}, q={q}"));
        }
        Ok(Self { x, p, q })
    }
}

/// I_x(p, q).
pub fn inc_beta(x: f64, p: f64, q: f64) -> Result<f64> {
    let b = BetaParams::new(x, p, q)?;
    Ok(inc_beta_pair(b.x, 1.0 - b.x, b.p, b.q)?.0)
}

/// (I_x(p,q), 1 - I_x(p,q)) with y = 1 - x passed explicitly so callers that
/// know y more accurately than 1 - x keep that accuracy.
pub(crate) fn inc_beta_pair(x: f64, y: f64, p: f64, q: f64) -> Result<(f64, f64)> {
    if x <= 0.0 {
        return Ok((0.0, 1.0));
    }
    if y <= 0.0 {
        return Ok((1.0, 0.0));
    }
    if x * (p + q) > p {
        let v = lower_cf(y, x, q, p)?;
        Ok((1.0 - v, v))
    } else {
        let v = lower_cf(x, y, p, q)?;
        Ok((v, 1.0 - v))
    }
}

/// Continued fraction for I_x(p, q), used on the side x <= p/(p+q).
fn lower_cf(x: f64, y: f64, p: f64, q: f64) -> Result<f64> {
    let n = p + q;
    let front = log_binom_density(p, n, x, y);
    if front < -745.0 {
        return Ok(0.0);
    }
    let cap = (20.0 * n.sqrt()).max(100.0) as usize;
    let qap = p + 1.0;
    let qam = p - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - n * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    let mut done = false;
    for k in 1..=cap {
        let kf = k as f64;
        let k2 = 2.0 * kf;
        let aa = kf * (q - kf) * x / ((qam + k2) * (p + k2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(p + kf) * (n + kf) * x / ((p + k2) * (qap + k2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            done = true;
            break;
        }
    }
    if !done {
        return Err(Error::Convergence { what: "incomplete beta continued fraction", iterations: cap });
    }
    // x^p y^q / (p B(p,q)) = density(p; p+q, x) * q / (p+q)
    Ok((front.exp() * q / n * h).clamp(0.0, 1.0))
}

/// (1+tau)^(-n) sum_{j=m}^{n} C(n,j) tau^j, the integer-parameter form of
/// I_{tau/(1+tau)}(m, n-m+1). Limited to n <= 120 so every term stays
/// well inside double range.
pub fn inc_beta_binomial_sum(tau: f64, m: u64, n: u64) -> Result<f64> {
    if n > BINOMIAL_SUM_CAP {
        return Err(Error::CapExceeded { what: "binomial-sum oracle", n, limit: BINOMIAL_SUM_CAP });
    }
    if m > n || !(tau > 0.0) || !tau.is_finite() {
        return domain(format!("binomial sum needs 0 <= m <= n and tau > 0; got m={m}, n={n}, tau={tau}"));
    }
    let x = tau / (1.0 + tau);
    let y = 1.0 / (1.0 + tau);
    let mut binom = 1.0f64;
    let mut sum = 0.0;
    for j in 0..=n {
        if j > 0 {
            binom = binom * (n - j + 1) as f64 / j as f64;
        }
        if j >= m {
            sum += binom * x.powi(j as i32) * y.powi((n - j) as i32);
        }
    }
    Ok(sum)
}

/// x in (0,1) with I_x(p, q) = s.
pub fn inc_beta_inverse(s: f64, p: f64, q: f64) -> Result<f64> {
    Ok(inc_beta_inverse_pair(s, p, q)?.0)
}

/// Inverse returning (x, 1 - x), each accurate relative to itself.
pub(crate) fn inc_beta_inverse_pair(s: f64, p: f64, q: f64) -> Result<(f64, f64)> {
    if !(s > 0.0 && s < 1.0) {
        return domain(format!("inc_beta_inverse needs 0 < s < 1, got {s}"));
    }
    if !(p > 0.0) || !(q > 0.0) || !p.is_finite() || !q.is_finite() {
        return domain(format!("inc_beta_inverse needs p, q > 0; got p={p}, q={q}"));
    }
    if s <= 0.5 {
        solve_lower(s, p, q)
    } else {
        let (y, x) = solve_lower(1.0 - s, q, p)?;
        Ok((x, y))
    }
}

fn initial_guess(s: f64, p: f64, q: f64) -> f64 {
    if p >= 1.0 && q >= 1.0 {
        // normal approximation, lower tail
        let t = (-2.0 * s.ln()).sqrt();
        let z = -((2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t);
        let lambda = (z * z - 3.0) / 6.0;
        let h = 2.0 / (1.0 / (2.0 * p - 1.0) + 1.0 / (2.0 * q - 1.0));
        let w = z * (lambda + h).sqrt() / h
            - (1.0 / (2.0 * q - 1.0) - 1.0 / (2.0 * p - 1.0)) * (lambda + 5.0 / 6.0 - 2.0 / (3.0 * h));
        let x = p / (p + q * (2.0 * w).exp());
        if x > 0.0 && x < 1.0 {
            return x;
        }
    }
    let lp = (p / (p + q)).ln();
    let lq = (q / (p + q)).ln();
    let t = (p * lp).exp() / p;
    let u = (q * lq).exp() / q;
    let w = t + u;
    if s < t / w {
        (p * w * s).powf(1.0 / p)
    } else {
        1.0 - (q * w * (1.0 - s)).powf(1.0 / q)
    }
}

/// Newton on ln I_x(p,q) - ln s, safeguarded by a bracket, for s <= 1/2.
fn solve_lower(s: f64, p: f64, q: f64) -> Result<(f64, f64)> {
    let n = p + q;
    let ls = s.ln();
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    let mut x = initial_guess(s, p, q).clamp(1e-300, 1.0 - 1e-16);
    let mut y = 1.0 - x;
    let mut newton = 0;
    for _ in 0..250 {
        let (i, _) = inc_beta_pair(x, y, p, q)?;
        let g = if i > 0.0 { i.ln() - ls } else { f64::NEG_INFINITY };
        if g.abs() < 1e-14 {
            return Ok((x, y));
        }
        if g < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let mut next = f64::NAN;
        if g.is_finite() && newton < 50 {
            newton += 1;
            // d ln I / dx = x^(p-1) y^(q-1) / (B I)
            let dens = (log_binom_density(p, n, x, y) + (p * q / n).ln() - x.ln() - y.ln()).exp();
            let dg = dens / i;
            if dg > 0.0 && dg.is_finite() {
                next = x - g / dg;
            }
        }
        if !(next > lo && next < hi) {
            next = if lo == 0.0 {
                x * 1e-3
            } else if hi / lo > 4.0 {
                (lo * hi).sqrt()
            } else {
                0.5 * (lo + hi)
            };
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x {
            return Ok((next, 1.0 - next));
        }
        x = next;
        y = 1.0 - x;
    }
    Err(Error::Convergence { what: "incomplete beta inversion", iterations: 250 })
}
