//! Exact evaluation of S'(n, m, theta) = sum_{k>=m} c(n,k) theta^k / (theta)_n
//! by the Stirling-free three-term recursion, its derivative companion, and a
//! big-rational brute-force oracle.

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

pub const DEFAULT_RECURSION_CAP: u64 = 20_000;
pub const BRUTEFORCE_CAP: u64 = 60;

/// One evaluation point (n, m, theta), public indexing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub n: u64,
    pub m: u64,
    pub theta: f64,
}

impl Params {
    pub fn new(n: u64, m: u64, theta: f64) -> Result<Self> {
        if m > n {
            return domain(format!("need m <= n, got n={n}, m={m}"));
        }
        if !(theta > 0.0) || !theta.is_finite() {
            return domain(format!("need a finite theta > 0, got {theta}"));
        }
        Ok(Self { n, m, theta })
    }
}

/// Which of S' and T' = 1 - S' was computed directly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    S,
    T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Recurrence,
    Asymptotic,
    Bruteforce,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub s_prime: f64,
    pub t_prime: f64,
    pub primary_branch: Branch,
    pub method: Method,
    pub error_estimate: f64,
}

impl EvalResult {
    /// Builds the pair from the directly computed member.
    pub fn from_primary(branch: Branch, value: f64, method: Method, error_estimate: f64) -> Self {
        let value = value.clamp(0.0, 1.0);
        let (s_prime, t_prime) = match branch {
            Branch::S => (value, 1.0 - value),
            Branch::T => (1.0 - value, value),
        };
        Self { s_prime, t_prime, primary_branch: branch, method, error_estimate }
    }

    /// The directly computed (smaller, more accurate) member.
    pub fn primary(&self) -> f64 {
        match self.primary_branch {
            Branch::S => self.s_prime,
            Branch::T => self.t_prime,
        }
    }
}

/// Everything one recursion pass yields at (n, m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecurrenceValues {
    pub branch: Branch,
    /// S' or T' according to `branch`.
    pub value: f64,
    /// S^' or T^ = F_n - S^' according to `branch`.
    pub hat: f64,
    /// F_n = sum_{j<n} 1/(theta + j).
    pub harmonic: f64,
}

impl RecurrenceValues {
    pub fn s_prime(&self) -> f64 {
        match self.branch {
            Branch::S => self.value,
            Branch::T => 1.0 - self.value,
        }
    }

    pub fn s_hat(&self) -> f64 {
        match self.branch {
            Branch::S => self.hat,
            Branch::T => self.harmonic - self.hat,
        }
    }

    /// dS'/dtheta, formed on the computed branch to avoid cancellation.
    pub fn derivative(&self) -> f64 {
        match self.branch {
            Branch::S => self.hat - self.value * self.harmonic,
            Branch::T => self.value * self.harmonic - self.hat,
        }
    }
}

/// Runs the recursion on a fixed branch. S' uses S'(r,0)=1, S'(r,c)=0 for c>r;
/// T' uses T'(r,0)=0, T'(r,c)=1 for c>r. Only the band of columns that can
/// still influence (n, m) is updated.
pub fn recurrence_on_branch(params: Params, branch: Branch) -> RecurrenceValues {
    let Params { n, m, theta } = params;
    let cols = m as usize;
    let (zero_col, above) = match branch {
        Branch::S => (1.0, 0.0),
        Branch::T => (0.0, 1.0),
    };
    let mut val = vec![above; cols + 1];
    val[0] = zero_col;
    let mut hat = vec![0.0; cols + 1];
    let mut harmonic = 0.0;
    for r in 0..n {
        let rf = r as f64;
        let denom = theta + rf;
        let lo = (m + r + 1).saturating_sub(n).max(1) as usize;
        let hi = (r + 1).min(m) as usize;
        for c in (lo..=hi).rev() {
            let (old, old_hat) = if c as u64 == r + 1 {
                match branch {
                    Branch::S => (0.0, 0.0),
                    Branch::T => (1.0, harmonic),
                }
            } else {
                (val[c], hat[c])
            };
            hat[c] = (rf * old_hat + theta * hat[c - 1] + val[c - 1]) / denom;
            val[c] = (rf * old + theta * val[c - 1]) / denom;
            debug_assert!(val[c] >= 0.0 && val[c] <= 1.0 + 1e-12);
        }
        harmonic += 1.0 / denom;
        if branch == Branch::S {
            hat[0] = harmonic;
        }
    }
    let (value, hat_v) = if m > n {
        (above, if branch == Branch::T { harmonic } else { 0.0 })
    } else {
        (val[cols], hat[cols])
    };
    RecurrenceValues { branch, value, hat: hat_v, harmonic }
}

/// Cheap a-priori guess of whether S' > 1/2 at this point.
pub(crate) fn predict_branch(params: Params) -> Branch {
    let Params { n, m, theta } = params;
    if m <= 1 {
        return Branch::T;
    }
    if m >= n {
        let log_s = m as f64 * theta.ln() - crate::special::lpoch(theta, n);
        return if log_s > (0.5f64).ln() { Branch::T } else { Branch::S };
    }
    match crate::saddle::leading_estimate(n, m, theta) {
        Some(est) if est > 0.5 => Branch::T,
        Some(_) => Branch::S,
        None => {
            // Ewens mean of the number of classes as a fallback
            if theta * crate::special::psi_n(0, theta + n as f64) - theta * crate::special::psi_n(0, theta)
                > m as f64
            {
                Branch::T
            } else {
                Branch::S
            }
        }
    }
}

/// Full recursion pass with branch prediction and cap check.
pub fn recurrence(params: Params, cap: u64) -> Result<RecurrenceValues> {
    let params = Params::new(params.n, params.m, params.theta)?;
    if params.n > cap {
        return Err(Error::CapExceeded { what: "exact recursion", n: params.n, limit: cap });
    }
    Ok(recurrence_on_branch(params, predict_branch(params)))
}

/// S'(n, m, theta) by the exact recursion (default cap).
pub fn s_prime_recursive(params: Params) -> Result<EvalResult> {
    let r = recurrence(params, DEFAULT_RECURSION_CAP)?;
    let err = 4.0 * f64::EPSILON * params.n.max(1) as f64 * r.value;
    Ok(EvalResult::from_primary(r.branch, r.value, Method::Recurrence, err))
}

/// S^'(n, m, theta) = sum_{k>=m} k c(n,k) theta^(k-1) / (theta)_n.
pub fn s_hat_recursive(params: Params) -> Result<f64> {
    Ok(recurrence(params, DEFAULT_RECURSION_CAP)?.s_hat())
}

/// dS'/dtheta.
pub fn s_prime_derivative(params: Params) -> Result<f64> {
    Ok(recurrence(params, DEFAULT_RECURSION_CAP)?.derivative())
}

/// (n S'(n,m) + theta S'(n,m-1)) / ((theta+n) S'(n+1,m)) - 1 for values from any method.
pub fn recursion_residual(
    n: u64,
    m: u64,
    theta: f64,
    s_nm: f64,
    s_nm1: f64,
    s_n1m: f64,
) -> Result<f64> {
    if m < 1 || m > n {
        return domain(format!("residual needs 1 <= m <= n, got n={n}, m={m}"));
    }
    if s_n1m == 0.0 {
        return domain("residual undefined: S'(n+1, m) = 0");
    }
    let nf = n as f64;
    Ok((nf * s_nm + theta * s_nm1) / ((theta + nf) * s_n1m) - 1.0)
}

/// Unsigned Stirling numbers of the first kind c(n, k), k = 0..=n.
pub fn stirling_first_row(n: u64) -> Vec<BigUint> {
    let mut row = vec![BigUint::one()];
    for r in 0..n {
        let mut next = vec![BigUint::zero(); row.len() + 1];
        for (k, c) in row.iter().enumerate() {
            next[k + 1] += c;
            next[k] += c * BigUint::from(r);
        }
        row = next;
    }
    row
}

fn check_bruteforce(n: u64, m: u64, theta: &BigRational) -> Result<()> {
    if n > BRUTEFORCE_CAP {
        return Err(Error::CapExceeded { what: "brute-force oracle", n, limit: BRUTEFORCE_CAP });
    }
    if m > n {
        return domain(format!("need m <= n, got n={n}, m={m}"));
    }
    if !theta.is_positive() {
        return domain("need theta > 0");
    }
    Ok(())
}

fn split(theta: &BigRational) -> (BigInt, BigInt) {
    (theta.numer().clone(), theta.denom().clone())
}

fn rising_denominator(n: u64, p: &BigInt, q: &BigInt) -> BigInt {
    (0..n).fold(BigInt::one(), |acc, j| acc * (p + q * BigInt::from(j)))
}

/// Exact S' for rational theta = p/q: sum_{k>=m} c(n,k) p^k q^(n-k) / prod_{j<n}(p + j q).
pub fn s_prime_bruteforce_rational(n: u64, m: u64, theta: &BigRational) -> Result<BigRational> {
    check_bruteforce(n, m, theta)?;
    let (p, q) = split(theta);
    let row = stirling_first_row(n);
    let mut num = BigInt::zero();
    for k in m..=n {
        let c = BigInt::from(row[k as usize].clone());
        num += c * num_traits::pow(p.clone(), k as usize) * num_traits::pow(q.clone(), (n - k) as usize);
    }
    Ok(BigRational::new(num, rising_denominator(n, &p, &q)))
}

/// Exact S^' for rational theta: sum_{k>=m} k c(n,k) p^(k-1) q^(n-k+1) / prod_{j<n}(p + j q).
pub fn s_hat_bruteforce_rational(n: u64, m: u64, theta: &BigRational) -> Result<BigRational> {
    check_bruteforce(n, m, theta)?;
    let (p, q) = split(theta);
    let row = stirling_first_row(n);
    let mut num = BigInt::zero();
    for k in m.max(1)..=n {
        let c = BigInt::from(row[k as usize].clone()) * BigInt::from(k);
        num += c
            * num_traits::pow(p.clone(), (k - 1) as usize)
            * num_traits::pow(q.clone(), (n - k + 1) as usize);
    }
    Ok(BigRational::new(num, rising_denominator(n, &p, &q)))
}

/// Brute force at the exact rational value of the f64 theta.
pub fn s_prime_bruteforce(params: Params) -> Result<BigRational> {
    let theta = BigRational::from_float(params.theta)
        .ok_or_else(|| Error::Domain(format!("theta {} is not finite", params.theta)))?;
    s_prime_bruteforce_rational(params.n, params.m, &theta)
}

/// Brute-force S^' at the exact rational value of the f64 theta, rounded to f64.
pub fn s_hat_bruteforce(params: Params) -> Result<f64> {
    use num_traits::ToPrimitive;
    let theta = BigRational::from_float(params.theta)
        .ok_or_else(|| Error::Domain(format!("theta {} is not finite", params.theta)))?;
    Ok(s_hat_bruteforce_rational(params.n, params.m, &theta)?.to_f64().unwrap_or(f64::NAN))
}

/// Brute-force S' rounded to f64, packaged as an evaluation result.
pub fn eval_bruteforce(params: Params) -> Result<EvalResult> {
    use num_traits::ToPrimitive;
    let exact = s_prime_bruteforce(params)?;
    let s = exact.to_f64().unwrap_or(f64::NAN);
    let t = (BigRational::one() - exact).to_f64().unwrap_or(f64::NAN);
    let branch = if s <= 0.5 { Branch::S } else { Branch::T };
    let mut r = EvalResult::from_primary(branch, if s <= 0.5 { s } else { t }, Method::Bruteforce, 0.0);
    r.error_estimate = f64::EPSILON * r.primary();
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::ToPrimitive;

    fn p(n: u64, m: u64, theta: f64) -> Params {
        Params::new(n, m, theta).unwrap()
    }

    fn rat(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    #[test]
    fn initial_values() {
        let r = s_prime_recursive(p(2, 2, 3.0)).unwrap();
        assert!((r.s_prime - 0.75).abs() < 1e-15);
        assert_eq!(s_prime_recursive(p(5, 0, 7.0)).unwrap().s_prime, 1.0);
        assert!((s_hat_recursive(p(2, 2, 1.0)).unwrap() - 1.0).abs() < 1e-15);
        assert!((s_hat_recursive(p(1, 1, 4.0)).unwrap() - 0.25).abs() < 1e-15);
        assert!((s_prime_derivative(p(2, 2, 3.0)).unwrap() - 1.0 / 16.0).abs() < 1e-15);
    }

    #[test]
    fn both_branches_agree_with_oracle() {
        for n in 0..=12u64 {
            for m in 0..=n {
                let exact = s_prime_bruteforce_rational(n, m, &rat(7, 3)).unwrap().to_f64().unwrap();
                let hat = s_hat_bruteforce_rational(n, m, &rat(7, 3)).unwrap().to_f64().unwrap();
                for b in [Branch::S, Branch::T] {
                    let r = recurrence_on_branch(p(n, m, 7.0 / 3.0), b);
                    assert!((r.s_prime() - exact).abs() < 1e-14, "n={n} m={m} {b:?}");
                    assert!((r.s_hat() - hat).abs() < 1e-13 * hat.max(1.0), "hat n={n} m={m} {b:?}");
                }
            }
        }
    }

    #[test]
    fn bruteforce_examples() {
        assert_eq!(s_prime_bruteforce_rational(1, 1, &rat(5, 7)).unwrap(), BigRational::one());
        assert_eq!(s_prime_bruteforce_rational(3, 3, &rat(2, 1)).unwrap(), rat(1, 3));
        let v = s_prime_bruteforce(p(25, 10, 5.16527)).unwrap().to_f64().unwrap();
        assert!((v - 0.5).abs() < 1e-5);
        assert!(s_prime_bruteforce(p(61, 3, 1.0)).is_err());
    }

    #[test]
    fn stirling_row_small() {
        let row: Vec<u64> = stirling_first_row(4).iter().map(|c| c.to_u64().unwrap()).collect();
        assert_eq!(row, vec![0, 6, 11, 6, 1]);
    }

    #[test]
    fn example_two_value() {
        let r = s_prime_recursive(p(100, 50, 38.2489082)).unwrap();
        assert!((r.s_prime - 0.5000001).abs() < 2e-6);
        assert!(s_prime_derivative(p(100, 50, 38.2489)).unwrap() > 0.0);
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let (n, m, t) = (25, 10, 5.16527);
        let h = 1e-5;
        let fd = (s_prime_recursive(p(n, m, t + h)).unwrap().s_prime
            - s_prime_recursive(p(n, m, t - h)).unwrap().s_prime)
            / (2.0 * h);
        let d = s_prime_derivative(p(n, m, t)).unwrap();
        assert!(((d - fd) / d).abs() < 1e-6);
    }

    #[test]
    fn residual_of_exact_values() {
        let (n, m, t) = (50, 25, 10.0);
        let a = s_prime_recursive(p(n, m, t)).unwrap().s_prime;
        let b = s_prime_recursive(p(n, m - 1, t)).unwrap().s_prime;
        let c = s_prime_recursive(p(n + 1, m, t)).unwrap().s_prime;
        assert!(recursion_residual(n, m, t, a, b, c).unwrap().abs() < 1e-13);
        assert!(recursion_residual(n, m, t, a, b, 0.0).is_err());
    }

    #[test]
    fn cap_is_enforced() {
        assert!(matches!(recurrence(p(30, 3, 1.0), 20), Err(Error::CapExceeded { .. })));
    }
}
