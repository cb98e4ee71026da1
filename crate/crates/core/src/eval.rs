//! Method selection: closed forms at the edges of the triangle, the exact
//! recursion up to a cap, the large-n expansion above it.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::exact::{
    eval_bruteforce, predict_branch, recurrence_on_branch, s_hat_bruteforce, Branch, EvalResult, Method, Params,
    BRUTEFORCE_CAP, DEFAULT_RECURSION_CAP,
};
use crate::series::{Expansion, DEFAULT_TERMS};
use crate::special::lpoch;

pub const RECURSION_CAP_ENV: &str = "STIRLING_CDF_RECURSION_CAP";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    #[default]
    Auto,
    Recurrence,
    Asymptotic,
    Bruteforce,
}

/// Recursion cap from the environment, or the default.
pub fn recursion_cap() -> u64 {
    std::env::var(RECURSION_CAP_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .unwrap_or(DEFAULT_RECURSION_CAP)
}

/// The method `Auto` resolves to at this n.
pub fn resolve(method: MethodChoice, n: u64) -> MethodChoice {
    match method {
        MethodChoice::Auto if n <= recursion_cap() => MethodChoice::Recurrence,
        MethodChoice::Auto => MethodChoice::Asymptotic,
        other => other,
    }
}

/// S' and T' at an edge of the triangle, where no sum is needed.
fn closed_form(params: Params) -> Option<(EvalResult, f64)> {
    let Params { n, m, theta } = params;
    if m <= 1 && (m == 0 || n >= 1) {
        return Some((EvalResult::from_primary(Branch::T, 0.0, Method::Recurrence, 0.0), 0.0));
    }
    if m == n {
        // theta^n / (theta)_n
        let log_s = n as f64 * theta.ln() - lpoch(theta, n);
        let s = log_s.exp();
        let harmonic: f64 = (0..n).map(|j| 1.0 / (theta + j as f64)).sum();
        let deriv = s * (n as f64 / theta - harmonic);
        let err = 4.0 * f64::EPSILON * n as f64;
        let r = if s <= 0.5 {
            EvalResult::from_primary(Branch::S, s, Method::Recurrence, err * s)
        } else {
            let t = -log_s.exp_m1();
            EvalResult::from_primary(Branch::T, t, Method::Recurrence, err * t)
        };
        return Some((r, deriv));
    }
    None
}

/// How one fixed (n, m) is evaluated; the expansion is built once.
#[derive(Debug, Clone)]
pub struct Evaluator {
    pub n: u64,
    pub m: u64,
    engine: Engine,
}

#[derive(Debug, Clone)]
enum Engine {
    ClosedForm,
    Recurrence,
    Asymptotic(Box<Expansion>, usize),
    Bruteforce,
}

impl Evaluator {
    pub fn new(n: u64, m: u64, method: MethodChoice, terms: usize) -> Result<Self> {
        if m > n {
            return domain(format!("need m <= n, got n={n}, m={m}"));
        }
        let engine = if m <= 1 || m == n {
            Engine::ClosedForm
        } else {
            match resolve(method, n) {
                MethodChoice::Recurrence | MethodChoice::Auto => Engine::Recurrence,
                MethodChoice::Asymptotic => Engine::Asymptotic(Box::new(Expansion::new(n - 1, m - 1)?), terms),
                MethodChoice::Bruteforce => {
                    if n > BRUTEFORCE_CAP {
                        return Err(Error::CapExceeded { what: "brute force", n, limit: BRUTEFORCE_CAP });
                    }
                    Engine::Bruteforce
                }
            }
        };
        Ok(Self { n, m, engine })
    }

    pub fn method(&self) -> Method {
        match self.engine {
            Engine::ClosedForm | Engine::Recurrence => Method::Recurrence,
            Engine::Asymptotic(..) => Method::Asymptotic,
            Engine::Bruteforce => Method::Bruteforce,
        }
    }

    /// The expansion behind an asymptotic evaluator.
    pub fn expansion(&self) -> Option<&Expansion> {
        match &self.engine {
            Engine::Asymptotic(e, _) => Some(e),
            _ => None,
        }
    }

    pub fn evaluate(&self, theta: f64) -> Result<EvalResult> {
        let params = Params::new(self.n, self.m, theta)?;
        match &self.engine {
            Engine::ClosedForm => Ok(closed_form(params).expect("edge of the triangle").0),
            Engine::Recurrence => {
                let r = recurrence_on_branch(params, predict_branch(params));
                let err = 4.0 * f64::EPSILON * params.n as f64 * r.value;
                Ok(EvalResult::from_primary(r.branch, r.value, Method::Recurrence, err))
            }
            Engine::Asymptotic(e, terms) => Ok(e.evaluate(theta, *terms)?.result),
            Engine::Bruteforce => eval_bruteforce(params),
        }
    }

    /// S' and dS'/dtheta. The recursion supplies the derivative directly; the
    /// expansion uses a central difference of the primary branch.
    pub fn evaluate_with_derivative(&self, theta: f64) -> Result<(EvalResult, f64)> {
        let params = Params::new(self.n, self.m, theta)?;
        match &self.engine {
            Engine::ClosedForm => Ok(closed_form(params).expect("edge of the triangle")),
            Engine::Recurrence => {
                let r = recurrence_on_branch(params, predict_branch(params));
                let err = 4.0 * f64::EPSILON * params.n as f64 * r.value;
                Ok((EvalResult::from_primary(r.branch, r.value, Method::Recurrence, err), r.derivative()))
            }
            Engine::Asymptotic(e, terms) => {
                let r = e.evaluate(theta, *terms)?.result;
                let h = 1e-5 * theta;
                let lo = e.evaluate(theta - h, *terms)?.result;
                let hi = e.evaluate(theta + h, *terms)?.result;
                let d = match r.primary_branch {
                    Branch::S => (hi.s_prime - lo.s_prime) / (2.0 * h),
                    Branch::T => (lo.t_prime - hi.t_prime) / (2.0 * h),
                };
                Ok((r, d))
            }
            Engine::Bruteforce => {
                let r = eval_bruteforce(params)?;
                let hat = s_hat_bruteforce(params)?;
                let harmonic: f64 = (0..params.n).map(|j| 1.0 / (theta + j as f64)).sum();
                Ok((r, hat - r.s_prime * harmonic))
            }
        }
    }
}

/// S'(n, m, theta) with the requested method.
pub fn evaluate(params: Params, method: MethodChoice, terms: usize) -> Result<EvalResult> {
    Evaluator::new(params.n, params.m, method, terms)?.evaluate(params.theta)
}

/// S' with the default method and term count.
pub fn s_prime(n: u64, m: u64, theta: f64) -> Result<EvalResult> {
    evaluate(Params::new(n, m, theta)?, MethodChoice::Auto, DEFAULT_TERMS)
}

/// S' and dS'/dtheta with the requested method.
pub fn evaluate_with_derivative(
    params: Params,
    method: MethodChoice,
    terms: usize,
) -> Result<(EvalResult, f64)> {
    Evaluator::new(params.n, params.m, method, terms)?.evaluate_with_derivative(params.theta)
}

/// Fu's F_s = ln(S'/(1 - S')), formed from whichever of S', T' was computed directly.
pub fn fu_fs_from(r: &EvalResult) -> f64 {
    match r.primary_branch {
        Branch::S => r.s_prime.ln() - (-r.s_prime).ln_1p(),
        Branch::T => (-r.t_prime).ln_1p() - r.t_prime.ln(),
    }
}

pub(crate) fn check_inversion_indices(n: u64, m: u64) -> Result<()> {
    if m < 2 || m >= n {
        return domain(format!(
            "inversion needs 2 <= m <= n-1 (S' is identically 1 for m <= 1), got n={n}, m={m}"
        ));
    }
    Ok(())
}
