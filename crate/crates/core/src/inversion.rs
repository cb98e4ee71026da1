//! Solving S'(n, m, theta) = s for theta: safeguarded Newton iteration on the
//! exact or asymptotic evaluator, the three-term asymptotic inversion in tau,
//! the transition value and Fu's F_s.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::eval::{check_inversion_indices, fu_fs_from, resolve, Evaluator, MethodChoice};
use crate::exact::{Branch, EvalResult, Method, BRUTEFORCE_CAP};
use crate::roots::bisection_point;
use crate::saddle::Saddle;
use crate::series::{g_values, Expansion, DEFAULT_TERMS};
use crate::special::inc_beta_inverse_pair;

pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_NEWTON_ITER: usize = 50;
/// Below this |f'| the CDF is treated as flat and the bracket is bisected.
const FLAT_DERIVATIVE: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InversionMethod {
    Newton,
    Asymptotic,
    /// Asymptotic seed refined by Newton on the asymptotic evaluator.
    Hybrid,
}

/// Which (n, m) feed the incomplete-beta seed and the phase map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SeedConvention {
    /// Public (n, m) in phi and chi, p = m, q = n - m + 1.
    #[default]
    Literal,
    /// Internal (n - 1, m - 1), i.e. the representation of S'(n, m) itself.
    Shifted,
}

/// Solve S' = value or T' = value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "branch", content = "value")]
pub enum Target {
    S(f64),
    T(f64),
}

impl Target {
    fn check(self) -> Result<Self> {
        let v = match self {
            Target::S(v) | Target::T(v) => v,
        };
        if !(v > 0.0 && v < 1.0) {
            return domain(format!("target must lie in (0, 1), got {v}"));
        }
        Ok(self)
    }

    /// The same equation on the branch whose target is at most 1/2.
    fn on_small_branch(self) -> (Branch, f64) {
        match self {
            Target::S(s) if s <= 0.5 => (Branch::S, s),
            Target::S(s) => (Branch::T, 1.0 - s),
            Target::T(t) if t <= 0.5 => (Branch::T, t),
            Target::T(t) => (Branch::S, 1.0 - t),
        }
    }

    /// |target / value - 1| on the branch the target was stated for.
    pub fn residual(self, r: &EvalResult) -> f64 {
        match self {
            Target::S(s) => (s / r.s_prime - 1.0).abs(),
            Target::T(t) => (t / r.t_prime - 1.0).abs(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Iterate {
    pub theta: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InversionResult {
    pub theta: f64,
    pub method: InversionMethod,
    pub iterations_or_terms: usize,
    /// |s / S'(theta) - 1| (or the T' form for a T' target).
    pub residual: f64,
    /// Evaluator used for `residual`.
    pub residual_method: Method,
    /// (tau0, tau1, tau2) as far as computed by the asymptotic inversion.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_terms: Option<Vec<f64>>,
    /// theta_j and their residuals; Newton iterates or asymptotic partial sums.
    pub history: Vec<Iterate>,
    pub near_transition: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOptions {
    pub tol: f64,
    pub method: MethodChoice,
    pub terms: usize,
    pub seed: SeedConvention,
    pub max_iter: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: DEFAULT_TOL,
            method: MethodChoice::Auto,
            terms: DEFAULT_TERMS,
            seed: SeedConvention::Literal,
            max_iter: MAX_NEWTON_ITER,
        }
    }
}

/// (x, 1 - x) solving the reduced equation I_x(p, q) = S-target.
fn reduced_solution(target: Target, p: f64, q: f64) -> Result<(f64, f64)> {
    match target.on_small_branch() {
        (Branch::S, s) => inc_beta_inverse_pair(s, p, q),
        (Branch::T, t) => {
            let (y, x) = inc_beta_inverse_pair(t, q, p)?;
            Ok((x, y))
        }
    }
}

/// theta_0 from the reduced equation, mapped through the phase relation.
pub fn newton_seed(n: u64, m: u64, target: Target, convention: SeedConvention) -> Result<f64> {
    check_inversion_indices(n, m)?;
    let target = target.check()?;
    let (sn, sm) = match convention {
        SeedConvention::Literal => (n, m),
        SeedConvention::Shifted => (n - 1, m - 1),
    };
    let (x, y) = reduced_solution(target, sm as f64, (sn - sm + 1) as f64)?;
    Saddle::new(sn, sm)?.theta_from_tau(x / y)
}

/// Newton iteration for S' = s with default options.
pub fn invert_newton(n: u64, m: u64, s: f64, tol: f64) -> Result<InversionResult> {
    invert_newton_with(n, m, Target::S(s), &NewtonOptions { tol, ..Default::default() })
}

/// Newton iteration for an S' or T' target. Above the recursion cap the
/// seed comes from the asymptotic inversion (method `hybrid`).
pub fn invert_newton_with(n: u64, m: u64, target: Target, opts: &NewtonOptions) -> Result<InversionResult> {
    check_inversion_indices(n, m)?;
    let target = target.check()?;
    let ev = Evaluator::new(n, m, opts.method, opts.terms)?;
    let (theta0, method) = if ev.method() == Method::Asymptotic && opts.method == MethodChoice::Auto {
        let a = invert_asymptotic_target(n, m, target, 3)?;
        (a.theta, InversionMethod::Hybrid)
    } else {
        let seed = newton_seed(n, m, target, opts.seed)
            .or_else(|_| crate::saddle::saddle_z0(n - 1, m - 1))?;
        (seed, InversionMethod::Newton)
    };
    let mut out = newton_loop(&ev, target, theta0, opts, None)?;
    out.method = method;
    Ok(out)
}

/// Exactly `steps` safeguarded Newton steps from the reduced-equation seed,
/// without a convergence test: theta_0 .. theta_steps and their residuals.
pub fn newton_iterates(n: u64, m: u64, target: Target, opts: &NewtonOptions, steps: usize) -> Result<Vec<Iterate>> {
    check_inversion_indices(n, m)?;
    let target = target.check()?;
    let ev = Evaluator::new(n, m, opts.method, opts.terms)?;
    let theta0 = newton_seed(n, m, target, opts.seed)?;
    Ok(newton_loop(&ev, target, theta0, opts, Some(steps))?.history)
}

fn newton_loop(
    ev: &Evaluator,
    target: Target,
    theta0: f64,
    opts: &NewtonOptions,
    fixed_steps: Option<usize>,
) -> Result<InversionResult> {
    let max_iter = fixed_steps.unwrap_or(opts.max_iter);
    let (branch, goal) = target.on_small_branch();
    // S' increases with theta, T' decreases
    let increasing = branch == Branch::S;
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut theta = theta0;
    let mut history = Vec::new();
    for iter in 0..=max_iter {
        let (r, ds) = ev.evaluate_with_derivative(theta)?;
        let delta = target.residual(&r);
        history.push(Iterate { theta, delta });
        let (value, slope) = match branch {
            Branch::S => (r.s_prime, ds),
            Branch::T => (r.t_prime, -ds),
        };
        let f = value - goal;
        let done = match fixed_steps {
            Some(k) => iter == k,
            None => delta <= opts.tol || f == 0.0,
        };
        if done {
            return finish(ev, target, theta, iter, history);
        }
        if iter == max_iter {
            break;
        }
        if (f < 0.0) == increasing {
            lo = lo.max(theta);
        } else {
            hi = hi.min(theta);
        }
        let mut next = theta - f / slope;
        if slope.abs() < FLAT_DERIVATIVE || !next.is_finite() || next <= lo || next >= hi {
            next = bisection_point(lo, hi, theta);
        }
        if fixed_steps.is_none() && (next - theta).abs() <= 4.0 * f64::EPSILON * theta {
            // theta is the root to working precision; the residual is the conditioning floor
            history.push(Iterate { theta: next, delta: target.residual(&ev.evaluate(next)?) });
            return finish(ev, target, next, iter + 1, history);
        }
        theta = next;
    }
    Err(Error::Convergence { what: "Newton inversion", iterations: max_iter })
}

/// Independent residual check where one is available.
fn residual_evaluator(n: u64, m: u64, used: Method) -> Result<Evaluator> {
    if n <= BRUTEFORCE_CAP {
        return Evaluator::new(n, m, MethodChoice::Bruteforce, DEFAULT_TERMS);
    }
    if used == Method::Asymptotic && resolve(MethodChoice::Auto, n) == MethodChoice::Recurrence {
        return Evaluator::new(n, m, MethodChoice::Recurrence, DEFAULT_TERMS);
    }
    Evaluator::new(n, m, MethodChoice::Auto, DEFAULT_TERMS)
}

fn finish(ev: &Evaluator, target: Target, theta: f64, iterations: usize, history: Vec<Iterate>) -> Result<InversionResult> {
    let check = residual_evaluator(ev.n, ev.m, ev.method())?;
    let residual = target.residual(&check.evaluate(theta)?);
    Ok(InversionResult {
        theta,
        method: InversionMethod::Newton,
        iterations_or_terms: iterations,
        residual,
        residual_method: check.method(),
        tau_terms: None,
        history,
        near_transition: false,
    })
}

/// E_r(xi) = sum_{k>=r} (-1)^k xi^(k-r) / k!, i.e. (e^-xi - sum_{k<r} (-xi)^k/k!) / xi^r.
fn exp_remainder(r: u32, xi: f64) -> f64 {
    if xi.abs() <= 1.0 {
        let mut term = 1.0 / (1..=r).map(f64::from).product::<f64>();
        if r % 2 == 1 {
            term = -term;
        }
        let mut sum = term;
        for k in (r + 1)..(r + 30) {
            term *= -xi / f64::from(k);
            sum += term;
            if term.abs() < 1e-17 * sum.abs() {
                break;
            }
        }
        return sum;
    }
    let mut head = (-xi).exp_m1();
    let mut p = 1.0;
    for k in 1..r {
        p *= -xi / f64::from(k);
        head -= p;
    }
    head / xi.powi(r as i32)
}

/// Asymptotic inversion tau = tau0 + tau1/nu + tau2/nu^2 for S' = s.
pub fn invert_asymptotic(n: u64, m: u64, s: f64, terms: usize) -> Result<InversionResult> {
    invert_asymptotic_target(n, m, Target::S(s), terms)
}

pub fn invert_asymptotic_target(n: u64, m: u64, target: Target, terms: usize) -> Result<InversionResult> {
    check_inversion_indices(n, m)?;
    let target = target.check()?;
    if !(1..=3).contains(&terms) {
        return domain(format!("asymptotic inversion takes 1 to 3 terms, got {terms}"));
    }
    let e = Expansion::new(n - 1, m - 1)?;
    let sd = &e.saddle;
    let t0 = sd.t0;
    let nu = sd.nu as f64;
    let (x, y) = reduced_solution(target, sd.m as f64, (sd.n - sd.m + 1) as f64)?;
    let tau0 = x / y;
    let d0 = sd.at_tau(tau0)?;
    let mut taus = vec![tau0];
    if terms >= 2 {
        let tau1 = tau0 * (tau0 + 1.0) * e.log_sigma_f0_over_sigma(&d0);
        taus.push(tau1);
        if terms >= 3 {
            let g = e.g_coefficients(&d0, 4);
            let big_g = g_values(&g, t0, 2)?;
            let dg0 = e.g0_tau_derivative(&d0);
            let q = tau0 * (1.0 + tau0);
            let rho = (t0 - tau0) / q;
            let drho = (-q - (t0 - tau0) * (1.0 + 2.0 * tau0)) / (q * q);
            let xi = tau1 * rho;
            let rhs = tau1 * exp_remainder(1, xi)
                + (2.0 * tau0 + 1.0) * tau1 * tau1 / q * exp_remainder(2, xi)
                + drho * tau1.powi(3) * exp_remainder(3, xi)
                - q * (big_g[1] + tau1 * dg0 + 0.5 * drho * tau1 * tau1 * big_g[0]);
            taus.push(xi.exp() * rhs);
        }
    }
    let check = residual_evaluator(n, m, Method::Asymptotic)?;
    let mut history = Vec::with_capacity(terms);
    let mut tau = 0.0;
    let mut scale = 1.0;
    let mut theta = d0.theta;
    for t in &taus {
        tau += t * scale;
        scale /= nu;
        theta = sd.theta_from_tau(tau)?;
        history.push(Iterate { theta, delta: target.residual(&check.evaluate(theta)?) });
    }
    let residual = history.last().map_or(f64::NAN, |h| h.delta);
    Ok(InversionResult {
        theta,
        method: InversionMethod::Asymptotic,
        iterations_or_terms: terms,
        residual,
        residual_method: check.method(),
        tau_terms: Some(taus),
        history,
        near_transition: d0.sigma.abs() < 1e-3 * t0.max(1.0),
    })
}

/// theta with S'(n, m, theta) = 1/2, as a full inversion record.
pub fn transition(n: u64, m: u64) -> Result<InversionResult> {
    invert_newton_with(n, m, Target::S(0.5), &NewtonOptions { tol: 1e-13, ..Default::default() })
}

/// theta with S'(n, m, theta) = T'(n, m, theta) = 1/2.
pub fn transition_theta(n: u64, m: u64) -> Result<f64> {
    Ok(transition(n, m)?.theta)
}

/// Fu's F_s = ln(S' / (1 - S')) at theta.
pub fn fu_fs(n: u64, m: u64, theta: f64) -> Result<f64> {
    let ev = Evaluator::new(n, m, MethodChoice::Auto, DEFAULT_TERMS)?;
    Ok(fu_fs_from(&ev.evaluate(theta)?))
}

/// theta with F_s = f. Newton runs on ln S' (f <= 0) or ln T' (f > 0) in
/// the variable ln theta, so |f| up to ~700 stays representable.
pub fn fu_fs_invert(n: u64, m: u64, f: f64) -> Result<InversionResult> {
    check_inversion_indices(n, m)?;
    if !f.is_finite() {
        return domain(format!("F_s target must be finite, got {f}"));
    }
    // ln(e^f / (1 + e^f)) and ln(1 / (1 + e^f)) without overflow
    let (branch, log_goal) = if f <= 0.0 {
        (Branch::S, f - f.exp().ln_1p())
    } else {
        (Branch::T, -f - (-f).exp().ln_1p())
    };
    let goal = log_goal.exp();
    let target = match branch {
        Branch::S => Target::S(goal),
        Branch::T => Target::T(goal),
    };
    let ev = Evaluator::new(n, m, MethodChoice::Auto, DEFAULT_TERMS)?;
    let seed = if goal > 0.0 && goal < 1.0 {
        match ev.method() {
            Method::Asymptotic => invert_asymptotic_target(n, m, target, 3).map(|r| r.theta),
            _ => newton_seed(n, m, target, SeedConvention::Literal),
        }
    } else {
        Err(Error::Domain(String::new()))
    };
    let theta0 = seed.or_else(|_| crate::saddle::saddle_z0(n - 1, m - 1))?;

    let increasing = branch == Branch::S;
    let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
    let mut u = theta0.ln();
    let mut history = Vec::new();
    const MAX_STEP: f64 = 8.0;
    for iter in 0..=MAX_NEWTON_ITER * 2 {
        let theta = u.exp();
        let (r, ds) = ev.evaluate_with_derivative(theta)?;
        let (value, slope) = match branch {
            Branch::S => (r.s_prime, ds),
            Branch::T => (r.t_prime, -ds),
        };
        let g = value.ln() - log_goal;
        history.push(Iterate { theta, delta: (goal / value - 1.0).abs() });
        if g.abs() <= 1e-14 * log_goal.abs().max(1.0) {
            return fs_finish(&ev, branch, goal, theta, iter, history);
        }
        if iter == MAX_NEWTON_ITER * 2 {
            break;
        }
        if (g < 0.0) == increasing {
            lo = lo.max(u);
        } else {
            hi = hi.min(u);
        }
        // d ln V / d ln theta
        let dg = theta * slope / value;
        let mut next = u - g / dg;
        if !next.is_finite() || !(dg.abs() > 0.0) || next <= lo || next >= hi {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => lo + MAX_STEP,
                (false, true) => hi - MAX_STEP,
                (false, false) => u,
            };
        }
        next = next.clamp(u - MAX_STEP, u + MAX_STEP);
        if (next - u).abs() <= 4.0 * f64::EPSILON * u.abs().max(1.0) {
            return fs_finish(&ev, branch, goal, next.exp(), iter + 1, history);
        }
        u = next;
    }
    Err(Error::Convergence { what: "F_s inversion", iterations: MAX_NEWTON_ITER * 2 })
}

fn fs_finish(
    ev: &Evaluator,
    branch: Branch,
    goal: f64,
    theta: f64,
    iterations: usize,
    history: Vec<Iterate>,
) -> Result<InversionResult> {
    let check = residual_evaluator(ev.n, ev.m, ev.method())?;
    let r = check.evaluate(theta)?;
    let value = match branch {
        Branch::S => r.s_prime,
        Branch::T => r.t_prime,
    };
    Ok(InversionResult {
        theta,
        method: InversionMethod::Newton,
        iterations_or_terms: iterations,
        residual: (goal / value - 1.0).abs(),
        residual_method: check.method(),
        tau_terms: None,
        history,
        near_transition: false,
    })
}
