//! Property checks shared by the proptest suite and the acceptance run.
#![allow(dead_code)]

use proptest::prelude::*;
use proptest::test_runner::{Config, RngAlgorithm, TestCaseError, TestRng, TestRunner};

use stirling_cdf::eval::{evaluate_with_derivative, s_prime, MethodChoice};
use stirling_cdf::exact::{recurrence_on_branch, Branch, Params};
use stirling_cdf::inversion::{fu_fs, fu_fs_invert};
use stirling_cdf::saddle::Saddle;
use stirling_cdf::special::{inc_beta, inc_beta_binomial_sum, inc_beta_inverse};

pub type Check = std::result::Result<(), TestCaseError>;

fn fail(msg: String) -> Check {
    Err(TestCaseError::fail(msg))
}

fn log_uniform(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo.log10()..hi.log10()).prop_map(|l| 10f64.powf(l))
}

/// (n, m, theta) with theta spread over many decades.
pub fn point() -> impl Strategy<Value = (u64, u64, f64)> {
    (2u64..300).prop_flat_map(|n| (Just(n), 0..=n, log_uniform(0.01, 2000.0)))
}

/// S' from the S-started recursion plus T' from the T-started recursion is 1.
pub fn complementary_identity((n, m, theta): (u64, u64, f64)) -> Check {
    let p = Params::new(n, m, theta).unwrap();
    let s = recurrence_on_branch(p, Branch::S).value;
    let t = recurrence_on_branch(p, Branch::T).value;
    if (s + t - 1.0).abs() > 1e-12 {
        return fail(format!("S'+T'-1 = {:e} at {n},{m},{theta}", s + t - 1.0));
    }
    Ok(())
}

pub fn theta_pair() -> impl Strategy<Value = (u64, u64, f64, f64)> {
    point().prop_flat_map(|(n, m, th)| (Just(n), Just(m), Just(th), 1.0001f64..3.0))
}

/// S' is nondecreasing in theta.
pub fn theta_monotone((n, m, theta, factor): (u64, u64, f64, f64)) -> Check {
    let a = s_prime(n, m, theta).unwrap();
    let b = s_prime(n, m, theta * factor).unwrap();
    // compare on the branch that was computed directly where both agree
    let ok = if a.primary_branch == Branch::T && b.primary_branch == Branch::T {
        b.t_prime <= a.t_prime * (1.0 + 1e-13)
    } else {
        b.s_prime >= a.s_prime * (1.0 - 1e-13)
    };
    if !ok {
        return fail(format!("S' decreased in theta at {n},{m}: {:?} -> {:?}", a, b));
    }
    Ok(())
}

/// S' is nonincreasing in m.
pub fn m_monotone((n, m, theta): (u64, u64, f64)) -> Check {
    if m >= n {
        return Ok(());
    }
    let a = s_prime(n, m, theta).unwrap();
    let b = s_prime(n, m + 1, theta).unwrap();
    let ok = if a.primary_branch == Branch::T && b.primary_branch == Branch::T {
        b.t_prime >= a.t_prime * (1.0 - 1e-13)
    } else {
        b.s_prime <= a.s_prime * (1.0 + 1e-13)
    };
    if !ok {
        return fail(format!("S' increased in m at {n},{m},{theta}: {:?} -> {:?}", a, b));
    }
    Ok(())
}

/// n <= 500, 2 <= m < n, theta in [0.5 z0, 1.5 z0].
pub fn derivative_point() -> impl Strategy<Value = (u64, u64, f64)> {
    (3u64..500).prop_flat_map(|n| (Just(n), 2..n, 0.5f64..1.5))
}

/// dS'/dtheta from the derivative recursion against a central difference.
pub fn derivative_matches_difference((n, m, rho): (u64, u64, f64)) -> Check {
    let z0 = stirling_cdf::saddle::saddle_z0(n - 1, m - 1).unwrap();
    let theta = rho * z0;
    let (r, d) = evaluate_with_derivative(Params::new(n, m, theta).unwrap(), MethodChoice::Recurrence, 4).unwrap();
    let h = 1e-5 * theta;
    let at = |x: f64| s_prime(n, m, x).unwrap();
    let fd = match r.primary_branch {
        Branch::S => (at(theta + h).s_prime - at(theta - h).s_prime) / (2.0 * h),
        Branch::T => (at(theta - h).t_prime - at(theta + h).t_prime) / (2.0 * h),
    };
    if d <= 0.0 || ((d - fd) / d).abs() > 1e-6 {
        return fail(format!("dS'/dtheta {d:e} vs difference {fd:e} at {n},{m},{theta}"));
    }
    Ok(())
}

pub fn beta_point() -> impl Strategy<Value = (f64, f64, f64)> {
    (1e-6f64..1.0 - 1e-6, log_uniform(0.5, 1000.0), log_uniform(0.5, 1000.0))
}

/// I_x(p,q) + I_{1-x}(q,p) = 1, and I is nondecreasing in x.
pub fn beta_complement((x, p, q): (f64, f64, f64)) -> Check {
    let a = inc_beta(x, p, q).unwrap();
    let b = inc_beta(1.0 - x, q, p).unwrap();
    if (a + b - 1.0).abs() > 1e-13 {
        return fail(format!("I + Ic - 1 = {:e} at {x},{p},{q}", a + b - 1.0));
    }
    let a2 = inc_beta((x * 1.01).min(1.0), p, q).unwrap();
    if a2 < a {
        return fail(format!("I_x decreased at {x},{p},{q}"));
    }
    Ok(())
}

pub fn inverse_point() -> impl Strategy<Value = (f64, f64, f64)> {
    (0.01f64..0.99, 1.0f64..500.0, 1.0f64..500.0)
}

/// inc_beta_inverse undoes inc_beta, solving on the smaller tail.
pub fn beta_inverse_round_trip((x, p, q): (f64, f64, f64)) -> Check {
    let s = inc_beta(x, p, q).unwrap();
    let sc = inc_beta(1.0 - x, q, p).unwrap();
    if s.min(sc) < 1e-290 {
        return Ok(());
    }
    let back = if s <= 0.5 {
        inc_beta_inverse(s, p, q).unwrap()
    } else {
        1.0 - inc_beta_inverse(sc, q, p).unwrap()
    };
    if ((back - x) / x).abs() > 1e-9 {
        return fail(format!("inverse gave {back} for x={x}, p={p}, q={q}"));
    }
    Ok(())
}

pub fn binomial_point() -> impl Strategy<Value = (u64, u64, f64)> {
    (1u64..=60).prop_flat_map(|n| (Just(n), 1..=n, prop::sample::select(vec![0.1, 0.5, 1.0, 2.0, 10.0])))
}

/// inc_beta at integer parameters equals the finite binomial sum.
pub fn binomial_oracle((n, m, tau): (u64, u64, f64)) -> Check {
    let x = tau / (1.0 + tau);
    let a = inc_beta(x, m as f64, (n - m + 1) as f64).unwrap();
    let b = inc_beta_binomial_sum(tau, m, n).unwrap();
    if (a - b).abs() > 1e-12 {
        return fail(format!("inc_beta {a} vs binomial sum {b} at n={n}, m={m}, tau={tau}"));
    }
    Ok(())
}

/// Shifted (n, m) and rho in [0.2, 5].
pub fn saddle_point() -> impl Strategy<Value = (u64, u64, f64)> {
    log_uniform(2.0, 2e5)
        .prop_map(|v| v as u64)
        .prop_flat_map(|n| (Just(n), 1..n, log_uniform(0.2, 5.0)))
}

/// theta -> tau -> theta within 1e-9 relative.
pub fn tau_theta_round_trip((n, m, rho): (u64, u64, f64)) -> Check {
    let s = Saddle::new(n, m).unwrap();
    let theta = rho * s.z0;
    let tau = s.tau_from_theta(theta).unwrap();
    let back = s.theta_from_tau(tau).unwrap();
    if ((back - theta) / theta).abs() > 1e-9 {
        return fail(format!("theta {theta} -> tau {tau} -> {back} at {n},{m}"));
    }
    if (theta < s.z0) != (tau < s.t0) && theta != s.z0 {
        return fail(format!("tau on the wrong side at {n},{m},{rho}"));
    }
    Ok(())
}

pub fn fs_point() -> impl Strategy<Value = (u64, u64, f64)> {
    (3u64..200).prop_flat_map(|n| (Just(n), 2..n, -20.0f64..20.0))
}

/// F_s(fu_fs_invert(f)) = f within 1e-8.
pub fn fs_round_trip((n, m, f): (u64, u64, f64)) -> Check {
    let r = fu_fs_invert(n, m, f).unwrap();
    let back = fu_fs(n, m, r.theta).unwrap();
    if (back - f).abs() > 1e-8 {
        return fail(format!("F_s round trip {f} -> theta {} -> {back} at {n},{m}", r.theta));
    }
    Ok(())
}

/// Runs one property over `cases` cases from a fixed seed.
pub fn run_property<S: Strategy>(
    name: &str,
    cases: u32,
    strategy: S,
    check: impl Fn(S::Value) -> Check,
) -> std::result::Result<(), String> {
    let config = Config { cases, failure_persistence: None, ..Config::default() };
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &[7; 32]);
    let mut runner = TestRunner::new_with_rng(config, rng);
    runner.run(&strategy, check).map_err(|e| format!("{name}: {e}"))
}
