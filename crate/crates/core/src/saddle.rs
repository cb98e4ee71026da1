//! Phase functions phi(z) = ln Gamma(z+1+n) - ln Gamma(z+1) - m ln z and
//! chi(t) = n ln(1+t) - m ln t, the saddle z0, and the branch-preserving map
//! theta <-> tau defined by phi(theta) - phi(z0) = chi(tau) - chi(t0).
//!
//! Indices here are the shifted ones: (n, m) describe S'(n+1, m+1).

use serde::Serialize;

use crate::error::{domain, Result};
use crate::roots::newton_bracketed;
use crate::special::{inc_beta_pair, lgamma, log1pmx, psi_diff, psi_n, psi_taylor_term};

/// Highest Taylor order of phi kept about z0.
pub(crate) const PHI_TAYLOR_ORDER: usize = 60;
/// |theta - z0| / z0 below which phi differences use the Taylor series.
const TAYLOR_RADIUS: f64 = 0.25;
const MAX_DERIVATIVE_ORDER: u32 = 40;

fn check_nm(n: u64, m: u64) -> Result<()> {
    if m < 1 || m + 1 > n {
        return domain(format!("saddle geometry needs 1 <= m <= n-1, got n={n}, m={m}"));
    }
    Ok(())
}

fn check_pos(x: f64, name: &str) -> Result<()> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("{name} must be a finite positive number, got {x}"));
    }
    Ok(())
}

/// phi(z) for z > 0.
pub fn phi(z: f64, n: u64, m: u64) -> Result<f64> {
    check_pos(z, "z")?;
    Ok(phi_raw(z, n as f64, m as f64))
}

fn phi_raw(z: f64, n: f64, m: f64) -> f64 {
    lgamma(z + 1.0 + n) - lgamma(z + 1.0) - m * z.ln()
}

/// k-th derivative of phi (k = 0 gives phi itself).
pub fn phi_derivative(order: u32, z: f64, n: u64, m: u64) -> Result<f64> {
    check_pos(z, "z")?;
    if order > MAX_DERIVATIVE_ORDER {
        return domain(format!("phi derivative order {order} above {MAX_DERIVATIVE_ORDER}"));
    }
    if order == 0 {
        return Ok(phi_raw(z, n as f64, m as f64));
    }
    Ok(dphi_raw(order, z, n as f64, m as f64))
}

fn dphi_raw(k: u32, z: f64, n: f64, m: f64) -> f64 {
    // (-1)^k (k-1)! m / z^k
    let mut t = m / z;
    for i in 1..k {
        t *= i as f64 / z;
    }
    if k % 2 == 1 {
        t = -t;
    }
    let poly = if k == 1 { psi_diff(z + 1.0, n) } else { psi_n(k - 1, z + n + 1.0) - psi_n(k - 1, z + 1.0) };
    poly + t
}

/// chi(t) for t > 0.
pub fn chi(t: f64, n: u64, m: u64) -> Result<f64> {
    check_pos(t, "t")?;
    Ok(n as f64 * t.ln_1p() - m as f64 * t.ln())
}

/// k-th derivative of chi (k = 0 gives chi itself).
pub fn chi_derivative(order: u32, t: f64, n: u64, m: u64) -> Result<f64> {
    check_pos(t, "t")?;
    let (nf, mf) = (n as f64, m as f64);
    Ok(match order {
        0 => nf * t.ln_1p() - mf * t.ln(),
        1 => ((nf - mf) * t - mf) / (t * (1.0 + t)),
        k => {
            let mut fact = 1.0;
            for i in 1..k {
                fact *= i as f64;
            }
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * fact * (nf / (1.0 + t).powi(k as i32) - mf / t.powi(k as i32))
        }
    })
}

/// Unique positive root of phi'(z) = 0.
pub fn saddle_z0(n: u64, m: u64) -> Result<f64> {
    check_nm(n, m)?;
    let (nf, mf) = (n as f64, m as f64);
    // h(z) = z (psi(z+n+1) - psi(z+1)) - m is increasing in z
    let h = |z: f64| {
        let d = psi_diff(z + 1.0, nf);
        let d1 = psi_n(1, z + nf + 1.0) - psi_n(1, z + 1.0);
        (z * d - mf, d + z * d1)
    };
    let t0 = mf / (nf - mf);
    // z sum 1/(z+k) >= n - n(n+1)/(2z), so h >= 0 at n(n+1)/(2(n-m)); needed when m is close to n
    let hi = (10.0 * (nf + mf + 1.0)).max(nf * (nf + 1.0) / (2.0 * (nf - mf)) + 1.0);
    let guess = (t0 * nf / (nf - mf)).clamp(1e-6, hi);
    newton_bracketed(h, 1e-12, hi, guess, true, 1e-14 * mf, "saddle point")
}

/// Saddle quantities for one shifted (n, m), independent of theta.
#[derive(Debug, Clone)]
pub struct Saddle {
    pub n: u64,
    pub m: u64,
    pub z0: f64,
    pub t0: f64,
    pub nu: u64,
    pub phi_at_z0: f64,
    pub chi_at_t0: f64,
    /// Scaled Taylor coefficients a_k z0^k, a_k = phi^(k)(z0)/k!, k = 0..=PHI_TAYLOR_ORDER
    /// (entry 0 is unused, entry 1 is the tiny residual slope at the computed z0).
    pub(crate) phi_taylor: Vec<f64>,
}

/// Geometry of one (n, m, theta).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaddleData {
    pub n: u64,
    pub m: u64,
    pub z0: f64,
    pub t0: f64,
    pub phi_at_z0: f64,
    pub chi_at_t0: f64,
    pub theta: f64,
    pub tau: f64,
    pub chi_at_tau: f64,
    pub nu: u64,
    /// theta - z0
    pub delta: f64,
    /// tau - t0
    pub sigma: f64,
}

impl Saddle {
    pub fn new(n: u64, m: u64) -> Result<Self> {
        let z0 = saddle_z0(n, m)?;
        Ok(Self::with_z0(n, m, z0))
    }

    pub(crate) fn with_z0(n: u64, m: u64, z0: f64) -> Self {
        let (nf, mf) = (n as f64, m as f64);
        let nu = n - m;
        let t0 = mf / nu as f64;
        let mut phi_taylor = vec![0.0; PHI_TAYLOR_ORDER + 1];
        for (k, slot) in phi_taylor.iter_mut().enumerate().skip(1) {
            let kk = k as u32;
            // z0^k/k! (psi^(k-1)(z0+n+1) - psi^(k-1)(z0+1))
            let poly = if kk == 1 {
                z0 * psi_diff(z0 + 1.0, nf)
            } else {
                psi_taylor_term(kk - 1, z0 + nf + 1.0, z0) - psi_taylor_term(kk - 1, z0 + 1.0, z0)
            };
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            *slot = poly + sign * mf / k as f64;
        }
        Self {
            n,
            m,
            z0,
            t0,
            nu,
            phi_at_z0: phi_raw(z0, nf, mf),
            chi_at_t0: nf * t0.ln_1p() - mf * t0.ln(),
            phi_taylor,
        }
    }

    /// phi^(k)(z0) / k! for k = 2..=count+1 (unscaled).
    pub fn phi_taylor_coefficients(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.phi_taylor.len());
        let mut pow = 1.0;
        for a in &self.phi_taylor {
            out.push(a / pow);
            pow *= self.z0;
        }
        out
    }

    /// phi(theta) - phi(z0) and its derivative.
    pub(crate) fn delta_phi(&self, theta: f64) -> (f64, f64) {
        let d = theta - self.z0;
        let u = d / self.z0;
        if u.abs() <= TAYLOR_RADIUS {
            let mut v = 0.0;
            let mut dv = 0.0;
            for k in (1..self.phi_taylor.len()).rev() {
                v = v * u + self.phi_taylor[k];
                dv = dv * u + k as f64 * self.phi_taylor[k];
            }
            return (v * u, dv / self.z0);
        }
        let (nf, mf) = (self.n as f64, self.m as f64);
        let v = phi_raw(theta, nf, mf) - self.phi_at_z0;
        let dv = psi_diff(theta + 1.0, nf) - mf / theta;
        (v, dv)
    }

    /// chi(tau) - chi(t0) and its derivative.
    pub(crate) fn delta_chi(&self, tau: f64) -> (f64, f64) {
        let t0 = self.t0;
        let nu = self.nu as f64;
        let sigma = tau - t0;
        let dv = nu * sigma / (tau * (1.0 + tau));
        if tau >= 0.5 * t0 {
            let v = nu * ((1.0 + t0) * log1pmx(sigma / (1.0 + t0)) - t0 * log1pmx(sigma / t0));
            return (v, dv);
        }
        let (nf, mf) = (self.n as f64, self.m as f64);
        (nf * tau.ln_1p() - mf * tau.ln() - self.chi_at_t0, dv)
    }

    pub fn tau_from_theta(&self, theta: f64) -> Result<f64> {
        check_pos(theta, "theta")?;
        if theta == self.z0 {
            return Ok(self.t0);
        }
        let (c, _) = self.delta_phi(theta);
        let c = c.max(0.0);
        if c == 0.0 {
            return Ok(self.t0);
        }
        let t0 = self.t0;
        let chi2 = self.nu as f64 / (t0 * (1.0 + t0));
        let step = (2.0 * c / chi2).sqrt();
        let f = |tau: f64| {
            let (v, dv) = self.delta_chi(tau);
            (v - c, dv)
        };
        let tol = 1e-15 * c;
        if theta < self.z0 {
            newton_bracketed(f, 0.0, t0, t0 - step, false, tol, "tau from theta")
        } else {
            newton_bracketed(f, t0, f64::INFINITY, t0 + step, true, tol, "tau from theta")
        }
    }

    pub fn theta_from_tau(&self, tau: f64) -> Result<f64> {
        check_pos(tau, "tau")?;
        if tau == self.t0 {
            return Ok(self.z0);
        }
        let (c, _) = self.delta_chi(tau);
        let c = c.max(0.0);
        if c == 0.0 {
            return Ok(self.z0);
        }
        let z0 = self.z0;
        let phi2 = 2.0 * self.phi_taylor[2] / (z0 * z0);
        let step = (2.0 * c / phi2).sqrt();
        let f = |theta: f64| {
            let (v, dv) = self.delta_phi(theta);
            (v - c, dv)
        };
        let tol = 1e-15 * c;
        if tau < self.t0 {
            newton_bracketed(f, 0.0, z0, z0 - step, false, tol, "theta from tau")
        } else {
            newton_bracketed(f, z0, f64::INFINITY, z0 + step, true, tol, "theta from tau")
        }
    }

    fn data(&self, theta: f64, tau: f64) -> SaddleData {
        let (dchi, _) = self.delta_chi(tau);
        SaddleData {
            n: self.n,
            m: self.m,
            z0: self.z0,
            t0: self.t0,
            phi_at_z0: self.phi_at_z0,
            chi_at_t0: self.chi_at_t0,
            theta,
            tau,
            chi_at_tau: self.chi_at_t0 + dchi,
            nu: self.nu,
            delta: theta - self.z0,
            sigma: tau - self.t0,
        }
    }

    /// Geometry at a given theta.
    pub fn at_theta(&self, theta: f64) -> Result<SaddleData> {
        let tau = self.tau_from_theta(theta)?;
        Ok(self.data(theta, tau))
    }

    /// Geometry at a given tau.
    pub fn at_tau(&self, tau: f64) -> Result<SaddleData> {
        let theta = self.theta_from_tau(tau)?;
        Ok(self.data(theta, tau))
    }
}

/// tau for theta, shifted (n, m), with a known saddle z0.
pub fn tau_from_theta(theta: f64, n: u64, m: u64, z0: f64) -> Result<f64> {
    check_nm(n, m)?;
    check_pos(z0, "z0")?;
    Saddle::with_z0(n, m, z0).tau_from_theta(theta)
}

/// theta for tau, shifted (n, m), with a known saddle z0.
pub fn theta_from_tau(tau: f64, n: u64, m: u64, z0: f64) -> Result<f64> {
    check_nm(n, m)?;
    check_pos(z0, "z0")?;
    Saddle::with_z0(n, m, z0).theta_from_tau(tau)
}

/// Leading incomplete-beta approximation of S'(n, m, theta) (public indices).
pub(crate) fn leading_estimate(n_pub: u64, m_pub: u64, theta: f64) -> Option<f64> {
    if m_pub < 2 || m_pub + 1 > n_pub {
        return None;
    }
    let (n, m) = (n_pub - 1, m_pub - 1);
    let s = Saddle::new(n, m).ok()?;
    let tau = s.tau_from_theta(theta).ok()?;
    let (i, _) = inc_beta_pair(tau / (1.0 + tau), 1.0 / (1.0 + tau), m as f64, (n - m + 1) as f64).ok()?;
    Some(i)
}
