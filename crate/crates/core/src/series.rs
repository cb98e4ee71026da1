//! Large-n expansion S'(n+1, m+1, theta) = I_x(m, n-m+1) + R', x = tau/(1+tau),
//! R' = tau * dbinom(m-1; n, x) * sum_k G_k(t0) / nu^k.
//!
//! Coefficients are handled in scaled variables u^ = (t - t0)/t0 and
//! w^ = (z - z0)/z0, so the local map w^(u^) = sum z^_k u^^k has O(1)
//! coefficients whatever the size of n.

use std::sync::OnceLock;

use serde::Serialize;

use crate::error::{domain, Result};
use crate::exact::{Branch, EvalResult, Method, Params};
use crate::saddle::{Saddle, SaddleData, PHI_TAYLOR_ORDER};
use crate::special::{inc_beta_pair, log_binom_density};

pub const DEFAULT_TERMS: usize = 4;
pub const MAX_TERMS: usize = 6;
/// Length of the z-series kept for the pole-free g evaluation.
const LONG_Z: usize = PHI_TAYLOR_ORDER - 8;
/// |sigma / t0| below which g_k comes from the divided-difference form.
const DD_SWITCH: f64 = 0.5;

/// z, f, g and G(t0) arrays for one evaluation point (unscaled).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoeffSet {
    pub order: usize,
    /// z_1 .. z_{2N+1}
    pub z_coeffs: Vec<f64>,
    /// f_0 .. f_{2N}; not finite when theta equals z0 exactly
    pub f_coeffs: Vec<f64>,
    /// g_0 .. g_{2N}
    pub g_coeffs: Vec<f64>,
    /// G_0(t0) .. G_{N-1}(t0)
    pub g_values: Vec<f64>,
    pub near_transition: bool,
}

/// Saddle plus the long scaled z-series for one shifted (n, m).
#[derive(Debug, Clone)]
pub struct Expansion {
    pub saddle: Saddle,
    /// z^_0 = 0, z^_1, .., z^_LONG_Z
    zs: Vec<f64>,
}

fn mul_truncated(a: &[f64], b: &[f64], deg: usize) -> Vec<f64> {
    let mut out = vec![0.0; deg + 1];
    for (i, &x) in a.iter().enumerate().take(deg + 1) {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate().take(deg + 1 - i) {
            out[i + j] += x * y;
        }
    }
    out
}

/// Power-series quotient a / b through degree `deg`.
fn div_series(a: &[f64], b: &[f64], deg: usize) -> Vec<f64> {
    let mut q = vec![0.0; deg + 1];
    for k in 0..=deg {
        let mut v = a.get(k).copied().unwrap_or(0.0);
        for j in 0..k {
            v -= q[j] * b.get(k - j).copied().unwrap_or(0.0);
        }
        q[k] = v / b[0];
    }
    q
}

/// Coefficients of (a(u) - a(s)) / (u - s) for a polynomial a.
fn divided_difference(a: &[f64], s: f64) -> Vec<f64> {
    let k = a.len() - 1;
    let mut out = vec![0.0; k];
    let mut acc = 0.0;
    for j in (0..k).rev() {
        acc = a[j + 1] + s * acc;
        out[j] = acc;
    }
    out
}

impl Expansion {
    /// Shifted (n, m), 1 <= m <= n-1.
    pub fn new(n: u64, m: u64) -> Result<Self> {
        Ok(Self::from_saddle(Saddle::new(n, m)?))
    }

    pub fn from_saddle(saddle: Saddle) -> Self {
        let zs = scaled_z_series(&saddle, LONG_Z);
        Self { saddle, zs }
    }

    /// Unscaled z_1 .. z_count.
    pub fn z_coefficients(&self, count: usize) -> Vec<f64> {
        let (z0, t0) = (self.saddle.z0, self.saddle.t0);
        (1..=count.min(LONG_Z))
            .map(|k| self.zs[k] * z0 / t0.powi(k as i32))
            .collect()
    }

    fn sigma_hat(&self, d: &SaddleData) -> f64 {
        d.sigma / self.saddle.t0
    }

    /// Scaled f^_0 .. f^_count from w^'/(w^ - delta^).
    fn scaled_f(&self, delta_hat: f64, count: usize) -> Vec<f64> {
        let wp: Vec<f64> = (0..=count).map(|k| (k + 1) as f64 * self.zs[k + 1]).collect();
        let mut den: Vec<f64> = self.zs[..=count].to_vec();
        den[0] = -delta_hat;
        div_series(&wp, &den, count)
    }

    /// Scaled g^_0 .. g^_count; g_k = g^_k / t0^(k+1).
    fn scaled_g(&self, sigma_hat: f64, delta_hat: f64, count: usize) -> Vec<f64> {
        if sigma_hat.abs() >= DD_SWITCH && delta_hat != 0.0 {
            let f = self.scaled_f(delta_hat, count);
            let inv = 1.0 / sigma_hat;
            let mut pole = inv;
            return f
                .iter()
                .map(|fk| {
                    let g = fk + pole;
                    pole *= inv;
                    g
                })
                .collect();
        }
        // g = P/Q with Q = D[w], P = D[w' - Q]; no poles, valid at sigma = 0
        let q = divided_difference(&self.zs, sigma_hat);
        let num: Vec<f64> = (0..q.len()).map(|j| (j + 1) as f64 * self.zs[j + 1] - q[j]).collect();
        let p = divided_difference(&num, sigma_hat);
        div_series(&p, &q, count)
    }

    /// Unscaled g_0 .. g_count at this point.
    pub fn g_coefficients(&self, d: &SaddleData, count: usize) -> Vec<f64> {
        let t0 = self.saddle.t0;
        let g = self.scaled_g(self.sigma_hat(d), d.delta / self.saddle.z0, count);
        unscale(&g, t0)
    }

    /// Unscaled f_0 .. f_count by the direct quotient; needs theta != z0.
    pub fn f_coefficients(&self, d: &SaddleData, count: usize) -> Result<Vec<f64>> {
        if d.delta == 0.0 {
            return domain("f coefficients have a pole at theta = z0");
        }
        Ok(unscale(&self.scaled_f(d.delta / self.saddle.z0, count), self.saddle.t0))
    }

    /// ln((t0 - tau) f_0) = ln(z1 sigma / delta), pole-free for small sigma.
    pub(crate) fn log_sigma_f0(&self, d: &SaddleData) -> f64 {
        let sh = self.sigma_hat(d);
        if sh.abs() < DD_SWITCH {
            let b = self.b_series(sh).0;
            return -(sh * b / self.zs[1]).ln_1p();
        }
        (self.zs[1] * sh / (d.delta / self.saddle.z0)).ln()
    }

    /// ln((t0 - tau) f_0) / (tau - t0), finite at tau = t0.
    pub(crate) fn log_sigma_f0_over_sigma(&self, d: &SaddleData) -> f64 {
        let sh = self.sigma_hat(d);
        if sh.abs() < DD_SWITCH {
            let ratio = self.b_series(sh).0 / self.zs[1];
            let x = sh * ratio;
            let l = if x == 0.0 { 1.0 } else { x.ln_1p() / x };
            return -l * ratio / self.saddle.t0;
        }
        self.log_sigma_f0(d) / d.sigma
    }

    /// B(s) = sum_{k>=2} z^_k s^(k-2) and B'(s).
    fn b_series(&self, s: f64) -> (f64, f64) {
        let mut b = 0.0;
        let mut db = 0.0;
        for k in (2..self.zs.len()).rev() {
            db = db * s + b;
            b = b * s + self.zs[k];
        }
        (b, db)
    }

    /// d g_0 / d tau with theta moving along the phase map.
    pub(crate) fn g0_tau_derivative(&self, d: &SaddleData) -> f64 {
        let t0 = self.saddle.t0;
        let sh = self.sigma_hat(d);
        if sh.abs() < DD_SWITCH {
            // g^_0(s) = B / (z^_1 + s B)
            let (b, db) = self.b_series(sh);
            let z1 = self.zs[1];
            let den = z1 + sh * b;
            return (z1 * db - b * b) / (den * den) / (t0 * t0);
        }
        let s = &self.saddle;
        let (nf, mf) = (s.n as f64, s.m as f64);
        let dchi = s.nu as f64 * d.sigma / (d.tau * (1.0 + d.tau));
        let dphi = crate::special::psi_diff(d.theta + 1.0, nf) - mf / d.theta;
        let z1 = self.zs[1] * s.z0 / t0;
        z1 * (dchi / dphi) / (d.delta * d.delta) - 1.0 / (d.sigma * d.sigma)
    }

    pub fn coeff_set(&self, d: &SaddleData, terms: usize) -> CoeffSet {
        let terms = terms.clamp(1, MAX_TERMS);
        let count = 2 * terms;
        let g = self.g_coefficients(d, count);
        let f = self
            .f_coefficients(d, count)
            .unwrap_or_else(|_| vec![f64::INFINITY; count + 1]);
        let g_values = g_values_unchecked(&g, self.saddle.t0, terms);
        CoeffSet {
            order: terms,
            z_coeffs: self.z_coefficients(count + 1),
            f_coeffs: f,
            g_coeffs: g,
            g_values,
            near_transition: d.sigma.abs() < 1e-3 * self.saddle.t0.max(1.0),
        }
    }

    /// Evaluates S'(n+1, m+1, theta) with `terms` terms of R'.
    pub fn evaluate(&self, theta: f64, terms: usize) -> Result<AsymptoticEval> {
        let d = self.saddle.at_theta(theta)?;
        Ok(self.evaluate_at(&d, terms))
    }

    pub(crate) fn evaluate_at(&self, d: &SaddleData, terms: usize) -> AsymptoticEval {
        let terms = terms.clamp(1, MAX_TERMS);
        let s = &self.saddle;
        let (nf, mf) = (s.n as f64, s.m as f64);
        let nu = s.nu as f64;
        let tau = d.tau;
        let x = tau / (1.0 + tau);
        let y = 1.0 / (1.0 + tau);
        let g = self.g_coefficients(d, 2 * terms);
        let big_g = g_values_unchecked(&g, s.t0, terms + 1);
        let mut sum = 0.0;
        let mut pow = 1.0;
        for gk in big_g.iter().take(terms) {
            sum += gk * pow;
            pow /= nu;
        }
        let omitted = big_g[terms] * pow;
        let log_w = tau.ln() + log_binom_density(mf - 1.0, nf, x, y);
        let weight = log_w.exp();
        let remainder = weight * sum;
        let (lead, lead_c) = inc_beta_pair(x, y, mf, nf - mf + 1.0).unwrap_or((f64::NAN, f64::NAN));
        let s_val = lead + remainder;
        let t_val = lead_c - remainder;
        let (branch, value) = if s_val <= t_val { (Branch::S, s_val) } else { (Branch::T, t_val) };
        let err = (weight * omitted).abs() + 8.0 * f64::EPSILON * value.abs();
        AsymptoticEval {
            result: EvalResult::from_primary(branch, value, Method::Asymptotic, err),
            leading: lead,
            remainder,
            saddle: *d,
            g_values: big_g[..terms].to_vec(),
            near_transition: d.sigma.abs() < 1e-3 * s.t0.max(1.0),
        }
    }
}

fn unscale(g: &[f64], t0: f64) -> Vec<f64> {
    let mut p = t0;
    g.iter()
        .map(|v| {
            let r = v / p;
            p *= t0;
            r
        })
        .collect()
}

/// Scaled z^_0..=count by matching Taylor coefficients of
/// sum a^_k w^^k = sum b^_k u^^k, a^_k = phi^(k)(z0) z0^k / k!, b^_k likewise for chi.
fn scaled_z_series(s: &Saddle, count: usize) -> Vec<f64> {
    let (nf, mf) = (s.n as f64, s.m as f64);
    let t0 = s.t0;
    let ratio = t0 / (1.0 + t0);
    let top = count + 1;
    let mut b = vec![0.0; top + 1];
    let mut rk = 1.0;
    for (k, slot) in b.iter_mut().enumerate().skip(1) {
        rk *= ratio;
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        *slot = sign / k as f64 * (nf * rk - mf);
    }
    // b^_2 directly, without the cancellation in n r^2 - m
    b[2] = s.nu as f64 * t0 / (2.0 * (1.0 + t0));
    let a = &s.phi_taylor;
    let mut z = vec![0.0; count + 1];
    z[1] = (b[2] / a[2]).sqrt();
    for k in 2..=count {
        // coefficient of u^(k+1) from the known z_1..z_{k-1}
        let deg = k + 1;
        let w: Vec<f64> = z[..k].to_vec();
        let mut pow = w.clone();
        let mut acc = 0.0;
        for j in 2..=deg {
            pow = mul_truncated(&pow, &w, deg);
            acc += a[j] * pow[deg];
        }
        z[k] = (b[deg] - acc) / (2.0 * a[2] * z[1]);
    }
    z
}

/// Unscaled z_1 .. z_count for a shifted (n, m) saddle.
pub fn z_coefficients(saddle: &Saddle, count: usize) -> Result<Vec<f64>> {
    if saddle.phi_taylor[2] <= 0.0 {
        return domain("phi''(z0) is not positive");
    }
    if count > LONG_Z {
        return domain(format!("at most {LONG_Z} z coefficients are available"));
    }
    let z = scaled_z_series(saddle, count.max(1));
    Ok((1..=count).map(|k| z[k] * saddle.z0 / saddle.t0.powi(k as i32)).collect())
}

/// Linear forms G_k(t0) = sum_j P_kj(t0) g_j with integer polynomial P_kj,
/// generated once from the scheme H = (G - G(t0))/(t - t0),
/// G_next = -d/dt [ t (1+t) H ].
fn scheme_table() -> &'static Vec<Vec<Vec<i128>>> {
    static TABLE: OnceLock<Vec<Vec<Vec<i128>>>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let width = 2 * MAX_TERMS + 1;
        type Poly = Vec<i128>;
        fn add_scaled(dst: &mut Poly, src: &Poly, factor: &[i128]) {
            for (i, &a) in src.iter().enumerate() {
                for (j, &b) in factor.iter().enumerate() {
                    if dst.len() <= i + j {
                        dst.resize(i + j + 1, 0);
                    }
                    dst[i + j] += a * b;
                }
            }
        }
        // series coefficient i is a vector over j of polynomials in t0
        let mut series: Vec<Vec<Poly>> = (0..width)
            .map(|i| (0..width).map(|j| if i == j { vec![1] } else { vec![] }).collect())
            .collect();
        let mut out = Vec::with_capacity(MAX_TERMS + 1);
        out.push(series[0].clone());
        let c0: [i128; 3] = [0, 1, 1];
        let c1: [i128; 2] = [1, 2];
        for _ in 0..MAX_TERMS {
            let h: Vec<Vec<Poly>> = series.iter().skip(1).cloned().collect();
            let len = h.len() + 2;
            let mut p: Vec<Vec<Poly>> = vec![vec![vec![]; width]; len];
            for (i, hi) in h.iter().enumerate() {
                for j in 0..width {
                    add_scaled(&mut p[i][j], &hi[j], &c0);
                    add_scaled(&mut p[i + 1][j], &hi[j], &c1);
                    add_scaled(&mut p[i + 2][j], &hi[j], &[1]);
                }
            }
            // only coefficients below len(h) - 1 are exact after truncation
            let keep = h.len().saturating_sub(1);
            series = (0..keep)
                .map(|i| {
                    p[i + 1]
                        .iter()
                        .map(|poly| poly.iter().map(|c| -(i as i128 + 1) * c).collect())
                        .collect()
                })
                .collect();
            out.push(series[0].clone());
        }
        out
    })
}

fn eval_poly(p: &[i128], t: f64) -> f64 {
    p.iter().rev().fold(0.0, |acc, &c| acc * t + c as f64)
}

fn g_values_unchecked(g: &[f64], t0: f64, count: usize) -> Vec<f64> {
    let a = 1.0 + 2.0 * t0;
    let b = t0 * (1.0 + t0);
    let table = scheme_table();
    (0..count)
        .map(|k| match k {
            0 => g[0],
            1 => -a * g[1] - b * g[2],
            2 => 2.0 * a * g[1] + (2.0 + 11.0 * t0 + 11.0 * t0 * t0) * g[2] + 5.0 * b * a * g[3] + 3.0 * b * b * g[4],
            _ => table[k]
                .iter()
                .zip(g)
                .map(|(poly, gj)| if poly.is_empty() { 0.0 } else { eval_poly(poly, t0) * gj })
                .sum(),
        })
        .collect()
}

/// G_0(t0) .. G_{count-1}(t0) from g_0 .. g_{2 count - 2}.
pub fn g_values(g: &[f64], t0: f64, count: usize) -> Result<Vec<f64>> {
    if count > MAX_TERMS + 1 {
        return domain(format!("at most {} G values are tabulated", MAX_TERMS + 1));
    }
    if count > 0 && g.len() < 2 * count - 1 {
        return domain(format!("{count} G values need {} g coefficients, got {}", 2 * count - 1, g.len()));
    }
    let mut padded = g.to_vec();
    padded.resize(2 * MAX_TERMS + 1, 0.0);
    Ok(g_values_unchecked(&padded, t0, count))
}

/// Full output of one asymptotic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticEval {
    pub result: EvalResult,
    pub leading: f64,
    pub remainder: f64,
    pub saddle: SaddleData,
    pub g_values: Vec<f64>,
    pub near_transition: bool,
}

/// S'(n, m, theta) (public indices) by the large-n expansion with `terms` terms.
pub fn s_prime_asymptotic(params: Params, terms: usize) -> Result<EvalResult> {
    let Params { n, m, theta } = Params::new(params.n, params.m, params.theta)?;
    if m < 2 || m + 1 > n {
        return domain(format!("asymptotic evaluation needs 2 <= m <= n-1, got n={n}, m={m}"));
    }
    Ok(Expansion::new(n - 1, m - 1)?.evaluate(theta, terms)?.result)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::s_prime_recursive;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn first_z_match_closed_forms() {
        let s = Saddle::new(99, 49).unwrap();
        let z = z_coefficients(&s, 3).unwrap();
        let chi2 = crate::saddle::chi_derivative(2, s.t0, 99, 49).unwrap();
        let chi3 = crate::saddle::chi_derivative(3, s.t0, 99, 49).unwrap();
        let phi2 = crate::saddle::phi_derivative(2, s.z0, 99, 49).unwrap();
        let phi3 = crate::saddle::phi_derivative(3, s.z0, 99, 49).unwrap();
        let z1 = (chi2 / phi2).sqrt();
        let z2 = (chi3 - z1.powi(3) * phi3) / (6.0 * z1 * phi2);
        assert!(rel(z[0], z1) < 1e-13);
        assert!(rel(z[1], z2) < 1e-11, "{} {}", z[1], z2);
    }

    #[test]
    fn g1_closed_form_example() {
        let g = [0.0, 1.0, 0.0];
        assert_eq!(g_values(&g, 1.0, 2).unwrap()[1], -3.0);
        assert!(g_values(&g, 1.0, 3).is_err());
    }

    #[test]
    fn table_reproduces_closed_forms() {
        let t = scheme_table();
        // G_1 = -(1+2t) g1 - t(1+t) g2
        assert_eq!(t[1][1], vec![-1, -2]);
        assert_eq!(t[1][2], vec![0, -1, -1]);
        assert_eq!(t[2][4], vec![0, 0, 3, 6, 3]);
        assert_eq!(t[2][2], vec![2, 11, 11]);
    }

    #[test]
    fn example_two_values() {
        let p = |theta| Params::new(100, 50, theta).unwrap();
        let a = s_prime_asymptotic(p(38.29722), 4).unwrap().s_prime;
        assert!((a - 0.50233).abs() < 5e-4);
        let b = s_prime_asymptotic(p(38.2492993), 2).unwrap().s_prime;
        assert!((b - 0.5000190).abs() < 2e-5);
    }

    #[test]
    fn matches_recursion_at_moderate_n() {
        for &(n, m) in &[(250u64, 200u64), (1000, 500), (400, 60)] {
            let e = Expansion::new(n - 1, m - 1).unwrap();
            for &r in &[0.7, 0.9, 0.99, 1.0, 1.01, 1.3] {
                let theta = r * e.saddle.z0;
                let a = e.evaluate(theta, 4).unwrap().result;
                let x = s_prime_recursive(Params::new(n, m, theta).unwrap()).unwrap();
                let (va, vx) = (a.primary(), if a.primary_branch == Branch::S { x.s_prime } else { x.t_prime });
                assert!(rel(va, vx) < 1e-9, "n={n} m={m} r={r} {va} {vx}");
            }
        }
    }

    #[test]
    fn pole_free_g_is_continuous_at_switch() {
        for &(n, m) in &[(999u64, 449u64), (999, 899), (99_999, 74_999), (30, 3)] {
            let e = Expansion::new(n, m).unwrap();
            let t0 = e.saddle.t0;
            for side in [-1.0, 1.0] {
                let below = e.saddle.at_tau(t0 * (1.0 + side * DD_SWITCH * (1.0 - 1e-14))).unwrap();
                let above = e.saddle.at_tau(t0 * (1.0 + side * DD_SWITCH * (1.0 + 1e-14))).unwrap();
                let gb = e.g_coefficients(&below, 8);
                let ga = e.g_coefficients(&above, 8);
                // the direct side loses accuracy geometrically in k to the pole cancellation
                for k in 0..=8 {
                    let tol = 1e-8 * 3f64.powi(k as i32);
                    assert!(rel(gb[k], ga[k]) < tol, "{n}/{m} k={k} {} {}", gb[k], ga[k]);
                }
                let sb = e.evaluate_at(&below, DEFAULT_TERMS).result;
                let sa = e.evaluate_at(&above, DEFAULT_TERMS).result;
                for (b, a) in [(sb.s_prime, sa.s_prime), (sb.t_prime, sa.t_prime)] {
                    assert!(b == a || rel(b, a) < 1e-11, "{n}/{m} {b} {a}");
                }
            }
        }
    }
}
