//! Log-gamma, polygamma and the Stirling-series helpers used for
//! cancellation-free binomial weights.

use crate::error::{domain, Result};

pub(crate) const HALF_LN_2PI: f64 = 9.189_385_332_046_727_4e-1;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
const EULER_GAMMA: f64 = 5.772_156_649_015_328_6e-1;

/// zeta(k) - 1 for k = 2..=40.
const ZETA_M1: [f64; 39] = [
    6.44934066848226406e-01,
    2.02056903159594292e-01,
    8.23232337111381857e-02,
    3.69277551433699266e-02,
    1.73430619844491402e-02,
    8.34927738192282713e-03,
    4.07735619794433960e-03,
    2.00839282608221426e-03,
    9.94575127818085256e-04,
    4.94188604119464529e-04,
    2.46086553308048320e-04,
    1.22713347578489145e-04,
    6.12481350587048277e-05,
    3.05882363070204933e-05,
    1.52822594086518710e-05,
    7.63719763789976257e-06,
    3.81729326499984022e-06,
    1.90821271655393897e-06,
    9.53962033872796212e-07,
    4.76932986787806447e-07,
    2.38450502727733004e-07,
    1.19219925965311064e-07,
    5.96081890512594801e-08,
    2.98035035146522793e-08,
    1.49015548283650427e-08,
    7.45071178983543006e-09,
    3.72533402478845728e-09,
    1.86265972351304914e-09,
    9.31327432419668166e-10,
    4.65662906503378366e-10,
    2.32831183367650534e-10,
    1.16415501727005193e-10,
    5.82077208790270145e-11,
    2.91038504449710001e-11,
    1.45519218910419849e-11,
    7.27595983505748180e-12,
    3.63797954737865086e-12,
    1.81898965030706607e-12,
    9.09494784026388841e-13,
];

/// B_2, B_4, ..., B_40.
const BERNOULLI_2K: [f64; 20] = [
    1.66666666666666657e-01,
    -3.33333333333333329e-02,
    2.38095238095238082e-02,
    -3.33333333333333329e-02,
    7.57575757575757597e-02,
    -2.53113553113553102e-01,
    1.16666666666666674e+00,
    -7.09215686274509771e+00,
    5.49711779448621556e+01,
    -5.29124242424242425e+02,
    6.19212318840579701e+03,
    -8.65802531135531171e+04,
    1.42551716666666674e+06,
    -2.72982310678160936e+07,
    6.01580873900642395e+08,
    -1.51163157670921574e+10,
    4.29614643061166687e+11,
    -1.37116552050883320e+13,
    4.88332318973593188e+14,
    -1.92965793419400680e+16,
];

/// ln Gamma(x) for x > 0.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("log_gamma needs a finite x > 0, got {x}"));
    }
    Ok(lgamma(x))
}

pub(crate) fn lgamma(x: f64) -> f64 {
    if x < 1.5 {
        // one step covers [0.5, 1.5); ln(x) via ln_1p keeps Gamma(1) = 1 exact
        if x >= 0.5 {
            return lgamma_about_two(x + 1.0) - (x - 1.0).ln_1p();
        }
        let mut y = x;
        let mut prod = 1.0;
        while y < 1.5 {
            prod *= y;
            y += 1.0;
        }
        return lgamma_about_two(y) - prod.ln();
    }
    if x <= 2.5 {
        return lgamma_about_two(x);
    }
    if x < 10.0 {
        let mut y = x;
        let mut prod = 1.0;
        while y > 2.5 {
            y -= 1.0;
            prod *= y;
        }
        return lgamma_about_two(y) + prod.ln();
    }
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + stirling_tail(x)
}

/// Taylor series of ln Gamma about 2, valid on [1.5, 2.5].
fn lgamma_about_two(x: f64) -> f64 {
    let e = x - 2.0;
    let mut terms = [0.0; 39];
    let mut pow = e;
    for (i, z) in ZETA_M1.iter().enumerate() {
        // (-1)^k (zeta(k)-1) e^k / k, k = i + 2
        pow *= -e;
        terms[i] = -z * pow / (i + 2) as f64;
    }
    let sum: f64 = terms.iter().rev().sum();
    (1.0 - EULER_GAMMA) * e + sum
}

/// Asymptotic Stirling correction sum for x >= 10.
fn stirling_tail(x: f64) -> f64 {
    let x2 = 1.0 / (x * x);
    let mut pow = 1.0 / x;
    let mut sum = 0.0;
    for (k, b) in BERNOULLI_2K.iter().take(8).enumerate() {
        let two_k = (2 * k + 2) as f64;
        sum += b / (two_k * (two_k - 1.0)) * pow;
        pow *= x2;
    }
    sum
}

/// ln Gamma(x) - [(x - 1/2) ln x - x + ln sqrt(2 pi)], the Stirling error.
pub(crate) fn stirlerr(x: f64) -> f64 {
    if x >= 10.0 {
        return stirling_tail(x);
    }
    if x < 1.0 {
        return lgamma(x) - (x - 0.5) * x.ln() + x - HALF_LN_2PI;
    }
    // stirlerr(x) = stirlerr(x+1) - 1 + (x + 1/2) ln(1 + 1/x)
    let mut steps = Vec::with_capacity(10);
    let mut y = x;
    while y < 10.0 {
        steps.push(y);
        y += 1.0;
    }
    let mut s = stirling_tail(y);
    for &v in steps.iter().rev() {
        s = s - 1.0 + (v + 0.5) * (1.0 / v).ln_1p();
    }
    s
}

/// x ln(x / np) + np - x without cancellation when x is close to np.
pub(crate) fn bd0(x: f64, np: f64) -> f64 {
    if x == 0.0 {
        return np;
    }
    let d = x - np;
    if d.abs() < 0.1 * (x + np) {
        let v = d / (x + np);
        let mut s = d * v;
        let mut ej = 2.0 * x * v;
        let v2 = v * v;
        for j in 1..1000 {
            ej *= v2;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        return s;
    }
    x * (x / np).ln() + np - x
}

/// ln(1 + y) - y, accurate for small |y|.
pub(crate) fn log1pmx(y: f64) -> f64 {
    if y.abs() > 0.5 {
        return y.ln_1p() - y;
    }
    let r = y / (2.0 + y);
    let r2 = r * r;
    let mut pow = r2;
    let mut s = 0.0;
    for k in 1..60 {
        let t = pow / (2 * k + 1) as f64;
        s += t;
        if t < 1e-18 * s {
            break;
        }
        pow *= r2;
    }
    r * (2.0 * s - y)
}

/// ln of the binomial-type density Gamma(n+1)/(Gamma(k+1)Gamma(n-k+1)) p^k q^(n-k)
/// for real 0 <= k <= n, with q = 1 - p supplied separately.
pub(crate) fn log_binom_density(k: f64, n: f64, p: f64, q: f64) -> f64 {
    if k == 0.0 {
        return if p < 0.5 { n * (-p).ln_1p() } else { n * q.ln() };
    }
    if k == n {
        return if q < 0.5 { n * (-q).ln_1p() } else { n * p.ln() };
    }
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(k, n * p) - bd0(n - k, n * q);
    let lf = LN_2PI + k.ln() + (-k / n).ln_1p();
    lc - 0.5 * lf
}

/// ln of the rising factorial (theta)_n.
pub fn log_pochhammer(theta: f64, n: u64) -> Result<f64> {
    if !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("log_pochhammer needs theta > 0, got {theta}"));
    }
    Ok(lpoch(theta, n))
}

pub(crate) fn lpoch(theta: f64, n: u64) -> f64 {
    if n == 0 {
        return 0.0;
    }
    if n <= 64 {
        // sum of logs of short products; every factor is >= theta > 0
        let mut acc = 0.0;
        let mut prod = 1.0;
        for j in 0..n {
            prod *= theta + j as f64;
            if prod > 1e280 || prod < 1e-280 {
                acc += prod.ln();
                prod = 1.0;
            }
        }
        return acc + prod.ln();
    }
    lgamma(theta + n as f64) - lgamma(theta)
}

/// Polygamma psi^(order)(x) for x > 0; order 0 is digamma.
pub fn polygamma(order: u32, x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("polygamma needs a finite x > 0, got {x}"));
    }
    if order > 60 {
        return domain(format!("polygamma order {order} is above the supported 60"));
    }
    Ok(psi_n(order, x))
}

pub(crate) fn psi_n(k: u32, x: f64) -> f64 {
    let start = 10.0 + k as f64;
    if x >= start {
        return psi_asymptotic(k, x);
    }
    let shift = (start - x).ceil() as usize;
    let tail = psi_asymptotic(k, x + shift as f64);
    if k == 0 {
        let mut s = 0.0;
        for j in (0..shift).rev() {
            s += 1.0 / (x + j as f64);
        }
        return tail - s;
    }
    let mut kfact = 1.0;
    for i in 2..=k {
        kfact *= i as f64;
    }
    let mut s = 0.0;
    for j in (0..shift).rev() {
        s += (x + j as f64).powi(-(k as i32) - 1);
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    tail + sign * kfact * s
}

/// psi(a + d) - psi(a) for a > 0, d >= 0, without the cancellation of
/// subtracting two digammas when d is small against a.
pub(crate) fn psi_diff(a: f64, d: f64) -> f64 {
    if d == 0.0 {
        return 0.0;
    }
    let start = 10.0;
    let shift = if a >= start { 0 } else { (start - a).ceil() as usize };
    let mut s = 0.0;
    for j in (0..shift).rev() {
        s += 1.0 / (a + j as f64) - 1.0 / (a + d + j as f64);
    }
    let (x, y) = (a + shift as f64, a + d + shift as f64);
    // ln(y/x) + 1/(2x) - 1/(2y) - sum B_2j/(2j) (y^-2j - x^-2j)
    let mut tail = (d / x).ln_1p() + 0.5 * d / (x * y);
    let (x2, y2) = (1.0 / (x * x), 1.0 / (y * y));
    let (mut px, mut py) = (x2, y2);
    for (j, b) in BERNOULLI_2K.iter().enumerate() {
        let t = b / (2 * j + 2) as f64 * (py - px);
        tail -= t;
        if t.abs() < 1e-18 * tail.abs() {
            break;
        }
        px *= x2;
        py *= y2;
    }
    tail + s
}

fn psi_asymptotic(k: u32, x: f64) -> f64 {
    let x2 = 1.0 / (x * x);
    if k == 0 {
        let mut s = 0.0;
        let mut pow = x2;
        for (j, b) in BERNOULLI_2K.iter().enumerate() {
            let t = b / (2 * j + 2) as f64 * pow;
            s += t;
            if t.abs() < 1e-18 {
                break;
            }
            pow *= x2;
        }
        return x.ln() - 0.5 / x - s;
    }
    // (k-1)!/x^k, built as a product so large k underflows gracefully
    let mut base = 1.0 / x;
    for i in 1..k {
        base *= i as f64 / x;
    }
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * base * psi_asymptotic_bracket(k, x)
}

/// The factor multiplying (-1)^(k+1) (k-1)!/x^k in the large-x series of psi^(k), k >= 1.
fn psi_asymptotic_bracket(k: u32, x: f64) -> f64 {
    let x2 = 1.0 / (x * x);
    let kf = k as f64;
    let mut sum = 1.0 + kf / (2.0 * x);
    let mut r = 1.0;
    for (j, b) in BERNOULLI_2K.iter().enumerate() {
        let j2 = (2 * j + 2) as f64;
        r *= (kf + j2 - 2.0) * (kf + j2 - 1.0) / ((j2 - 1.0) * j2) * x2;
        let t = b * r;
        sum += t;
        if t.abs() < 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// z^(k+1)/(k+1)! psi^(k)(x) for k >= 1, finite where the two factors alone would overflow and underflow.
pub(crate) fn psi_taylor_term(k: u32, x: f64, z: f64) -> f64 {
    let start = 10.0 + k as f64;
    if x < start {
        let mut scale = 1.0;
        for i in 1..=k + 1 {
            scale *= z / i as f64;
        }
        return scale * psi_n(k, x);
    }
    let kf = k as f64;
    let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
    sign * z * (z / x).powi(k as i32) / (kf * (kf + 1.0)) * psi_asymptotic_bracket(k, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn scaled_taylor_terms() {
        for &(k, x, z) in &[(1u32, 30.0, 29.0), (5, 3.0, 2.0), (12, 80.0, 79.0), (20, 500.0, 400.0)] {
            let mut scale = 1.0;
            for i in 1..=k + 1 {
                scale *= z / i as f64;
            }
            assert!(rel(psi_taylor_term(k, x, z), scale * psi_n(k, x)) < 1e-13, "{k} {x}");
        }
        // z^61/61! overflows on its own here
        let t = psi_taylor_term(59, 3.2e6, 3.19e6);
        assert!(t.is_finite() && t != 0.0, "{t}");
    }

    #[test]
    fn digamma_difference() {
        for &(a, d) in &[(0.3, 2.0), (5.0, 1000.0), (20.0, 7.5)] {
            let want = psi_n(0, a + d) - psi_n(0, a);
            assert!(rel(psi_diff(a, d), want) < 1e-12, "{a} {d}");
        }
        let (a, d) = (1e3, 1e-3);
        let want = d * psi_n(1, a) + d * d / 2.0 * psi_n(2, a) + d.powi(3) / 6.0 * psi_n(3, a);
        assert!(rel(psi_diff(a, d), want) < 1e-14);
        // integer d reduces to a finite sum
        let (a, n) = (4.99e5, 1000u32);
        let want: f64 = (0..n).map(|j| 1.0 / (a + j as f64)).sum();
        assert!(rel(psi_diff(a, n as f64), want) < 1e-14);
    }

    #[test]
    fn lgamma_integers_match_factorials() {
        assert_eq!(lgamma(1.0), 0.0);
        assert_eq!(lgamma(2.0), 0.0);
        let mut f = 1.0f64;
        for n in 1..60u32 {
            f *= n as f64;
            assert!((lgamma(n as f64 + 1.0) - f.ln()).abs() <= 1e-14 * f.ln(), "n={n}");
        }
        assert!(rel(lgamma(11.0), 3628800f64.ln()) < 1e-15);
    }

    #[test]
    fn lgamma_half_integers() {
        // Gamma(1/2) = sqrt(pi), Gamma(x+1) = x Gamma(x)
        let mut g = std::f64::consts::PI.sqrt().ln();
        let mut x = 0.5;
        for _ in 0..40 {
            assert!((lgamma(x) - g).abs() < 1e-14 * g.abs().max(1.0), "x={x}");
            g += x.ln();
            x += 1.0;
        }
    }

    #[test]
    fn lgamma_is_continuous_across_branches() {
        for &b in &[0.5, 1.5, 2.5, 10.0] {
            let lo = lgamma(b - 1e-12);
            let hi = lgamma(b + 1e-12);
            assert!((lo - hi).abs() < 1e-11, "break at {b}");
        }
    }

    #[test]
    fn stirlerr_matches_definition() {
        for &x in &[1.0, 1.5, 3.0, 7.25, 9.99, 10.0, 25.0, 1e4] {
            let direct = lgamma(x) - (x - 0.5) * f64::ln(x) + x - HALF_LN_2PI;
            assert!((stirlerr(x) - direct).abs() < 1e-13 + 2e-16 * lgamma(x).abs(), "x={x}");
        }
    }

    #[test]
    fn bd0_agrees_with_naive_form_away_from_cancellation() {
        for &(x, np) in &[(3.0, 7.0), (100.0, 99.0), (1e5, 1.0001e5), (5.0, 0.5)] {
            let naive = x * f64::ln(x / np) + np - x;
            assert!((bd0(x, np) - naive).abs() < 1e-9 * (1.0 + naive.abs()));
        }
    }

    #[test]
    fn log1pmx_small_and_large() {
        assert!(rel(log1pmx(1e-8), -5e-17 + 1e-24 / 3.0) < 1e-15);
        for &y in &[-0.9, -0.4, 0.3, 0.49, 2.0] {
            let want = f64::ln_1p(y) - y;
            assert!((log1pmx(y) - want).abs() < 1e-15 * want.abs().max(1e-3));
        }
    }

    #[test]
    fn binom_density_integer_case() {
        // C(10,3) 0.3^3 0.7^7
        let want = (120.0 * 0.3f64.powi(3) * 0.7f64.powi(7)).ln();
        assert!((log_binom_density(3.0, 10.0, 0.3, 0.7) - want).abs() < 1e-14);
        let want0 = (0.7f64.powi(10)).ln();
        assert!((log_binom_density(0.0, 10.0, 0.3, 0.7) - want0).abs() < 1e-14);
    }

    #[test]
    fn pochhammer_examples() {
        assert_eq!(lpoch(5.0, 0), 0.0);
        assert!((lpoch(1.0, 5) - 120f64.ln()).abs() < 1e-15);
        assert!((lpoch(2.5, 3) - (2.5f64 * 3.5 * 4.5).ln()).abs() < 1e-15);
        let direct: f64 = (0..200).map(|j| (3.3 + j as f64).ln()).sum();
        assert!(rel(lpoch(3.3, 200), direct) < 1e-13);
        assert!(log_pochhammer(0.0, 3).is_err());
    }

    #[test]
    fn digamma_values() {
        assert!((psi_n(0, 1.0) + EULER_GAMMA).abs() < 1e-15);
        assert!(rel(psi_n(0, 4.5) - psi_n(0, 3.5), 1.0 / 3.5) < 1e-14);
        assert!(rel(psi_n(1, 1.0), std::f64::consts::PI.powi(2) / 6.0) < 1e-14);
        // psi''(1) = -2 zeta(3)
        assert!(rel(psi_n(2, 1.0), -2.0 * (1.0 + ZETA_M1[1])) < 1e-14);
        assert!(polygamma(0, -1.0).is_err());
    }

    #[test]
    fn polygamma_high_order_against_zeta() {
        // psi^(k)(1) = (-1)^(k+1) k! zeta(k+1)
        let mut kf = 1.0;
        for k in 1..=39u32 {
            kf *= k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let want = sign * kf * (1.0 + ZETA_M1[k as usize - 1]);
            assert!(rel(psi_n(k, 1.0), want) < 1e-13, "k={k}");
        }
    }

    #[test]
    fn polygamma_branch_continuity() {
        for k in [0u32, 1, 3, 7, 20] {
            let b = 10.0 + k as f64;
            let lo = psi_n(k, b - 1e-9);
            let hi = psi_n(k, b + 1e-9);
            assert!(rel(lo, hi) < 1e-8 * (k as f64 + 1.0), "k={k}");
        }
    }
}
