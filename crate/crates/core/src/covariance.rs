//! Closed-form fBm covariances and the kernel reductions behind every exact
//! oracle.

use crate::error::{Error, Result};
use crate::fbm::HurstParameter;

/// `γ_H = H (2H - 1)`, the prefactor of the off-diagonal mixed derivative
/// of `R_H`. Negative for `H < 1/2`, zero exactly at `H = 1/2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConstants {
    pub hurst: HurstParameter,
    pub gamma_h: f64,
}

impl KernelConstants {
    pub fn new(hurst: HurstParameter) -> Self {
        let h = hurst.value();
        Self {
            hurst,
            gamma_h: h * (2.0 * h - 1.0),
        }
    }
}

#[inline]
fn pow2h(x: f64, two_h: f64) -> f64 {
    let a = x.abs();
    if a == 0.0 {
        0.0
    } else {
        a.powf(two_h)
    }
}

/// `R_H(s, t) = ½(|s|^{2H} + |t|^{2H} - |t-s|^{2H})`.
pub fn cov_fbm(hurst: HurstParameter, s: f64, t: f64) -> f64 {
    let two_h = 2.0 * hurst.value();
    0.5 * (pow2h(s, two_h) + pow2h(t, two_h) - pow2h(t - s, two_h))
}

/// `E[(B_b - B_a)(B_d - B_c)] = ½(|b-c|^{2H} + |a-d|^{2H} - |b-d|^{2H} - |a-c|^{2H})`.
///
/// When the intervals are far apart relative to their lengths the four
/// large powers nearly cancel; that case is evaluated through first
/// differences `x^{2H}((1+δ/x)^{2H} - 1)` computed with `ln_1p`/`exp_m1`.
pub fn cov_increments(hurst: HurstParameter, a: f64, b: f64, c: f64, d: f64) -> f64 {
    let two_h = 2.0 * hurst.value();
    let (lo1, hi1) = (a.min(b), a.max(b));
    let (lo2, hi2) = (c.min(d), c.max(d));
    let gap = if hi1 <= lo2 {
        lo2 - hi1
    } else if hi2 <= lo1 {
        lo1 - hi2
    } else {
        0.0
    };
    let span = (hi1 - lo1).max(hi2 - lo2);
    if gap > 4.0 * span && span > 0.0 {
        // g(p + δ) - g(p) for p > 0, with g(x) = x^{2H}
        let diff = |p: f64, delta: f64| p.powf(two_h) * (two_h * (delta / p).ln_1p()).exp_m1();
        // ½[(g(|a-d|) - g(|a-c|)) - (g(|b-d|) - g(|b-c|))]
        let ac = (a - c).abs();
        let bc = (b - c).abs();
        let first_a = diff(ac, (a - d).abs() - ac);
        let first_b = diff(bc, (b - d).abs() - bc);
        return 0.5 * (first_a - first_b);
    }
    0.5 * (pow2h(b - c, two_h) + pow2h(a - d, two_h) - pow2h(b - d, two_h) - pow2h(a - c, two_h))
}

/// Lag from which the shifted forms switch to the curvature series.
const FAR_LAG: f64 = 8.0;

/// `(1+t)^{2H} - 1 - 2H t` for `|t| ≤ 1/4`, summed as a binomial series so
/// that no cancellation occurs.
fn curvature_part(two_h: f64, t: f64) -> f64 {
    let mut coeff = 0.5 * two_h * (two_h - 1.0);
    let mut power = t * t;
    let mut sum = coeff * power;
    for j in 2..80 {
        coeff *= (two_h - j as f64) / (j as f64 + 1.0);
        power *= t;
        let term = coeff * power;
        sum += term;
        if term.abs() <= 1e-18 * sum.abs() {
            break;
        }
    }
    sum
}

/// `E[(B_b - B_a)(B_{k+d} - B_{k+c})]` with offsets `a, b, c, d ∈ [0, 1]`.
///
/// For lags `k ≥ 8` the four powers of `k + x` enter only through their
/// curvature parts, since the constant and linear parts cancel exactly; the
/// result then keeps full relative accuracy however large `k` is.
pub fn cov_increments_shifted(hurst: HurstParameter, k: f64, a: f64, b: f64, c: f64, d: f64) -> f64 {
    if k < FAR_LAG {
        return cov_increments(hurst, a, b, k + c, k + d);
    }
    let two_h = 2.0 * hurst.value();
    let phi = |x: f64| curvature_part(two_h, x / k);
    0.5 * k.powf(two_h) * (phi(c - b) + phi(d - a) - phi(d - b) - phi(c - a))
}

/// `θ(k; s1, k + u)` with `u ∈ [0, 1]` given as an offset.
pub fn theta_shifted(hurst: HurstParameter, k: usize, s1: f64, u: f64) -> f64 {
    let k0 = k as f64;
    let ci = |a, b, c, d| cov_increments_shifted(hurst, k0, a, b, c, d);
    0.25 * (ci(0.0, s1, 0.0, u) - ci(0.0, s1, u, 1.0) - ci(s1, 1.0, 0.0, u) + ci(s1, 1.0, u, 1.0))
}

/// Off-diagonal second mixed derivative of `R_H`: `γ_H |s - t|^{2H-2}`.
pub fn kernel_density(hurst: HurstParameter, s: f64, t: f64) -> Result<f64> {
    if s == t {
        return Err(Error::Singular(format!("kernel density is singular on the diagonal s = t = {s}")));
    }
    let k = KernelConstants::new(hurst);
    Ok(k.gamma_h * (s - t).abs().powf(2.0 * hurst.value() - 2.0))
}

/// `θ(k; s1, s2) = ¼ E[(2B_{s1} - B_0 - B_1)(2B_{s2} - B_k - B_{k+1})]`
/// for `s1 ∈ [0,1]`, `s2 ∈ [k, k+1]`.
///
/// Uses `2B_s - B_0 - B_1 = (B_s - B_0) - (B_1 - B_s)` and evaluates the four
/// increment covariances.
pub fn theta(hurst: HurstParameter, k: usize, s1: f64, s2: f64) -> f64 {
    let k0 = k as f64;
    if k0 >= FAR_LAG {
        return theta_shifted(hurst, k, s1, s2 - k0);
    }
    let k1 = k0 + 1.0;
    let ci = |a, b, c, d| cov_increments(hurst, a, b, c, d);
    0.25 * (ci(0.0, s1, k0, s2) - ci(0.0, s1, s2, k1) - ci(s1, 1.0, k0, s2) + ci(s1, 1.0, s2, k1))
}

/// The same quantity expanded directly into nine `R_H` terms.
pub fn theta_expanded(hurst: HurstParameter, k: usize, s1: f64, s2: f64) -> f64 {
    let r = |s, t| cov_fbm(hurst, s, t);
    let k0 = k as f64;
    let k1 = k0 + 1.0;
    let left = [(2.0, s1), (-1.0, 0.0), (-1.0, 1.0)];
    let right = [(2.0, s2), (-1.0, k0), (-1.0, k1)];
    let mut acc = 0.0;
    for &(ca, ta) in &left {
        for &(cb, tb) in &right {
            acc += ca * cb * r(ta, tb);
        }
    }
    0.25 * acc
}
