
use crate::error::{Error, Result};

/// Natural logarithm of the Gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain(format!("log_gamma requires x > 0, got {x}")));
    }
    Ok(libm::lgamma(x))
}

/// Euler Beta function B(a, b) = Gamma(a) Gamma(b) / Gamma(a + b).
pub fn beta(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!("beta requires a, b > 0, got ({a}, {b})")));
    }
    if a + b < 150.0 {
        return Ok(libm::tgamma(a) * libm::tgamma(b) / libm::tgamma(a + b));
    }
    Ok((libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)).exp())
}

const ETA_TERMS: usize = 60;

/// Riemann zeta function for real `s > 1`.
///
/// Evaluates the alternating Dirichlet eta series with Borwein's
/// acceleration and converts through `zeta(s) = eta(s) / (1 - 2^(1-s))`.
/// The pole at `s = 1` is refused rather than regularized.
pub fn riemann_zeta(s: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::Domain(format!("riemann_zeta requires s > 1, got {s}")));
    }
    let n = ETA_TERMS;
    let nf = n as f64;
    // d_k = n * sum_{i<=k} (n+i-1)! 4^i / ((n-i)! (2i)!)
    let mut d = Vec::with_capacity(n + 1);
    let mut term = 1.0;
    let mut acc = 0.0;
    for i in 0..=n {
        acc += term;
        d.push(acc);
        let fi = i as f64;
        term *= 4.0 * (nf + fi) * (nf - fi) / ((2.0 * fi + 1.0) * (2.0 * fi + 2.0));
    }
    let dn = d[n];
    let mut sum = 0.0;
    for k in (0..n).rev() {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign * (d[k] - dn) / ((k + 1) as f64).powf(s);
    }
    let eta = -sum / dn;
    // 1 - 2^(1-s), without cancellation near the pole
    let denom = -((1.0 - s) * std::f64::consts::LN_2).exp_m1();
    Ok(eta / denom)
}
