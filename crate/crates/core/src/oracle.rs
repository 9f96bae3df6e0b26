//! Mean-square errors of the schemes: exact decompositions, the brute-force
//! Gaussian pair oracle and coupled Monte Carlo.

use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::constants::{self, LOG_CASE_CONSTANT};
use crate::error::{Error, Result};
use crate::fbm::{fgn_autocovariance, GridSpec, HurstParameter, PathSampler, Regime};
use crate::numerics::KahanSum;
use crate::parallel::map_indexed;
use crate::rng::{substream, tag};
use crate::schemes::{evaluate, weights, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum MseMethod {
    Decomposition,
    PairExtrapolation,
    MonteCarlo,
}

impl MseMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            MseMethod::Decomposition => "DECOMPOSITION",
            MseMethod::PairExtrapolation => "PAIR_EXTRAPOLATION",
            MseMethod::MonteCarlo => "MONTE_CARLO",
        }
    }
}

impl fmt::Display for MseMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MseReport {
    pub hurst: f64,
    pub horizon: f64,
    pub n: usize,
    pub scheme: SchemeKind,
    pub method: MseMethod,
    pub mse: f64,
    /// Leading asymptotic term at this `n`, when the regime defines one.
    pub prediction: Option<f64>,
    pub ratio: Option<f64>,
    /// Monte Carlo standard error.
    pub error_bar: Option<f64>,
    /// Bound on `|E|X - X^n|² - estimand|` when a finite reference replaces `X`.
    pub bias_bound: Option<f64>,
}

impl MseReport {
    fn new(hurst: HurstParameter, horizon: f64, n: usize, scheme: SchemeKind, method: MseMethod, mse: f64) -> Result<Self> {
        let prediction = asymptotic_prediction(hurst, horizon, n, scheme)?;
        let ratio = prediction.filter(|p| *p > 0.0).map(|p| mse / p);
        Ok(Self {
            hurst: hurst.value(),
            horizon,
            n,
            scheme,
            method,
            mse,
            prediction,
            ratio,
            error_bar: None,
            bias_bound: None,
        })
    }
}

fn check_inputs(horizon: f64, n: usize) -> Result<()> {
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if n < 1 {
        return Err(Error::Domain("n must be at least 1".into()));
    }
    Ok(())
}

/// Leading term of the mean-square error for the regime of `H`.
///
/// Euler: `α1`, `T²/(2n)` at `H = 1/2`, `α2`, `(9/128) log(n) n^{-2}` at
/// `H = 3/4`, `α3 n^{-2}`. Trapezoid: `T²/(4n)` at `H = 1/2` and
/// `α4 n^{1-4H}` above; none below `1/2`.
pub fn asymptotic_prediction(hurst: HurstParameter, horizon: f64, n: usize, scheme: SchemeKind) -> Result<Option<f64>> {
    let h = hurst.value();
    let nf = n as f64;
    let scale = horizon.powf(4.0 * h);
    let rate = nf.powf(1.0 - 4.0 * h);
    let value = match (scheme, hurst.regime()) {
        (SchemeKind::Euler, Regime::Low) => Some(constants::alpha1(hurst)? * rate),
        (SchemeKind::Euler, Regime::Half) => Some(0.5 / nf),
        (SchemeKind::Euler, Regime::Mid) => Some(constants::alpha2(hurst)? * rate),
        (SchemeKind::Euler, Regime::ThreeQuarters) => Some(LOG_CASE_CONSTANT * nf.ln() / (nf * nf)),
        (SchemeKind::Euler, Regime::High) => Some(constants::alpha3(hurst)? / (nf * nf)),
        (SchemeKind::Trapezoid, Regime::Low) => None,
        (SchemeKind::Trapezoid, Regime::Half) => Some(0.25 / nf),
        (SchemeKind::Trapezoid, _) => Some(constants::alpha4(hurst)? * rate),
    };
    Ok(value.map(|v| v * scale))
}

/// Exact `E|X_T - X_T^n|²` for the Euler scheme:
/// `T^{4H} n^{-4H} [n c1 + 2(n-1) c2 + Σ_{k=2}^{n-1} 2(n-k) Q(k)]`.
pub fn mse_euler_exact(hurst: HurstParameter, horizon: f64, n: usize) -> Result<MseReport> {
    check_inputs(horizon, n)?;
    let h = hurst.value();
    let nf = n as f64;
    let mut acc = KahanSum::new();
    acc.add(nf * constants::c1(hurst)?);
    if n >= 2 {
        acc.add(2.0 * (nf - 1.0) * constants::c2(hurst)?);
    }
    if n >= 3 {
        let q = constants::q_table(hurst, n - 1)?;
        for (k, qk) in q.iter().enumerate().take(n).skip(2) {
            acc.add(2.0 * (n - k) as f64 * qk);
        }
    }
    let mse = horizon.powf(4.0 * h) * nf.powf(-4.0 * h) * acc.value();
    MseReport::new(hurst, horizon, n, SchemeKind::Euler, MseMethod::Decomposition, mse)
}

/// Exact `E|X_T - X̂_T^n|²` for the trapezoid scheme, `H > 1/2`:
/// `T^{4H} n^{-4H} [n d(0) + Σ_{k=1}^{n-1} 2(n-k) d(k)]`.
pub fn mse_trapezoid_exact(hurst: HurstParameter, horizon: f64, n: usize) -> Result<MseReport> {
    check_inputs(horizon, n)?;
    if hurst.value() <= 0.5 {
        return Err(Error::Regime {
            what: "mse_trapezoid_exact",
            required: "H in (1/2, 1)",
            hurst: hurst.value(),
        });
    }
    let h = hurst.value();
    let nf = n as f64;
    let d = constants::d_table(hurst, n - 1)?;
    let mut acc = KahanSum::new();
    acc.add(nf * d[0]);
    for (k, dk) in d.iter().enumerate().take(n).skip(1) {
        acc.add(2.0 * (n - k) as f64 * dk);
    }
    let mse = horizon.powf(4.0 * h) * nf.powf(-4.0 * h) * acc.value();
    MseReport::new(hurst, horizon, n, SchemeKind::Trapezoid, MseMethod::Decomposition, mse)
}

/// Exact decomposition for either scheme.
pub fn mse_exact(hurst: HurstParameter, horizon: f64, n: usize, scheme: SchemeKind) -> Result<MseReport> {
    match scheme {
        SchemeKind::Euler => mse_euler_exact(hurst, horizon, n),
        SchemeKind::Trapezoid => mse_trapezoid_exact(hurst, horizon, n),
    }
}

const PAIR_ROW_BLOCK: usize = 64;

/// Exact `E|X^a - X^b|²` for two schemes on a common fine grid of `m`
/// intervals, by Gaussian algebra over the fine increments.
pub fn mse_pair_exact(
    hurst: HurstParameter,
    horizon: f64,
    a: (SchemeKind, usize),
    b: (SchemeKind, usize),
    m: usize,
) -> Result<f64> {
    check_inputs(horizon, m)?;
    let wa = weights(a.0, a.1, m)?;
    let wb = weights(b.0, b.1, m)?;
    let w = wa.difference(&wb)?;
    let two_h = 2.0 * hurst.value();
    // unit-step grid: |i - i'|^{2H} and the fGn autocovariance by lag
    let pow: Vec<f64> = (0..=m).map(|i| if i == 0 { 0.0 } else { (i as f64).powf(two_h) }).collect();
    let gamma: Vec<f64> = (0..m).map(|k| fgn_autocovariance(hurst, k)).collect();
    let sums: Vec<f64> = w.terms.iter().map(|t| t.iter().map(|&(_, c)| c).sum()).collect();
    let weighted: Vec<f64> = w.terms.iter().map(|t| t.iter().map(|&(i, c)| c * pow[i]).sum()).collect();
    // E[D_j D_k] = ½(S_k P_j + S_j P_k - Σ c c' |i - i'|^{2H}); S = 0 for consistent schemes
    let weight_cov = |j: usize, k: usize| -> f64 {
        let mut cross = 0.0;
        for &(i, c) in &w.terms[j] {
            for &(i2, c2) in &w.terms[k] {
                cross += c * c2 * pow[i.abs_diff(i2)];
            }
        }
        0.5 * (sums[k] * weighted[j] + sums[j] * weighted[k] - cross)
    };
    let blocks = m.div_ceil(PAIR_ROW_BLOCK);
    let partials: Vec<f64> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let mut acc = KahanSum::new();
            for j in blk * PAIR_ROW_BLOCK..((blk + 1) * PAIR_ROW_BLOCK).min(m) {
                if w.terms[j].is_empty() {
                    continue;
                }
                for k in 0..m {
                    if w.terms[k].is_empty() {
                        continue;
                    }
                    acc.add(weight_cov(j, k) * gamma[j.abs_diff(k)]);
                }
            }
            acc.value()
        })
        .collect();
    let total: f64 = partials.into_iter().collect::<KahanSum>().value();
    let step = horizon / m as f64;
    Ok(step.powf(2.0 * two_h) * total.max(0.0))
}

/// Exact `E|½ Σ ΔB¹_i ΔB²_i|²` on `m` intervals, the squared Euler-trapezoid gap.
pub fn scheme_difference_variance(hurst: HurstParameter, horizon: f64, m: usize) -> Result<f64> {
    check_inputs(horizon, m)?;
    let mf = m as f64;
    let mut acc = KahanSum::new();
    acc.add(mf);
    for k in 1..m {
        acc.add(2.0 * (m - k) as f64 * fgn_autocovariance(hurst, k).powi(2));
    }
    Ok(0.25 * (horizon / mf).powf(4.0 * hurst.value()) * acc.value())
}

/// `‖X_T - X_T^{(m)}‖_{L²}` for the reference scheme at resolution `m`.
pub(crate) fn reference_error_norm(hurst: HurstParameter, horizon: f64, m: usize, scheme: SchemeKind) -> Result<f64> {
    let euler = mse_euler_exact(hurst, horizon, m)?.mse.sqrt();
    match scheme {
        SchemeKind::Euler => Ok(euler),
        SchemeKind::Trapezoid if hurst.value() > 0.5 => Ok(mse_trapezoid_exact(hurst, horizon, m)?.mse.sqrt()),
        // triangle inequality through the Euler scheme
        SchemeKind::Trapezoid => Ok(euler + scheme_difference_variance(hurst, horizon, m)?.sqrt()),
    }
}

/// `|a² - b²| ≤ δ(2b + δ)` with `a = ‖X - X^n‖`, `b = ‖X^m - X^n‖`, `δ = ‖X - X^m‖`.
pub(crate) fn substitution_bias(estimand: f64, delta: f64) -> f64 {
    delta * (2.0 * estimand.max(0.0).sqrt() + delta)
}

/// Pair oracle against the same scheme at `m = r n`, standing in for the
/// continuous-time area; the substitution bias is bounded from the exact
/// error of the reference.
pub fn mse_pair_report(
    hurst: HurstParameter,
    horizon: f64,
    n: usize,
    scheme: SchemeKind,
    reference_factor: usize,
) -> Result<MseReport> {
    check_reference_factor(reference_factor)?;
    let m = n * reference_factor;
    let mse = mse_pair_exact(hurst, horizon, (scheme, n), (scheme, m), m)?;
    let mut report = MseReport::new(hurst, horizon, n, scheme, MseMethod::PairExtrapolation, mse)?;
    report.bias_bound = Some(substitution_bias(mse, reference_error_norm(hurst, horizon, m, scheme)?));
    Ok(report)
}

pub(crate) fn check_reference_factor(r: usize) -> Result<()> {
    if r < 2 || !r.is_power_of_two() {
        return Err(Error::Domain(format!("reference factor must be a power of two >= 2, got {r}")));
    }
    Ok(())
}

/// Coupled Monte Carlo estimate of `E|X^m - X^n|²` with `m = r n`, the same
/// scheme evaluated on each sampled fine path.
pub fn mse_monte_carlo(
    hurst: HurstParameter,
    horizon: f64,
    n: usize,
    scheme: SchemeKind,
    reference_factor: usize,
    sample_count: usize,
    seed: u64,
) -> Result<MseReport> {
    check_inputs(horizon, n)?;
    check_reference_factor(reference_factor)?;
    if sample_count < 2 {
        return Err(Error::InsufficientSamples {
            required: 2,
            got: sample_count,
        });
    }
    let m = n * reference_factor;
    let sampler = PathSampler::new(hurst, GridSpec::new(horizon, m)?)?;
    let stream_tag = tag("mse_monte_carlo");
    let squares: Vec<Result<f64>> = map_indexed(sample_count, |i| {
        let path = sampler.sample(&mut substream(seed, stream_tag, i as u64));
        let diff = evaluate(&path, m, scheme)? - evaluate(&path, n, scheme)?;
        Ok(diff * diff)
    });
    let squares: Vec<f64> = squares.into_iter().collect::<Result<_>>()?;
    let count = sample_count as f64;
    let mean = squares.iter().copied().collect::<KahanSum>().value() / count;
    let var = squares.iter().map(|s| (s - mean) * (s - mean)).collect::<KahanSum>().value() / (count - 1.0);
    let mut report = MseReport::new(hurst, horizon, n, scheme, MseMethod::MonteCarlo, mean)?;
    report.error_bar = Some((var / count).sqrt());
    report.bias_bound = Some(substitution_bias(mean, reference_error_norm(hurst, horizon, m, scheme)?));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn brownian_closed_form() {
        for n in 1..=64 {
            for &t in &[1.0, 2.5] {
                let r = mse_euler_exact(h(0.5), t, n).unwrap();
                let exact = t * t / (2.0 * n as f64);
                assert!((r.mse - exact).abs() < 1e-12, "n={n}");
                assert!((r.ratio.unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn single_interval_is_c1() {
        for &v in &[0.3, 0.6, 0.9] {
            let r = mse_euler_exact(h(v), 2.0, 1).unwrap();
            let expected = 2f64.powf(4.0 * v) * constants::c1(h(v)).unwrap();
            assert!((r.mse - expected).abs() < 1e-13 * expected);
        }
    }

    #[test]
    fn horizon_scaling() {
        for &v in &[0.35, 0.7] {
            let a = mse_euler_exact(h(v), 1.0, 50).unwrap().mse;
            let b = mse_euler_exact(h(v), 3.0, 50).unwrap().mse;
            assert!((b - 3f64.powf(4.0 * v) * a).abs() <= 1e-12 * b);
        }
        let a = mse_trapezoid_exact(h(0.7), 1.0, 20).unwrap().mse;
        let b = mse_trapezoid_exact(h(0.7), 0.5, 20).unwrap().mse;
        assert!((b - 0.5f64.powf(2.8) * a).abs() <= 1e-12 * b);
    }

    #[test]
    fn trapezoid_regime_guard_and_wiener_limit() {
        assert!(matches!(mse_trapezoid_exact(h(0.4), 1.0, 8), Err(Error::Regime { .. })));
        assert!(mse_trapezoid_exact(h(0.5), 1.0, 8).is_err());
        // as H → 1/2 the Brownian value n/(4n²) is approached with the
        // rate n^{-4H} kept
        let v = 0.501;
        for &n in &[4usize, 16] {
            let r = mse_trapezoid_exact(h(v), 1.0, n).unwrap();
            let wiener = 0.25 * (n as f64).powf(1.0 - 4.0 * v);
            assert!((r.mse / wiener - 1.0).abs() < 0.01, "n={n}: {}", r.mse);
        }
    }

    #[test]
    fn trapezoid_decreases_in_n() {
        let v: Vec<f64> = [8usize, 16, 32, 64].iter().map(|&n| mse_trapezoid_exact(h(0.7), 1.0, n).unwrap().mse).collect();
        assert!(v.windows(2).all(|w| w[1] < w[0]), "{v:?}");
    }

    #[test]
    fn pair_oracle_basics() {
        let hp = h(0.65);
        assert_eq!(mse_pair_exact(hp, 1.0, (SchemeKind::Euler, 8), (SchemeKind::Euler, 8), 64).unwrap(), 0.0);
        for &(n, m) in &[(4usize, 64usize), (8, 256)] {
            let got = mse_pair_exact(h(0.5), 2.0, (SchemeKind::Euler, n), (SchemeKind::Euler, m), m).unwrap();
            let exact = 0.5 * 4.0 * (1.0 / n as f64 - 1.0 / m as f64);
            assert!((got - exact).abs() < 1e-12, "{got} vs {exact}");
        }
        assert!(mse_pair_exact(hp, 1.0, (SchemeKind::Euler, 3), (SchemeKind::Euler, 8), 8).is_err());
    }

    #[test]
    fn pair_oracle_matches_euler_minus_trapezoid_variance() {
        // Euler - trapezoid on n intervals is -½ΣΔB¹ΔB², whose variance is (T/n)^{4H} n Σ_k γ(|k|)² / 4
        let hp = h(0.7);
        let n = 16;
        let got = mse_pair_exact(hp, 1.0, (SchemeKind::Euler, n), (SchemeKind::Trapezoid, n), n).unwrap();
        let mut s = 0.0;
        for j in 0..n {
            for k in 0..n {
                s += fgn_autocovariance(hp, j.abs_diff(k)).powi(2);
            }
        }
        let expected = 0.25 * (1.0 / n as f64).powf(2.8) * s;
        assert!((got - expected).abs() < 1e-14, "{got} vs {expected}");
    }

    #[test]
    fn difference_variance_matches_pair_oracle() {
        for &v in &[0.3, 0.8] {
            let a = scheme_difference_variance(h(v), 1.5, 32).unwrap();
            let b = mse_pair_exact(h(v), 1.5, (SchemeKind::Euler, 32), (SchemeKind::Trapezoid, 32), 32).unwrap();
            assert!((a - b).abs() < 1e-13 * b, "{a} vs {b}");
        }
    }

    #[test]
    fn monte_carlo_brownian() {
        let r = mse_monte_carlo(h(0.5), 1.0, 16, SchemeKind::Euler, 64, 20_000, 17).unwrap();
        let exact = 0.5 * (1.0 / 16.0 - 1.0 / 1024.0);
        let se = r.error_bar.unwrap();
        assert!((r.mse - exact).abs() < 3.0 * se, "{} vs {exact} ± {se}", r.mse);
        assert!(r.bias_bound.unwrap() > 0.0);
    }

    #[test]
    fn monte_carlo_is_deterministic() {
        let a = mse_monte_carlo(h(0.7), 1.0, 8, SchemeKind::Trapezoid, 4, 200, 5).unwrap();
        let b = mse_monte_carlo(h(0.7), 1.0, 8, SchemeKind::Trapezoid, 4, 200, 5).unwrap();
        assert_eq!(a, b);
        assert!(mse_monte_carlo(h(0.7), 1.0, 8, SchemeKind::Trapezoid, 3, 200, 5).is_err());
    }
}
