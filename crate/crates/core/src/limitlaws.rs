//! Limit laws of the scaled Euler error: empirical sample sets, Rosenblatt
//! samplers, normality and Kolmogorov-Smirnov tests, and convergence-rate
//! regression.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::constants::{self, LOG_CASE_CONSTANT};
use crate::error::{Error, Result};
use crate::fbm::{GridSpec, HurstParameter, PathPair, PathSampler, Regime};
use crate::numerics::{beta, integrate_weighted, KahanSum, QuadratureSpec};
use crate::oracle::{check_reference_factor, reference_error_norm, substitution_bias};
use crate::parallel::map_indexed;
use crate::rng::{substream, tag};
use crate::schemes::{evaluate, scheme_difference, SchemeKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// Moment summary; standard errors are delete-one jackknife estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub count: usize,
    pub mean: Estimate,
    /// Unbiased sample variance.
    pub variance: Estimate,
    pub skewness: Estimate,
    pub excess_kurtosis: Estimate,
}

/// Central moments `m2, m3, m4` (population normalization) and the mean.
#[derive(Debug, Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
    m3: f64,
    m4: f64,
}

impl Moments {
    /// From power sums `s_p = Σ (x - center)^p`.
    fn from_sums(n: f64, center: f64, s: [f64; 4]) -> Self {
        let mu = s[0] / n;
        let (a2, a3, a4) = (s[1] / n, s[2] / n, s[3] / n);
        let mu2 = mu * mu;
        Self {
            n,
            mean: center + mu,
            m2: a2 - mu2,
            m3: a3 - 3.0 * mu * a2 + 2.0 * mu2 * mu,
            m4: a4 - 4.0 * mu * a3 + 6.0 * mu2 * a2 - 3.0 * mu2 * mu2,
        }
    }

    fn stats(&self) -> [f64; 4] {
        [
            self.mean,
            self.m2 * self.n / (self.n - 1.0),
            self.m3 / self.m2.powf(1.5),
            self.m4 / (self.m2 * self.m2) - 3.0,
        ]
    }
}

pub fn summarize(values: &[f64]) -> Result<Summary> {
    let count = values.len();
    if count < 2 {
        return Err(Error::InsufficientSamples { required: 2, got: count });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("sample contains non-finite values".into()));
    }
    let n = count as f64;
    let center = values.iter().copied().collect::<KahanSum>().value() / n;
    let mut sums = [KahanSum::new(), KahanSum::new(), KahanSum::new(), KahanSum::new()];
    for &x in values {
        let d = x - center;
        let mut p = d;
        for s in sums.iter_mut() {
            s.add(p);
            p *= d;
        }
    }
    let s = sums.map(|k| k.value());
    let full = Moments::from_sums(n, center, s).stats();
    let mut estimates = [Estimate { value: 0.0, std_error: 0.0 }; 4];
    if count >= 3 {
        let loo: Vec<[f64; 4]> = values
            .iter()
            .map(|&x| {
                let d = x - center;
                let dp = [d, d * d, d * d * d, d * d * d * d];
                let reduced = [s[0] - dp[0], s[1] - dp[1], s[2] - dp[2], s[3] - dp[3]];
                Moments::from_sums(n - 1.0, center, reduced).stats()
            })
            .collect();
        for (q, est) in estimates.iter_mut().enumerate() {
            let avg = loo.iter().map(|t| t[q]).sum::<f64>() / n;
            let ss: f64 = loo.iter().map(|t| (t[q] - avg).powi(2)).sum();
            est.std_error = ((n - 1.0) / n * ss).sqrt();
        }
    }
    for (q, est) in estimates.iter_mut().enumerate() {
        est.value = full[q];
    }
    Ok(Summary {
        count,
        mean: estimates[0],
        variance: estimates[1],
        skewness: estimates[2],
        excess_kurtosis: estimates[3],
    })
}

/// Independent draws of one scalar statistic with their summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleSet {
    values: Vec<f64>,
    summary: Summary,
    provenance: String,
    /// Bound on the bias of the second moment from reference substitution.
    bias_bound: Option<f64>,
}

impl SampleSet {
    pub fn new(values: Vec<f64>, provenance: impl Into<String>) -> Result<Self> {
        let summary = summarize(&values)?;
        Ok(Self {
            values,
            summary,
            provenance: provenance.into(),
            bias_bound: None,
        })
    }

    pub fn with_bias_bound(mut self, bound: f64) -> Self {
        self.bias_bound = Some(bound);
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn summary(&self) -> &Summary {
        &self.summary
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn bias_bound(&self) -> Option<f64> {
        self.bias_bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Every value multiplied by `factor`; a bias bound scales by `factor²`.
    pub fn scaled(&self, factor: f64, provenance: impl Into<String>) -> Result<Self> {
        let mut out = SampleSet::new(self.values.iter().map(|v| v * factor).collect(), provenance)?;
        out.bias_bound = self.bias_bound.map(|b| b * factor * factor);
        Ok(out)
    }

    /// Rescaled to unit sample variance.
    pub fn normalized(&self) -> Result<Self> {
        let sd = self.summary.variance.value.sqrt();
        if !(sd > 0.0) {
            return Err(Error::Domain("cannot normalize a sample with zero variance".into()));
        }
        self.scaled(1.0 / sd, format!("{} | normalized by sd {:.6e}", self.provenance, sd))
    }
}

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov

/// `P(K > λ)` for the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let c = (2.0 * PI).sqrt() / lambda;
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * PI * PI / (8.0 * lambda * lambda)).exp()
            })
            .sum();
        return (1.0 - c * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|k| {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            sign * (-2.0 * kf * kf * lambda * lambda).exp()
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// `λ` with `P(K > λ) = level`.
pub fn kolmogorov_critical(level: f64) -> f64 {
    let (mut lo, mut hi) = (0.05, 10.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_survival(mid) > level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsReport {
    /// Supremum distance between the distribution functions.
    pub statistic: f64,
    /// `n` for one sample, `n m / (n + m)` for two.
    pub effective_count: f64,
    pub p_value: f64,
    pub critical_05: f64,
    pub critical_01: f64,
}

impl KsReport {
    fn new(statistic: f64, effective_count: f64) -> Self {
        let root = effective_count.sqrt();
        Self {
            statistic,
            effective_count,
            p_value: kolmogorov_survival(root * statistic),
            critical_05: kolmogorov_critical(0.05) / root,
            critical_01: kolmogorov_critical(0.01) / root,
        }
    }

    pub fn critical_value(&self, level: f64) -> f64 {
        kolmogorov_critical(level) / self.effective_count.sqrt()
    }

    pub fn passes(&self, level: f64) -> bool {
        self.statistic <= self.critical_value(level)
    }
}

fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// One-sample distance against a continuous distribution function.
pub fn ks_one_sample<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> Result<KsReport> {
    if values.is_empty() {
        return Err(Error::InsufficientSamples { required: 1, got: 0 });
    }
    let v = sorted(values);
    let n = v.len() as f64;
    let d = v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n)
    });
    Ok(KsReport::new(d, n))
}

pub fn ks_two_sample(a: &SampleSet, b: &SampleSet) -> Result<KsReport> {
    for s in [a, b] {
        if s.len() < 100 {
            return Err(Error::InsufficientSamples { required: 100, got: s.len() });
        }
    }
    let (x, y) = (sorted(a.values()), sorted(b.values()));
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < n && j < m {
        let t = x[i].min(y[j]);
        while i < n && x[i] == t {
            i += 1;
        }
        while j < m && y[j] == t {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let (nf, mf) = (n as f64, m as f64);
    Ok(KsReport::new(d, nf * mf / (nf + mf)))
}

// ---------------------------------------------------------------------------
// Normality

/// Two-sided levels for the three normality checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NormalityThresholds {
    pub skewness_level: f64,
    pub kurtosis_level: f64,
    pub ks_level: f64,
}

impl Default for NormalityThresholds {
    fn default() -> Self {
        Self {
            skewness_level: 0.01,
            kurtosis_level: 0.01,
            ks_level: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NormalityReport {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub skewness: Estimate,
    pub excess_kurtosis: Estimate,
    /// Against the normal law with the sample's own mean and variance.
    pub ks: KsReport,
    pub skewness_pass: bool,
    pub kurtosis_pass: bool,
    pub ks_pass: bool,
    pub pass: bool,
}

fn two_sided_quantile(level: f64) -> f64 {
    Normal::standard().inverse_cdf(1.0 - 0.5 * level)
}

pub fn normality_report(samples: &SampleSet, thresholds: &NormalityThresholds) -> Result<NormalityReport> {
    if samples.len() < 1000 {
        return Err(Error::InsufficientSamples { required: 1000, got: samples.len() });
    }
    let s = samples.summary();
    let fitted = Normal::new(s.mean.value, s.variance.value.sqrt())
        .map_err(|e| Error::Domain(format!("cannot fit a normal law: {e}")))?;
    let ks = ks_one_sample(samples.values(), |x| fitted.cdf(x))?;
    let within = |e: &Estimate, level: f64| e.value.abs() <= two_sided_quantile(level) * e.std_error;
    let skewness_pass = within(&s.skewness, thresholds.skewness_level);
    let kurtosis_pass = within(&s.excess_kurtosis, thresholds.kurtosis_level);
    let ks_pass = ks.passes(thresholds.ks_level);
    Ok(NormalityReport {
        count: s.count,
        mean: s.mean.value,
        variance: s.variance.value,
        skewness: s.skewness,
        excess_kurtosis: s.excess_kurtosis,
        ks,
        skewness_pass,
        kurtosis_pass,
        ks_pass,
        pass: skewness_pass && kurtosis_pass && ks_pass,
    })
}

// ---------------------------------------------------------------------------
// Rate regression

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RateModel {
    /// `mse = C n^p`
    Power,
    /// `mse = C log(n) n^{-2}`
    PowerLog,
}

impl RateModel {
    pub fn as_str(&self) -> &'static str {
        match self {
            RateModel::Power => "POWER",
            RateModel::PowerLog => "POWER_LOG",
        }
    }
}

impl fmt::Display for RateModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub model: RateModel,
    /// Slope of `log mse` (POWER) or `log(mse / log n)` (POWER_LOG) on `log n`.
    pub exponent: f64,
    /// `C` of the model; under POWER_LOG the slope on `log log n` is fixed to 1.
    pub coefficient: f64,
    /// POWER_LOG only: free slope of `log(mse n²)` on `log log n`.
    pub log_exponent: Option<f64>,
    pub residuals: Vec<f64>,
}

/// Ordinary least squares `y = a + b x`.
fn least_squares(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::DegenerateDesign("regressor has no spread".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    Ok((my - b * mx, b))
}

pub fn rate_regression(points: &[(usize, f64)], model: RateModel) -> Result<RateFit> {
    if points.len() < 4 {
        return Err(Error::DegenerateDesign(format!("need at least 4 points, got {}", points.len())));
    }
    if points.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::DegenerateDesign("n values must be strictly increasing".into()));
    }
    if points.iter().any(|&(n, e)| n < 2 || !(e > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateDesign("need n >= 2 and positive finite errors".into()));
    }
    let log_n: Vec<f64> = points.iter().map(|&(n, _)| (n as f64).ln()).collect();
    match model {
        RateModel::Power => {
            let y: Vec<f64> = points.iter().map(|&(_, e)| e.ln()).collect();
            let (a, b) = least_squares(&log_n, &y)?;
            Ok(RateFit {
                model,
                exponent: b,
                coefficient: a.exp(),
                log_exponent: None,
                residuals: log_n.iter().zip(&y).map(|(x, y)| y - a - b * x).collect(),
            })
        }
        RateModel::PowerLog => {
            let y: Vec<f64> = points.iter().zip(&log_n).map(|(&(_, e), l)| (e / l).ln()).collect();
            let (_, exponent) = least_squares(&log_n, &y)?;
            let log_log: Vec<f64> = log_n.iter().map(|l| l.ln()).collect();
            let z: Vec<f64> = points.iter().zip(&log_n).map(|(&(_, e), l)| e.ln() + 2.0 * l).collect();
            let (_, log_exponent) = least_squares(&log_log, &z)?;
            let offsets: Vec<f64> = z.iter().zip(&log_log).map(|(z, ll)| z - ll).collect();
            let a = offsets.iter().sum::<f64>() / offsets.len() as f64;
            Ok(RateFit {
                model,
                exponent,
                coefficient: a.exp(),
                log_exponent: Some(log_exponent),
                residuals: offsets.iter().map(|o| o - a).collect(),
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Scaled scheme errors

/// Normalization of `X_T - X_T^n` that has a nondegenerate limit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorScaling {
    /// `n^{2H-1/2}` for `H < 3/4`
    Power,
    /// `n / √log n` at `H = 3/4`
    LogCorrected,
    /// `n` for `H > 3/4`
    Linear,
}

impl ErrorScaling {
    pub fn for_hurst(hurst: HurstParameter) -> Self {
        match hurst.regime() {
            Regime::ThreeQuarters => ErrorScaling::LogCorrected,
            Regime::High => ErrorScaling::Linear,
            _ => ErrorScaling::Power,
        }
    }

    pub fn factor(&self, hurst: HurstParameter, n: usize) -> f64 {
        let nf = n as f64;
        match self {
            ErrorScaling::Power => nf.powf(2.0 * hurst.value() - 0.5),
            ErrorScaling::LogCorrected => nf / nf.ln().sqrt(),
            ErrorScaling::Linear => nf,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorScaling::Power => "n^(2H-1/2)",
            ErrorScaling::LogCorrected => "n/sqrt(log n)",
            ErrorScaling::Linear => "n",
        }
    }
}

/// Variance of the limit law of the scaled Euler error.
pub fn limit_variance(hurst: HurstParameter, horizon: f64) -> Result<f64> {
    let scale = horizon.powf(4.0 * hurst.value());
    let c = match hurst.regime() {
        Regime::Low => constants::alpha1(hurst)?,
        Regime::Half => 0.5,
        Regime::Mid => constants::alpha2(hurst)?,
        Regime::ThreeQuarters => LOG_CASE_CONSTANT,
        Regime::High => constants::alpha3(hurst)?,
    };
    Ok(c * scale)
}

/// Scheme standing in for the area at `r n`: trapezoid above `H = 1/2`,
/// Euler otherwise.
pub fn reference_scheme(hurst: HurstParameter) -> SchemeKind {
    if hurst.value() > 0.5 {
        SchemeKind::Trapezoid
    } else {
        SchemeKind::Euler
    }
}

/// Draws of `scale(n) (X^{rn}_ref - X^n_Euler)` on coupled fine paths.
pub fn scaled_error_samples(
    hurst: HurstParameter,
    horizon: f64,
    n: usize,
    reference_factor: usize,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    check_reference_factor(reference_factor)?;
    if n < 2 {
        return Err(Error::Domain(format!("n must be at least 2, got {n}")));
    }
    let m = n * reference_factor;
    let sampler = PathSampler::new(hurst, GridSpec::new(horizon, m)?)?;
    let reference = reference_scheme(hurst);
    let stream_tag = tag("scaled_error");
    let errors: Vec<Result<f64>> = map_indexed(count, |i| {
        let path = sampler.sample(&mut substream(seed, stream_tag, i as u64));
        Ok(evaluate(&path, m, reference)? - evaluate(&path, n, SchemeKind::Euler)?)
    });
    let errors: Vec<f64> = errors.into_iter().collect::<Result<_>>()?;
    let scaling = ErrorScaling::for_hurst(hurst);
    let factor = scaling.factor(hurst, n);
    let second_moment = errors.iter().map(|e| e * e).collect::<KahanSum>().value() / count.max(1) as f64;
    let bias = substitution_bias(second_moment, reference_error_norm(hurst, horizon, m, reference)?);
    let provenance = format!(
        "scaled Euler error H={} T={} n={} scaling={} reference={}@{} seed={}",
        hurst.value(),
        horizon,
        n,
        scaling.as_str(),
        reference,
        m,
        seed
    );
    Ok(SampleSet::new(errors.iter().map(|e| factor * e).collect(), provenance)?.with_bias_bound(bias * factor * factor))
}

// ---------------------------------------------------------------------------
// Rosenblatt laws

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RosenblattSpec {
    hurst: HurstParameter,
    qv_resolution: usize,
    c2_tv: f64,
}

impl RosenblattSpec {
    pub const MIN_RESOLUTION: usize = 1 << 10;

    pub fn new(hurst: HurstParameter, qv_resolution: usize) -> Result<Self> {
        let h = hurst.value();
        if h <= 0.75 {
            return Err(Error::Regime {
                what: "Rosenblatt sampler",
                required: "H in (3/4, 1)",
                hurst: h,
            });
        }
        if qv_resolution < Self::MIN_RESOLUTION {
            return Err(Error::Domain(format!(
                "quadratic-variation resolution must be at least {}, got {qv_resolution}",
                Self::MIN_RESOLUTION
            )));
        }
        Ok(Self {
            hurst,
            qv_resolution,
            c2_tv: 2.0 * h * h * (2.0 * h - 1.0) / (4.0 * h - 3.0),
        })
    }

    pub fn hurst(&self) -> HurstParameter {
        self.hurst
    }

    pub fn qv_resolution(&self) -> usize {
        self.qv_resolution
    }

    pub fn c2_tv(&self) -> f64 {
        self.c2_tv
    }
}

/// `√(m^{4-4H}/c2) V_m` with `V_m = m^{-1} Σ (m^{2H}|Δβ|² - 1)` on `[0, 1]`.
fn normalized_quadratic_variation(spec: &RosenblattSpec, unit_noise: &[f64]) -> f64 {
    let m = unit_noise.len() as f64;
    let v = unit_noise.iter().map(|x| x * x - 1.0).collect::<KahanSum>().value() / m;
    (m.powf(4.0 - 4.0 * spec.hurst.value()) / spec.c2_tv).sqrt() * v
}

/// Approximate standard Rosenblatt draws from normalized quadratic
/// variations. Draws `2j` and `2j + 1` use the two independent components of
/// one sampled pair.
pub fn rosenblatt_sample_qv(spec: &RosenblattSpec, count: usize, seed: u64) -> Result<SampleSet> {
    let sampler = PathSampler::new(spec.hurst, GridSpec::new(1.0, spec.qv_resolution)?)?;
    let stream_tag = tag("rosenblatt_qv");
    let pairs = map_indexed(count.div_ceil(2), |j| {
        let (x1, x2) = sampler.sample_unit_noise(&mut substream(seed, stream_tag, j as u64));
        [normalized_quadratic_variation(spec, &x1), normalized_quadratic_variation(spec, &x2)]
    });
    let values: Vec<f64> = pairs.into_iter().flatten().take(count).collect();
    let provenance = format!(
        "Rosenblatt (quadratic variation) H={} m={} seed={}",
        spec.hurst.value(),
        spec.qv_resolution,
        seed
    );
    SampleSet::new(values, provenance)
}

/// `scale (R1 - R2)` with `R1, R2` independent quadratic-variation draws.
pub fn rosenblatt_difference_samples(spec: &RosenblattSpec, scale: f64, count: usize, seed: u64) -> Result<SampleSet> {
    let r = rosenblatt_sample_qv(spec, 2 * count, seed)?;
    let values = r.values().chunks_exact(2).map(|p| scale * (p[0] - p[1])).collect();
    let provenance = format!(
        "{:.6e} (R1 - R2), R from quadratic variation H={} m={} seed={}",
        scale,
        spec.hurst.value(),
        spec.qv_resolution,
        seed
    );
    SampleSet::new(values, provenance)
}

fn require_rosenblatt_hurst(hurst: HurstParameter, what: &'static str) -> Result<f64> {
    let h = hurst.value();
    if h <= 0.5 {
        return Err(Error::Regime {
            what,
            required: "H in (1/2, 1)",
            hurst: h,
        });
    }
    Ok(h)
}

/// `c_H = (H(2H-1) / B(2-2H, H-1/2))^{1/2}`
fn kernel_normalization(h: f64) -> Result<f64> {
    Ok((h * (2.0 * h - 1.0) / beta(2.0 - 2.0 * h, h - 0.5)?).sqrt())
}

/// `K_H(t, s) = c_H s^{1/2-H} ∫_s^t (u-s)^{H-3/2} u^{H-1/2} du` for `s < t`,
/// zero otherwise.
pub fn rosenblatt_kernel(hurst: HurstParameter, t: f64, s: f64) -> Result<f64> {
    let h = require_rosenblatt_hurst(hurst, "rosenblatt_kernel")?;
    for (name, v) in [("t", t), ("s", s)] {
        if !(v > 0.0 && v <= 1.0) {
            return Err(Error::Domain(format!("{name} must lie in (0, 1], got {v}")));
        }
    }
    if s >= t {
        return Ok(0.0);
    }
    let r = integrate_weighted(|u| u.powf(h - 0.5), s, t, (h - 1.5, 0.0), &QuadratureSpec::constants())?;
    Ok(kernel_normalization(h)? * s.powf(0.5 - h) * r.value)
}

/// `∫_{max(r,s)}^1 ∂_u K_H(u, s) ∂_u K_H(u, r) du` for `r ≠ s`.
pub fn rosenblatt_inner_kernel(hurst: HurstParameter, r: f64, s: f64) -> Result<f64> {
    let h = require_rosenblatt_hurst(hurst, "rosenblatt_inner_kernel")?;
    if r == s {
        return Err(Error::Singular(format!("inner kernel is singular on the diagonal (r = s = {r})")));
    }
    let (lo, hi) = if r < s { (r, s) } else { (s, r) };
    if !(lo > 0.0 && hi < 1.0) {
        return Err(Error::Domain(format!("arguments must lie in (0, 1), got ({r}, {s})")));
    }
    let e = h - 1.5;
    let g = |u: f64| (u - lo).powf(e) * u.powf(2.0 * h - 1.0);
    let integral = integrate_weighted(g, hi, 1.0, (e, 0.0), &QuadratureSpec::constants())?;
    let c = kernel_normalization(h)?;
    Ok(c * c * (r * s).powf(0.5 - h) * integral.value)
}

/// Midpoint discretization `Σ_{i≠j} A_ij ΔW_i ΔW_j` of the double Wiener
/// integral on `K` cells, diagonal cells excluded.
#[derive(Debug, Clone, PartialEq)]
pub struct RosenblattQuadraticForm {
    hurst: HurstParameter,
    discretization: usize,
    /// Row-major `K × K`, prefactor included, zero diagonal.
    matrix: Vec<f64>,
}

impl RosenblattQuadraticForm {
    pub fn new(hurst: HurstParameter, discretization: usize) -> Result<Self> {
        let h = require_rosenblatt_hurst(hurst, "rosenblatt double integral")?;
        if h <= 0.75 {
            return Err(Error::Regime {
                what: "rosenblatt double integral",
                required: "H in (3/4, 1)",
                hurst: h,
            });
        }
        if discretization < 64 {
            return Err(Error::Domain(format!("discretization must be at least 64, got {discretization}")));
        }
        let k = discretization;
        let prefactor = (4.0 * h - 3.0).sqrt() / (4.0 * h * (2.0 * h - 1.0).sqrt());
        let centre = |i: usize| (i as f64 + 0.5) / k as f64;
        let rows: Vec<Result<Vec<f64>>> = map_indexed(k, |i| {
            (0..k)
                .map(|j| {
                    if j <= i {
                        Ok(0.0)
                    } else {
                        Ok(prefactor * rosenblatt_inner_kernel(hurst, centre(i), centre(j))?)
                    }
                })
                .collect()
        });
        let mut matrix = rows.into_iter().collect::<Result<Vec<_>>>()?.concat();
        for i in 0..k {
            for j in 0..i {
                matrix[i * k + j] = matrix[j * k + i];
            }
        }
        Ok(Self {
            hurst,
            discretization,
            matrix,
        })
    }

    pub fn discretization(&self) -> usize {
        self.discretization
    }

    /// Exact variance of the discretized form, `2 Σ_{i≠j} A_ij² / K²`.
    pub fn variance(&self) -> f64 {
        let k = self.discretization as f64;
        2.0 * self.matrix.iter().map(|a| a * a).collect::<KahanSum>().value() / (k * k)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let k = self.discretization;
        let sd = (1.0 / k as f64).sqrt();
        let w: Vec<f64> = (0..k).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect();
        let mut acc = KahanSum::new();
        for i in 0..k {
            let row = &self.matrix[i * k..(i + 1) * k];
            acc.add(w[i] * row.iter().zip(&w).map(|(a, x)| a * x).sum::<f64>());
        }
        acc.value()
    }
}

/// Raw draws of the discretized double-integral Rosenblatt variable.
pub fn rosenblatt_sample_double_integral(
    hurst: HurstParameter,
    discretization: usize,
    count: usize,
    seed: u64,
) -> Result<SampleSet> {
    let form = RosenblattQuadraticForm::new(hurst, discretization)?;
    let stream_tag = tag("rosenblatt_double_integral");
    let values = map_indexed(count, |i| form.sample(&mut substream(seed, stream_tag, i as u64)));
    let provenance = format!(
        "Rosenblatt (double integral) H={} K={} seed={} discrete variance={:.6e}",
        hurst.value(),
        discretization,
        seed,
        form.variance()
    );
    SampleSet::new(values, provenance)
}

// ---------------------------------------------------------------------------
// Rotation

/// `B¹ = (β + β̃)/√2`, `B² = (β - β̃)/√2` from the pair `(β, β̃)`.
pub fn rotate(pair: &PathPair) -> Result<PathPair> {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let (a, b) = (pair.component1(), pair.component2());
    let plus = a.iter().zip(b).map(|(x, y)| r * (x + y)).collect();
    let minus = a.iter().zip(b).map(|(x, y)| r * (x - y)).collect();
    PathPair::new(pair.grid(), plus, minus)
}

/// `Σ ΔB¹_i ΔB²_i` on `n` coarse intervals.
pub fn cross_variation(path: &PathPair, n: usize) -> Result<f64> {
    Ok(-2.0 * scheme_difference(path, n)?)
}

/// `½ Σ (|ΔB¹_i|² - |ΔB²_i|²)` on `n` coarse intervals.
pub fn half_quadratic_variation_difference(path: &PathPair, n: usize) -> Result<f64> {
    let m = path.resolution();
    if n == 0 || m % n != 0 {
        return Err(Error::Divisibility { resolution: m, divisor: n });
    }
    let s = m / n;
    let (a, b) = (path.component1(), path.component2());
    let mut acc = KahanSum::new();
    for i in 0..n {
        let (l, r) = (i * s, (i + 1) * s);
        acc.add((a[r] - a[l]).powi(2) - (b[r] - b[l]).powi(2));
    }
    Ok(0.5 * acc.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbm::sample_path_pair;
    use crate::oracle::scheme_difference_variance;
    use rand_distr::{ChiSquared, Distribution};

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    fn normals(count: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, tag("test_normals"), 0);
        (0..count).map(|_| rng.sample(StandardNormal)).collect()
    }

    #[test]
    fn summary_matches_direct_formulas() {
        let v = vec![1.0, 2.0, 4.0, 8.0, 3.0];
        let s = summarize(&v).unwrap();
        let n = 5.0;
        let mean = 18.0 / n;
        let d: Vec<f64> = v.iter().map(|x| x - mean).collect();
        let m2 = d.iter().map(|x| x * x).sum::<f64>() / n;
        let m3 = d.iter().map(|x| x.powi(3)).sum::<f64>() / n;
        let m4 = d.iter().map(|x| x.powi(4)).sum::<f64>() / n;
        assert!((s.mean.value - mean).abs() < 1e-14);
        assert!((s.variance.value - m2 * n / (n - 1.0)).abs() < 1e-13);
        assert!((s.skewness.value - m3 / m2.powf(1.5)).abs() < 1e-13);
        assert!((s.excess_kurtosis.value - (m4 / (m2 * m2) - 3.0)).abs() < 1e-13);
        // jackknife of the mean reduces to s/√n
        assert!((s.mean.std_error - (s.variance.value / n).sqrt()).abs() < 1e-13);
    }

    #[test]
    fn jackknife_matches_brute_force() {
        let v = normals(200, 3);
        let s = summarize(&v).unwrap();
        let n = v.len() as f64;
        let loo: Vec<Summary> = (0..v.len())
            .map(|i| {
                let mut w = v.clone();
                w.remove(i);
                summarize(&w).unwrap()
            })
            .collect();
        let se = |f: &dyn Fn(&Summary) -> f64| {
            let avg = loo.iter().map(f).sum::<f64>() / n;
            ((n - 1.0) / n * loo.iter().map(|t| (f(t) - avg).powi(2)).sum::<f64>()).sqrt()
        };
        assert!((s.variance.std_error - se(&|t| t.variance.value)).abs() < 1e-10);
        assert!((s.skewness.std_error - se(&|t| t.skewness.value)).abs() < 1e-10);
        assert!((s.excess_kurtosis.std_error - se(&|t| t.excess_kurtosis.value)).abs() < 1e-10);
    }

    #[test]
    fn sample_set_needs_two_values() {
        assert!(matches!(SampleSet::new(vec![1.0], "x"), Err(Error::InsufficientSamples { .. })));
        assert!(SampleSet::new(vec![1.0, f64::NAN], "x").is_err());
    }

    #[test]
    fn kolmogorov_distribution_values() {
        assert!((kolmogorov_critical(0.05) - 1.3581).abs() < 1e-4);
        assert!((kolmogorov_critical(0.01) - 1.6276).abs() < 1e-4);
        // both series branches agree where they meet
        let a = kolmogorov_survival(1.0 - 1e-12);
        let b = kolmogorov_survival(1.0);
        assert!((a - b).abs() < 1e-10);
    }

    #[test]
    fn ks_two_sample_basics() {
        let a = SampleSet::new(normals(500, 1), "a").unwrap();
        assert_eq!(ks_two_sample(&a, &a).unwrap().statistic, 0.0);
        let shifted = SampleSet::new(normals(10_000, 2).iter().map(|x| x + 1.0).collect(), "b").unwrap();
        let base = SampleSet::new(normals(10_000, 3), "c").unwrap();
        assert!(!ks_two_sample(&base, &shifted).unwrap().passes(0.01));
        let small = SampleSet::new(normals(50, 4), "d").unwrap();
        assert!(ks_two_sample(&a, &small).is_err());
    }

    #[test]
    fn ks_two_sample_calibration() {
        let trials = 200;
        let accepted = (0..trials)
            .filter(|&t| {
                let a = SampleSet::new(normals(300, 1000 + 2 * t), "a").unwrap();
                let b = SampleSet::new(normals(300, 1001 + 2 * t), "b").unwrap();
                ks_two_sample(&a, &b).unwrap().passes(0.01)
            })
            .count();
        assert!(accepted as f64 >= 0.98 * trials as f64, "{accepted}/{trials}");
    }

    #[test]
    fn normality_calibration_and_power() {
        let t = NormalityThresholds::default();
        let normal = SampleSet::new(normals(5000, 11), "normal").unwrap();
        let r = normality_report(&normal, &t).unwrap();
        assert!(r.pass, "{r:?}");
        let mut rng = substream(12, tag("chi2"), 0);
        let chi = ChiSquared::new(1.0).unwrap();
        let values: Vec<f64> = (0..5000).map(|_| chi.sample(&mut rng)).collect();
        let r = normality_report(&SampleSet::new(values, "chi2").unwrap(), &t).unwrap();
        assert!(!r.pass && !r.skewness_pass);
        assert!((r.skewness.value - 8f64.sqrt()).abs() < 0.5);
        let few = SampleSet::new(normals(999, 13), "few").unwrap();
        assert!(normality_report(&few, &t).is_err());
    }

    #[test]
    fn regression_recovers_exact_models() {
        let pts: Vec<(usize, f64)> = (3..10).map(|p| 1usize << p).map(|n| (n, 3.0 * (n as f64).powf(-1.4))).collect();
        let f = rate_regression(&pts, RateModel::Power).unwrap();
        assert!((f.exponent + 1.4).abs() < 1e-10);
        assert!((f.coefficient - 3.0).abs() < 1e-9);
        let pts: Vec<(usize, f64)> = (3..10).map(|p| 1usize << p).map(|n| (n, 0.07 * (n as f64).ln() / (n * n) as f64)).collect();
        let f = rate_regression(&pts, RateModel::PowerLog).unwrap();
        assert!((f.coefficient - 0.07).abs() < 1e-12);
        assert!((f.exponent + 2.0).abs() < 1e-10);
        assert!((f.log_exponent.unwrap() - 1.0).abs() < 1e-10);
        assert!(f.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn regression_rejects_degenerate_designs() {
        let three = [(2usize, 1.0), (4, 0.5), (8, 0.25)];
        assert!(matches!(rate_regression(&three, RateModel::Power), Err(Error::DegenerateDesign(_))));
        let unordered = [(2usize, 1.0), (8, 0.5), (4, 0.25), (16, 0.1)];
        assert!(rate_regression(&unordered, RateModel::Power).is_err());
        let zero = [(2usize, 1.0), (4, 0.0), (8, 0.25), (16, 0.1)];
        assert!(rate_regression(&zero, RateModel::Power).is_err());
    }

    #[test]
    fn scaling_dispatch() {
        assert_eq!(ErrorScaling::for_hurst(h(0.3)), ErrorScaling::Power);
        assert_eq!(ErrorScaling::for_hurst(h(0.6)), ErrorScaling::Power);
        assert_eq!(ErrorScaling::for_hurst(h(0.75)), ErrorScaling::LogCorrected);
        assert_eq!(ErrorScaling::for_hurst(h(0.9)), ErrorScaling::Linear);
        let n = 512usize;
        assert!((ErrorScaling::Power.factor(h(0.6), n) - 512f64.powf(0.7)).abs() < 1e-9);
        assert!((ErrorScaling::LogCorrected.factor(h(0.75), n) - 512.0 / 512f64.ln().sqrt()).abs() < 1e-12);
        assert_eq!(ErrorScaling::Linear.factor(h(0.9), n), 512.0);
        assert_eq!(reference_scheme(h(0.5)), SchemeKind::Euler);
        assert_eq!(reference_scheme(h(0.6)), SchemeKind::Trapezoid);
    }

    #[test]
    fn brownian_scaled_errors() {
        // at H = 1/2 the coupled error has variance T²/2 (1 - 1/r)
        let s = scaled_error_samples(h(0.5), 2.0, 16, 8, 4000, 5).unwrap();
        let expected = 2.0 * (1.0 - 1.0 / 8.0);
        let v = s.summary().variance;
        assert!((v.value - expected).abs() < 4.0 * v.std_error, "{v:?} vs {expected}");
        assert!(s.bias_bound().unwrap() > 0.0);
        assert!(s.provenance().contains("seed=5"));
        assert!(scaled_error_samples(h(0.6), 1.0, 16, 3, 10, 1).is_err());
    }

    #[test]
    fn rosenblatt_spec_guards() {
        assert!(RosenblattSpec::new(h(0.7), 1 << 12).is_err());
        assert!(RosenblattSpec::new(h(0.75), 1 << 12).is_err());
        assert!(RosenblattSpec::new(h(0.9), 512).is_err());
        let s = RosenblattSpec::new(h(0.9), 1 << 10).unwrap();
        let v: f64 = 0.9;
        assert_eq!(s.c2_tv(), 2.0 * v * v * (2.0 * v - 1.0) / (4.0 * v - 3.0));
    }

    #[test]
    fn rosenblatt_qv_is_centred_and_deterministic() {
        let spec = RosenblattSpec::new(h(0.85), 1 << 10).unwrap();
        let a = rosenblatt_sample_qv(&spec, 2000, 9).unwrap();
        let m = a.summary().mean;
        assert!(m.value.abs() < 4.0 * m.std_error, "{m:?}");
        let b = rosenblatt_sample_qv(&spec, 7, 9).unwrap();
        assert_eq!(&a.values()[..7], b.values());
    }

    #[test]
    fn qv_variance_matches_exact_finite_m_value() {
        // Var V_m = 2 m^{-2} Σ_{j,k} ρ(j-k)²; the normalized draws must match it
        let hp = h(0.9);
        let m = 1usize << 10;
        let spec = RosenblattSpec::new(hp, m).unwrap();
        let mf = m as f64;
        let sum_rho_sq = 4.0 * scheme_difference_variance(hp, 1.0, m).unwrap() * mf.powf(4.0 * 0.9);
        let exact = mf.powf(4.0 - 4.0 * 0.9) / spec.c2_tv() * 2.0 * sum_rho_sq / (mf * mf);
        let s = rosenblatt_sample_qv(&spec, 6000, 21).unwrap();
        let v = s.summary().variance;
        assert!((v.value - exact).abs() < 4.0 * v.std_error, "{v:?} vs {exact}");
        assert!((exact - 1.0).abs() < 0.01);
    }

    #[test]
    fn kernel_basics() {
        let hp = h(0.9);
        assert_eq!(rosenblatt_kernel(hp, 0.5, 0.5).unwrap(), 0.0);
        assert_eq!(rosenblatt_kernel(hp, 0.3, 0.7).unwrap(), 0.0);
        assert!(rosenblatt_kernel(hp, 0.7, 0.3).unwrap() > 0.0);
        assert!(rosenblatt_kernel(hp, 1.5, 0.3).is_err());
        assert!(rosenblatt_kernel(hp, 0.5, 0.0).is_err());
        assert!(rosenblatt_kernel(h(0.4), 0.5, 0.2).is_err());
        assert!(rosenblatt_inner_kernel(hp, 0.4, 0.4).is_err());
    }

    #[test]
    fn kernel_matches_midpoint_reference() {
        // ∫_s^t (u-s)^e u^p du = ∫ (u-s)^e (u^p - s^p) du + s^p (t-s)^{e+1}/(e+1),
        // the remaining integrand vanishes at u = s and the midpoint rule converges
        let v: f64 = 0.9;
        let (t, s) = (1.0f64, 0.5f64);
        let (e, p) = (v - 1.5, v - 0.5);
        let n = 1_000_000;
        let step = (t - s) / n as f64;
        let regular: f64 = (0..n)
            .map(|i| {
                let u = s + (i as f64 + 0.5) * step;
                (u - s).powf(e) * (u.powf(p) - s.powf(p))
            })
            .collect::<KahanSum>()
            .value()
            * step;
        let integral = regular + s.powf(p) * (t - s).powf(e + 1.0) / (e + 1.0);
        let c = (v * (2.0 * v - 1.0) / beta(2.0 - 2.0 * v, v - 0.5).unwrap()).sqrt();
        let reference = c * s.powf(0.5 - v) * integral;
        let got = rosenblatt_kernel(h(v), t, s).unwrap();
        assert!((got - reference).abs() < 1e-6, "{got} vs {reference}");
    }

    #[test]
    fn inner_kernel_is_symmetric_and_matches_derivative_product() {
        let v: f64 = 0.85;
        let hp = h(v);
        let a = rosenblatt_inner_kernel(hp, 0.2, 0.6).unwrap();
        let b = rosenblatt_inner_kernel(hp, 0.6, 0.2).unwrap();
        assert_eq!(a, b);
        // midpoint reference with the (u - 0.6)^{H-3/2} endpoint subtracted
        let c2 = v * (2.0 * v - 1.0) / beta(2.0 - 2.0 * v, v - 0.5).unwrap();
        let (lo, hi, e) = (0.2f64, 0.6f64, v - 1.5);
        let g = |u: f64| (u - lo).powf(e) * u.powf(2.0 * v - 1.0);
        let n = 1_000_000;
        let step = (1.0 - hi) / n as f64;
        let regular: f64 = (0..n)
            .map(|i| {
                let u = hi + (i as f64 + 0.5) * step;
                (u - hi).powf(e) * (g(u) - g(hi))
            })
            .sum::<f64>()
            * step;
        let integral = regular + g(hi) * (1.0 - hi).powf(e + 1.0) / (e + 1.0);
        let reference = c2 * (lo * hi).powf(0.5 - v) * integral;
        assert!((a - reference).abs() < 1e-6 * reference, "{a} vs {reference}");
    }

    #[test]
    fn double_integral_form_is_centred_with_consistent_variance() {
        let form = RosenblattQuadraticForm::new(h(0.9), 64).unwrap();
        let s = rosenblatt_sample_double_integral(h(0.9), 64, 4000, 17).unwrap();
        let (m, v) = (s.summary().mean, s.summary().variance);
        assert!(m.value.abs() < 4.0 * m.std_error, "{m:?}");
        assert!((v.value - form.variance()).abs() < 4.0 * v.std_error, "{v:?} vs {}", form.variance());
        assert!(RosenblattQuadraticForm::new(h(0.9), 32).is_err());
        assert!(RosenblattQuadraticForm::new(h(0.7), 64).is_err());
    }

    #[test]
    fn rotation_identity() {
        for seed in 0..20 {
            let pair = sample_path_pair(h(0.8), GridSpec::new(1.0, 256).unwrap(), &mut substream(seed, 3, 0)).unwrap();
            let rotated = rotate(&pair).unwrap();
            for &n in &[16usize, 256] {
                let lhs = cross_variation(&rotated, n).unwrap();
                let rhs = half_quadratic_variation_difference(&pair, n).unwrap();
                assert!((lhs - rhs).abs() < 1e-12, "{lhs} vs {rhs}");
            }
        }
    }

    #[test]
    fn log_case_bridge_statistic() {
        // √2 n / √(c1 log n) Σ ΔB¹ΔB² with c1 = 9/16 at H = 3/4: its exact
        // variance is 1 + O(1/log n), and v(n) log n grows by log 2 per doubling
        let hp = h(0.75);
        let var = |n: usize| {
            let nf = n as f64;
            4.0 * scheme_difference_variance(hp, 1.0, n).unwrap() * 2.0 * nf * nf / (9.0 / 16.0 * nf.ln())
        };
        let growth: Vec<f64> = [1usize << 12, 1 << 14, 1 << 16]
            .iter()
            .map(|&n| var(2 * n) * (2.0 * n as f64).ln() - var(n) * (n as f64).ln())
            .collect();
        for g in &growth {
            assert!((g / 2f64.ln() - 1.0).abs() < 0.01, "{growth:?}");
        }
        let n = 1usize << 14;
        let sampler = PathSampler::new(hp, GridSpec::new(1.0, n).unwrap()).unwrap();
        let scale = 2f64.sqrt() * n as f64 / (9.0 / 16.0 * (n as f64).ln()).sqrt();
        let values = map_indexed(2000, |i| scale * cross_variation(&sampler.sample(&mut substream(31, 0, i as u64)), n).unwrap());
        let s = SampleSet::new(values, "bridge").unwrap();
        let v = s.summary().variance;
        assert!((v.value - var(n)).abs() < 4.0 * v.std_error, "{v:?} vs {}", var(n));
        assert!(normality_report(&s, &NormalityThresholds::default()).unwrap().pass);
    }
}
