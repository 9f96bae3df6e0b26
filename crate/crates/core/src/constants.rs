//! Explicit error constants: `c1`, `c2`, the regime constants `α1…α4`,
//! the trapezoid correlation sequence `d(k)` and the Euler off-diagonal
//! sequence `Q(k)`.

use std::collections::HashMap;
use std::sync::{Arc, LazyLock, Mutex};

use rayon::prelude::*;
use serde::Serialize;

use crate::covariance::{cov_increments_shifted, theta, theta_shifted, KernelConstants};
use crate::error::{Error, Result};
use crate::fbm::{HurstParameter, Regime};
use crate::numerics::{beta, integrate_1d, integrate_2d_diagonal_singular, integrate_weighted, riemann_zeta, QuadratureSpec};

/// Coefficient of `log(n) n^{-2}` in the Euler error at `H = 3/4`.
pub const LOG_CASE_CONSTANT: f64 = 9.0 / 128.0;

fn gamma_h(hurst: HurstParameter) -> f64 {
    KernelConstants::new(hurst).gamma_h
}

/// `∫_0^1 (y^{2H}(1+y)^{2H-1} - y^{2H-1}(1+y)^{2H}) dy`, evaluated in the
/// factored form `-(y(1+y))^{2H-1}` with the `y^{2H-1}` endpoint declared.
fn boundary_integral(hurst: HurstParameter) -> Result<f64> {
    let e = 2.0 * hurst.value() - 1.0;
    let r = integrate_weighted(|y| -(1.0 + y).powf(e), 0.0, 1.0, (e, 0.0), &QuadratureSpec::constants())?;
    Ok(r.value)
}

/// Diagonal constant `E[A_{01}^2] = (H/2)(B(2H,2H) + 1/(4H-1))`.
pub fn c1(hurst: HurstParameter) -> Result<f64> {
    let h = hurst.value();
    Ok(0.5 * h * (beta(2.0 * h, 2.0 * h)? + 1.0 / (4.0 * h - 1.0)))
}

/// Adjacent-interval constant `E[A_{01} A_{12}]`.
pub fn c2(hurst: HurstParameter) -> Result<f64> {
    let h = hurst.value();
    let q = 4.0 * h - 1.0;
    Ok(0.25 * (1.0 - 2f64.powf(2.0 * h))
        + (2.0 * h - 1.0) / (4.0 * q)
        + h * 2f64.powf(4.0 * h) / (4.0 * q)
        + 0.5 * h * boundary_integral(hurst)?)
}

/// The three-part `α1` display evaluated term by term, at any admissible `H`.
pub fn alpha1_formula(hurst: HurstParameter) -> Result<f64> {
    let h = hurst.value();
    let q = 4.0 * h - 1.0;
    let first = 0.5 * h * (beta(2.0 * h, 2.0 * h)? + 1.0 / q);
    let second = 0.5 * ((1.0 - 2f64.powf(2.0 * h)) + (2.0 * h - 1.0) / q + h * 2f64.powf(4.0 * h) / q);
    let third = h * boundary_integral(hurst)?;
    Ok(first + second + third)
}

fn require(hurst: HurstParameter, what: &'static str, required: &'static str, ok: bool) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Regime {
            what,
            required,
            hurst: hurst.value(),
        })
    }
}

/// Euler constant for `H ∈ (1/4, 1/2)`.
pub fn alpha1(hurst: HurstParameter) -> Result<f64> {
    require(hurst, "alpha1", "H in (1/4, 1/2)", hurst.regime() == Regime::Low)?;
    alpha1_formula(hurst)
}

/// Euler constant for `H ∈ (1/2, 3/4)`: `α1 + H²(2H-1)² ζ(4-4H) / 2`.
pub fn alpha2(hurst: HurstParameter) -> Result<f64> {
    require(hurst, "alpha2", "H in (1/2, 3/4)", hurst.regime() == Regime::Mid)?;
    let h = hurst.value();
    let g = h * (2.0 * h - 1.0);
    Ok(alpha1_formula(hurst)? + 0.5 * g * g * riemann_zeta(4.0 - 4.0 * h)?)
}

/// Euler constant for `H ∈ (3/4, 1)`: `H²(2H-1) / (4(4H-3))`.
pub fn alpha3(hurst: HurstParameter) -> Result<f64> {
    require(hurst, "alpha3", "H in (3/4, 1)", hurst.regime() == Regime::High)?;
    let h = hurst.value();
    Ok(0.25 * h * h * (2.0 * h - 1.0) / (4.0 * h - 3.0))
}

fn require_above_half(hurst: HurstParameter, what: &'static str) -> Result<()> {
    require(hurst, what, "H in (1/2, 1)", hurst.value() > 0.5)
}

/// `∫_0^1 ∫_0^1 f(s1, u) (k + u - s1)^{2H-2} du ds1` for `k ≥ 2`, where the
/// kernel is smooth. The absolute tolerance is anchored to the integrand
/// scale `γ² k^{4H-4}` since the results themselves decay faster.
fn far_field_integral<F>(f: F, h: f64, k: f64, rel: f64, scale_factor: f64) -> Result<f64>
where
    F: Fn(f64, f64) -> f64,
{
    let g = h * (2.0 * h - 1.0);
    let e = 2.0 * h - 2.0;
    let abs = (scale_factor * g * g * k.powf(4.0 * h - 4.0)).max(f64::MIN_POSITIVE);
    let spec = QuadratureSpec::hot().with_tolerances(rel, abs);
    let inner_spec = spec.with_tolerances(0.1 * rel, 0.1 * abs);
    let failure = std::cell::RefCell::new(None);
    let outer = integrate_1d(
        |s1| match integrate_1d(|u| (k + (u - s1)).powf(e) * f(s1, u), 0.0, 1.0, &inner_spec) {
            Ok(r) => r.value,
            Err(err) => {
                failure.borrow_mut().get_or_insert(err);
                f64::NAN
            }
        },
        0.0,
        1.0,
        &spec,
    );
    if let Some(err) = failure.into_inner() {
        return Err(err);
    }
    Ok(outer?.value)
}

/// `d(k) = γ_H ∫_0^1 ∫_k^{k+1} θ(k; s1, s2) |s1 - s2|^{2H-2} ds2 ds1`.
pub fn trapezoid_d(hurst: HurstParameter, k: usize) -> Result<f64> {
    require_above_half(hurst, "trapezoid_d")?;
    let h = hurst.value();
    let g = gamma_h(hurst);
    let k0 = k as f64;
    if k >= 2 {
        let r = far_field_integral(|s1, u| theta_shifted(hurst, k, s1, u), h, k0, 1e-8, 1e-10)?;
        return Ok(g * r);
    }
    let r = integrate_2d_diagonal_singular(
        |s1, s2| theta(hurst, k, s1, s2),
        (0.0, 1.0),
        (k0, k0 + 1.0),
        2.0 * h - 2.0,
        &QuadratureSpec::constants(),
    )?;
    Ok(g * r.value)
}

/// Trapezoid constant `d(0) + 2 d(1)`, the near-diagonal assembly.
pub fn alpha4(hurst: HurstParameter) -> Result<f64> {
    require_above_half(hurst, "alpha4")?;
    Ok(trapezoid_d(hurst, 0)? + 2.0 * trapezoid_d(hurst, 1)?)
}

/// `Q(k) = γ_H ∫_0^1 ∫_k^{k+1} |s1 - s2|^{2H-2} E[(B_{s1} - B_0)(B_{s2} - B_k)] ds2 ds1`
/// for `k ≥ 2`, valid for every admissible `H`.
pub fn q_offdiag(hurst: HurstParameter, k: usize) -> Result<f64> {
    if k < 2 {
        return Err(Error::Domain(format!("q_offdiag requires k >= 2, got {k}")));
    }
    let g = gamma_h(hurst);
    if g == 0.0 {
        return Ok(0.0);
    }
    let k0 = k as f64;
    let r = far_field_integral(
        |s1, u| cov_increments_shifted(hurst, k0, 0.0, s1, 0.0, u),
        hurst.value(),
        k0,
        1e-10,
        1e-12,
    )?;
    Ok(g * r)
}

type Table = Arc<Vec<f64>>;

static Q_CACHE: LazyLock<Mutex<HashMap<u64, Table>>> = LazyLock::new(|| Mutex::new(HashMap::new()));
static D_CACHE: LazyLock<Mutex<HashMap<u64, Table>>> = LazyLock::new(|| Mutex::new(HashMap::new()));

fn cached_table<F>(cache: &Mutex<HashMap<u64, Table>>, hurst: HurstParameter, kmax: usize, entry: F) -> Result<Table>
where
    F: Fn(usize) -> Result<f64> + Sync,
{
    let key = hurst.value().to_bits();
    let existing = cache.lock().expect("cache poisoned").get(&key).cloned();
    let start = match &existing {
        Some(t) if t.len() > kmax => return Ok(t.clone()),
        Some(t) => t.len(),
        None => 0,
    };
    let fresh: Vec<f64> = (start..=kmax).into_par_iter().map(&entry).collect::<Result<_>>()?;
    let mut values = existing.map(|t| t.as_ref().clone()).unwrap_or_default();
    values.extend(fresh);
    let table = Arc::new(values);
    let mut guard = cache.lock().expect("cache poisoned");
    match guard.get(&key) {
        Some(t) if t.len() >= table.len() => Ok(t.clone()),
        _ => {
            guard.insert(key, table.clone());
            Ok(table)
        }
    }
}

/// `[0, 0, Q(2), …, Q(kmax)]`, computed in parallel and cached per `H`.
pub fn q_table(hurst: HurstParameter, kmax: usize) -> Result<Table> {
    cached_table(&Q_CACHE, hurst, kmax, |k| if k < 2 { Ok(0.0) } else { q_offdiag(hurst, k) })
}

/// `[d(0), …, d(kmax)]`, computed in parallel and cached per `H`.
pub fn d_table(hurst: HurstParameter, kmax: usize) -> Result<Table> {
    require_above_half(hurst, "trapezoid_d")?;
    cached_table(&D_CACHE, hurst, kmax, |k| trapezoid_d(hurst, k))
}

/// Every constant defined at one `H`; the `α` fields are populated only in
/// their own regime.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantsTable {
    pub hurst: f64,
    pub regime: Regime,
    pub c1: f64,
    pub c2: f64,
    pub alpha1: Option<f64>,
    pub alpha2: Option<f64>,
    pub alpha3: Option<f64>,
    pub alpha4: Option<f64>,
    pub log_case_constant: f64,
}

impl ConstantsTable {
    pub fn compute(hurst: HurstParameter) -> Result<Self> {
        let regime = hurst.regime();
        Ok(Self {
            hurst: hurst.value(),
            regime,
            c1: c1(hurst)?,
            c2: c2(hurst)?,
            alpha1: (regime == Regime::Low).then(|| alpha1(hurst)).transpose()?,
            alpha2: (regime == Regime::Mid).then(|| alpha2(hurst)).transpose()?,
            alpha3: (regime == Regime::High).then(|| alpha3(hurst)).transpose()?,
            alpha4: (hurst.value() > 0.5).then(|| alpha4(hurst)).transpose()?,
            log_case_constant: LOG_CASE_CONSTANT,
        })
    }
}
