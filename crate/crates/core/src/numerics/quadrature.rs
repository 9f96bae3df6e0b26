use std::cell::RefCell;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::numerics::KahanSum;

// 15-point Kronrod abscissae / weights and the embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and singularity declarations for the adaptive integrators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub relative_tolerance: f64,
    pub absolute_tolerance: f64,
    pub max_subdivisions: usize,
    /// Power-law exponents at the (left, right) endpoints; 0 means regular.
    pub endpoint_singularity_exponents: Option<(f64, f64)>,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self::constants()
    }
}

impl QuadratureSpec {
    /// Tight tolerance for once-per-run scalar constants.
    pub fn constants() -> Self {
        Self {
            relative_tolerance: 1e-10,
            absolute_tolerance: 1e-14,
            max_subdivisions: 2000,
            endpoint_singularity_exponents: None,
        }
    }

    /// Looser tolerance for quadratures evaluated inside O(n) loops.
    pub fn hot() -> Self {
        Self {
            relative_tolerance: 1e-8,
            absolute_tolerance: 1e-15,
            max_subdivisions: 500,
            endpoint_singularity_exponents: None,
        }
    }

    pub fn with_tolerances(mut self, relative: f64, absolute: f64) -> Self {
        self.relative_tolerance = relative;
        self.absolute_tolerance = absolute;
        self
    }

    pub fn with_max_subdivisions(mut self, max: usize) -> Self {
        self.max_subdivisions = max;
        self
    }

    pub fn with_singularities(mut self, left: f64, right: f64) -> Self {
        self.endpoint_singularity_exponents = Some((left, right));
        self
    }

    pub fn with_left_singularity(self, exponent: f64) -> Self {
        let right = self.endpoint_singularity_exponents.map_or(0.0, |e| e.1);
        self.with_singularities(exponent, right)
    }

    pub fn with_right_singularity(self, exponent: f64) -> Self {
        let left = self.endpoint_singularity_exponents.map_or(0.0, |e| e.0);
        self.with_singularities(left, exponent)
    }

    fn exponents(&self) -> (f64, f64) {
        self.endpoint_singularity_exponents.unwrap_or((0.0, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.relative_tolerance > 0.0 && self.absolute_tolerance > 0.0) {
            return Err(Error::Domain("quadrature tolerances must be positive".into()));
        }
        if self.max_subdivisions < 1 {
            return Err(Error::Domain("max_subdivisions must be at least 1".into()));
        }
        let (l, r) = self.exponents();
        if !(l > -1.0 && r > -1.0) {
            return Err(Error::Domain(format!(
                "endpoint singularity exponents must exceed -1, got ({l}, {r})"
            )));
        }
        Ok(())
    }
}

/// Integral estimate with its error bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error_estimate: f64,
    pub subdivisions: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    /// Rounding floor `50 ε ∫|f|` included in `error`.
    roundoff: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gauss_kronrod_15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Segment {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    let mut abs_k = kronrod.abs();
    let mut fv1 = [0.0; 7];
    let mut fv2 = [0.0; 7];
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_k += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut asc = WGK[7] * (fc - mean).abs();
    for j in 0..7 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let res_abs = abs_k * half.abs();
    let res_asc = asc * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != 0.0 && err != 0.0 {
        err = res_asc * (200.0 * err / res_asc).powf(1.5).min(1.0);
    }
    let mut roundoff = 0.0;
    if res_abs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        roundoff = 50.0 * f64::EPSILON * res_abs;
        err = err.max(roundoff);
    }
    Segment { a, b, value, error: err, roundoff }
}

fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<QuadResult> {
    let first = gauss_kronrod_15(f, a, b);
    let mut total = first.value;
    let mut total_err = first.error;
    let mut total_roundoff = first.roundoff;
    let mut heap = BinaryHeap::new();
    heap.push(first);
    let mut subdivisions = 0;
    let tolerance = |v: f64| spec.absolute_tolerance.max(spec.relative_tolerance * v.abs());
    // an error budget mostly made of rounding cannot be reduced by bisection
    while total_err > tolerance(total).max(2.0 * total_roundoff) {
        if subdivisions >= spec.max_subdivisions {
            let value = heap.iter().map(|s| s.value).collect::<KahanSum>().value();
            return Err(Error::NonConvergence {
                estimate: value,
                error: total_err,
                subdivisions,
            });
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // interval exhausted at machine resolution; accept it as is
            let value = heap.iter().map(|s| s.value).sum::<f64>() + worst.value;
            let err = heap.iter().map(|s| s.error).sum::<f64>() + worst.error;
            return Ok(QuadResult {
                value,
                error_estimate: err,
                subdivisions,
            });
        }
        let left = gauss_kronrod_15(f, worst.a, mid);
        let right = gauss_kronrod_15(f, mid, worst.b);
        total += left.value + right.value - worst.value;
        total_err += left.error + right.error - worst.error;
        total_roundoff += left.roundoff + right.roundoff - worst.roundoff;
        heap.push(left);
        heap.push(right);
        subdivisions += 1;
        if subdivisions % 64 == 0 {
            // resynchronise running sums against drift
            total = heap.iter().map(|s| s.value).collect::<KahanSum>().value();
            total_err = heap.iter().map(|s| s.error).sum();
            total_roundoff = heap.iter().map(|s| s.roundoff).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).collect::<KahanSum>().value();
    let error_estimate = heap.iter().map(|s| s.error).sum();
    Ok(QuadResult {
        value,
        error_estimate,
        subdivisions,
    })
}

/// Integrates `f` over `[a, b]` on `x = a + u^(1/(1+e))`, which turns a left
/// endpoint factor `(x-a)^e` into a constant.
fn integrate_left_singular<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    exponent: f64,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    if exponent == 0.0 {
        return adaptive(f, a, b, spec);
    }
    let p = 1.0 / (1.0 + exponent);
    let upper = (b - a).powf(1.0 + exponent);
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let x = a + u.powf(p);
        let v = p * u.powf(p - 1.0) * f(x);
        // x rounded onto the endpoint: the distance is below resolution
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive(&g, 0.0, upper, spec)
}

fn integrate_right_singular<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    exponent: f64,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    if exponent == 0.0 {
        return adaptive(f, a, b, spec);
    }
    let p = 1.0 / (1.0 + exponent);
    let upper = (b - a).powf(1.0 + exponent);
    let g = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let x = b - u.powf(p);
        let v = p * u.powf(p - 1.0) * f(x);
        // x rounded onto the endpoint: the distance is below resolution
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    adaptive(&g, 0.0, upper, spec)
}

/// Adaptive Gauss-Kronrod (7-15) integration of `f` over `[a, b]`.
///
/// Endpoint power-law singularities declared in `spec` are removed by the
/// substitution `u = (x - a)^(1 + e)` (mirrored at `b`); when both endpoints
/// are singular the interval is split at its midpoint first.
pub fn integrate_1d<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<QuadResult> {
    spec.validate()?;
    if !(a < b) {
        return Err(Error::Domain(format!("integrate_1d requires a < b, got [{a}, {b}]")));
    }
    let (el, er) = spec.exponents();
    match (el != 0.0, er != 0.0) {
        (false, false) => adaptive(&f, a, b, spec),
        (true, false) => integrate_left_singular(&f, a, b, el, spec),
        (false, true) => integrate_right_singular(&f, a, b, er, spec),
        (true, true) => {
            let mid = 0.5 * (a + b);
            let half_spec = spec.with_tolerances(spec.relative_tolerance, 0.5 * spec.absolute_tolerance);
            let l = integrate_left_singular(&f, a, mid, el, &half_spec)?;
            let r = integrate_right_singular(&f, mid, b, er, &half_spec)?;
            Ok(QuadResult {
                value: l.value + r.value,
                error_estimate: l.error_estimate + r.error_estimate,
                subdivisions: l.subdivisions + r.subdivisions,
            })
        }
    }
}

/// Integrates `g(x) (x-a)^ea (b-x)^eb` over `[a, b]`, where the caller
/// passes only the smooth factor `g`.
///
/// Unlike [`integrate_1d`] with declared exponents, the weight is absorbed
/// analytically, so distances to the endpoints never pass through a rounded
/// `x` and the result keeps full accuracy for strong singularities.
pub fn integrate_weighted<G: Fn(f64) -> f64>(
    g: G,
    a: f64,
    b: f64,
    (ea, eb): (f64, f64),
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    spec.validate()?;
    if !(a < b) {
        return Err(Error::Domain(format!("integrate_weighted requires a < b, got [{a}, {b}]")));
    }
    if !(ea > -1.0 && eb > -1.0) {
        return Err(Error::Domain(format!("weight exponents must exceed -1, got ({ea}, {eb})")));
    }
    let len = b - a;
    let mid = 0.5 * len;
    // (x - a) = u^pa on the left half, (b - x) = w^pb on the right half
    let pa = 1.0 / (1.0 + ea);
    let pb = 1.0 / (1.0 + eb);
    let left = |u: f64| {
        let d = u.powf(pa);
        pa * g(a + d) * (len - d).powf(eb)
    };
    let right = |w: f64| {
        let d = w.powf(pb);
        pb * g(b - d) * (len - d).powf(ea)
    };
    let half_spec = spec.with_tolerances(spec.relative_tolerance, 0.5 * spec.absolute_tolerance);
    let l = adaptive(&left, 0.0, mid.powf(1.0 + ea), &half_spec)?;
    let r = adaptive(&right, 0.0, mid.powf(1.0 + eb), &half_spec)?;
    Ok(QuadResult {
        value: l.value + r.value,
        error_estimate: l.error_estimate + r.error_estimate,
        subdivisions: l.subdivisions + r.subdivisions,
    })
}

/// Integrates `g(s1, s2) * |s1 - s2|^exponent` over `[a1, b1] x [a2, b2]`.
///
/// The caller passes only the smooth factor `g`. For every outer node `s1`
/// the inner `s2` range is split at `s1` (when it falls inside) and each
/// piece is integrated in the distance variable `v = |s1 - s2|^(1 + exponent)`,
/// which also keeps nearly-touching rectangles well conditioned.
pub fn integrate_2d_diagonal_singular<G: Fn(f64, f64) -> f64>(
    g: G,
    (a1, b1): (f64, f64),
    (a2, b2): (f64, f64),
    exponent: f64,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    spec.validate()?;
    if !(exponent > -1.0) {
        return Err(Error::Domain(format!("diagonal exponent must exceed -1, got {exponent}")));
    }
    if !(a1 < b1 && a2 < b2) {
        return Err(Error::Domain("integration rectangle must be non-degenerate".into()));
    }
    let inner_spec = QuadratureSpec {
        relative_tolerance: 0.1 * spec.relative_tolerance,
        absolute_tolerance: 0.1 * spec.absolute_tolerance / (b1 - a1),
        max_subdivisions: spec.max_subdivisions,
        endpoint_singularity_exponents: None,
    };
    let failure: RefCell<Option<Error>> = RefCell::new(None);
    let p = 1.0 / (1.0 + exponent);
    // s2 = s1 ± v^p maps |s1 - s2|^exponent ds2 to p dv, so each piece is smooth in v
    let inner = |s1: f64| -> f64 {
        let above = |v: f64| p * g(s1, s1 + v.powf(p));
        let below = |v: f64| p * g(s1, s1 - v.powf(p));
        let dist = |x: f64| (x - s1).abs().powf(1.0 + exponent);
        let mut pieces = Vec::with_capacity(2);
        if s1 < b2 {
            let lo = a2.max(s1);
            pieces.push(adaptive(&above, dist(lo), dist(b2), &inner_spec));
        }
        if s1 > a2 {
            let hi = b2.min(s1);
            pieces.push(adaptive(&below, dist(hi), dist(a2), &inner_spec));
        }
        let mut total = 0.0;
        for piece in pieces {
            match piece {
                Ok(r) => total += r.value,
                Err(e) => {
                    let mut slot = failure.borrow_mut();
                    if slot.is_none() {
                        *slot = Some(e.clone());
                    }
                    if let Error::NonConvergence { estimate, .. } = e {
                        total += estimate;
                    }
                }
            }
        }
        total
    };
    let outer = integrate_1d(inner, a1, b1, spec)?;
    match failure.into_inner() {
        Some(e) => Err(e),
        None => Ok(outer),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> QuadratureSpec {
        QuadratureSpec::constants()
    }

    #[test]
    fn smooth_integrals() {
        let r = integrate_1d(|y| y, 0.0, 1.0, &spec()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-14);
        let r = integrate_1d(f64::sin, 0.0, std::f64::consts::PI, &spec()).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12);
        assert!(r.error_estimate < 1e-9);
    }

    #[test]
    fn declared_endpoint_singularity() {
        let s = spec().with_left_singularity(-0.5);
        let r = integrate_1d(|y| y.powf(-0.5), 0.0, 1.0, &s).unwrap();
        assert!((r.value - 2.0).abs() < 1e-12, "{}", r.value);
        let s = spec().with_singularities(-0.3, -0.4);
        let r = integrate_1d(|y: f64| y.powf(-0.3) * (1.0 - y).powf(-0.4), 0.0, 1.0, &s).unwrap();
        let exact = crate::numerics::beta(0.7, 0.6).unwrap();
        assert!((r.value - exact).abs() < 1e-9 * exact, "{} vs {}", r.value, exact);
    }

    #[test]
    fn weighted_integration_is_exact_for_strong_singularities() {
        let r = integrate_weighted(|_| 1.0, 0.0, 1.0, (-0.3, -0.7), &spec()).unwrap();
        let exact = crate::numerics::beta(0.7, 0.3).unwrap();
        assert!((r.value - exact).abs() < 1e-12 * exact, "{} vs {}", r.value, exact);
        // shifted interval: ∫_2^3 (x-2)^-0.8 x dx = 2/0.2 + 1/1.2
        let r = integrate_weighted(|x| x, 2.0, 3.0, (-0.8, 0.0), &spec()).unwrap();
        let exact = 2.0 / 0.2 + 1.0 / 1.2;
        assert!((r.value - exact).abs() < 1e-11 * exact, "{} vs {}", r.value, exact);
        assert!(integrate_weighted(|_| 1.0, 0.0, 1.0, (-1.0, 0.0), &spec()).is_err());
    }

    #[test]
    fn lemma_integrand_at_half_is_minus_one() {
        // y (1+y)^0 - y^0 (1+y) = -1
        let h: f64 = 0.5;
        let f = |y: f64| y.powf(2.0 * h) * (1.0 + y).powf(2.0 * h - 1.0) - y.powf(2.0 * h - 1.0) * (1.0 + y).powf(2.0 * h);
        let s = spec().with_left_singularity(2.0 * h - 1.0);
        let r = integrate_1d(f, 0.0, 1.0, &s).unwrap();
        assert!((r.value + 1.0).abs() < 1e-13);
    }

    #[test]
    fn polynomials_up_to_degree_ten() {
        for deg in 0..=10 {
            let r = integrate_1d(|x: f64| (deg as f64 + 1.0) * x.powi(deg), 0.0, 1.0, &spec()).unwrap();
            assert!((r.value - 1.0).abs() < 1e-12, "degree {deg}: {}", r.value);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(integrate_1d(|x| x, 1.0, 0.0, &spec()).is_err());
        assert!(integrate_1d(|x| x, 0.0, 1.0, &spec().with_left_singularity(-1.0)).is_err());
        let bad = QuadratureSpec {
            relative_tolerance: 0.0,
            ..spec()
        };
        assert!(integrate_1d(|x| x, 0.0, 1.0, &bad).is_err());
    }

    #[test]
    fn reports_non_convergence_with_estimate() {
        let s = spec().with_max_subdivisions(3).with_tolerances(1e-15, 1e-300);
        let err = integrate_1d(|x: f64| (50.0 * x).sin() * x.sqrt(), 0.0, 1.0, &s).unwrap_err();
        match err {
            Error::NonConvergence { estimate, error, subdivisions } => {
                assert!(estimate.is_finite());
                assert!(error > 0.0);
                assert_eq!(subdivisions, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn diagonal_singular_unit_square() {
        let r = integrate_2d_diagonal_singular(|_, _| 1.0, (0.0, 1.0), (0.0, 1.0), -0.5, &spec()).unwrap();
        assert!((r.value - 8.0 / 3.0).abs() < 1e-9, "{}", r.value);
        let r = integrate_2d_diagonal_singular(|_, _| 1.0, (0.0, 1.0), (0.0, 1.0), 0.0, &spec()).unwrap();
        assert!((r.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_singular_matches_midpoint_grid() {
        // Brute-force reference: midpoint rule for the smooth factor on a fine
        // grid, with |s - t|^e integrated exactly over each cell.
        let e: f64 = -0.4;
        let n = 2000usize;
        let h = 1.0 / n as f64;
        let norm = h.powf(e + 2.0) / ((e + 1.0) * (e + 2.0));
        let cell: Vec<f64> = (0..n)
            .map(|k| {
                let k = k as f64;
                norm * ((k + 1.0).powf(e + 2.0) - 2.0 * k.powf(e + 2.0) + (k - 1.0).abs().powf(e + 2.0))
            })
            .collect();
        let mut acc = KahanSum::new();
        for i in 0..n {
            let s = (i as f64 + 0.5) * h;
            for j in 0..n {
                let t = (j as f64 + 0.5) * h;
                acc.add(s * t * cell[i.abs_diff(j)]);
            }
        }
        let reference = acc.value();
        let r = integrate_2d_diagonal_singular(|s, t| s * t, (0.0, 1.0), (0.0, 1.0), e, &spec()).unwrap();
        assert!((r.value - reference).abs() < 1e-6, "{} vs {}", r.value, reference);
    }

    #[test]
    fn linearity() {
        let f = |x: f64| x.exp();
        let g = |x: f64| (3.0 * x).cos();
        let (alpha, beta) = (2.5, -0.75);
        let s = spec();
        let ia = integrate_1d(f, 0.0, 2.0, &s).unwrap();
        let ib = integrate_1d(g, 0.0, 2.0, &s).unwrap();
        let ic = integrate_1d(|x| alpha * f(x) + beta * g(x), 0.0, 2.0, &s).unwrap();
        let tol = ic.error_estimate + alpha.abs() * ia.error_estimate + beta.abs() * ib.error_estimate + 1e-13;
        assert!((ic.value - alpha * ia.value - beta * ib.value).abs() <= tol);
    }
}
