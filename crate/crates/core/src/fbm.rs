//! Exact simulation of fractional Gaussian noise and fBm path pairs on
//! uniform grids.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest resolution for which the dense Cholesky fallback is attempted.
pub const CHOLESKY_MAX_RESOLUTION: usize = 4096;
const EMBEDDING_TOLERANCE: f64 = 1e-10;

/// Position of `H` relative to the rate breakpoints 1/2 and 3/4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Low,
    Half,
    Mid,
    ThreeQuarters,
    High,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::Low => "LOW",
            Regime::Half => "HALF",
            Regime::Mid => "MID",
            Regime::ThreeQuarters => "THREE_QUARTERS",
            Regime::High => "HIGH",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Hurst index restricted to `(1/4, 1)`, where the Lévy area exists.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct HurstParameter(f64);

impl HurstParameter {
    pub fn new(value: f64) -> Result<Self> {
        if value > 0.25 && value < 1.0 {
            Ok(Self(value))
        } else {
            Err(Error::Domain(format!("Hurst parameter must lie in (1/4, 1), got {value}")))
        }
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.0
    }

    pub fn regime(&self) -> Regime {
        let h = self.0;
        if h == 0.5 {
            Regime::Half
        } else if h == 0.75 {
            Regime::ThreeQuarters
        } else if h < 0.5 {
            Regime::Low
        } else if h < 0.75 {
            Regime::Mid
        } else {
            Regime::High
        }
    }
}

impl fmt::Display for HurstParameter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Uniform grid `t_k = k T / m`, `k = 0..=m`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridSpec {
    horizon: f64,
    resolution: usize,
}

impl GridSpec {
    pub fn new(horizon: f64, resolution: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
        }
        if resolution < 1 {
            return Err(Error::Domain("resolution must be at least 1".into()));
        }
        Ok(Self { horizon, resolution })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn step(&self) -> f64 {
        self.horizon / self.resolution as f64
    }
}

/// Two independent fBm paths sampled on the same grid, both starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    grid: GridSpec,
    component1: Vec<f64>,
    component2: Vec<f64>,
}

impl PathPair {
    pub fn new(grid: GridSpec, component1: Vec<f64>, component2: Vec<f64>) -> Result<Self> {
        let len = grid.resolution() + 1;
        if component1.len() != len || component2.len() != len {
            return Err(Error::Domain(format!(
                "path components must have {len} points, got {} and {}",
                component1.len(),
                component2.len()
            )));
        }
        if component1[0] != 0.0 || component2[0] != 0.0 {
            return Err(Error::Domain("paths must start at 0".into()));
        }
        Ok(Self {
            grid,
            component1,
            component2,
        })
    }

    /// Builds a pair from increment sequences by cumulative summation.
    pub fn from_increments(grid: GridSpec, dx1: &[f64], dx2: &[f64]) -> Result<Self> {
        Self::new(grid, cumulate(dx1), cumulate(dx2))
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn resolution(&self) -> usize {
        self.grid.resolution()
    }

    pub fn component1(&self) -> &[f64] {
        &self.component1
    }

    pub fn component2(&self) -> &[f64] {
        &self.component2
    }

    /// Swaps the roles of the two components.
    pub fn swapped(&self) -> Self {
        Self {
            grid: self.grid,
            component1: self.component2.clone(),
            component2: self.component1.clone(),
        }
    }

    pub fn into_components(self) -> (Vec<f64>, Vec<f64>) {
        (self.component1, self.component2)
    }
}

fn cumulate(dx: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(dx.len() + 1);
    out.push(0.0);
    let mut acc = 0.0;
    for &d in dx {
        acc += d;
        out.push(acc);
    }
    out
}

/// Autocovariance of unit-step fractional Gaussian noise at lag `k`.
pub fn fgn_autocovariance(hurst: HurstParameter, k: usize) -> f64 {
    let two_h = 2.0 * hurst.value();
    if k == 0 {
        return 1.0;
    }
    let k = k as f64;
    0.5 * ((k + 1.0).powf(two_h) + (k - 1.0).powf(two_h) - 2.0 * k.powf(two_h))
}

/// Spectrum of the minimal circulant embedding of the fGn covariance.
#[derive(Debug, Clone)]
pub struct CirculantSpectrum {
    pub eigenvalues: Vec<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

/// Eigenvalues of the circulant extension `[γ(0), …, γ(M), γ(M-1), …, γ(1)]`
/// with `M = m.next_power_of_two()`, computed by a single FFT of length 2M.
pub fn circulant_eigenvalues(hurst: HurstParameter, m: usize) -> Result<CirculantSpectrum> {
    if m < 1 {
        return Err(Error::Domain("embedding size must be at least 1".into()));
    }
    let half = m.next_power_of_two();
    let len = 2 * half;
    let mut row: Vec<Complex<f64>> = (0..len)
        .map(|j| {
            let lag = if j <= half { j } else { len - j };
            Complex::new(fgn_autocovariance(hurst, lag), 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(len).process(&mut row);
    let eigenvalues: Vec<f64> = row.iter().map(|c| c.re).collect();
    let min_eigenvalue = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let max_eigenvalue = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min_eigenvalue < -EMBEDDING_TOLERANCE * max_eigenvalue {
        return Err(Error::EmbeddingNotPsd { min_eigenvalue });
    }
    Ok(CirculantSpectrum {
        eigenvalues,
        min_eigenvalue,
        max_eigenvalue,
    })
}

enum Method {
    Circulant {
        /// sqrt(λ_k / N)
        amplitudes: Vec<f64>,
        fft: Arc<dyn Fft<f64>>,
    },
    Cholesky {
        /// Row-major lower triangle, row i holds i+1 entries.
        lower: Vec<f64>,
    },
}

/// Reusable exact sampler for fBm path pairs at a fixed `(H, grid)`.
pub struct PathSampler {
    hurst: HurstParameter,
    grid: GridSpec,
    method: Method,
}

impl PathSampler {
    /// Circulant embedding, falling back to Cholesky for `m ≤ 4096` when the
    /// embedding is not positive semidefinite.
    pub fn new(hurst: HurstParameter, grid: GridSpec) -> Result<Self> {
        match Self::circulant(hurst, grid) {
            Ok(s) => Ok(s),
            Err(Error::EmbeddingNotPsd { min_eigenvalue }) => {
                if grid.resolution() <= CHOLESKY_MAX_RESOLUTION {
                    Self::cholesky(hurst, grid)
                } else {
                    Err(Error::EmbeddingNotPsd { min_eigenvalue })
                }
            }
            Err(e) => Err(e),
        }
    }

    pub fn circulant(hurst: HurstParameter, grid: GridSpec) -> Result<Self> {
        let spectrum = circulant_eigenvalues(hurst, grid.resolution())?;
        let len = spectrum.eigenvalues.len();
        let amplitudes = spectrum
            .eigenvalues
            .iter()
            .map(|&l| (l.max(0.0) / len as f64).sqrt())
            .collect();
        let fft = FftPlanner::new().plan_fft_forward(len);
        Ok(Self {
            hurst,
            grid,
            method: Method::Circulant { amplitudes, fft },
        })
    }

    /// Dense Cholesky factorization of the `m × m` Toeplitz covariance.
    pub fn cholesky(hurst: HurstParameter, grid: GridSpec) -> Result<Self> {
        let m = grid.resolution();
        if m > CHOLESKY_MAX_RESOLUTION {
            return Err(Error::Domain(format!(
                "Cholesky sampling limited to m <= {CHOLESKY_MAX_RESOLUTION}, got {m}"
            )));
        }
        let gamma: Vec<f64> = (0..m).map(|k| fgn_autocovariance(hurst, k)).collect();
        let offset = |i: usize| i * (i + 1) / 2;
        let mut lower = vec![0.0; m * (m + 1) / 2];
        for i in 0..m {
            for j in 0..=i {
                let mut s = gamma[i - j];
                let (ri, rj) = (offset(i), offset(j));
                for k in 0..j {
                    s -= lower[ri + k] * lower[rj + k];
                }
                if i == j {
                    if s <= 0.0 {
                        return Err(Error::NotPositiveDefinite { row: i });
                    }
                    lower[ri + i] = s.sqrt();
                } else {
                    lower[ri + j] = s / lower[rj + j];
                }
            }
        }
        Ok(Self {
            hurst,
            grid,
            method: Method::Cholesky { lower },
        })
    }

    pub fn hurst(&self) -> HurstParameter {
        self.hurst
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn uses_cholesky(&self) -> bool {
        matches!(self.method, Method::Cholesky { .. })
    }

    /// Two independent unit-step fGn sequences of length `m`.
    pub fn sample_unit_noise<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let m = self.grid.resolution();
        match &self.method {
            Method::Circulant { amplitudes, fft } => {
                let mut buf: Vec<Complex<f64>> = amplitudes
                    .iter()
                    .map(|&a| {
                        let re: f64 = rng.sample(StandardNormal);
                        let im: f64 = rng.sample(StandardNormal);
                        Complex::new(a * re, a * im)
                    })
                    .collect();
                fft.process(&mut buf);
                let x1 = buf[..m].iter().map(|c| c.re).collect();
                let x2 = buf[..m].iter().map(|c| c.im).collect();
                (x1, x2)
            }
            Method::Cholesky { lower } => {
                let z1: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                let z2: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
                let mut x1 = vec![0.0; m];
                let mut x2 = vec![0.0; m];
                for i in 0..m {
                    let row = &lower[i * (i + 1) / 2..i * (i + 1) / 2 + i + 1];
                    x1[i] = row.iter().zip(&z1).map(|(l, z)| l * z).sum();
                    x2[i] = row.iter().zip(&z2).map(|(l, z)| l * z).sum();
                }
                (x1, x2)
            }
        }
    }

    /// Increments of both components in physical units (std `(T/m)^H`).
    pub fn sample_increments<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
        let scale = self.grid.step().powf(self.hurst.value());
        let (mut x1, mut x2) = self.sample_unit_noise(rng);
        for v in x1.iter_mut().chain(x2.iter_mut()) {
            *v *= scale;
        }
        (x1, x2)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> PathPair {
        let (dx1, dx2) = self.sample_increments(rng);
        PathPair {
            grid: self.grid,
            component1: cumulate(&dx1),
            component2: cumulate(&dx2),
        }
    }
}

/// One exact draw of two independent fBm paths on `grid`.
pub fn sample_path_pair<R: Rng + ?Sized>(hurst: HurstParameter, grid: GridSpec, rng: &mut R) -> Result<PathPair> {
    Ok(PathSampler::new(hurst, grid)?.sample(rng))
}

/// Restricts both components to every `factor`-th grid point.
pub fn subsample(path: &PathPair, factor: usize) -> Result<PathPair> {
    let m = path.resolution();
    if factor == 0 || m % factor != 0 {
        return Err(Error::Divisibility {
            resolution: m,
            divisor: factor,
        });
    }
    let grid = GridSpec::new(path.grid.horizon(), m / factor)?;
    let pick = |v: &[f64]| v.iter().step_by(factor).copied().collect::<Vec<_>>();
    Ok(PathPair {
        grid,
        component1: pick(&path.component1),
        component2: pick(&path.component2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn h(v: f64) -> HurstParameter {
        HurstParameter::new(v).unwrap()
    }

    #[test]
    fn hurst_domain_and_regimes() {
        assert!(HurstParameter::new(0.25).is_err());
        assert!(HurstParameter::new(1.0).is_err());
        assert!(HurstParameter::new(f64::NAN).is_err());
        assert_eq!(h(0.3).regime(), Regime::Low);
        assert_eq!(h(0.5).regime(), Regime::Half);
        assert_eq!(h(0.6).regime(), Regime::Mid);
        assert_eq!(h(0.75).regime(), Regime::ThreeQuarters);
        assert_eq!(h(0.9).regime(), Regime::High);
        assert_eq!(h(0.500_000_000_1).regime(), Regime::Mid);
    }

    #[test]
    fn grid_validation() {
        assert!(GridSpec::new(0.0, 4).is_err());
        assert!(GridSpec::new(1.0, 0).is_err());
        let g = GridSpec::new(2.0, 8).unwrap();
        assert_eq!(g.step(), 0.25);
    }

    #[test]
    fn autocovariance_values() {
        for &v in &[0.3, 0.5, 0.8] {
            assert_eq!(fgn_autocovariance(h(v), 0), 1.0);
        }
        for k in 1..10 {
            assert!(fgn_autocovariance(h(0.5), k).abs() < 1e-15);
        }
        let g1 = fgn_autocovariance(h(0.75), 1);
        assert!((g1 - (2f64.sqrt() - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn circulant_spectrum() {
        let s = circulant_eigenvalues(h(0.5), 64).unwrap();
        assert!(s.eigenvalues.iter().all(|&l| (l - 1.0).abs() < 1e-12));
        let s = circulant_eigenvalues(h(0.75), 1024).unwrap();
        assert!(s.min_eigenvalue >= 0.0, "{}", s.min_eigenvalue);
        let trace: f64 = s.eigenvalues.iter().sum();
        assert!((trace - 2048.0).abs() < 1e-8);
        // non-power-of-two resolution is embedded at the next power of two
        let s = circulant_eigenvalues(h(0.3), 100).unwrap();
        assert_eq!(s.eigenvalues.len(), 256);
    }

    #[test]
    fn paths_start_at_zero_and_have_right_length() {
        let grid = GridSpec::new(1.0, 37).unwrap();
        let p = sample_path_pair(h(0.7), grid, &mut substream(1, 2, 3)).unwrap();
        assert_eq!(p.component1().len(), 38);
        assert_eq!(p.component2().len(), 38);
        assert_eq!(p.component1()[0], 0.0);
        assert_eq!(p.component2()[0], 0.0);
    }

    #[test]
    fn determinism() {
        let grid = GridSpec::new(1.0, 256).unwrap();
        let a = sample_path_pair(h(0.65), grid, &mut substream(9, 1, 0)).unwrap();
        let b = sample_path_pair(h(0.65), grid, &mut substream(9, 1, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn subsample_behaviour() {
        let grid = GridSpec::new(1.0, 8).unwrap();
        let p = sample_path_pair(h(0.6), grid, &mut substream(4, 4, 4)).unwrap();
        assert_eq!(subsample(&p, 1).unwrap(), p);
        let q = subsample(&p, 2).unwrap();
        assert_eq!(q.resolution(), 4);
        for (i, &v) in q.component1().iter().enumerate() {
            assert_eq!(v, p.component1()[2 * i]);
        }
        assert_eq!(subsample(&q, 2).unwrap(), subsample(&p, 4).unwrap());
        assert!(matches!(subsample(&p, 3), Err(Error::Divisibility { .. })));
        assert!(subsample(&p, 0).is_err());
    }

    #[test]
    fn cholesky_matches_covariance_structure() {
        let grid = GridSpec::new(1.0, 16).unwrap();
        let s = PathSampler::cholesky(h(0.35), grid).unwrap();
        assert!(s.uses_cholesky());
        let mut rng = substream(11, 0, 0);
        let n = 40_000;
        let mut c0 = 0.0;
        let mut c1 = 0.0;
        for _ in 0..n {
            let (x, _) = s.sample_unit_noise(&mut rng);
            c0 += x[5] * x[5];
            c1 += x[5] * x[6];
        }
        c0 /= n as f64;
        c1 /= n as f64;
        let se = (2.0 / n as f64).sqrt();
        assert!((c0 - 1.0).abs() < 5.0 * se, "{c0}");
        let g1 = fgn_autocovariance(h(0.35), 1);
        assert!((c1 - g1).abs() < 5.0 * se, "{c1} vs {g1}");
    }
}
