//! Euler and trapezoidal approximations of the Lévy area on sampled paths,
//! and their representation as linear functionals of the fine increments.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fbm::PathPair;
use crate::numerics::KahanSum;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SchemeKind {
    /// `Σ B¹_{t_i} ΔB²_i`
    Euler,
    /// `½ Σ (B¹_{t_i} + B¹_{t_{i+1}}) ΔB²_i`
    Trapezoid,
}

impl SchemeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SchemeKind::Euler => "EULER",
            SchemeKind::Trapezoid => "TRAPEZOID",
        }
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(SchemeKind::Euler),
            "trapezoid" | "trapezoidal" => Ok(SchemeKind::Trapezoid),
            other => Err(Error::Config(format!("unknown scheme '{other}'"))),
        }
    }
}

fn stride(resolution: usize, n: usize) -> Result<usize> {
    if n == 0 || resolution % n != 0 {
        return Err(Error::Divisibility {
            resolution,
            divisor: n,
        });
    }
    Ok(resolution / n)
}

/// Scheme value at the terminal time on the coarse grid with `n` intervals.
pub fn evaluate(path: &PathPair, n: usize, kind: SchemeKind) -> Result<f64> {
    let s = stride(path.resolution(), n)?;
    let (b1, b2) = (path.component1(), path.component2());
    let mut acc = KahanSum::new();
    for i in 0..n {
        let (l, r) = (i * s, (i + 1) * s);
        let integrand = match kind {
            SchemeKind::Euler => b1[l],
            SchemeKind::Trapezoid => 0.5 * (b1[l] + b1[r]),
        };
        acc.add(integrand * (b2[r] - b2[l]));
    }
    Ok(acc.value())
}

/// `-½ Σ ΔB¹_i ΔB²_i` on the coarse grid, which equals Euler minus trapezoid.
pub fn scheme_difference(path: &PathPair, n: usize) -> Result<f64> {
    let s = stride(path.resolution(), n)?;
    let (b1, b2) = (path.component1(), path.component2());
    let mut acc = KahanSum::new();
    for i in 0..n {
        let (l, r) = (i * s, (i + 1) * s);
        acc.add((b1[r] - b1[l]) * (b2[r] - b2[l]));
    }
    Ok(-0.5 * acc.value())
}

/// `X = Σ_j w_j ΔB²_j` over the fine grid, where each `w_j` is a sparse
/// combination `Σ c B¹_{index T/m}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeWeights {
    pub fine_resolution: usize,
    /// `None` for differences of schemes on different coarse grids.
    pub coarse_resolution: Option<usize>,
    pub terms: Vec<Vec<(usize, f64)>>,
}

impl SchemeWeights {
    /// Coefficient-wise difference `self - other` on the same fine grid.
    pub fn difference(&self, other: &SchemeWeights) -> Result<SchemeWeights> {
        if self.fine_resolution != other.fine_resolution {
            return Err(Error::Domain(format!(
                "weights live on different fine grids ({} vs {})",
                self.fine_resolution, other.fine_resolution
            )));
        }
        let terms = self
            .terms
            .iter()
            .zip(&other.terms)
            .map(|(a, b)| {
                let mut out: Vec<(usize, f64)> = a.clone();
                for &(idx, c) in b {
                    match out.iter_mut().find(|(i, _)| *i == idx) {
                        Some(slot) => slot.1 -= c,
                        None => out.push((idx, -c)),
                    }
                }
                out.retain(|&(_, c)| c != 0.0);
                out.sort_by_key(|&(i, _)| i);
                out
            })
            .collect();
        let coarse = if self.coarse_resolution == other.coarse_resolution {
            self.coarse_resolution
        } else {
            None
        };
        Ok(SchemeWeights {
            fine_resolution: self.fine_resolution,
            coarse_resolution: coarse,
            terms,
        })
    }

    /// `Σ_j w_j ΔB²_j` on a path of the same fine resolution.
    pub fn apply(&self, path: &PathPair) -> Result<f64> {
        if path.resolution() != self.fine_resolution {
            return Err(Error::Domain(format!(
                "path resolution {} does not match weights resolution {}",
                path.resolution(),
                self.fine_resolution
            )));
        }
        let (b1, b2) = (path.component1(), path.component2());
        let mut acc = KahanSum::new();
        for (j, w) in self.terms.iter().enumerate() {
            let wj: f64 = w.iter().map(|&(i, c)| c * b1[i]).sum();
            acc.add(wj * (b2[j + 1] - b2[j]));
        }
        Ok(acc.value())
    }
}

/// Exact weights of `kind` with `n` coarse intervals on a fine grid of `m`.
pub fn weights(kind: SchemeKind, n: usize, m: usize) -> Result<SchemeWeights> {
    let s = stride(m, n)?;
    let terms = (0..m)
        .map(|j| {
            let left = (j / s) * s;
            match kind {
                SchemeKind::Euler => vec![(left, 1.0)],
                SchemeKind::Trapezoid => vec![(left, 0.5), (left + s, 0.5)],
            }
        })
        .collect();
    Ok(SchemeWeights {
        fine_resolution: m,
        coarse_resolution: Some(n),
        terms,
    })
}
