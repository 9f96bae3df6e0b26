//! Euler and trapezoidal discretizations of the Lévy area
//! `X_T = ∫_0^T B¹ dB²` of two independent fractional Brownian motions.
//!
//! The crate provides
//! - exact fBm path-pair simulation by circulant embedding ([`fbm`]),
//! - closed-form covariance kernels ([`covariance`]),
//! - the explicit asymptotic error constants ([`constants`]),
//! - the two schemes and their linear-functional form ([`schemes`]),
//! - exact and Monte Carlo mean-square error oracles ([`oracle`]),
//! - Gaussian/Rosenblatt limit-law samplers and test statistics ([`limitlaws`]),
//! - a reproducible experiment runner behind the `fbm-levy` binary ([`cli`]).

pub mod cli;
pub mod constants;
pub mod covariance;
pub mod error;
pub mod fbm;
pub mod limitlaws;
pub mod numerics;
pub mod oracle;
pub mod parallel;
pub mod rng;
pub mod schemes;

pub use error::{Error, Result};
pub use fbm::{GridSpec, HurstParameter, PathPair, Regime};
pub use schemes::SchemeKind;
