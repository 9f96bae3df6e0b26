//! Special functions, compensated summation and adaptive Gauss-Kronrod
//! quadrature with power-law singularity removal.

mod kahan;
mod quadrature;
mod special;

pub use kahan::{kahan_sum, KahanSum};
pub use quadrature::{integrate_1d, integrate_2d_diagonal_singular, integrate_weighted, QuadResult, QuadratureSpec};
pub use special::{beta, log_gamma, riemann_zeta};
