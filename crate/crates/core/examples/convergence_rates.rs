//! Fits log-log convergence rates to the exact mean-square errors.

use fbm_levy::constants::LOG_CASE_CONSTANT;
use fbm_levy::limitlaws::{rate_regression, RateModel};
use fbm_levy::oracle::mse_exact;
use fbm_levy::{HurstParameter, SchemeKind};

fn main() -> fbm_levy::Result<()> {
    let ns: Vec<usize> = (6..=12).map(|p| 1 << p).collect();
    for (v, scheme) in [
        (0.35, SchemeKind::Euler),
        (0.6, SchemeKind::Euler),
        (0.75, SchemeKind::Euler),
        (0.9, SchemeKind::Euler),
        (0.65, SchemeKind::Trapezoid),
        (0.85, SchemeKind::Trapezoid),
    ] {
        let hurst = HurstParameter::new(v)?;
        let pts = ns
            .iter()
            .map(|&n| Ok((n, mse_exact(hurst, 1.0, n, scheme)?.mse)))
            .collect::<fbm_levy::Result<Vec<_>>>()?;
        let power = rate_regression(&pts, RateModel::Power)?;
        println!("{scheme} H={v}: exponent {:+.4}", power.exponent);
        if v == 0.75 {
            let log = rate_regression(&pts, RateModel::PowerLog)?;
            println!("  log n / n^2 fit: coefficient {:.5} vs {:.5}", log.coefficient, LOG_CASE_CONSTANT);
        }
    }
    Ok(())
}
