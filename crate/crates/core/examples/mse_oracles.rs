//! Compares the exact decomposition, the exact coupled-pair value and a
//! Monte Carlo estimate of the Euler mean-square error.

use fbm_levy::oracle::{mse_euler_exact, mse_monte_carlo, mse_pair_exact};
use fbm_levy::{HurstParameter, SchemeKind};

fn main() -> fbm_levy::Result<()> {
    let (n, factor) = (16usize, 64usize);
    for v in [0.35, 0.5, 0.6, 0.75, 0.9] {
        let hurst = HurstParameter::new(v)?;
        let exact = mse_euler_exact(hurst, 1.0, n)?;
        let m = n * factor;
        let pair = mse_pair_exact(hurst, 1.0, (SchemeKind::Euler, n), (SchemeKind::Euler, m), m)?;
        let mc = mse_monte_carlo(hurst, 1.0, n, SchemeKind::Euler, factor, 2000, 3)?;
        println!(
            "H={v}: exact {:.6e}  pair {:.6e}  MC {:.6e} ± {:.1e}  leading-term ratio {}",
            exact.mse,
            pair,
            mc.mse,
            mc.error_bar.unwrap_or(f64::NAN),
            exact.ratio.map(|r| format!("{r:.4}")).unwrap_or_else(|| "-".into())
        );
    }
    Ok(())
}
