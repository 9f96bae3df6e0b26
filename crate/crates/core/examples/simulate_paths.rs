//! Draws fBm path pairs and compares empirical increment correlations with
//! the exact fractional Gaussian noise autocovariance.

use fbm_levy::fbm::{fgn_autocovariance, PathSampler};
use fbm_levy::rng::{substream, tag};
use fbm_levy::{GridSpec, HurstParameter};

fn main() -> fbm_levy::Result<()> {
    let hurst = HurstParameter::new(0.7)?;
    let sampler = PathSampler::new(hurst, GridSpec::new(1.0, 256)?)?;
    println!("regime {}, cholesky fallback: {}", hurst.regime().as_str(), sampler.uses_cholesky());

    let draws = 2000;
    let mut lag_sums = [0.0; 4];
    for i in 0..draws {
        let (x1, _) = sampler.sample_unit_noise(&mut substream(11, tag("example_paths"), i));
        for (k, s) in lag_sums.iter_mut().enumerate() {
            *s += x1.iter().zip(&x1[k..]).map(|(a, b)| a * b).sum::<f64>() / (x1.len() - k) as f64;
        }
    }
    for (k, s) in lag_sums.iter().enumerate() {
        println!("lag {k}: empirical {:+.4}  exact {:+.4}", s / draws as f64, fgn_autocovariance(hurst, k));
    }

    let pair = sampler.sample(&mut substream(11, tag("example_paths"), draws));
    println!("B1_T = {:+.4}, B2_T = {:+.4}", pair.component1()[256], pair.component2()[256]);
    Ok(())
}
