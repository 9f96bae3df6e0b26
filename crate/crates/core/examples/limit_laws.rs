//! Scaled Euler errors in the Gaussian and Rosenblatt regimes.

use fbm_levy::constants::{alpha2, alpha3};
use fbm_levy::limitlaws::{
    ks_two_sample, normality_report, rosenblatt_difference_samples, scaled_error_samples, NormalityThresholds,
    RosenblattSpec,
};
use fbm_levy::HurstParameter;

fn main() -> fbm_levy::Result<()> {
    let count = 2000;

    let mid = HurstParameter::new(0.6)?;
    let gaussian = scaled_error_samples(mid, 1.0, 128, 16, count, 21)?;
    let report = normality_report(&gaussian, &NormalityThresholds::default())?;
    println!("{}", gaussian.provenance());
    println!(
        "  variance {:.4} vs alpha2 {:.4}; skew {:+.3}; excess kurtosis {:+.3}; KS {:.4}; pass {}",
        report.variance,
        alpha2(mid)?,
        report.skewness.value,
        report.excess_kurtosis.value,
        report.ks.statistic,
        report.pass
    );

    let high = HurstParameter::new(0.9)?;
    let errors = scaled_error_samples(high, 1.0, 128, 16, count, 22)?;
    let a3 = alpha3(high)?;
    let limit = rosenblatt_difference_samples(&RosenblattSpec::new(high, 1 << 14)?, (a3 / 2.0).sqrt(), count, 23)?;
    let ks = ks_two_sample(&errors, &limit)?;
    println!("{}", errors.provenance());
    println!(
        "  variance {:.4} vs alpha3 {a3:.4}; skew {:+.3}; KS vs Rosenblatt difference {:.4} (1% critical {:.4})",
        errors.summary().variance.value,
        errors.summary().skewness.value,
        ks.statistic,
        ks.critical_01
    );
    Ok(())
}
