//! Tabulates the asymptotic error constants across the Hurst range.

use fbm_levy::constants::ConstantsTable;
use fbm_levy::HurstParameter;

fn show(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.6}")).unwrap_or_else(|| "-".into())
}

fn main() -> fbm_levy::Result<()> {
    println!("{:>5} {:>15} {:>9} {:>9} {:>9} {:>9} {:>9} {:>9}", "H", "regime", "c1", "c2", "alpha1", "alpha2", "alpha3", "alpha4");
    for v in [0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95] {
        let t = ConstantsTable::compute(HurstParameter::new(v)?)?;
        println!(
            "{:>5} {:>15} {:>9.6} {:>9.6} {:>9} {:>9} {:>9} {:>9}",
            v,
            t.regime.as_str(),
            t.c1,
            t.c2,
            show(t.alpha1),
            show(t.alpha2),
            show(t.alpha3),
            show(t.alpha4)
        );
    }
    Ok(())
}
