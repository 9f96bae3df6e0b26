//! Evaluates both schemes on one fine path at a sequence of coarse grids.

use fbm_levy::fbm::sample_path_pair;
use fbm_levy::rng::{substream, tag};
use fbm_levy::schemes::{evaluate, scheme_difference};
use fbm_levy::{GridSpec, HurstParameter, SchemeKind};

fn main() -> fbm_levy::Result<()> {
    let hurst = HurstParameter::new(0.65)?;
    let m = 1 << 14;
    let path = sample_path_pair(hurst, GridSpec::new(1.0, m)?, &mut substream(5, tag("example_schemes"), 0))?;
    let reference = evaluate(&path, m, SchemeKind::Trapezoid)?;
    println!("fine trapezoid reference at m={m}: {reference:+.6}");
    for p in (2..=12).step_by(2) {
        let n = 1usize << p;
        let euler = evaluate(&path, n, SchemeKind::Euler)?;
        let trap = evaluate(&path, n, SchemeKind::Trapezoid)?;
        println!(
            "n={n:>5}  euler {euler:+.6} (err {:+.2e})  trapezoid {trap:+.6} (err {:+.2e})  difference {:+.2e}",
            reference - euler,
            reference - trap,
            scheme_difference(&path, n)?
        );
    }
    Ok(())
}
