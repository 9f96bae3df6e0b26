//! Drives the experiment runner from a key-value configuration.

use fbm_levy::cli::{execute, Command, ExperimentConfig};

fn main() -> fbm_levy::Result<()> {
    let mut config = ExperimentConfig::default();
    config.apply_config_text(
        "# exact errors for the trapezoid scheme\n\
         hurst = 0.8\n\
         n = 16, 64, 256, 1024\n\
         seed = 42\n",
    )?;
    config.validate()?;
    let mse = Command::Mse {
        scheme: "trapezoid".into(),
        method: "decomposition".into(),
    };
    print!("{}", execute(&mse, &config)?);
    print!("{}", execute(&Command::Rate { scheme: "trapezoid".into() }, &config)?);
    Ok(())
}
