//! Build, save and reload a run configuration.

use resfit::config::RunConfig;
use resfit::resfit::FitMode;

fn main() -> resfit::Result<()> {
    let mut cfg = RunConfig::from_toml("[fit]\nmax_rounds = 4\nmode = \"solid\"\n")?;
    assert_eq!(cfg.fit.mode, FitMode::Solid);
    cfg.fit.weights.lambda_qual = 0.05;
    let path = std::env::temp_dir().join("resfit_config.toml");
    cfg.save(&path)?;
    assert_eq!(RunConfig::load(&path)?, cfg);
    println!("{}", cfg.to_toml());
    Ok(())
}
