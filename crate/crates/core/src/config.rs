//! Run configuration in TOML, shared by every command.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::MetricsOptions;
use crate::resfit::FitConfig;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub fit: FitConfig,
    pub metrics: MetricsOptions,
    /// Voxelize meshes with boundary edges using winding-number signs.
    pub force_winding: bool,
    /// Shapes processed concurrently; 0 uses one per available core.
    pub jobs: usize,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.metrics.resolution < 2
            || self.metrics.surface_points == 0
            || self.metrics.bisurf_points == 0
        {
            return Err(Error::Config(
                "metric resolution and sample counts must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| Error::Schema {
            path: e.path().to_string(),
            msg: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resfit::FitMode;

    #[test]
    fn defaults_snapshot() {
        let c = RunConfig::default();
        assert_eq!(c.fit.max_rounds, 10);
        assert_eq!(c.fit.msd.max_iterations, 7);
        assert_eq!(c.fit.alpha, 1e-3);
        assert_eq!(c.fit.weights.lambda_count, 1e-3);
        assert_eq!(c.fit.weights.lambda_qual, 1e-2);
        assert_eq!(c.fit.resolution, 128);
        assert_eq!(c.metrics.resolution, 128);
        assert_eq!(c.metrics.surface_points, 2048);
        assert_eq!(c.fit.mode, FitMode::Free);
        c.validate().unwrap();
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let mut c = RunConfig::default();
        c.fit.alpha = 0.1 + 0.2;
        c.fit.weights.learning_rate = 1.0 / 3.0;
        c.fit.mode = FitMode::Solid;
        c.jobs = 3;
        assert_eq!(RunConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn partial_files_take_defaults() {
        let c = RunConfig::from_toml("[fit]\nmax_rounds = 2\n[fit.weights]\nlambda_qual = 0.5\n")
            .unwrap();
        assert_eq!(c.fit.max_rounds, 2);
        assert_eq!(c.fit.weights.lambda_qual, 0.5);
        assert_eq!(c.fit.weights.lambda_count, 1e-3);
        assert_eq!(c.metrics, MetricsOptions::default());
    }

    #[test]
    fn bad_files_are_rejected() {
        match RunConfig::from_toml("[fit]\nmax_roundz = 2\n") {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("fit"), "{path}"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(RunConfig::from_toml("[fit]\nmax_rounds = 0\n").is_err());
        assert!(RunConfig::from_toml("[fit\n").is_err());
    }
}
