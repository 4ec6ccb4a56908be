//! Config file: TOML or JSON (by extension), one table per component.

use std::path::Path;

use maskforge::adaption::TrainConfig;
use maskforge::pipeline::RefineConfig;
use maskforge::segmenter::{SceneGenerator, DEFAULT_HIDDEN_DIM, DEFAULT_NOISE};
use serde::{Deserialize, Serialize};

use crate::defects::DefectSpec;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockConfig {
    /// Half-width of the uniform noise added to predicted scores.
    pub noise: f64,
    pub hidden_dim: usize,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            noise: DEFAULT_NOISE,
            hidden_dim: DEFAULT_HIDDEN_DIM,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnessConfig {
    pub refine: RefineConfig,
    pub train: TrainConfig,
    pub defects: DefectSpec,
    pub mock: MockConfig,
    pub scenes: SceneGenerator,
}

impl HarnessConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        let cfg: Self = match path.extension().and_then(|e| e.to_str()) {
            Some("json") => serde_json::from_str(&text).map_err(|source| HarnessError::Json {
                path: path.to_path_buf(),
                source,
            })?,
            _ => toml::from_str(&text).map_err(|source| HarnessError::Toml {
                path: path.to_path_buf(),
                source,
            })?,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.refine.validate()?;
        self.train.validate()?;
        self.defects.validate()?;
        if !(0.0..=1.0).contains(&self.mock.noise) {
            return Err(HarnessError::Config(format!(
                "mock noise {} outside [0, 1]",
                self.mock.noise
            )));
        }
        Ok(())
    }

    /// Routes one seed into every seeded component.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.train.seed = seed;
        self.defects.seed = seed;
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "[refine]\niterations = 2\nselector = \"coarse_iou\"\n[refine.excavation]\nomega = 10.0\n\
             [train]\nlr = 0.05\n[defects]\nmin_iou = 0.5\nmax_iou = 0.9\nboundary_noise = [2, 3]\n\
             [mock]\nnoise = 0.0\n",
        )
        .unwrap();
        let a = HarnessConfig::load(&toml_path).unwrap();
        assert_eq!(a.refine.iterations, 2);
        assert_eq!(a.refine.excavation.omega, 10.0);
        assert_eq!(a.train.lr, 0.05);
        assert_eq!(a.defects.boundary_noise.max, 3);
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&a).unwrap()).unwrap();
        assert_eq!(HarnessConfig::load(&json_path).unwrap(), a);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.toml");
        std::fs::write(&p, "[refine]\niteration = 2\n").unwrap();
        assert!(matches!(
            HarnessConfig::load(&p),
            Err(HarnessError::Toml { .. })
        ));
        std::fs::write(&p, "[refine]\niterations = 0\n").unwrap();
        assert!(HarnessConfig::load(&p).is_err());
    }
}
