//! `--backend mock:<scene file>` or `--backend neural:<manifest>`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use maskforge::segmenter::{MockSegmenter, OracleScene, PromptedSegmenter};
use serde::{Deserialize, Serialize};

use crate::config::MockConfig;
use crate::error::{HarnessError, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BackendSpec {
    Mock(PathBuf),
    Neural(PathBuf),
}

impl FromStr for BackendSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.split_once(':') {
            Some(("mock", p)) if !p.is_empty() => Ok(BackendSpec::Mock(p.into())),
            Some(("neural", p)) if !p.is_empty() => Ok(BackendSpec::Neural(p.into())),
            _ => Err(format!(
                "expected mock:<scene file> or neural:<manifest>, got `{s}`"
            )),
        }
    }
}

/// A scene file holds one scene for every image, or scenes keyed by stem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SceneFile {
    Keyed {
        scenes: BTreeMap<String, OracleScene>,
    },
    Single(OracleScene),
}

impl SceneFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        serde_json::from_str(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn scene_for(&self, name: &str) -> Option<&OracleScene> {
        match self {
            SceneFile::Keyed { scenes } => scenes.get(name),
            SceneFile::Single(s) => Some(s),
        }
    }
}

pub enum Backend {
    Mock {
        path: PathBuf,
        scenes: SceneFile,
        cfg: MockConfig,
        seed: u64,
    },
    #[cfg(feature = "neural")]
    Neural(maskforge::segmenter::NeuralSegmenter),
}

impl Backend {
    pub fn open(spec: &BackendSpec, mock: &MockConfig, seed: u64) -> Result<Self> {
        match spec {
            BackendSpec::Mock(path) => Ok(Backend::Mock {
                path: path.clone(),
                scenes: SceneFile::load(path)?,
                cfg: mock.clone(),
                seed,
            }),
            #[cfg(feature = "neural")]
            BackendSpec::Neural(path) => Ok(Backend::Neural(
                maskforge::segmenter::NeuralSegmenter::load(path)?,
            )),
            #[cfg(not(feature = "neural"))]
            BackendSpec::Neural(_) => Err(HarnessError::Config(
                "this build has no neural backend (enable the `neural` feature)".into(),
            )),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Backend::Mock { .. } => "mock",
            #[cfg(feature = "neural")]
            Backend::Neural(_) => "neural",
        }
    }

    /// Runs `f` with the segmenter answering for image `name`.
    pub fn with<R>(
        &self,
        name: &str,
        f: impl FnOnce(&dyn PromptedSegmenter) -> Result<R>,
    ) -> Result<R> {
        match self {
            Backend::Mock {
                path,
                scenes,
                cfg,
                seed,
            } => {
                let scene = scenes.scene_for(name).ok_or_else(|| {
                    HarnessError::dataset(path, format!("no scene for image `{name}`"))
                })?;
                let mock = MockSegmenter::with_hidden_dim(
                    scene.clone(),
                    cfg.noise,
                    *seed,
                    cfg.hidden_dim,
                )?;
                f(&mock)
            }
            #[cfg(feature = "neural")]
            Backend::Neural(n) => f(n),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_specs() {
        assert_eq!(
            "mock:a.json".parse(),
            Ok(BackendSpec::Mock("a.json".into()))
        );
        assert_eq!(
            "neural:m/x.json".parse(),
            Ok(BackendSpec::Neural("m/x.json".into()))
        );
        assert!("mock:".parse::<BackendSpec>().is_err());
        assert!("onnx:x".parse::<BackendSpec>().is_err());
    }
}
