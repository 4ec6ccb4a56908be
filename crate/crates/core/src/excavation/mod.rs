//! Prompt mining from a single coarse instance mask: distance-guided
//! positive/negative clicks, a context-aware elastic box, and a
//! Gaussian-style soft mask.

mod context;
mod embedding;
mod gaussian;
mod points;
mod prompts;

pub use context::{cebox, expand_box, query_embedding, similarity_map, QueryEmbedding};
pub use embedding::ImageEmbedding;
pub use gaussian::{gaussian_field, gaussian_mask, SoftMask};
pub use points::{negative_point, positive_point, MIN_NEGATIVE_DISTANCE};
pub use prompts::{PromptKinds, PromptSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::BinaryMask;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExcavationConfig {
    /// Minimum positive-similarity ratio in a strip for the box to grow.
    pub lambda: f64,
    /// Gaussian amplitude.
    pub omega: f64,
    /// Gaussian span factor.
    pub gamma: f64,
    pub sim_threshold: f64,
    /// Strip width as a fraction of the matching box side.
    pub expand_fraction: f64,
    pub max_expand_px: u32,
    pub expand_iters: u32,
}

impl Default for ExcavationConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            omega: 15.0,
            gamma: 4.0,
            sim_threshold: 0.5,
            expand_fraction: 0.10,
            max_expand_px: 16,
            expand_iters: 3,
        }
    }
}

impl ExcavationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.omega > 0.0) {
            return Err(Error::Config(format!(
                "omega {} must be positive",
                self.omega
            )));
        }
        if !(self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma {} must be positive",
                self.gamma
            )));
        }
        if !(self.expand_fraction >= 0.0) {
            return Err(Error::Config("expand_fraction must be non-negative".into()));
        }
        Ok(())
    }
}

/// Mines every enabled prompt kind from `coarse`. The soft mask is produced
/// at `prompt_grid` resolution.
pub fn excavate(
    coarse: &BinaryMask,
    emb: &ImageEmbedding,
    cfg: &ExcavationConfig,
    enabled: PromptKinds,
    prompt_grid: (u32, u32),
) -> Result<PromptSet> {
    if enabled.is_empty() {
        return Err(Error::NoPrompt);
    }
    let positive = positive_point(coarse)?;
    let tight = coarse.tight_box()?;
    let bbox = if enabled.bbox {
        cebox(coarse, emb, cfg)?
    } else {
        tight
    };
    let negative = if enabled.point {
        negative_point(coarse, &tight)?
    } else {
        None
    };
    let soft_mask = if enabled.mask {
        Some(gaussian_mask(coarse, cfg, prompt_grid.0, prompt_grid.1)?)
    } else {
        None
    };
    Ok(PromptSet {
        positive,
        negative,
        bbox,
        soft_mask,
        enabled,
    })
}
