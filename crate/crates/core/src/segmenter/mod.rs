//! Promptable segmenters: the backend abstraction, a deterministic geometric
//! mock used for desk-scale testing, and an ONNX-graph backend.

mod manifest;
mod mock;
mod scene;

#[cfg(feature = "neural")]
mod fixtures;
#[cfg(feature = "neural")]
mod neural;

pub use manifest::{EmbeddingShape, GridSize, IoNames, ModelManifest, Padding, MANIFEST_VERSION};
pub use mock::{MockSegmenter, DEFAULT_HIDDEN_DIM, DEFAULT_NOISE};
pub use scene::{OracleScene, SceneGenerator, SceneShape};

#[cfg(feature = "neural")]
pub use fixtures::{parity_check, FixtureResult, ParityReport};
#[cfg(feature = "neural")]
pub use neural::{DecoderInputs, NeuralSegmenter, RawDecoderOutput};

use image::RgbImage;

use crate::error::{Error, Result};
use crate::excavation::{ImageEmbedding, PromptSet};
use crate::mask::{resize, BinaryMask, Raster, ResizeMode};

/// Candidate count in multi-mask mode.
pub const CANDIDATES: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Capabilities {
    pub candidates: usize,
    pub hidden_dim: usize,
    /// Embedding grid `(width, height, channels)`.
    pub embedding_grid: (u32, u32, u32),
}

/// A segmenter answering point/box/mask prompts with several candidate masks.
///
/// Implementations are read-only after construction and must return identical
/// outputs for identical `(embedding, prompts)`.
pub trait PromptedSegmenter: Send + Sync {
    fn capabilities(&self) -> Capabilities;

    /// Resolution at which soft-mask prompts are expected for this embedding.
    fn prompt_grid(&self, emb: &ImageEmbedding) -> (u32, u32);

    fn embed(&self, image: &RgbImage) -> Result<ImageEmbedding>;

    fn predict(&self, emb: &ImageEmbedding, prompts: &PromptSet) -> Result<MultiMaskOutput>;
}

/// Candidates returned for one prompt set.
#[derive(Clone, Debug, PartialEq)]
pub struct MultiMaskOutput {
    /// Source-resolution masks, `logits[i]` upsampled and thresholded at 0.
    pub masks: Vec<BinaryMask>,
    pub logits: Vec<Raster>,
    /// Predicted quality of each candidate, in `[0, 1]`.
    pub iou_pred: Vec<f64>,
    /// Penultimate quality-head activation per candidate.
    pub hidden: Vec<Vec<f64>>,
}

impl MultiMaskOutput {
    /// Builds an output whose masks are derived from `logits`.
    pub fn from_logits(
        logits: Vec<Raster>,
        iou_pred: Vec<f64>,
        hidden: Vec<Vec<f64>>,
        src_width: u32,
        src_height: u32,
    ) -> Self {
        let masks = logits
            .iter()
            .map(|l| logits_to_mask(l, src_width, src_height))
            .collect();
        Self {
            masks,
            logits,
            iou_pred,
            hidden,
        }
    }

    pub fn len(&self) -> usize {
        self.masks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masks.is_empty()
    }

    /// Checks candidate counts and that every mask equals its thresholded,
    /// upsampled logits.
    pub fn check_consistency(&self) -> Result<()> {
        let k = self.masks.len();
        if self.logits.len() != k || self.iou_pred.len() != k || self.hidden.len() != k {
            return Err(Error::DimMismatch(format!(
                "{} masks, {} logits, {} scores, {} hidden vectors",
                k,
                self.logits.len(),
                self.iou_pred.len(),
                self.hidden.len()
            )));
        }
        for (i, (m, l)) in self.masks.iter().zip(&self.logits).enumerate() {
            if *m != logits_to_mask(l, m.width(), m.height()) {
                return Err(Error::Model(format!(
                    "candidate {i} disagrees with its logits"
                )));
            }
        }
        Ok(())
    }
}

pub fn logits_to_mask(logits: &Raster, width: u32, height: u32) -> BinaryMask {
    resize(logits, width, height, ResizeMode::Bilinear).threshold_gt(0.0)
}
