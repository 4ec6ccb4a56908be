use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSize {
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingShape {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    #[default]
    BottomRight,
}

/// Tensor names the exported graphs use.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IoNames {
    pub image: String,
    pub image_embeddings: String,
    pub point_coords: String,
    pub point_labels: String,
    pub mask_input: String,
    pub has_mask_input: String,
    pub low_res_masks: String,
    pub iou_predictions: String,
    pub iou_hidden: String,
}

impl Default for IoNames {
    fn default() -> Self {
        Self {
            image: "image".into(),
            image_embeddings: "image_embeddings".into(),
            point_coords: "point_coords".into(),
            point_labels: "point_labels".into(),
            mask_input: "mask_input".into(),
            has_mask_input: "has_mask_input".into(),
            low_res_masks: "low_res_masks".into(),
            iou_predictions: "iou_predictions".into(),
            iou_hidden: "iou_hidden".into(),
        }
    }
}

/// Sidecar describing an exported encoder/decoder pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelManifest {
    pub format_version: u32,
    /// Long side the image is scaled to before padding to a square.
    pub input_size: u32,
    #[serde(default)]
    pub padding: Padding,
    pub pixel_mean: [f32; 3],
    pub pixel_std: [f32; 3],
    pub embedding: EmbeddingShape,
    /// Resolution of the dense mask prompt.
    pub prompt_grid: GridSize,
    /// Resolution of the low-resolution mask logits.
    pub logit_grid: GridSize,
    pub hidden_dim: usize,
    pub candidates: usize,
    /// Point slots in the decoder, including the box corners.
    pub max_points: usize,
    /// Graph files, relative to the manifest.
    pub encoder: PathBuf,
    pub decoder: PathBuf,
    #[serde(default)]
    pub io: IoNames,
}

impl ModelManifest {
    /// Reads and validates a manifest; graph paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let value: serde_json::Value = serde_json::from_str(&text)?;
        // check the version before the schema so old files report the right error
        let found = value.get("format_version").and_then(|v| v.as_u64());
        if found != Some(MANIFEST_VERSION as u64) {
            return Err(Error::VersionMismatch {
                found: found.map_or_else(|| "missing".to_string(), |v| v.to_string()),
                expected: MANIFEST_VERSION,
            });
        }
        let mut m: ModelManifest = serde_json::from_value(value)?;
        let base = path.parent().unwrap_or(Path::new("."));
        m.encoder = base.join(&m.encoder);
        m.decoder = base.join(&m.decoder);
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 {
            return Err(Error::Config("input_size must be positive".into()));
        }
        if self.pixel_std.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::Config("pixel_std entries must be positive".into()));
        }
        let e = self.embedding;
        if e.width == 0 || e.height == 0 || e.channels == 0 {
            return Err(Error::Config("embedding shape must be positive".into()));
        }
        for g in [self.prompt_grid, self.logit_grid] {
            if g.width == 0 || g.height == 0 {
                return Err(Error::Config("grid sizes must be positive".into()));
            }
        }
        if self.candidates == 0 || self.hidden_dim == 0 {
            return Err(Error::Config(
                "candidates and hidden_dim must be positive".into(),
            ));
        }
        // positive, negative and two box corners
        if self.max_points < 4 {
            return Err(Error::Config("max_points must be at least 4".into()));
        }
        Ok(())
    }

    pub fn embedding_grid(&self) -> GridSize {
        GridSize {
            width: self.embedding.width,
            height: self.embedding.height,
        }
    }

    /// Scale mapping source pixels to model-input pixels.
    pub fn scale_for(&self, width: u32, height: u32) -> f64 {
        self.input_size as f64 / width.max(height) as f64
    }

    /// Size of the resized image inside the padded input.
    pub fn resized_dims(&self, width: u32, height: u32) -> (u32, u32) {
        let s = self.scale_for(width, height);
        let r = |v: u32| ((v as f64 * s).round() as u32).clamp(1, self.input_size);
        (r(width), r(height))
    }

    /// Cells of a `grid` covered by real image content (not padding).
    pub fn valid_region(&self, grid: GridSize, width: u32, height: u32) -> (u32, u32) {
        let (rw, rh) = self.resized_dims(width, height);
        let n = self.input_size as u64;
        let cover = |r: u32, g: u32| ((r as u64 * g as u64).div_ceil(n) as u32).clamp(1, g);
        (cover(rw, grid.width), cover(rh, grid.height))
    }
}
