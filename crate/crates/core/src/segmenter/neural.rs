//! Backend running an exported encoder/decoder pair through tract.
//!
//! Conventions follow the exported graphs: the image is scaled so its long
//! side equals `input_size`, normalized per channel, zero-padded at the
//! bottom and right, and fed as NCHW. Point coordinates are in scaled pixel
//! units without the half-pixel shift (the decoder adds it); labels are 1
//! positive, 0 negative, 2/3 box corners and -1 padding.

use std::path::Path;
use std::sync::Arc;

use image::RgbImage;
use tract_onnx::prelude::*;

use super::manifest::{GridSize, ModelManifest};
use super::{Capabilities, MultiMaskOutput, PromptedSegmenter};
use crate::error::{Error, Result};
use crate::excavation::{ImageEmbedding, PromptSet};
use crate::mask::{resize, Raster, ResizeMode};

type Plan = Arc<TypedSimplePlan>;

/// Decoder inputs in graph layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderInputs {
    /// `[1, C, H, W]`.
    pub embedding: Vec<f32>,
    /// `[1, max_points, 2]`.
    pub point_coords: Vec<f32>,
    /// `[1, max_points]`.
    pub point_labels: Vec<f32>,
    /// `[1, 1, prompt_h, prompt_w]`.
    pub mask_input: Vec<f32>,
    pub has_mask_input: f32,
}

/// Decoder outputs in graph layout.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDecoderOutput {
    /// `[1, K, logit_h, logit_w]`.
    pub low_res_masks: Vec<f32>,
    /// `[1, K]`.
    pub iou_predictions: Vec<f32>,
    /// `[1, K, hidden_dim]`.
    pub iou_hidden: Vec<f32>,
}

pub struct NeuralSegmenter {
    manifest: ModelManifest,
    encoder: Plan,
    decoder: Plan,
}

struct LoadedGraph {
    plan: Plan,
    outputs: Vec<(String, Vec<usize>)>,
}

fn graph_err(file: &Path, e: impl std::fmt::Display) -> Error {
    Error::GraphLoad {
        file: file.to_path_buf(),
        message: e.to_string(),
    }
}

/// Loads `file`, pinning inputs (by name, in the given order) to concrete
/// shapes.
fn load_graph(file: &Path, inputs: &[(&str, Vec<usize>)], outputs: &[&str]) -> Result<LoadedGraph> {
    if !file.is_file() {
        return Err(Error::MissingFile(file.to_path_buf()));
    }
    let mut model = tract_onnx::onnx()
        .model_for_path(file)
        .map_err(|e| graph_err(file, e))?;
    let names: Vec<String> = model
        .input_outlets()
        .map_err(|e| graph_err(file, e))?
        .iter()
        .map(|o| model.node(o.node).name.clone())
        .collect();
    if names.len() != inputs.len() {
        return Err(graph_err(
            file,
            format!("graph has inputs {names:?}, expected {}", inputs.len()),
        ));
    }
    let mut order = Vec::new();
    for (name, shape) in inputs {
        let i = names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| graph_err(file, format!("graph has no input `{name}`")))?;
        model
            .set_input_fact(i, InferenceFact::dt_shape(f32::datum_type(), shape.clone()))
            .map_err(|e| graph_err(file, e))?;
        order.push(i);
    }
    // feed inputs in manifest order
    let outlets = model
        .input_outlets()
        .map_err(|e| graph_err(file, e))?
        .to_vec();
    let reordered: Vec<OutletId> = order.iter().map(|&i| outlets[i]).collect();
    model
        .set_input_outlets(&reordered)
        .map_err(|e| graph_err(file, e))?;

    let out_outlets = model
        .output_outlets()
        .map_err(|e| graph_err(file, e))?
        .to_vec();
    let out_names: Vec<String> = out_outlets
        .iter()
        .map(|o| {
            model
                .outlet_label(*o)
                .map(str::to_string)
                .unwrap_or_else(|| model.node(o.node).name.clone())
        })
        .collect();
    let mut picked = Vec::new();
    for name in outputs {
        let i = out_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| graph_err(file, format!("graph has no output `{name}`")))?;
        picked.push(out_outlets[i]);
    }
    model
        .select_output_outlets(&picked)
        .map_err(|e| graph_err(file, e))?;

    let typed = model.into_typed().map_err(|e| graph_err(file, e))?;
    let mut shapes = Vec::new();
    for (name, o) in outputs
        .iter()
        .zip(typed.output_outlets().map_err(|e| graph_err(file, e))?)
    {
        let fact = typed.outlet_fact(*o).map_err(|e| graph_err(file, e))?;
        let shape = fact
            .shape
            .as_concrete()
            .ok_or_else(|| graph_err(file, format!("output `{name}` has symbolic shape")))?
            .to_vec();
        shapes.push((name.to_string(), shape));
    }
    let plan = typed
        .into_optimized()
        .and_then(|m| m.into_runnable())
        .map_err(|e| graph_err(file, e))?;
    Ok(LoadedGraph {
        plan,
        outputs: shapes,
    })
}

fn check_shape(what: &str, got: &[usize], want: &[usize]) -> Result<()> {
    if got != want {
        return Err(Error::DimMismatch(format!(
            "{what}: graph produces {got:?}, manifest declares {want:?}"
        )));
    }
    Ok(())
}

fn run(plan: &Plan, inputs: Vec<(Vec<usize>, &[f32])>) -> Result<Vec<Vec<f32>>> {
    let tensors = inputs
        .into_iter()
        .map(|(shape, data)| {
            Tensor::from_shape(&shape, data)
                .map(TValue::from)
                .map_err(|e| Error::Model(e.to_string()))
        })
        .collect::<Result<TVec<_>>>()?;
    let out = plan.run(tensors).map_err(|e| Error::Model(e.to_string()))?;
    out.iter()
        .map(|t| {
            t.to_plain_array_view::<f32>()
                .map(|v| v.iter().copied().collect())
                .map_err(|e| Error::Model(e.to_string()))
        })
        .collect()
}

impl NeuralSegmenter {
    /// Loads the manifest and both graphs, checking graph I/O against the
    /// declared dimensions.
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest = ModelManifest::load(manifest_path)?;
        let io = &manifest.io;
        let n = manifest.input_size as usize;
        let e = manifest.embedding;
        let emb_shape = vec![1, e.channels as usize, e.height as usize, e.width as usize];
        let encoder = load_graph(
            &manifest.encoder,
            &[(io.image.as_str(), vec![1, 3, n, n])],
            &[io.image_embeddings.as_str()],
        )?;
        check_shape("image embeddings", &encoder.outputs[0].1, &emb_shape)?;

        let (k, p) = (manifest.candidates, manifest.max_points);
        let pg = manifest.prompt_grid;
        let lg = manifest.logit_grid;
        let decoder = load_graph(
            &manifest.decoder,
            &[
                (io.image_embeddings.as_str(), emb_shape),
                (io.point_coords.as_str(), vec![1, p, 2]),
                (io.point_labels.as_str(), vec![1, p]),
                (
                    io.mask_input.as_str(),
                    vec![1, 1, pg.height as usize, pg.width as usize],
                ),
                (io.has_mask_input.as_str(), vec![1]),
            ],
            &[
                io.low_res_masks.as_str(),
                io.iou_predictions.as_str(),
                io.iou_hidden.as_str(),
            ],
        )?;
        check_shape(
            "low-res masks",
            &decoder.outputs[0].1,
            &[1, k, lg.height as usize, lg.width as usize],
        )?;
        check_shape("iou predictions", &decoder.outputs[1].1, &[1, k])?;
        check_shape(
            "iou hidden",
            &decoder.outputs[2].1,
            &[1, k, manifest.hidden_dim],
        )?;
        Ok(Self {
            manifest,
            encoder: encoder.plan,
            decoder: decoder.plan,
        })
    }

    pub fn manifest(&self) -> &ModelManifest {
        &self.manifest
    }

    fn embedding_shape(&self) -> Vec<usize> {
        let e = self.manifest.embedding;
        vec![1, e.channels as usize, e.height as usize, e.width as usize]
    }

    /// Resized, normalized and padded image as `[1, 3, S, S]`.
    pub fn preprocess(&self, image: &RgbImage) -> Result<Vec<f32>> {
        let (w, h) = image.dimensions();
        if w == 0 || h == 0 {
            return Err(Error::Dimension {
                width: w,
                height: h,
            });
        }
        let m = &self.manifest;
        let s = m.input_size as usize;
        let (rw, rh) = m.resized_dims(w, h);
        let mut out = vec![0f32; 3 * s * s];
        for c in 0..3 {
            let plane = Raster::from_fn(w, h, |x, y| image.get_pixel(x, y).0[c] as f64);
            let scaled = resize(&plane, rw, rh, ResizeMode::Bilinear);
            let (mean, std) = (m.pixel_mean[c] as f64, m.pixel_std[c] as f64);
            for y in 0..rh as usize {
                for x in 0..rw as usize {
                    out[c * s * s + y * s + x] =
                        ((scaled.data[y * rw as usize + x] - mean) / std) as f32;
                }
            }
        }
        Ok(out)
    }

    /// Runs the encoder on a preprocessed `[1, 3, S, S]` tensor.
    pub fn embed_raw(&self, image: &[f32]) -> Result<Vec<f32>> {
        let n = self.manifest.input_size as usize;
        if image.len() != 3 * n * n {
            return Err(Error::DimMismatch(format!(
                "image tensor of {} values",
                image.len()
            )));
        }
        let mut out = run(&self.encoder, vec![(vec![1, 3, n, n], image)])?;
        Ok(out.remove(0))
    }

    pub fn decode_raw(&self, inputs: &DecoderInputs) -> Result<RawDecoderOutput> {
        let m = &self.manifest;
        let p = m.max_points;
        let pg = m.prompt_grid;
        let has = [inputs.has_mask_input];
        let shapes = [
            (self.embedding_shape(), inputs.embedding.as_slice()),
            (vec![1, p, 2], inputs.point_coords.as_slice()),
            (vec![1, p], inputs.point_labels.as_slice()),
            (
                vec![1, 1, pg.height as usize, pg.width as usize],
                inputs.mask_input.as_slice(),
            ),
            (vec![1], has.as_slice()),
        ];
        for (shape, data) in &shapes {
            if shape.iter().product::<usize>() != data.len() {
                return Err(Error::DimMismatch(format!(
                    "decoder input of {} values for shape {shape:?}",
                    data.len()
                )));
            }
        }
        let mut out = run(&self.decoder, shapes.to_vec())?.into_iter();
        Ok(RawDecoderOutput {
            low_res_masks: out.next().expect("three outputs"),
            iou_predictions: out.next().expect("three outputs"),
            iou_hidden: out.next().expect("three outputs"),
        })
    }

    /// Prompt tensors for `prompts` on an image of the embedding's source size.
    pub fn encode_prompts(
        &self,
        emb: &ImageEmbedding,
        prompts: &PromptSet,
    ) -> Result<DecoderInputs> {
        if prompts.enabled.is_empty() {
            return Err(Error::NoPrompt);
        }
        let m = &self.manifest;
        let scale = m.scale_for(emb.src_width, emb.src_height);
        let mut points: Vec<([f64; 2], f32)> = Vec::new();
        if prompts.enabled.point {
            let p = prompts.positive;
            points.push(([p.x as f64, p.y as f64], 1.0));
            if let Some(n) = prompts.negative {
                points.push(([n.x as f64, n.y as f64], 0.0));
            }
        }
        if prompts.enabled.bbox {
            let b = prompts.bbox;
            // corners of the last covered pixel, as in xyxy boxes from masks
            points.push(([b.x0 as f64, b.y0 as f64], 2.0));
            points.push(([(b.x1 - 1) as f64, (b.y1 - 1) as f64], 3.0));
        }
        if points.len() > m.max_points {
            return Err(Error::Config(format!(
                "{} prompt points exceed the decoder's {} slots",
                points.len(),
                m.max_points
            )));
        }
        let mut point_coords = vec![0f32; 2 * m.max_points];
        let mut point_labels = vec![-1f32; m.max_points];
        for (i, (xy, label)) in points.iter().enumerate() {
            point_coords[2 * i] = (xy[0] * scale) as f32;
            point_coords[2 * i + 1] = (xy[1] * scale) as f32;
            point_labels[i] = *label;
        }
        let pg = m.prompt_grid;
        let mut mask_input = vec![0f32; (pg.width * pg.height) as usize];
        let mut has_mask_input = 0.0;
        if prompts.enabled.mask {
            let soft = prompts
                .soft_mask
                .as_ref()
                .ok_or_else(|| Error::Config("mask prompt enabled without a soft mask".into()))?;
            if soft.width > pg.width || soft.height > pg.height {
                return Err(Error::DimMismatch(format!(
                    "soft mask {}x{} larger than prompt grid {}x{}",
                    soft.width, soft.height, pg.width, pg.height
                )));
            }
            for y in 0..soft.height as usize {
                for x in 0..soft.width as usize {
                    mask_input[y * pg.width as usize + x] =
                        soft.data[y * soft.width as usize + x] as f32;
                }
            }
            has_mask_input = 1.0;
        }
        Ok(DecoderInputs {
            embedding: hwc_to_chw(emb),
            point_coords,
            point_labels,
            mask_input,
            has_mask_input,
        })
    }

    fn valid(&self, grid: GridSize, w: u32, h: u32) -> (u32, u32) {
        self.manifest.valid_region(grid, w, h)
    }
}

fn hwc_to_chw(emb: &ImageEmbedding) -> Vec<f32> {
    let (w, h, c) = (
        emb.width as usize,
        emb.height as usize,
        emb.channels as usize,
    );
    let mut out = vec![0f32; w * h * c];
    for y in 0..h {
        for x in 0..w {
            for (k, v) in emb.cell(x as u32, y as u32).iter().enumerate() {
                out[k * w * h + y * w + x] = *v;
            }
        }
    }
    out
}

impl PromptedSegmenter for NeuralSegmenter {
    fn capabilities(&self) -> Capabilities {
        let e = self.manifest.embedding;
        Capabilities {
            candidates: self.manifest.candidates,
            hidden_dim: self.manifest.hidden_dim,
            embedding_grid: (e.width, e.height, e.channels),
        }
    }

    fn prompt_grid(&self, emb: &ImageEmbedding) -> (u32, u32) {
        self.valid(self.manifest.prompt_grid, emb.src_width, emb.src_height)
    }

    fn embed(&self, image: &RgbImage) -> Result<ImageEmbedding> {
        let raw = self.embed_raw(&self.preprocess(image)?)?;
        let e = self.manifest.embedding;
        let (w, h, c) = (e.width as usize, e.height as usize, e.channels as usize);
        let mut hwc = vec![0f32; w * h * c];
        for k in 0..c {
            for y in 0..h {
                for x in 0..w {
                    hwc[(y * w + x) * c + k] = raw[k * w * h + y * w + x];
                }
            }
        }
        let (sw, sh) = image.dimensions();
        let (vw, vh) = self.valid(self.manifest.embedding_grid(), sw, sh);
        ImageEmbedding::new(e.width, e.height, e.channels, hwc, sw, sh)?.with_valid_region(vw, vh)
    }

    fn predict(&self, emb: &ImageEmbedding, prompts: &PromptSet) -> Result<MultiMaskOutput> {
        let inputs = self.encode_prompts(emb, prompts)?;
        let raw = self.decode_raw(&inputs)?;
        let m = &self.manifest;
        let lg = m.logit_grid;
        let (vw, vh) = self.valid(lg, emb.src_width, emb.src_height);
        let plane = (lg.width * lg.height) as usize;
        let logits = (0..m.candidates)
            .map(|k| {
                let src = &raw.low_res_masks[k * plane..(k + 1) * plane];
                Raster::from_fn(vw, vh, |x, y| src[(y * lg.width + x) as usize] as f64)
            })
            .collect();
        let iou_pred = raw.iou_predictions.iter().map(|&v| v as f64).collect();
        let hidden = raw
            .iou_hidden
            .chunks_exact(m.hidden_dim)
            .map(|h| h.iter().map(|&v| v as f64).collect())
            .collect();
        Ok(MultiMaskOutput::from_logits(
            logits,
            iou_pred,
            hidden,
            emb.src_width,
            emb.src_height,
        ))
    }
}
