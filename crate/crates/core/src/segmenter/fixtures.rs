//! Golden-fixture parity between the exporter's reference outputs and tract.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::neural::{DecoderInputs, NeuralSegmenter};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct Index {
    tolerance: f64,
    fixtures: Vec<String>,
}

#[derive(Deserialize)]
struct TensorFile {
    shape: Vec<usize>,
    data: Vec<f32>,
}

#[derive(Deserialize)]
struct Stage {
    inputs: BTreeMap<String, TensorFile>,
    outputs: BTreeMap<String, TensorFile>,
}

#[derive(Deserialize)]
struct Fixture {
    name: String,
    encoder: Stage,
    decoder: Stage,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FixtureResult {
    pub name: String,
    /// Largest absolute deviation per output tensor.
    pub max_abs: BTreeMap<String, f64>,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParityReport {
    pub tolerance: f64,
    pub fixtures: Vec<FixtureResult>,
    pub passed: bool,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    if !path.is_file() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

fn take(stage: &Stage, name: &str) -> Result<Vec<f32>> {
    let t = stage
        .inputs
        .get(name)
        .ok_or_else(|| Error::Format(format!("fixture lacks input `{name}`")))?;
    if t.shape.iter().product::<usize>() != t.data.len() {
        return Err(Error::Format(format!(
            "fixture tensor `{name}` does not match its shape"
        )));
    }
    Ok(t.data.clone())
}

fn max_abs(stage: &Stage, name: &str, got: &[f32]) -> Result<f64> {
    let want = stage
        .outputs
        .get(name)
        .ok_or_else(|| Error::Format(format!("fixture lacks output `{name}`")))?;
    if want.data.len() != got.len() {
        return Err(Error::DimMismatch(format!(
            "`{name}`: fixture has {} values, backend produced {}",
            want.data.len(),
            got.len()
        )));
    }
    Ok(want
        .data
        .iter()
        .zip(got)
        .map(|(a, b)| (*a as f64 - *b as f64).abs())
        .fold(0.0, f64::max))
}

/// Replays every fixture listed in `dir/index.json` through `backend`.
pub fn parity_check(backend: &NeuralSegmenter, dir: &Path) -> Result<ParityReport> {
    let index: Index = read_json(&dir.join("index.json"))?;
    let io = &backend.manifest().io;
    let mut results = Vec::new();
    for file in &index.fixtures {
        let fx: Fixture = read_json(&dir.join(file))?;
        let mut deviations = BTreeMap::new();

        let emb = backend.embed_raw(&take(&fx.encoder, &io.image)?)?;
        deviations.insert(
            io.image_embeddings.clone(),
            max_abs(&fx.encoder, &io.image_embeddings, &emb)?,
        );

        let has = take(&fx.decoder, &io.has_mask_input)?;
        let inputs = DecoderInputs {
            embedding: take(&fx.decoder, &io.image_embeddings)?,
            point_coords: take(&fx.decoder, &io.point_coords)?,
            point_labels: take(&fx.decoder, &io.point_labels)?,
            mask_input: take(&fx.decoder, &io.mask_input)?,
            has_mask_input: *has
                .first()
                .ok_or_else(|| Error::Format("empty has_mask_input".into()))?,
        };
        let out = backend.decode_raw(&inputs)?;
        for (name, got) in [
            (&io.low_res_masks, &out.low_res_masks),
            (&io.iou_predictions, &out.iou_predictions),
            (&io.iou_hidden, &out.iou_hidden),
        ] {
            deviations.insert(name.clone(), max_abs(&fx.decoder, name, got)?);
        }
        let passed = deviations.values().all(|d| *d <= index.tolerance);
        results.push(FixtureResult {
            name: fx.name,
            max_abs: deviations,
            passed,
        });
    }
    let passed = !results.is_empty() && results.iter().all(|r| r.passed);
    Ok(ParityReport {
        tolerance: index.tolerance,
        fixtures: results,
        passed,
    })
}
