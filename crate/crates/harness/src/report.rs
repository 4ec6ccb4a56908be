use std::collections::BTreeMap;
use std::path::Path;

use maskforge::mask::{BinaryMask, LabelMask};
use maskforge::metrics::{
    boundary_iou, default_boundary_width, iou, top1_accuracy, EvalReport, InstanceRow,
    MiouAccumulator, Top1Record,
};
use serde::{Deserialize, Serialize};

use crate::dataset::Mode;
use crate::error::{HarnessError, Result};

pub const REFINE_REPORT_VERSION: u32 = 1;

/// What happened to one refinement target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetRecord {
    pub image: String,
    pub target: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chosen_index: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
    pub passthrough: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefineReport {
    pub schema_version: u32,
    pub mode: Mode,
    pub backend: String,
    pub selector: String,
    pub iterations: u32,
    pub seed: u64,
    pub targets: Vec<TargetRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalReport>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    std::fs::write(path, text + "\n").map_err(|e| HarnessError::io(path, e))
}

/// Per-instance IoU rows; instances missing from `pred` count as empty.
pub fn instance_rows(
    image: &str,
    pred: &[(String, BinaryMask)],
    gt: &[(String, BinaryMask)],
    coarse: Option<&[(String, BinaryMask)]>,
) -> Result<Vec<InstanceRow>> {
    let find = |set: &[(String, BinaryMask)], id: &str| {
        set.iter().find(|(k, _)| k == id).map(|(_, m)| m.clone())
    };
    gt.iter()
        .map(|(id, g)| {
            let d = default_boundary_width(g.width(), g.height());
            let p = find(pred, id).unwrap_or_else(|| BinaryMask::new(g.width(), g.height()));
            let c = coarse
                .map(|c| find(c, id).unwrap_or_else(|| BinaryMask::new(g.width(), g.height())));
            Ok(InstanceRow {
                image: image.to_string(),
                instance: id.clone(),
                iou: iou(&p, g)?,
                boundary_iou: boundary_iou(&p, g, d)?,
                coarse_iou: c.as_ref().map(|c| iou(c, g)).transpose()?,
                coarse_boundary_iou: c.as_ref().map(|c| boundary_iou(c, g, d)).transpose()?,
            })
        })
        .collect()
}

/// Per-class rows over the classes present in the ground truth.
pub fn class_rows(
    image: &str,
    pred: &LabelMask,
    gt: &LabelMask,
    coarse: Option<&LabelMask>,
) -> Result<Vec<InstanceRow>> {
    let (w, h) = gt.dims();
    let d = default_boundary_width(w, h);
    gt.labels()
        .into_iter()
        .map(|class| {
            let g = gt.mask_of(class);
            let p = pred.mask_of(class);
            let c = coarse.map(|c| c.mask_of(class));
            Ok(InstanceRow {
                image: image.to_string(),
                instance: class.to_string(),
                iou: iou(&p, &g)?,
                boundary_iou: boundary_iou(&p, &g, d)?,
                coarse_iou: c.as_ref().map(|c| iou(c, &g)).transpose()?,
                coarse_boundary_iou: c.as_ref().map(|c| boundary_iou(c, &g, d)).transpose()?,
            })
        })
        .collect()
}

/// Pooled mIoU of `(pred, gt)` pairs over every class seen in either.
pub fn pooled_miou(
    pairs: &[(&LabelMask, &LabelMask)],
) -> Result<Option<maskforge::metrics::MiouSummary>> {
    let classes = pairs
        .iter()
        .map(|(p, g)| p.max_label().max(g.max_label()))
        .max()
        .map(|m| m + 1);
    let Some(classes) = classes else {
        return Ok(None);
    };
    let mut acc = MiouAccumulator::new(classes);
    for (p, g) in pairs {
        acc.add(p, g)?;
    }
    Ok(Some(acc.summary()))
}

pub fn top1(records: &[Top1Record]) -> Result<BTreeMap<String, f64>> {
    if records.is_empty() {
        return Ok(BTreeMap::new());
    }
    Ok(top1_accuracy(records)?)
}
