//! Evaluation: IoU, boundary IoU, dataset mIoU and top-1 selection accuracy.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{erode, BinaryMask, LabelMask};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// `|a ∩ b| / |a ∪ b|`; two empty masks score 1.
pub fn iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    a.same_dims(b)?;
    Ok(iou_unchecked(a, b))
}

pub(crate) fn iou_unchecked(a: &BinaryMask, b: &BinaryMask) -> f64 {
    let mut inter = 0usize;
    let mut union = 0usize;
    for (&x, &y) in a.data().iter().zip(b.data()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Inner contour band: foreground pixels within `d` of the background.
pub fn boundary_band(mask: &BinaryMask, d: u32) -> BinaryMask {
    mask.and_not(&erode(mask, d)).expect("same dims")
}

/// 2% of the image diagonal, at least one pixel.
pub fn default_boundary_width(width: u32, height: u32) -> u32 {
    let diag = ((width as f64).powi(2) + (height as f64).powi(2)).sqrt();
    ((0.02 * diag).round() as u32).max(1)
}

/// IoU of the inner boundary bands of width `d`.
pub fn boundary_iou(a: &BinaryMask, b: &BinaryMask, d: u32) -> Result<f64> {
    a.same_dims(b)?;
    if d == 0 {
        return Err(Error::Config("boundary width must be at least 1".into()));
    }
    Ok(iou_unchecked(&boundary_band(a, d), &boundary_band(b, d)))
}

/// Dataset-level mIoU from accumulated per-class intersections and unions.
#[derive(Clone, Debug, PartialEq)]
pub struct MiouAccumulator {
    num_classes: u32,
    intersection: Vec<u64>,
    union: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiouSummary {
    /// IoU for every class present in prediction or ground truth.
    pub per_class: BTreeMap<u32, f64>,
    pub mean: f64,
}

impl MiouAccumulator {
    pub fn new(num_classes: u32) -> Self {
        Self {
            num_classes,
            intersection: vec![0; num_classes as usize],
            union: vec![0; num_classes as usize],
        }
    }

    pub fn add(&mut self, pred: &LabelMask, gt: &LabelMask) -> Result<()> {
        if pred.dims() != gt.dims() {
            return Err(Error::DimMismatch(format!(
                "prediction {:?} vs ground truth {:?}",
                pred.dims(),
                gt.dims()
            )));
        }
        let n = self.num_classes;
        if let Some(&bad) = pred.data().iter().chain(gt.data()).find(|&&l| l >= n) {
            return Err(Error::Format(format!(
                "label {bad} out of range for {n} classes"
            )));
        }
        for (&p, &g) in pred.data().iter().zip(gt.data()) {
            if p == g {
                self.intersection[p as usize] += 1;
                self.union[p as usize] += 1;
            } else {
                self.union[p as usize] += 1;
                self.union[g as usize] += 1;
            }
        }
        Ok(())
    }

    pub fn summary(&self) -> MiouSummary {
        let per_class: BTreeMap<u32, f64> = (0..self.num_classes)
            .filter(|&c| self.union[c as usize] > 0)
            .map(|c| {
                (
                    c,
                    self.intersection[c as usize] as f64 / self.union[c as usize] as f64,
                )
            })
            .collect();
        let mean = if per_class.is_empty() {
            0.0
        } else {
            per_class.values().sum::<f64>() / per_class.len() as f64
        };
        MiouSummary { per_class, mean }
    }
}

/// Per-class and mean IoU of a single prediction/ground-truth pair.
pub fn miou(pred: &LabelMask, gt: &LabelMask, num_classes: u32) -> Result<MiouSummary> {
    let mut acc = MiouAccumulator::new(num_classes);
    acc.add(pred, gt)?;
    Ok(acc.summary())
}

/// First index of the maximum; NaN never wins.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best.map(|(i, _)| i)
}

/// Candidate scores under several selectors plus each candidate's
/// ground-truth IoU.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Top1Record {
    pub scores: BTreeMap<String, Vec<f64>>,
    pub gt_ious: Vec<f64>,
}

/// Fraction of records where each selector's argmax lands on a candidate with
/// the highest ground-truth IoU.
pub fn top1_accuracy(records: &[Top1Record]) -> Result<BTreeMap<String, f64>> {
    if records.is_empty() {
        return Err(Error::Config(
            "top-1 accuracy needs at least one record".into(),
        ));
    }
    let mut hits: BTreeMap<String, (usize, usize)> = BTreeMap::new();
    for r in records {
        let best = r.gt_ious.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for (name, scores) in &r.scores {
            if scores.len() != r.gt_ious.len() {
                return Err(Error::DimMismatch(format!(
                    "selector {name}: {} scores for {} candidates",
                    scores.len(),
                    r.gt_ious.len()
                )));
            }
            let entry = hits.entry(name.clone()).or_default();
            entry.1 += 1;
            if argmax(scores).is_some_and(|i| r.gt_ious[i] == best) {
                entry.0 += 1;
            }
        }
    }
    Ok(hits
        .into_iter()
        .map(|(k, (hit, total))| (k, hit as f64 / total as f64))
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceRow {
    pub image: String,
    pub instance: String,
    pub iou: f64,
    pub boundary_iou: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coarse_boundary_iou: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_iou: f64,
    pub mean_boundary_iou: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_coarse_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub miou: Option<MiouSummary>,
    #[serde(default)]
    pub top1: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub images: usize,
    pub instances: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub rows: Vec<InstanceRow>,
    pub aggregates: Aggregates,
    pub counts: Counts,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

impl EvalReport {
    pub fn new(
        rows: Vec<InstanceRow>,
        images: usize,
        miou: Option<MiouSummary>,
        top1: BTreeMap<String, f64>,
    ) -> Self {
        let aggregates = Self::aggregate(&rows, miou, top1);
        let instances = rows.len();
        Self {
            schema_version: REPORT_SCHEMA_VERSION,
            rows,
            aggregates,
            counts: Counts { images, instances },
        }
    }

    fn aggregate(
        rows: &[InstanceRow],
        miou: Option<MiouSummary>,
        top1: BTreeMap<String, f64>,
    ) -> Aggregates {
        let coarse: Vec<f64> = rows.iter().filter_map(|r| r.coarse_iou).collect();
        Aggregates {
            mean_iou: mean(rows.iter().map(|r| r.iou)),
            mean_boundary_iou: mean(rows.iter().map(|r| r.boundary_iou)),
            mean_coarse_iou: (!coarse.is_empty()).then(|| mean(coarse.into_iter())),
            miou,
            top1,
        }
    }

    /// True when the stored aggregates equal a recomputation from the rows.
    pub fn aggregates_consistent(&self) -> bool {
        let again = Self::aggregate(
            &self.rows,
            self.aggregates.miou.clone(),
            self.aggregates.top1.clone(),
        );
        again == self.aggregates && self.counts.instances == self.rows.len()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One line per instance.
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("image,instance,iou,boundary_iou,coarse_iou,coarse_boundary_iou\n");
        let opt = |v: Option<f64>| v.map(|v| v.to_string()).unwrap_or_default();
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                csv_field(&r.image),
                csv_field(&r.instance),
                r.iou,
                r.boundary_iou,
                opt(r.coarse_iou),
                opt(r.coarse_boundary_iou)
            );
        }
        out
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
