//! Seeded morphological defects: boundary noise, false-positive blobs and
//! false-negative holes stamped onto ground-truth masks.

use std::collections::BTreeMap;

use maskforge::mask::{dilate, distance_to_foreground, erode, BinaryMask};
use maskforge::metrics::iou;
use maskforge::seed::rng_for;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Inclusive `[min, max]`, written as a two-element array.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Span {
    pub min: u32,
    pub max: u32,
}

impl Span {
    pub const ZERO: Span = Span { min: 0, max: 0 };

    pub fn new(min: u32, max: u32) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> u32 {
        rng.random_range(self.min..=self.max)
    }
}

impl From<[u32; 2]> for Span {
    fn from([min, max]: [u32; 2]) -> Self {
        Self { min, max }
    }
}

impl From<Span> for [u32; 2] {
    fn from(s: Span) -> Self {
        [s.min, s.max]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefectSpec {
    pub seed: u64,
    /// Radius of the per-segment dilation or erosion.
    pub boundary_noise: Span,
    /// Number of boundary segments perturbed independently.
    pub boundary_segments: Span,
    pub fp_blob_count: Span,
    pub fp_blob_radius: Span,
    pub fn_hole_count: Span,
    pub fn_hole_radius: Span,
    /// Chance an instance is left out of the coarse set altogether.
    pub drop_prob: f64,
    pub min_iou: f64,
    pub max_iou: f64,
    pub max_retries: u32,
}

impl Default for DefectSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            boundary_noise: Span::new(1, 4),
            boundary_segments: Span::new(3, 8),
            fp_blob_count: Span::new(0, 2),
            fp_blob_radius: Span::new(2, 5),
            fn_hole_count: Span::new(0, 2),
            fn_hole_radius: Span::new(2, 4),
            drop_prob: 0.0,
            min_iou: 0.4,
            max_iou: 0.98,
            max_retries: 64,
        }
    }
}

impl DefectSpec {
    /// Every range zero: the simulator returns its input.
    pub fn identity() -> Self {
        Self {
            boundary_noise: Span::ZERO,
            boundary_segments: Span::ZERO,
            fp_blob_count: Span::ZERO,
            fp_blob_radius: Span::ZERO,
            fn_hole_count: Span::ZERO,
            fn_hole_radius: Span::ZERO,
            ..Default::default()
        }
    }

    pub fn is_identity(&self) -> bool {
        let off = |count: Span, radius: Span| count.max == 0 || radius.max == 0;
        off(self.boundary_segments, self.boundary_noise)
            && off(self.fp_blob_count, self.fp_blob_radius)
            && off(self.fn_hole_count, self.fn_hole_radius)
    }

    pub fn validate(&self) -> Result<()> {
        let spans = [
            ("boundary_noise", self.boundary_noise),
            ("boundary_segments", self.boundary_segments),
            ("fp_blob_count", self.fp_blob_count),
            ("fp_blob_radius", self.fp_blob_radius),
            ("fn_hole_count", self.fn_hole_count),
            ("fn_hole_radius", self.fn_hole_radius),
        ];
        for (name, s) in spans {
            if s.min > s.max {
                return Err(HarnessError::Config(format!(
                    "{name}: min {} exceeds max {}",
                    s.min, s.max
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.drop_prob) {
            return Err(HarnessError::Config(format!(
                "drop_prob {} outside [0, 1]",
                self.drop_prob
            )));
        }
        if !(0.0..=1.0).contains(&self.min_iou) || !(self.min_iou..=1.0).contains(&self.max_iou) {
            return Err(HarnessError::Config(format!(
                "iou window [{}, {}] is not a sub-range of [0, 1]",
                self.min_iou, self.max_iou
            )));
        }
        if self.max_retries == 0 {
            return Err(HarnessError::Config("max_retries must be positive".into()));
        }
        Ok(())
    }

    /// Whether the instance addressed by `stream` is dropped.
    pub fn drops(&self, stream: &[u64]) -> bool {
        self.drop_prob > 0.0
            && rng_for(self.seed, &[&[0xd409], stream].concat()).random_bool(self.drop_prob)
    }
}

fn disk(w: u32, h: u32, (cx, cy): (u32, u32), r: u32) -> impl Iterator<Item = (u32, u32)> {
    let r = r as i64;
    let (cx, cy) = (cx as i64, cy as i64);
    (-r..=r)
        .flat_map(move |dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(move |(dx, dy)| dx * dx + dy * dy <= r * r)
        .map(move |(dx, dy)| (cx + dx, cy + dy))
        .filter(move |&(x, y)| x >= 0 && y >= 0 && x < w as i64 && y < h as i64)
        .map(|(x, y)| (x as u32, y as u32))
}

fn pick<T: Copy>(rng: &mut ChaCha8Rng, items: &[T]) -> Option<T> {
    (!items.is_empty()).then(|| items[rng.random_range(0..items.len())])
}

fn perturb_boundary(gt: &BinaryMask, spec: &DefectSpec, rng: &mut ChaCha8Rng) -> BinaryMask {
    let segments = spec.boundary_segments.sample(rng);
    let inner = erode(gt, 1);
    let contour: Vec<(u32, u32)> = gt.foreground().filter(|&(x, y)| !inner.get(x, y)).collect();
    if segments == 0 || contour.is_empty() || spec.boundary_noise.max == 0 {
        return gt.clone();
    }
    let anchors: Vec<((u32, u32), i64)> = (0..segments)
        .map(|_| {
            let at = pick(rng, &contour).expect("non-empty contour");
            let r = spec.boundary_noise.sample(rng) as i64;
            (at, if rng.random_bool(0.5) { r } else { -r })
        })
        .collect();
    let mut morphed: BTreeMap<i64, BinaryMask> = BTreeMap::new();
    for &(_, r) in &anchors {
        morphed.entry(r).or_insert_with(|| match r {
            0 => gt.clone(),
            r if r > 0 => dilate(gt, r as u32),
            r => erode(gt, r.unsigned_abs() as u32),
        });
    }
    let (w, h) = gt.dims();
    BinaryMask::from_fn(w, h, |x, y| {
        // nearest anchor owns the pixel; ties go to the first anchor
        let (_, r) = anchors
            .iter()
            .min_by_key(|((ax, ay), _)| {
                (*ax as i64 - x as i64).pow(2) + (*ay as i64 - y as i64).pow(2)
            })
            .expect("non-empty anchors");
        morphed[r].get(x, y)
    })
}

fn stamp_blobs(
    gt: &BinaryMask,
    out: &mut BinaryMask,
    spec: &DefectSpec,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let count = spec.fp_blob_count.sample(rng);
    if count == 0 || spec.fp_blob_radius.max == 0 {
        return Ok(());
    }
    let dist = distance_to_foreground(gt)?;
    let background: Vec<(u32, u32)> = gt.complement().foreground().collect();
    let (w, h) = gt.dims();
    for _ in 0..count {
        let r = spec.fp_blob_radius.sample(rng);
        // detached but nearby
        let near: Vec<(u32, u32)> = background
            .iter()
            .copied()
            .filter(|&(x, y)| {
                let d = dist.get(x, y);
                d > r as f64 && d <= 3.0 * r as f64 + 2.0
            })
            .collect();
        let Some(c) = pick(rng, &near).or_else(|| pick(rng, &background)) else {
            return Ok(());
        };
        for (x, y) in disk(w, h, c, r) {
            out.set(x, y, true);
        }
    }
    Ok(())
}

fn punch_holes(gt: &BinaryMask, out: &mut BinaryMask, spec: &DefectSpec, rng: &mut ChaCha8Rng) {
    let count = spec.fn_hole_count.sample(rng);
    if count == 0 || spec.fn_hole_radius.max == 0 {
        return;
    }
    let inside: Vec<(u32, u32)> = gt.foreground().collect();
    let (w, h) = gt.dims();
    for _ in 0..count {
        let r = spec.fn_hole_radius.sample(rng);
        let Some(c) = pick(rng, &inside) else {
            return;
        };
        for (x, y) in disk(w, h, c, r) {
            out.set(x, y, false);
        }
    }
}

fn attempt(gt: &BinaryMask, spec: &DefectSpec, rng: &mut ChaCha8Rng) -> Result<BinaryMask> {
    let mut out = perturb_boundary(gt, spec, rng);
    stamp_blobs(gt, &mut out, spec, rng)?;
    punch_holes(gt, &mut out, spec, rng);
    Ok(out)
}

/// Defected copy of `gt` whose IoU against it lies in the spec's window.
/// `stream` separates the random streams of different instances.
pub fn simulate_defects_for(
    gt: &BinaryMask,
    spec: &DefectSpec,
    stream: &[u64],
) -> Result<BinaryMask> {
    spec.validate()?;
    if gt.is_empty() {
        return Err(HarnessError::Simulation(
            "ground-truth mask is empty".into(),
        ));
    }
    if spec.is_identity() {
        return Ok(gt.clone());
    }
    for k in 0..spec.max_retries {
        let mut rng = rng_for(spec.seed, &[&[0xdefec7], stream, &[k as u64]].concat());
        let out = attempt(gt, spec, &mut rng)?;
        if out.is_empty() {
            continue;
        }
        let v = iou(&out, gt)?;
        if (spec.min_iou..=spec.max_iou).contains(&v) {
            return Ok(out);
        }
    }
    Err(HarnessError::Simulation(format!(
        "no sample within IoU [{}, {}] after {} attempts",
        spec.min_iou, spec.max_iou, spec.max_retries
    )))
}

pub fn simulate_defects(gt: &BinaryMask, spec: &DefectSpec) -> Result<BinaryMask> {
    simulate_defects_for(gt, spec, &[])
}
