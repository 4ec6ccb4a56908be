//! Geometric oracle standing in for a real promptable model.
//!
//! The mock resolves a prompt set to one ground-truth shape and answers with
//! `[shape, dilate(shape, 2), erode(shape, 2)]`. Predicted qualities are the
//! true IoUs against that shape, quantized to 1e-3 and perturbed by seeded
//! uniform noise so that selection logic gets exercised.

use image::RgbImage;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Capabilities, MultiMaskOutput, OracleScene, PromptedSegmenter, CANDIDATES};
use crate::error::{Error, Result};
use crate::excavation::{ImageEmbedding, PromptSet};
use crate::mask::{dilate, erode, resize_mask_nearest, BinaryMask, Raster};
use crate::metrics::{boundary_band, iou_unchecked};
use crate::seed::{derive_seed, rng_for, Fingerprint};

pub const DEFAULT_NOISE: f64 = 0.05;
pub const DEFAULT_HIDDEN_DIM: usize = 16;
const CANDIDATE_RADIUS: u32 = 2;
/// Leading hidden entries that carry mask statistics.
const STAT_FEATURES: usize = 5;

pub struct MockSegmenter {
    scene: OracleScene,
    noise: f64,
    seed: u64,
    hidden_dim: usize,
    /// Index 0 is the background direction, then one per shape.
    features: Vec<Vec<f32>>,
    token_pad: Vec<Vec<f64>>,
}

impl MockSegmenter {
    pub fn new(scene: OracleScene, noise: f64, seed: u64) -> Result<Self> {
        Self::with_hidden_dim(scene, noise, seed, DEFAULT_HIDDEN_DIM)
    }

    pub fn with_hidden_dim(
        scene: OracleScene,
        noise: f64,
        seed: u64,
        hidden_dim: usize,
    ) -> Result<Self> {
        scene.validate()?;
        if !(noise >= 0.0) {
            return Err(Error::Config(format!(
                "mock noise {noise} must be non-negative"
            )));
        }
        if hidden_dim < STAT_FEATURES + CANDIDATES {
            return Err(Error::Config(format!(
                "mock hidden_dim must be at least {}",
                STAT_FEATURES + CANDIDATES
            )));
        }
        let features = cluster_directions(&scene);
        let token_pad = (0..CANDIDATES)
            .map(|k| {
                let mut rng = rng_for(scene.seed, &[0x70ad, k as u64]);
                (STAT_FEATURES + CANDIDATES..hidden_dim)
                    .map(|_| rng.random_range(-0.5..0.5))
                    .collect()
            })
            .collect();
        Ok(Self {
            scene,
            noise,
            seed,
            hidden_dim,
            features,
            token_pad,
        })
    }

    pub fn scene(&self) -> &OracleScene {
        &self.scene
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    /// Shape targeted by `prompts`: the shape under the positive click, else
    /// the shape best matching the box, else the shape overlapping the soft
    /// mask support most. `None` when nothing matches.
    pub fn target_of(&self, prompts: &PromptSet) -> Option<usize> {
        let shapes = &self.scene.shapes;
        let e = prompts.enabled;
        if e.point {
            let p = prompts.positive;
            if p.x < self.scene.width && p.y < self.scene.height {
                if let Some(i) = shapes.iter().rposition(|s| s.mask.get(p.x, p.y)) {
                    return Some(i);
                }
            }
        }
        if e.bbox && prompts.bbox.fits(self.scene.width, self.scene.height) {
            let boxed = BinaryMask::filled_box(self.scene.width, self.scene.height, prompts.bbox);
            if let Some(i) = best_by(shapes.len(), |i| iou_unchecked(&shapes[i].mask, &boxed)) {
                return Some(i);
            }
        }
        if e.mask {
            if let Some(soft) = &prompts.soft_mask {
                let support =
                    resize_mask_nearest(&soft.support(), self.scene.width, self.scene.height);
                if let Some(i) = best_by(shapes.len(), |i| {
                    shapes[i].mask.intersection_area(&support) as f64
                }) {
                    return Some(i);
                }
            }
        }
        None
    }

    fn hidden_for(&self, k: usize, mask: &BinaryMask, prompts: &PromptSet) -> Vec<f64> {
        let (w, h) = (self.scene.width as f64, self.scene.height as f64);
        let area = mask.area() as f64;
        let mut v = vec![0.0; self.hidden_dim];
        if area > 0.0 {
            let perimeter = boundary_band(mask, 1).area() as f64;
            let (sx, sy) = mask
                .foreground()
                .fold((0.0, 0.0), |(a, b), (x, y)| (a + x as f64, b + y as f64));
            let bbox = mask.tight_box().expect("non-empty");
            v[0] = area / (w * h);
            v[1] = perimeter / area;
            v[2] = (sx / area - prompts.positive.x as f64) / w;
            v[3] = (sy / area - prompts.positive.y as f64) / h;
            v[4] = area / bbox.area() as f64;
        }
        v[STAT_FEATURES + k] = 1.0;
        v[STAT_FEATURES + CANDIDATES..].copy_from_slice(&self.token_pad[k]);
        v
    }
}

fn best_by(n: usize, score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 0..n {
        let s = score(i);
        if s > 0.0 && best.is_none_or(|(_, b)| s > b) {
            best = Some((i, s));
        }
    }
    best.map(|(i, _)| i)
}

/// Unit feature direction per cluster, orthonormalized in cluster order while
/// the feature dimension allows.
fn cluster_directions(scene: &OracleScene) -> Vec<Vec<f32>> {
    let dim = scene.feature_dim as usize;
    let keys = std::iter::once(u64::MAX).chain(scene.shapes.iter().map(|s| s.id as u64));
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for key in keys {
        let mut rng = rng_for(scene.seed, &[0xfea7, key]);
        let mut v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        if basis.len() < dim {
            for b in &basis {
                let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
                v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
            }
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= n);
        basis.push(v);
    }
    basis
        .into_iter()
        .map(|v| v.into_iter().map(|x| x as f32).collect())
        .collect()
}

fn prompt_fingerprint(p: &PromptSet) -> u64 {
    let mut f = Fingerprint::default();
    f.write_u64(p.positive.x as u64)
        .write_u64(p.positive.y as u64);
    match p.negative {
        Some(n) => f.write_u64(1).write_u64(n.x as u64).write_u64(n.y as u64),
        None => f.write_u64(0),
    };
    for v in [p.bbox.x0, p.bbox.y0, p.bbox.x1, p.bbox.y1] {
        f.write_u64(v as u64);
    }
    f.write_u64(
        p.enabled.point as u64 | (p.enabled.bbox as u64) << 1 | (p.enabled.mask as u64) << 2,
    );
    if let Some(m) = &p.soft_mask {
        f.write_u64(m.center.0 as u64)
            .write_u64(m.center.1 as u64)
            .write_u64(m.area)
            .write_f64(m.omega)
            .write_f64(m.gamma)
            .write_u64(m.width as u64)
            .write_u64(m.height as u64);
    }
    f.finish()
}

impl PromptedSegmenter for MockSegmenter {
    fn capabilities(&self) -> Capabilities {
        let c = self.scene.cell;
        Capabilities {
            candidates: CANDIDATES,
            hidden_dim: self.hidden_dim,
            embedding_grid: (
                self.scene.width.div_ceil(c),
                self.scene.height.div_ceil(c),
                self.scene.feature_dim,
            ),
        }
    }

    fn prompt_grid(&self, emb: &ImageEmbedding) -> (u32, u32) {
        (emb.src_width, emb.src_height)
    }

    fn embed(&self, image: &RgbImage) -> Result<ImageEmbedding> {
        let s = &self.scene;
        if image.dimensions() != (s.width, s.height) {
            return Err(Error::DimMismatch(format!(
                "image {:?} vs scene {}x{}",
                image.dimensions(),
                s.width,
                s.height
            )));
        }
        let (gw, gh, c) = self.capabilities().embedding_grid;
        Ok(ImageEmbedding::from_fn(
            gw,
            gh,
            c,
            s.width,
            s.height,
            |cx, cy| {
                let px = (cx * s.cell + s.cell / 2).min(s.width - 1);
                let py = (cy * s.cell + s.cell / 2).min(s.height - 1);
                let k = s
                    .shapes
                    .iter()
                    .rposition(|sh| sh.mask.get(px, py))
                    .map_or(0, |i| i + 1);
                self.features[k].clone()
            },
        ))
    }

    fn predict(&self, emb: &ImageEmbedding, prompts: &PromptSet) -> Result<MultiMaskOutput> {
        if prompts.enabled.is_empty() {
            return Err(Error::NoPrompt);
        }
        let (w, h) = (self.scene.width, self.scene.height);
        if (emb.src_width, emb.src_height) != (w, h) {
            return Err(Error::DimMismatch(
                "embedding does not belong to this scene".into(),
            ));
        }
        let target = match self.target_of(prompts) {
            Some(i) => self.scene.shapes[i].mask.clone(),
            None => BinaryMask::new(w, h),
        };
        let masks = [
            target.clone(),
            dilate(&target, CANDIDATE_RADIUS),
            erode(&target, CANDIDATE_RADIUS),
        ];
        let mut rng = rng_for(
            derive_seed(self.seed, &[self.scene.seed]),
            &[prompt_fingerprint(prompts)],
        );
        let iou_pred = masks
            .iter()
            .map(|m| {
                let exact = (iou_unchecked(m, &target) * 1000.0).round() / 1000.0;
                let jitter = if self.noise > 0.0 {
                    rng.random_range(-self.noise..=self.noise)
                } else {
                    0.0
                };
                (exact + jitter).clamp(0.0, 1.0)
            })
            .collect();
        let hidden = masks
            .iter()
            .enumerate()
            .map(|(k, m)| self.hidden_for(k, m, prompts))
            .collect();
        let logits = masks
            .iter()
            .map(|m| Raster {
                width: w,
                height: h,
                data: m
                    .data()
                    .iter()
                    .map(|&v| if v { 1.0 } else { -1.0 })
                    .collect(),
            })
            .collect();
        Ok(MultiMaskOutput {
            masks: masks.into(),
            logits,
            iou_pred,
            hidden,
        })
    }
}
