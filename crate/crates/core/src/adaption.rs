//! Low-rank adaptation of the quality head, trained with a pairwise margin
//! ranking loss against IoU with the coarse mask.
//!
//! The adapted score of candidate `i` is `base_i + scale * b . (A h_i)` where
//! `h_i` is the head's penultimate activation. `A` is `rank x d_h`, `b` has
//! `rank` entries; `b` starts at zero so an untrained adaptor is a no-op.

use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::excavation::{excavate, ExcavationConfig, ImageEmbedding, PromptKinds};
use crate::exec::try_ordered_map;
use crate::mask::BinaryMask;
use crate::metrics::{argmax, iou_unchecked};
use crate::seed::rng_for;
use crate::segmenter::PromptedSegmenter;

pub const ADAPTOR_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoraAdaptor {
    pub version: u32,
    pub d_h: usize,
    pub rank: usize,
    pub scale: f64,
    /// `rank x d_h`, row-major.
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl LoraAdaptor {
    /// Zero delta: `A = 0`, `b = 0`.
    pub fn zeros(d_h: usize, rank: usize, scale: f64) -> Result<Self> {
        let ad = Self {
            version: ADAPTOR_VERSION,
            d_h,
            rank,
            scale,
            a: vec![0.0; rank * d_h],
            b: vec![0.0; rank],
        };
        ad.validate()?;
        Ok(ad)
    }

    /// Gaussian `A` with the given std, zero `b`.
    pub fn init(d_h: usize, rank: usize, scale: f64, std: f64, seed: u64) -> Result<Self> {
        let mut ad = Self::zeros(d_h, rank, scale)?;
        let normal =
            Normal::new(0.0, std).map_err(|e| Error::Config(format!("init std {std}: {e}")))?;
        let mut rng = rng_for(seed, &[0xada9]);
        ad.a.iter_mut().for_each(|v| *v = normal.sample(&mut rng));
        Ok(ad)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != ADAPTOR_VERSION {
            return Err(Error::VersionMismatch {
                found: self.version.to_string(),
                expected: ADAPTOR_VERSION,
            });
        }
        if self.rank == 0 || self.d_h == 0 || self.rank > self.d_h {
            return Err(Error::Config(format!(
                "adaptor rank {} must be in 1..={}",
                self.rank, self.d_h
            )));
        }
        if self.a.len() != self.rank * self.d_h || self.b.len() != self.rank {
            return Err(Error::DimMismatch(
                "adaptor matrices do not match d_h and rank".into(),
            ));
        }
        if !self.scale.is_finite() || self.a.iter().chain(&self.b).any(|v| !v.is_finite()) {
            return Err(Error::Config("adaptor weights must be finite".into()));
        }
        Ok(())
    }

    fn project(&self, h: &[f64]) -> Vec<f64> {
        self.a
            .chunks_exact(self.d_h)
            .map(|row| dot(row, h))
            .collect()
    }

    /// `scale * b . (A h)`.
    pub fn delta(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.d_h {
            return Err(Error::DimMismatch(format!(
                "hidden vector of length {} for adaptor with d_h {}",
                h.len(),
                self.d_h
            )));
        }
        Ok(self.scale * dot(&self.b, &self.project(h)))
    }

    pub fn adapted_scores(&self, hidden: &[Vec<f64>], base: &[f64]) -> Result<Vec<f64>> {
        if hidden.len() != base.len() {
            return Err(Error::DimMismatch(format!(
                "{} hidden vectors for {} scores",
                hidden.len(),
                base.len()
            )));
        }
        hidden
            .iter()
            .zip(base)
            .map(|(h, &s)| Ok(s + self.delta(h)?))
            .collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        let ad: Self = serde_json::from_str(&text)?;
        ad.validate()?;
        Ok(ad)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `sum_{i != j} max(0, x_i - x_j + m)`.
pub fn ranking_loss(scores: &[f64], j: usize, margin: f64) -> f64 {
    let xj = scores[j];
    scores
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != j)
        .map(|(_, &xi)| (xi - xj + margin).max(0.0))
        .sum()
}

/// Subgradient of [`ranking_loss`]; a hinge sitting exactly at its kink
/// contributes nothing.
pub fn ranking_loss_grad(scores: &[f64], j: usize, margin: f64) -> Vec<f64> {
    let xj = scores[j];
    let mut g = vec![0.0; scores.len()];
    for (i, &xi) in scores.iter().enumerate() {
        if i != j && xi - xj + margin > 0.0 {
            g[i] = 1.0;
            g[j] -= 1.0;
        }
    }
    g
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSample {
    pub hidden: Vec<Vec<f64>>,
    pub base_scores: Vec<f64>,
    /// Candidate with the highest IoU against the coarse mask.
    pub best_index: usize,
}

impl TrainSample {
    pub fn validate(&self, d_h: usize) -> Result<()> {
        let k = self.base_scores.len();
        if k == 0 || self.hidden.len() != k || self.best_index >= k {
            return Err(Error::DimMismatch(format!(
                "sample with {k} scores, {} hidden vectors, best index {}",
                self.hidden.len(),
                self.best_index
            )));
        }
        if self.hidden.iter().any(|h| h.len() != d_h) {
            return Err(Error::DimMismatch(format!(
                "hidden vectors must have length {d_h}"
            )));
        }
        Ok(())
    }
}

/// Where the learning-rate drops happen.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropSchedule {
    /// At the configured optimizer steps.
    #[default]
    Fixed,
    /// Configured steps rescaled by `total_steps / reference_steps`.
    Proportional,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub lr_drop_steps: Vec<usize>,
    pub lr_drop_factor: f64,
    pub drop_schedule: DropSchedule,
    /// Run length the drop steps were chosen for.
    pub reference_steps: usize,
    pub margin: f64,
    pub rank: usize,
    pub scale: f64,
    pub init_std: f64,
    pub seed: u64,
    /// Prompt modes used to build training samples.
    pub modes: Vec<PromptKinds>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            batch: 5,
            epochs: 1,
            lr_drop_steps: vec![60, 100],
            lr_drop_factor: 0.1,
            drop_schedule: DropSchedule::Fixed,
            // 585 instances in batches of 5
            reference_steps: 117,
            margin: 0.02,
            rank: 4,
            scale: 1.0,
            init_std: 0.01,
            seed: 0,
            modes: PromptKinds::SINGLES.to_vec(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::Config(format!("lr {} must be positive", self.lr)));
        }
        if !(self.margin >= 0.0) {
            return Err(Error::Config(format!(
                "margin {} must be non-negative",
                self.margin
            )));
        }
        if self.batch == 0 || self.rank == 0 || self.reference_steps == 0 {
            return Err(Error::Config(
                "batch, rank and reference_steps must be positive".into(),
            ));
        }
        if !(self.lr_drop_factor > 0.0) || !(self.init_std >= 0.0) || !self.scale.is_finite() {
            return Err(Error::Config(
                "lr_drop_factor, init_std and scale out of range".into(),
            ));
        }
        if self.modes.iter().any(|m| m.is_empty()) {
            return Err(Error::Config(
                "training modes must enable at least one prompt".into(),
            ));
        }
        Ok(())
    }

    /// Learning rate for optimizer step `step` (0-based) out of `total`.
    pub fn lr_at(&self, step: usize, total: usize) -> f64 {
        let drops = self
            .lr_drop_steps
            .iter()
            .filter(|&&s| {
                let at = match self.drop_schedule {
                    DropSchedule::Fixed => s,
                    DropSchedule::Proportional => (s * total).div_ceil(self.reference_steps),
                };
                step >= at
            })
            .count();
        self.lr * self.lr_drop_factor.powi(drops as i32)
    }
}

/// Per-step record kept for diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub steps: usize,
    pub losses: Vec<f64>,
}

/// Mini-batch SGD on `(A, b)` with the base head frozen.
pub fn train(samples: &[TrainSample], cfg: &TrainConfig) -> Result<(LoraAdaptor, TrainLog)> {
    cfg.validate()?;
    let Some(first) = samples.first() else {
        return Err(Error::Config("no training samples".into()));
    };
    let d_h = first.hidden.first().map_or(0, Vec::len);
    for s in samples {
        s.validate(d_h)?;
    }
    let mut ad = LoraAdaptor::init(d_h, cfg.rank, cfg.scale, cfg.init_std, cfg.seed)?;
    let per_epoch = samples.len().div_ceil(cfg.batch);
    let total = per_epoch * cfg.epochs;
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(total);
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(cfg.seed, &[0x5bff, epoch as u64]));
        for batch in order.chunks(cfg.batch) {
            let mut grad_a = vec![0.0; ad.a.len()];
            let mut grad_b = vec![0.0; ad.b.len()];
            let mut loss = 0.0;
            for &idx in batch {
                let s = &samples[idx];
                let proj: Vec<Vec<f64>> = s.hidden.iter().map(|h| ad.project(h)).collect();
                let scores: Vec<f64> = s
                    .base_scores
                    .iter()
                    .zip(&proj)
                    .map(|(base, p)| base + ad.scale * dot(&ad.b, p))
                    .collect();
                loss += ranking_loss(&scores, s.best_index, cfg.margin);
                let g = ranking_loss_grad(&scores, s.best_index, cfg.margin);
                for ((gi, h), p) in g.iter().zip(&s.hidden).zip(&proj) {
                    if *gi == 0.0 {
                        continue;
                    }
                    let c = ad.scale * gi;
                    for r in 0..ad.rank {
                        grad_b[r] += c * p[r];
                        let row = &mut grad_a[r * d_h..(r + 1) * d_h];
                        let cb = c * ad.b[r];
                        row.iter_mut().zip(h).for_each(|(ga, hv)| *ga += cb * hv);
                    }
                }
            }
            let n = batch.len() as f64;
            let lr = cfg.lr_at(step, total);
            ad.a.iter_mut()
                .zip(&grad_a)
                .for_each(|(w, g)| *w -= lr * g / n);
            ad.b.iter_mut()
                .zip(&grad_b)
                .for_each(|(w, g)| *w -= lr * g / n);
            losses.push(loss / n);
            step += 1;
        }
    }
    ad.validate()?;
    Ok((
        ad,
        TrainLog {
            steps: step,
            losses,
        },
    ))
}

/// Coarse masks of one image, sharing its embedding.
pub struct TrainImage<'a> {
    pub embedding: &'a ImageEmbedding,
    pub coarse: &'a [BinaryMask],
}

/// One sample per (instance, prompt mode); empty coarse masks and samples
/// whose candidates tie on coarse IoU are skipped.
pub fn build_training_set(
    images: &[TrainImage<'_>],
    backend: &dyn PromptedSegmenter,
    excavation: &ExcavationConfig,
    modes: &[PromptKinds],
    jobs: usize,
) -> Result<Vec<TrainSample>> {
    let work: Vec<(usize, usize, PromptKinds)> = images
        .iter()
        .enumerate()
        .flat_map(|(i, img)| {
            img.coarse
                .iter()
                .enumerate()
                .filter(|(_, m)| !m.is_empty())
                .flat_map(move |(k, _)| modes.iter().map(move |&mode| (i, k, mode)))
        })
        .collect();
    let out = try_ordered_map(&work, jobs, |&(i, k, mode)| {
        let img = &images[i];
        let coarse = &img.coarse[k];
        let prompts = excavate(
            coarse,
            img.embedding,
            excavation,
            mode,
            backend.prompt_grid(img.embedding),
        )?;
        let pred = backend.predict(img.embedding, &prompts)?;
        let ious: Vec<f64> = pred
            .masks
            .iter()
            .map(|m| iou_unchecked(m, coarse))
            .collect();
        if ious.windows(2).all(|w| w[0] == w[1]) {
            return Ok(None);
        }
        Ok(Some(TrainSample {
            best_index: argmax(&ious).expect("non-empty"),
            hidden: pred.hidden,
            base_scores: pred.iou_pred,
        }))
    })?;
    Ok(out.into_iter().flatten().collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_evaluated_losses() {
        assert_eq!(ranking_loss(&[0.9, 0.5, 0.4], 0, 0.02), 0.0);
        assert!((ranking_loss(&[0.5, 0.9, 0.4], 0, 0.02) - 0.42).abs() < 1e-15);
        assert!((ranking_loss(&[0.3, 0.3, 0.3], 2, 0.02) - 0.04).abs() < 1e-15);
    }

    #[test]
    fn grad_hand_cases() {
        assert_eq!(ranking_loss_grad(&[0.9, 0.5, 0.4], 0, 0.02), vec![0.0; 3]);
        assert_eq!(
            ranking_loss_grad(&[0.5, 0.9, 0.4], 0, 0.02),
            vec![-1.0, 1.0, 0.0]
        );
    }

    #[test]
    fn zero_adaptor_is_identity() {
        let ad = LoraAdaptor::zeros(4, 2, 1.0).unwrap();
        let hidden = vec![vec![1.0, 2.0, 3.0, 4.0]; 3];
        assert_eq!(
            ad.adapted_scores(&hidden, &[0.1, 0.2, 0.3]).unwrap(),
            vec![0.1, 0.2, 0.3]
        );
    }

    #[test]
    fn rank_above_dim_rejected() {
        assert!(LoraAdaptor::zeros(3, 4, 1.0).is_err());
    }

    #[test]
    fn dim_mismatch_reported() {
        let ad = LoraAdaptor::zeros(4, 2, 1.0).unwrap();
        assert!(ad.adapted_scores(&[vec![0.0; 3]], &[0.0]).is_err());
        assert!(ad.adapted_scores(&[vec![0.0; 4]], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn fixed_and_proportional_drops() {
        let cfg = TrainConfig::default();
        assert_eq!(cfg.lr_at(59, 117), 0.01);
        assert!((cfg.lr_at(60, 117) - 0.001).abs() < 1e-15);
        assert!((cfg.lr_at(100, 117) - 0.0001).abs() < 1e-15);
        let prop = TrainConfig {
            drop_schedule: DropSchedule::Proportional,
            ..cfg
        };
        assert_eq!(prop.lr_at(119, 234), 0.01);
        assert!((prop.lr_at(120, 234) - 0.001).abs() < 1e-15);
    }

    #[test]
    fn empty_training_set_rejected() {
        assert!(train(&[], &TrainConfig::default()).is_err());
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        let ad = LoraAdaptor::init(8, 4, 1.0, 0.01, 3).unwrap();
        ad.save(&p).unwrap();
        assert_eq!(LoraAdaptor::load(&p).unwrap(), ad);
    }
}
