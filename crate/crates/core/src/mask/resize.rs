//! Resampling of real-valued rasters.
//!
//! Bilinear sampling uses half-pixel centers (`align_corners = false`):
//! destination pixel `d` reads source coordinate `(d + 0.5) * src / dst - 0.5`,
//! clamped to the valid range. Nearest sampling reads source index
//! `floor(d * src / dst)`.

use serde::{Deserialize, Serialize};

use super::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeMode {
    Bilinear,
    Nearest,
}

/// Row-major single-channel real raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
}

impl Raster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width as usize * height as usize],
        }
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Pixels strictly above `threshold`.
    pub fn threshold_gt(&self, threshold: f64) -> BinaryMask {
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| v > threshold).collect(),
        )
        .expect("same dims")
    }

    /// Pixels at or above `threshold`.
    pub fn threshold_ge(&self, threshold: f64) -> BinaryMask {
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| v >= threshold).collect(),
        )
        .expect("same dims")
    }
}

#[inline]
fn nearest_index(d: u32, src: u32, dst: u32) -> u32 {
    ((d as u64 * src as u64) / dst as u64).min(src as u64 - 1) as u32
}

/// Linear sample positions for every destination index: (lo, hi, weight of hi).
fn linear_taps(src: u32, dst: u32) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|d| {
            let s = ((d as f64 + 0.5) * scale - 0.5).max(0.0);
            let lo = (s.floor() as usize).min(src as usize - 1);
            let hi = (lo + 1).min(src as usize - 1);
            let t = if hi == lo { 0.0 } else { s - lo as f64 };
            (lo, hi, t)
        })
        .collect()
}

pub fn resize(map: &Raster, out_w: u32, out_h: u32, mode: ResizeMode) -> Raster {
    assert!(out_w > 0 && out_h > 0, "resize target must be positive");
    assert!(
        map.width > 0 && map.height > 0,
        "resize source must be positive"
    );
    if (map.width, map.height) == (out_w, out_h) {
        return map.clone();
    }
    match mode {
        ResizeMode::Nearest => Raster::from_fn(out_w, out_h, |x, y| {
            map.get(
                nearest_index(x, map.width, out_w),
                nearest_index(y, map.height, out_h),
            )
        }),
        ResizeMode::Bilinear => {
            let xs = linear_taps(map.width, out_w);
            let ys = linear_taps(map.height, out_h);
            let w = map.width as usize;
            Raster::from_fn(out_w, out_h, |x, y| {
                let (x0, x1, tx) = xs[x as usize];
                let (y0, y1, ty) = ys[y as usize];
                let at = |xx: usize, yy: usize| map.data[yy * w + xx];
                let top = at(x0, y0) * (1.0 - tx) + at(x1, y0) * tx;
                let bottom = at(x0, y1) * (1.0 - tx) + at(x1, y1) * tx;
                top * (1.0 - ty) + bottom * ty
            })
        }
    }
}

/// Nearest-neighbour resampling of a binary mask.
pub fn resize_mask_nearest(mask: &BinaryMask, out_w: u32, out_h: u32) -> BinaryMask {
    if mask.dims() == (out_w, out_h) {
        return mask.clone();
    }
    BinaryMask::from_fn(out_w, out_h, |x, y| {
        mask.get(
            nearest_index(x, mask.width(), out_w),
            nearest_index(y, mask.height(), out_h),
        )
    })
}
