//! Exact Euclidean distance transforms.
//!
//! Both transforms run the separable lower-envelope-of-parabolas algorithm
//! (one pass down the columns, one along the rows). Squared distances are
//! integers and are carried exactly in `f64`, so the result is bit-identical
//! to a brute-force nearest-site search.

use super::BinaryMask;
use crate::error::{Error, Result};

/// Row-major Euclidean distances in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl DistanceMap {
    #[inline]
    pub fn width(&self) -> u32 {
        self.width
    }

    #[inline]
    pub fn height(&self) -> u32 {
        self.height
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Largest value and the first raster-order pixel attaining it among the
    /// pixels accepted by `filter`.
    pub fn argmax_where(
        &self,
        mut filter: impl FnMut(u32, u32) -> bool,
    ) -> Option<(u32, u32, f64)> {
        let w = self.width as usize;
        let mut best: Option<(u32, u32, f64)> = None;
        for (i, &v) in self.data.iter().enumerate() {
            let (x, y) = ((i % w) as u32, (i / w) as u32);
            if !filter(x, y) {
                continue;
            }
            if best.is_none_or(|(_, _, b)| v > b) {
                best = Some((x, y, v));
            }
        }
        best
    }
}

/// Distance from every foreground pixel to the nearest background pixel.
/// Pixels outside the image count as background; background maps to 0.
pub fn distance_transform(mask: &BinaryMask) -> Result<DistanceMap> {
    let (w, h) = check_dims(mask)?;
    let mut sq = squared_distance_to_sites(w, h, |i| !mask.data()[i]);
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !mask.data()[i] {
                continue;
            }
            // nearest out-of-image pixel is straight out through the closest edge
            let edge = (x + 1).min(y + 1).min(w - x).min(h - y) as f64;
            sq[i] = sq[i].min(edge * edge);
        }
    }
    Ok(into_map(mask, sq))
}

/// Distance from every pixel to the nearest foreground pixel (0 on foreground).
/// The image border is not treated as foreground; with no foreground at all
/// every value is infinite.
pub fn distance_to_foreground(mask: &BinaryMask) -> Result<DistanceMap> {
    let (w, h) = check_dims(mask)?;
    let sq = squared_distance_to_sites(w, h, |i| mask.data()[i]);
    Ok(into_map(mask, sq))
}

fn check_dims(mask: &BinaryMask) -> Result<(usize, usize)> {
    if mask.is_degenerate() {
        return Err(Error::Dimension {
            width: mask.width(),
            height: mask.height(),
        });
    }
    Ok((mask.width() as usize, mask.height() as usize))
}

fn into_map(mask: &BinaryMask, sq: Vec<f64>) -> DistanceMap {
    DistanceMap {
        width: mask.width(),
        height: mask.height(),
        data: sq.into_iter().map(f64::sqrt).collect(),
    }
}

/// Squared distance to the nearest pixel for which `is_site` holds.
pub(crate) fn squared_distance_to_sites(
    w: usize,
    h: usize,
    is_site: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let n = w.max(h);
    let mut scratch = Envelope::with_capacity(n);
    let mut f = vec![0.0; n];
    let mut out = vec![0.0; n];
    let mut grid = vec![f64::INFINITY; w * h];

    for x in 0..w {
        for y in 0..h {
            f[y] = if is_site(y * w + x) {
                0.0
            } else {
                f64::INFINITY
            };
        }
        scratch.transform(&f[..h], &mut out[..h]);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    for y in 0..h {
        let row = &mut grid[y * w..(y + 1) * w];
        f[..w].copy_from_slice(row);
        scratch.transform(&f[..w], &mut out[..w]);
        row.copy_from_slice(&out[..w]);
    }
    grid
}

/// 1D lower envelope of parabolas `(q - v)^2 + f(v)` over finite sites.
struct Envelope {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Envelope {
    fn with_capacity(n: usize) -> Self {
        Self {
            v: Vec::with_capacity(n),
            z: Vec::with_capacity(n + 1),
        }
    }

    fn transform(&mut self, f: &[f64], d: &mut [f64]) {
        self.v.clear();
        self.z.clear();
        for (q, &fq) in f.iter().enumerate() {
            if !fq.is_finite() {
                continue;
            }
            loop {
                let Some(&p) = self.v.last() else {
                    self.v.push(q);
                    self.z.push(f64::NEG_INFINITY);
                    break;
                };
                let s = ((fq + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * (q - p)) as f64;
                if s <= *self.z.last().unwrap() {
                    self.v.pop();
                    self.z.pop();
                } else {
                    self.v.push(q);
                    self.z.push(s);
                    break;
                }
            }
        }
        if self.v.is_empty() {
            d.fill(f64::INFINITY);
            return;
        }
        let mut k = 0;
        for (q, dq) in d.iter_mut().enumerate() {
            while k + 1 < self.v.len() && self.z[k + 1] < q as f64 {
                k += 1;
            }
            let p = self.v[k];
            let diff = q.abs_diff(p) as f64;
            *dq = diff * diff + f[p];
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_background_is_zero() {
        let m = BinaryMask::new(6, 4);
        let d = distance_transform(&m).unwrap();
        assert!(d.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_pixel_is_one() {
        let mut m = BinaryMask::new(5, 5);
        m.set(2, 2, true);
        let d = distance_transform(&m).unwrap();
        assert_eq!(d.get(2, 2), 1.0);
        assert_eq!(d.data().iter().filter(|&&v| v > 0.0).count(), 1);
    }

    #[test]
    fn border_counts_as_background() {
        let m = BinaryMask::from_fn(7, 3, |_, _| true);
        let d = distance_transform(&m).unwrap();
        assert_eq!(d.get(3, 1), 2.0);
        assert_eq!(d.get(0, 1), 1.0);
    }

    #[test]
    fn zero_sized_mask_errors() {
        assert!(matches!(
            distance_transform(&BinaryMask::new(0, 3)),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn distance_to_empty_foreground_is_infinite() {
        let d = distance_to_foreground(&BinaryMask::new(3, 3)).unwrap();
        assert!(d.data().iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn distance_to_foreground_diagonal() {
        let mut m = BinaryMask::new(5, 5);
        m.set(0, 0, true);
        let d = distance_to_foreground(&m).unwrap();
        assert_eq!(d.get(3, 4), 5.0);
    }
}
