//! Context-aware elastic box: grow the tight box toward neighbouring pixels
//! whose encoder features resemble the mean feature of the coarse mask.

use super::points::positive_point;
use super::{ExcavationConfig, ImageEmbedding};
use crate::error::{Error, Result};
use crate::mask::{resize, resize_mask_nearest, BBox, BinaryMask, Raster, ResizeMode};

/// Mean encoder feature over the coarse foreground.
#[derive(Clone, Debug, PartialEq)]
pub struct QueryEmbedding {
    pub vector: Vec<f64>,
}

/// Channel-wise mean of `emb` over the cells covered by the nearest-resized
/// coarse mask. When the resize leaves no cell, the cell holding the positive
/// click is used instead.
pub fn query_embedding(emb: &ImageEmbedding, coarse: &BinaryMask) -> Result<QueryEmbedding> {
    if coarse.dims() != (emb.src_width, emb.src_height) {
        return Err(Error::DimMismatch(format!(
            "coarse mask {}x{} vs embedding source {}x{}",
            coarse.width(),
            coarse.height(),
            emb.src_width,
            emb.src_height
        )));
    }
    if coarse.is_empty() {
        return Err(Error::EmptyMask("query_embedding"));
    }
    let grid = resize_mask_nearest(coarse, emb.valid_width, emb.valid_height);
    let mut cells: Vec<(u32, u32)> = grid.foreground().collect();
    if cells.is_empty() {
        let p = positive_point(coarse)?;
        cells.push(emb.cell_of_pixel(p.x, p.y));
    }
    let mut sum = vec![0.0f64; emb.channels as usize];
    for &(x, y) in &cells {
        for (s, &v) in sum.iter_mut().zip(emb.cell(x, y)) {
            *s += v as f64;
        }
    }
    let n = cells.len() as f64;
    Ok(QueryEmbedding {
        vector: sum.into_iter().map(|s| s / n).collect(),
    })
}

/// Cosine similarity between `q` and every valid embedding cell, bilinearly
/// upsampled to source resolution and binarized at `threshold` (inclusive).
pub fn similarity_map(
    q: &QueryEmbedding,
    emb: &ImageEmbedding,
    threshold: f64,
) -> Result<BinaryMask> {
    if q.vector.len() != emb.channels as usize {
        return Err(Error::DimMismatch(format!(
            "query has {} channels, embedding {}",
            q.vector.len(),
            emb.channels
        )));
    }
    let q_norm = q.vector.iter().map(|v| v * v).sum::<f64>().sqrt();
    if q_norm == 0.0 || !q_norm.is_finite() {
        return Err(Error::DegenerateFeature);
    }
    let cosine = Raster::from_fn(emb.valid_width, emb.valid_height, |x, y| {
        let cell = emb.cell(x, y);
        let mut dot = 0.0;
        let mut norm = 0.0;
        for (&a, &b) in q.vector.iter().zip(cell) {
            dot += a * b as f64;
            norm += (b as f64) * (b as f64);
        }
        if norm == 0.0 {
            0.0
        } else {
            dot / (q_norm * norm.sqrt())
        }
    });
    let up = resize(&cosine, emb.src_width, emb.src_height, ResizeMode::Bilinear);
    Ok(up.threshold_ge(threshold))
}

/// Tight box of `coarse`, expanded by [`expand_box`] against the similarity
/// map of its query embedding.
pub fn cebox(coarse: &BinaryMask, emb: &ImageEmbedding, cfg: &ExcavationConfig) -> Result<BBox> {
    let tight = coarse.tight_box()?;
    let q = query_embedding(emb, coarse)?;
    let sim = similarity_map(&q, emb, cfg.sim_threshold)?;
    Ok(expand_box(tight, &sim, cfg))
}

#[derive(Clone, Copy, Debug)]
enum Side {
    Left,
    Right,
    Up,
    Down,
}

fn strip_width(side: u32, fraction: f64) -> u32 {
    ((side as f64 * fraction).round() as u32).max(1)
}

/// Grows `start` edge by edge. Each iteration visits left, right, up, down in
/// turn; the strip just outside the current edge (clamped to the image) is
/// tested and the edge moves out by `min(strip, max_expand_px)` when more
/// than `lambda` of its in-image pixels are similar. The box never shrinks.
pub fn expand_box(start: BBox, sim: &BinaryMask, cfg: &ExcavationConfig) -> BBox {
    let (w, h) = sim.dims();
    let mut b = start;
    for _ in 0..cfg.expand_iters {
        for side in [Side::Left, Side::Right, Side::Up, Side::Down] {
            let strip = match side {
                Side::Left => {
                    let s = strip_width(b.width(), cfg.expand_fraction).min(b.x0);
                    BBox {
                        x0: b.x0 - s,
                        x1: b.x0,
                        ..b
                    }
                }
                Side::Right => {
                    let s = strip_width(b.width(), cfg.expand_fraction).min(w - b.x1);
                    BBox {
                        x0: b.x1,
                        x1: b.x1 + s,
                        ..b
                    }
                }
                Side::Up => {
                    let s = strip_width(b.height(), cfg.expand_fraction).min(b.y0);
                    BBox {
                        y0: b.y0 - s,
                        y1: b.y0,
                        ..b
                    }
                }
                Side::Down => {
                    let s = strip_width(b.height(), cfg.expand_fraction).min(h - b.y1);
                    BBox {
                        y0: b.y1,
                        y1: b.y1 + s,
                        ..b
                    }
                }
            };
            if strip.x0 >= strip.x1 || strip.y0 >= strip.y1 {
                continue;
            }
            let ratio = sim.count_in(&strip) as f64 / strip.area() as f64;
            if ratio <= cfg.lambda {
                continue;
            }
            let step_x = strip.width().min(cfg.max_expand_px);
            let step_y = strip.height().min(cfg.max_expand_px);
            match side {
                Side::Left => b.x0 -= step_x,
                Side::Right => b.x1 += step_x,
                Side::Up => b.y0 -= step_y,
                Side::Down => b.y1 += step_y,
            }
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 4px cells; cluster A on the object cells, cluster B elsewhere.
    fn object_embedding(w: u32, h: u32, object: BBox) -> ImageEmbedding {
        ImageEmbedding::from_fn(w / 4, h / 4, 2, w, h, |x, y| {
            if object.contains(x * 4, y * 4) {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        })
    }

    #[test]
    fn constant_embedding_query() {
        let emb = ImageEmbedding::from_fn(4, 4, 3, 16, 16, |_, _| vec![0.5, -1.0, 2.0]);
        let m = BinaryMask::from_fn(16, 16, |x, y| x < 7 && y > 3);
        let q = query_embedding(&emb, &m).unwrap();
        assert_eq!(q.vector, vec![0.5, -1.0, 2.0]);
    }

    #[test]
    fn single_cell_query() {
        let emb = ImageEmbedding::from_fn(4, 4, 2, 16, 16, |x, y| vec![x as f32, y as f32]);
        // cell (2, 1) samples source pixel (8, 4)
        let mut m = BinaryMask::new(16, 16);
        m.set(8, 4, true);
        let q = query_embedding(&emb, &m).unwrap();
        assert_eq!(q.vector, vec![2.0, 1.0]);
    }

    #[test]
    fn tiny_mask_falls_back_to_click_cell() {
        let emb = ImageEmbedding::from_fn(4, 4, 2, 16, 16, |x, y| vec![x as f32, y as f32]);
        let mut m = BinaryMask::new(16, 16);
        m.set(9, 6, true);
        let q = query_embedding(&emb, &m).unwrap();
        assert_eq!(q.vector, vec![2.0, 1.0]);
    }

    #[test]
    fn self_similarity_all_ones() {
        let emb = ImageEmbedding::from_fn(4, 4, 2, 16, 16, |_, _| vec![0.3, 0.4]);
        let q = QueryEmbedding {
            vector: vec![0.3, 0.4],
        };
        assert!(similarity_map(&q, &emb, 0.5)
            .unwrap()
            .data()
            .iter()
            .all(|&v| v));
    }

    #[test]
    fn orthogonal_all_zeros() {
        let emb = ImageEmbedding::from_fn(4, 4, 2, 16, 16, |_, _| vec![1.0, 0.0]);
        let q = QueryEmbedding {
            vector: vec![0.0, 2.0],
        };
        assert!(similarity_map(&q, &emb, 0.5).unwrap().is_empty());
    }

    #[test]
    fn zero_query_is_degenerate() {
        let emb = ImageEmbedding::from_fn(4, 4, 2, 16, 16, |_, _| vec![1.0, 0.0]);
        let q = QueryEmbedding {
            vector: vec![0.0, 0.0],
        };
        assert!(matches!(
            similarity_map(&q, &emb, 0.5),
            Err(Error::DegenerateFeature)
        ));
    }

    #[test]
    fn no_signal_keeps_tight_box() {
        let sim = BinaryMask::new(64, 64);
        let start = BBox::new(10, 10, 30, 40).unwrap();
        assert_eq!(expand_box(start, &sim, &ExcavationConfig::default()), start);
    }

    #[test]
    fn clamps_to_image() {
        let sim = BinaryMask::from_fn(40, 40, |_, _| true);
        let start = BBox::new(2, 2, 38, 38).unwrap();
        let out = expand_box(start, &sim, &ExcavationConfig::default());
        assert_eq!(out, BBox::new(0, 0, 40, 40).unwrap());
    }

    #[test]
    fn truncated_object_expands_right() {
        // true object [8, 48) x [8, 24); the coarse mask lost x >= 36
        let object = BBox::new(8, 8, 48, 24).unwrap();
        let emb = object_embedding(64, 32, object);
        let coarse =
            BinaryMask::from_fn(64, 32, |x, y| (8..36).contains(&x) && (8..24).contains(&y));
        let cfg = ExcavationConfig {
            expand_iters: 5,
            ..Default::default()
        };
        let q = query_embedding(&emb, &coarse).unwrap();
        let sim = similarity_map(&q, &emb, cfg.sim_threshold).unwrap();
        // bilinear blending drops only the four object corners
        let object_mask = BinaryMask::filled_box(64, 32, object);
        assert!(sim.and_not(&object_mask).unwrap().is_empty());
        assert_eq!(sim.area(), object_mask.area() - 4);
        // hand simulation; strips are round(0.1 * side) px, only the right
        // strips ever overlap the similarity map:
        // it1 w=28 -> [36,39) x1=39; it2 w=31 -> [39,42) x1=42;
        // it3 w=34 -> [42,45) x1=45; it4 w=37 -> [45,49) 3/4 similar, x1=49;
        // it5 w=41 -> [49,53) empty, stop
        let b = cebox(&coarse, &emb, &cfg).unwrap();
        assert_eq!(b, BBox::new(8, 8, 49, 24).unwrap());
        assert!(b.contains_box(&object));
    }
}
