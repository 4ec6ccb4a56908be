use serde::{Deserialize, Serialize};

use super::distance::squared_distance_to_sites;
use super::BinaryMask;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MorphOp {
    Erode,
    Dilate,
}

/// Binary morphology with a Euclidean disk of `radius` pixels, computed by
/// thresholding exact distance transforms. Radius 0 is the identity.
pub fn morphology(mask: &BinaryMask, op: MorphOp, radius: u32) -> BinaryMask {
    match op {
        MorphOp::Erode => erode(mask, radius),
        MorphOp::Dilate => dilate(mask, radius),
    }
}

/// Keeps foreground pixels whose distance to background (image border
/// included) exceeds `radius`.
pub fn erode(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 || mask.is_degenerate() {
        return mask.clone();
    }
    let dt = super::distance_transform(mask).expect("dims checked");
    let r = radius as f64;
    let data = dt.data().iter().map(|&d| d > r).collect();
    BinaryMask::from_vec(mask.width(), mask.height(), data).expect("same dims")
}

/// Adds every pixel within `radius` of the foreground.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 || mask.is_degenerate() {
        return mask.clone();
    }
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let sq = squared_distance_to_sites(w, h, |i| mask.data()[i]);
    let r2 = (radius as f64) * (radius as f64);
    let data = sq.iter().map(|&d| d <= r2).collect();
    BinaryMask::from_vec(mask.width(), mask.height(), data).expect("same dims")
}
