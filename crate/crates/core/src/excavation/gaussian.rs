use super::points::deepest_point;
use super::ExcavationConfig;
use crate::error::{Error, Result};
use crate::mask::{distance_transform, resize, BinaryMask, Raster, ResizeMode};

/// Non-negative soft prompt on the backend's prompt grid.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftMask {
    pub width: u32,
    pub height: u32,
    pub data: Vec<f64>,
    /// Peak location in source pixels.
    pub center: (u32, u32),
    pub omega: f64,
    pub gamma: f64,
    /// Coarse foreground area in source pixels.
    pub area: u64,
    pub src_width: u32,
    pub src_height: u32,
}

impl SoftMask {
    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    pub fn support(&self) -> BinaryMask {
        BinaryMask::from_vec(
            self.width,
            self.height,
            self.data.iter().map(|&v| v > 0.0).collect(),
        )
        .expect("same dims")
    }

    pub(crate) fn as_raster(&self) -> Raster {
        Raster {
            width: self.width,
            height: self.height,
            data: self.data.clone(),
        }
    }

    /// Value of the Gaussian at source pixel `(x, y)`, ignoring the support.
    pub fn gaussian_at(&self, x: u32, y: u32) -> f64 {
        gaussian_value(self.omega, self.gamma, self.area, self.center, x, y)
    }
}

fn gaussian_value(omega: f64, gamma: f64, area: u64, center: (u32, u32), x: u32, y: u32) -> f64 {
    let dx = x as f64 - center.0 as f64;
    let dy = y as f64 - center.1 as f64;
    omega * (-(dx * dx + dy * dy) / (area as f64 * gamma)).exp()
}

/// Gaussian-style mask at source resolution:
/// `omega * exp(-|p - c|^2 / (area * gamma))` on the coarse foreground, zero
/// elsewhere, with `c` the deepest foreground pixel and `area` the foreground
/// pixel count.
pub fn gaussian_field(coarse: &BinaryMask, cfg: &ExcavationConfig) -> Result<SoftMask> {
    let area = coarse.area() as u64;
    if area == 0 {
        return Err(Error::EmptyMask("gaussian_mask"));
    }
    let dt = distance_transform(coarse)?;
    let c = deepest_point(coarse, dt.data())?;
    let center = (c.x, c.y);
    let (w, h) = coarse.dims();
    let data = Raster::from_fn(w, h, |x, y| {
        if coarse.get(x, y) {
            gaussian_value(cfg.omega, cfg.gamma, area, center, x, y)
        } else {
            0.0
        }
    })
    .data;
    Ok(SoftMask {
        width: w,
        height: h,
        data,
        center,
        omega: cfg.omega,
        gamma: cfg.gamma,
        area,
        src_width: w,
        src_height: h,
    })
}

/// [`gaussian_field`] nearest-resampled to `out_w x out_h`.
pub fn gaussian_mask(
    coarse: &BinaryMask,
    cfg: &ExcavationConfig,
    out_w: u32,
    out_h: u32,
) -> Result<SoftMask> {
    let field = gaussian_field(coarse, cfg)?;
    if (out_w, out_h) == (field.width, field.height) {
        return Ok(field);
    }
    let resized = resize(&field.as_raster(), out_w, out_h, ResizeMode::Nearest);
    Ok(SoftMask {
        width: out_w,
        height: out_h,
        data: resized.data,
        ..field
    })
}
