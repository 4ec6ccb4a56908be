use crate::error::{Error, Result};

/// Spatial feature grid from a backend's image encoder.
///
/// Stored row-major with channels innermost. Cells `[0, valid_w) x [0, valid_h)`
/// cover the source image; anything beyond is encoder padding.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageEmbedding {
    pub width: u32,
    pub height: u32,
    pub channels: u32,
    pub data: Vec<f32>,
    pub src_width: u32,
    pub src_height: u32,
    pub valid_width: u32,
    pub valid_height: u32,
}

impl ImageEmbedding {
    pub fn new(
        width: u32,
        height: u32,
        channels: u32,
        data: Vec<f32>,
        src_width: u32,
        src_height: u32,
    ) -> Result<Self> {
        if data.len() != (width * height * channels) as usize {
            return Err(Error::DimMismatch(format!(
                "{} values for a {}x{}x{} embedding",
                data.len(),
                width,
                height,
                channels
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("embedding contains non-finite values".into()));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
            src_width,
            src_height,
            valid_width: width,
            valid_height: height,
        })
    }

    pub fn from_fn(
        width: u32,
        height: u32,
        channels: u32,
        src_width: u32,
        src_height: u32,
        mut f: impl FnMut(u32, u32) -> Vec<f32>,
    ) -> Self {
        let mut data = Vec::with_capacity((width * height * channels) as usize);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                assert_eq!(v.len(), channels as usize, "feature length");
                data.extend(v);
            }
        }
        Self::new(width, height, channels, data, src_width, src_height)
            .expect("generated embedding is well-formed")
    }

    pub fn with_valid_region(mut self, valid_width: u32, valid_height: u32) -> Result<Self> {
        if valid_width == 0
            || valid_height == 0
            || valid_width > self.width
            || valid_height > self.height
        {
            return Err(Error::DimMismatch(format!(
                "valid region {valid_width}x{valid_height} outside {}x{} grid",
                self.width, self.height
            )));
        }
        self.valid_width = valid_width;
        self.valid_height = valid_height;
        Ok(self)
    }

    #[inline]
    pub fn cell(&self, x: u32, y: u32) -> &[f32] {
        let c = self.channels as usize;
        let start = (y as usize * self.width as usize + x as usize) * c;
        &self.data[start..start + c]
    }

    /// Grid cell containing source pixel `(x, y)`.
    pub fn cell_of_pixel(&self, x: u32, y: u32) -> (u32, u32) {
        let cx = (x as u64 * self.valid_width as u64 / self.src_width as u64) as u32;
        let cy = (y as u64 * self.valid_height as u64 / self.src_height as u64) as u32;
        (cx.min(self.valid_width - 1), cy.min(self.valid_height - 1))
    }
}
