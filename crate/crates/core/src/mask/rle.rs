use serde::{Deserialize, Serialize};

use super::BinaryMask;
use crate::error::{Error, Result};

/// Uncompressed COCO-style run-length encoding: alternating run lengths over
/// the column-major pixel order, starting with a (possibly empty) background
/// run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RleMask {
    /// `[height, width]`, the COCO `size` convention.
    pub size: [u32; 2],
    pub counts: Vec<u32>,
}

impl RleMask {
    pub fn width(&self) -> u32 {
        self.size[1]
    }

    pub fn height(&self) -> u32 {
        self.size[0]
    }

    pub fn encode(mask: &BinaryMask) -> Self {
        let (w, h) = mask.dims();
        let mut counts = Vec::new();
        let mut current = false;
        let mut run = 0u32;
        for x in 0..w {
            for y in 0..h {
                let v = mask.get(x, y);
                if v != current {
                    counts.push(run);
                    run = 0;
                    current = v;
                }
                run += 1;
            }
        }
        counts.push(run);
        Self {
            size: [h, w],
            counts,
        }
    }

    pub fn decode(&self) -> Result<BinaryMask> {
        let (w, h) = (self.width(), self.height());
        let total: u64 = self.counts.iter().map(|&c| c as u64).sum();
        if total != w as u64 * h as u64 {
            return Err(Error::Format(format!(
                "rle counts sum to {total}, expected {}x{} = {}",
                w,
                h,
                w as u64 * h as u64
            )));
        }
        let mut mask = BinaryMask::new(w, h);
        let mut pos = 0u64;
        for (k, &c) in self.counts.iter().enumerate() {
            if k % 2 == 1 {
                for p in pos..pos + c as u64 {
                    let (x, y) = ((p / h as u64) as u32, (p % h as u64) as u32);
                    mask.set(x, y, true);
                }
            }
            pos += c as u64;
        }
        Ok(mask)
    }
}

impl RleMask {
    /// COCO's compact string form of `counts`: each run is stored as a
    /// delta against the run two places back, in 5-bit groups offset by 48.
    pub fn to_compressed(&self) -> String {
        let mut out = String::new();
        for (i, &c) in self.counts.iter().enumerate() {
            let mut x = c as i64;
            if i > 2 {
                x -= self.counts[i - 2] as i64;
            }
            loop {
                let mut c = (x & 0x1f) as u8;
                x >>= 5;
                let more = if c & 0x10 != 0 { x != -1 } else { x != 0 };
                if more {
                    c |= 0x20;
                }
                out.push((c + 48) as char);
                if !more {
                    break;
                }
            }
        }
        out
    }

    pub fn from_compressed(size: [u32; 2], text: &str) -> Result<Self> {
        let bytes = text.as_bytes();
        let mut counts: Vec<u32> = Vec::new();
        let mut p = 0;
        while p < bytes.len() {
            let mut x = 0i64;
            let mut k = 0;
            loop {
                let b = bytes[p];
                if !(48..48 + 64).contains(&b) || k >= 12 {
                    return Err(Error::Format(format!("bad rle character at offset {p}")));
                }
                let c = (b - 48) as i64;
                x |= (c & 0x1f) << (5 * k);
                p += 1;
                k += 1;
                if c & 0x20 == 0 {
                    if c & 0x10 != 0 {
                        x |= -1i64 << (5 * k);
                    }
                    break;
                }
                if p == bytes.len() {
                    return Err(Error::Format("truncated rle string".into()));
                }
            }
            let m = counts.len();
            if m > 2 {
                x += counts[m - 2] as i64;
            }
            let run =
                u32::try_from(x).map_err(|_| Error::Format(format!("rle run {x} out of range")))?;
            counts.push(run);
        }
        let r = Self { size, counts };
        // validates the total
        r.decode()?;
        Ok(r)
    }
}

impl From<&BinaryMask> for RleMask {
    fn from(m: &BinaryMask) -> Self {
        RleMask::encode(m)
    }
}

impl TryFrom<&RleMask> for BinaryMask {
    type Error = Error;

    fn try_from(r: &RleMask) -> Result<Self> {
        r.decode()
    }
}
