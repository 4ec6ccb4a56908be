use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::SoftMask;
use crate::error::{Error, Result};
use crate::mask::{BBox, BinaryMask, Point, RleMask};

/// Which prompt kinds are handed to the segmenter.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct PromptKinds {
    pub point: bool,
    pub bbox: bool,
    pub mask: bool,
}

impl PromptKinds {
    pub const NONE: Self = Self {
        point: false,
        bbox: false,
        mask: false,
    };
    pub const POINT: Self = Self {
        point: true,
        bbox: false,
        mask: false,
    };
    pub const BOX: Self = Self {
        point: false,
        bbox: true,
        mask: false,
    };
    pub const MASK: Self = Self {
        point: false,
        bbox: false,
        mask: true,
    };
    pub const ALL: Self = Self {
        point: true,
        bbox: true,
        mask: true,
    };

    /// The three single-prompt modes.
    pub const SINGLES: [Self; 3] = [Self::POINT, Self::BOX, Self::MASK];

    pub fn is_empty(&self) -> bool {
        !(self.point || self.bbox || self.mask)
    }

    fn names(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        if self.point {
            out.push("point");
        }
        if self.bbox {
            out.push("box");
        }
        if self.mask {
            out.push("mask");
        }
        out
    }
}

impl fmt::Display for PromptKinds {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self == Self::ALL {
            return f.write_str("all");
        }
        if self.is_empty() {
            return f.write_str("none");
        }
        f.write_str(&self.names().join("+"))
    }
}

impl FromStr for PromptKinds {
    type Err = Error;

    /// Accepts `all`, `none`, or names joined by `+` or `,`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        match s {
            "all" => return Ok(Self::ALL),
            "none" | "" => return Ok(Self::NONE),
            _ => {}
        }
        let mut kinds = Self::NONE;
        for part in s.split(['+', ',']) {
            match part.trim() {
                "point" | "points" => kinds.point = true,
                "box" => kinds.bbox = true,
                "mask" => kinds.mask = true,
                other => return Err(Error::Config(format!("unknown prompt kind `{other}`"))),
            }
        }
        Ok(kinds)
    }
}

impl Serialize for PromptKinds {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.names().serialize(s)
    }
}

impl<'de> Deserialize<'de> for PromptKinds {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            List(Vec<String>),
            Text(String),
        }
        let text = match Repr::deserialize(d)? {
            Repr::List(v) if v.is_empty() => "none".to_string(),
            Repr::List(v) => v.join("+"),
            Repr::Text(t) => t,
        };
        text.parse().map_err(serde::de::Error::custom)
    }
}

/// Prompts mined for one target.
#[derive(Clone, Debug, PartialEq)]
pub struct PromptSet {
    pub positive: Point,
    pub negative: Option<Point>,
    pub bbox: BBox,
    pub soft_mask: Option<SoftMask>,
    pub enabled: PromptKinds,
}

impl PromptSet {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&PromptSetWire::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let wire: PromptSetWire = serde_json::from_str(text)?;
        wire.try_into()
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(PromptSetWire::from(self)).expect("prompt set serializes")
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        let wire: PromptSetWire = serde_json::from_value(value)?;
        wire.try_into()
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptSetWire {
    positive: Point,
    negative: Option<Point>,
    #[serde(rename = "box")]
    bbox: BBox,
    soft_mask: Option<SoftMaskWire>,
    enabled: PromptKinds,
}

/// Soft masks travel as their support plus the Gaussian parameters; values
/// are recomputed on load.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SoftMaskWire {
    support: RleMask,
    center: [u32; 2],
    omega: f64,
    gamma: f64,
    area: u64,
    src_size: [u32; 2],
}

impl From<&PromptSet> for PromptSetWire {
    fn from(p: &PromptSet) -> Self {
        Self {
            positive: p.positive,
            negative: p.negative,
            bbox: p.bbox,
            soft_mask: p.soft_mask.as_ref().map(|m| SoftMaskWire {
                support: RleMask::encode(&m.support()),
                center: [m.center.0, m.center.1],
                omega: m.omega,
                gamma: m.gamma,
                area: m.area,
                src_size: [m.src_height, m.src_width],
            }),
            enabled: p.enabled,
        }
    }
}

impl TryFrom<PromptSetWire> for PromptSet {
    type Error = Error;

    fn try_from(w: PromptSetWire) -> Result<Self> {
        let soft_mask = match w.soft_mask {
            None => None,
            Some(s) => {
                let support: BinaryMask = s.support.decode()?;
                let [src_h, src_w] = s.src_size;
                if src_w == 0 || src_h == 0 {
                    return Err(Error::Format("soft mask source size is zero".into()));
                }
                let (gw, gh) = support.dims();
                let mut m = SoftMask {
                    width: gw,
                    height: gh,
                    data: Vec::with_capacity(support.len()),
                    center: (s.center[0], s.center[1]),
                    omega: s.omega,
                    gamma: s.gamma,
                    area: s.area,
                    src_width: src_w,
                    src_height: src_h,
                };
                for y in 0..gh {
                    for x in 0..gw {
                        let v = if support.get(x, y) {
                            let sx = (x as u64 * src_w as u64 / gw as u64) as u32;
                            let sy = (y as u64 * src_h as u64 / gh as u64) as u32;
                            m.gaussian_at(sx, sy)
                        } else {
                            0.0
                        };
                        m.data.push(v);
                    }
                }
                Some(m)
            }
        };
        Ok(PromptSet {
            positive: w.positive,
            negative: w.negative,
            bbox: w.bbox,
            soft_mask,
            enabled: w.enabled,
        })
    }
}
