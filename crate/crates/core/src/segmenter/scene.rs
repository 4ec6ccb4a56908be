use std::collections::HashSet;
use std::path::Path;

use image::{Rgb, RgbImage};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{dilate, BinaryMask, RleMask};
use crate::seed::rng_for;

#[derive(Clone, Debug, PartialEq)]
pub struct SceneShape {
    pub id: u32,
    pub mask: BinaryMask,
}

/// Ground-truth layout the mock segmenter answers from.
#[derive(Clone, Debug, PartialEq)]
pub struct OracleScene {
    pub width: u32,
    pub height: u32,
    /// Embedding cell size in pixels.
    pub cell: u32,
    pub feature_dim: u32,
    pub seed: u64,
    /// Later shapes are drawn on top of earlier ones.
    pub shapes: Vec<SceneShape>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneWire {
    width: u32,
    height: u32,
    cell: u32,
    feature_dim: u32,
    seed: u64,
    shapes: Vec<ShapeWire>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ShapeWire {
    id: u32,
    mask: RleMask,
}

impl Serialize for OracleScene {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SceneWire {
            width: self.width,
            height: self.height,
            cell: self.cell,
            feature_dim: self.feature_dim,
            seed: self.seed,
            shapes: self
                .shapes
                .iter()
                .map(|sh| ShapeWire {
                    id: sh.id,
                    mask: RleMask::encode(&sh.mask),
                })
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for OracleScene {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let w = SceneWire::deserialize(d)?;
        let shapes = w
            .shapes
            .into_iter()
            .map(|s| {
                Ok(SceneShape {
                    id: s.id,
                    mask: s.mask.decode()?,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(serde::de::Error::custom)?;
        let scene = OracleScene {
            width: w.width,
            height: w.height,
            cell: w.cell,
            feature_dim: w.feature_dim,
            seed: w.seed,
            shapes,
        };
        scene.validate().map_err(serde::de::Error::custom)?;
        Ok(scene)
    }
}

impl OracleScene {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Dimension {
                width: self.width,
                height: self.height,
            });
        }
        if self.cell == 0 || self.feature_dim == 0 {
            return Err(Error::Config(
                "scene cell and feature_dim must be positive".into(),
            ));
        }
        let mut ids = HashSet::new();
        for s in &self.shapes {
            if !ids.insert(s.id) {
                return Err(Error::Config(format!("duplicate shape id {}", s.id)));
            }
            if s.mask.dims() != (self.width, self.height) {
                return Err(Error::DimMismatch(format!("shape {} mask size", s.id)));
            }
        }
        Ok(())
    }

    pub fn shape(&self, id: u32) -> Option<&SceneShape> {
        self.shapes.iter().find(|s| s.id == id)
    }

    /// Topmost shape covering `(x, y)`.
    pub fn shape_at(&self, x: u32, y: u32) -> Option<&SceneShape> {
        self.shapes.iter().rev().find(|s| s.mask.get(x, y))
    }

    /// Flat-colored rendering with mild seeded noise.
    pub fn render(&self) -> RgbImage {
        let mut rng = rng_for(self.seed, &[0x5ce7e]);
        let background = [
            rng.random_range(40..90u8),
            rng.random_range(40..90u8),
            rng.random_range(40..90u8),
        ];
        let colors: Vec<[u8; 3]> = self
            .shapes
            .iter()
            .map(|_| {
                [
                    rng.random_range(120..250u8),
                    rng.random_range(120..250u8),
                    rng.random_range(120..250u8),
                ]
            })
            .collect();
        let mut img = RgbImage::new(self.width, self.height);
        for (x, y, px) in img.enumerate_pixels_mut() {
            let base = self
                .shapes
                .iter()
                .zip(&colors)
                .rev()
                .find(|(s, _)| s.mask.get(x, y))
                .map(|(_, c)| *c)
                .unwrap_or(background);
            let noise: i16 = rng.random_range(-6..=6);
            *px = Rgb(base.map(|c| (c as i16 + noise).clamp(0, 255) as u8));
        }
        img
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::MissingFile(path.to_path_buf()),
            _ => Error::io(path, e),
        })?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Seeded generator of well-separated synthetic shapes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneGenerator {
    pub width: u32,
    pub height: u32,
    pub min_shapes: u32,
    pub max_shapes: u32,
    pub min_radius: u32,
    pub max_radius: u32,
    /// Minimum gap between shapes, in pixels.
    pub margin: u32,
    pub cell: u32,
    pub feature_dim: u32,
}

impl Default for SceneGenerator {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            min_shapes: 2,
            max_shapes: 3,
            min_radius: 10,
            max_radius: 20,
            margin: 12,
            cell: 4,
            feature_dim: 32,
        }
    }
}

impl SceneGenerator {
    pub fn generate(&self, seed: u64) -> OracleScene {
        let mut rng = rng_for(seed, &[0x5ce4e]);
        let target = rng.random_range(self.min_shapes..=self.max_shapes.max(self.min_shapes));
        let (w, h) = (self.width, self.height);
        let mut occupied = BinaryMask::new(w, h);
        let mut shapes = Vec::new();
        for _attempt in 0..400 {
            if shapes.len() as u32 >= target {
                break;
            }
            let r = rng.random_range(self.min_radius..=self.max_radius.max(self.min_radius)) as f64;
            let pad = r + 2.0;
            if 2.0 * pad >= w as f64 || 2.0 * pad >= h as f64 {
                break;
            }
            let cx = rng.random_range(pad..w as f64 - pad);
            let cy = rng.random_range(pad..h as f64 - pad);
            let kind = rng.random_range(0..3u8);
            let aspect = rng.random_range(0.6..1.0);
            let mask = match kind {
                0 => BinaryMask::from_fn(w, h, |x, y| {
                    let dx = (x as f64 - cx) / r;
                    let dy = (y as f64 - cy) / (r * aspect);
                    dx * dx + dy * dy <= 1.0
                }),
                1 => BinaryMask::from_fn(w, h, |x, y| {
                    (x as f64 - cx).abs() <= r * 0.9 && (y as f64 - cy).abs() <= r * aspect * 0.9
                }),
                _ => {
                    // two overlapping lobes
                    let off = r * 0.45;
                    let lobe = r * 0.6;
                    BinaryMask::from_fn(w, h, |x, y| {
                        let (px, py) = (x as f64, y as f64);
                        let a = (px - cx + off).powi(2) + (py - cy).powi(2) <= lobe * lobe;
                        let b = (px - cx - off).powi(2) + (py - cy + off * aspect).powi(2)
                            <= lobe * lobe;
                        a || b
                    })
                }
            };
            if mask.area() < 16 {
                continue;
            }
            let halo = dilate(&mask, self.margin);
            if halo.intersection_area(&occupied) > 0 {
                continue;
            }
            occupied = occupied.or(&mask).expect("same dims");
            shapes.push(SceneShape {
                id: shapes.len() as u32 + 1,
                mask,
            });
        }
        OracleScene {
            width: w,
            height: h,
            cell: self.cell,
            feature_dim: self.feature_dim,
            seed,
            shapes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_seeded() {
        let g = SceneGenerator::default();
        assert_eq!(g.generate(3), g.generate(3));
        assert_ne!(g.generate(3), g.generate(4));
    }

    #[test]
    fn shapes_are_separated() {
        let g = SceneGenerator::default();
        for seed in 0..20 {
            let s = g.generate(seed);
            assert!(!s.shapes.is_empty());
            for (i, a) in s.shapes.iter().enumerate() {
                for b in &s.shapes[i + 1..] {
                    assert_eq!(dilate(&a.mask, g.margin).intersection_area(&b.mask), 0);
                }
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let s = SceneGenerator::default().generate(11);
        let text = serde_json::to_string(&s).unwrap();
        let back: OracleScene = serde_json::from_str(&text).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn duplicate_ids_rejected() {
        let mut s = SceneGenerator::default().generate(1);
        let first = s.shapes[0].clone();
        s.shapes.push(first);
        assert!(s.validate().is_err());
    }

    #[test]
    fn render_is_deterministic() {
        let s = SceneGenerator::default().generate(5);
        assert_eq!(s.render(), s.render());
    }
}
