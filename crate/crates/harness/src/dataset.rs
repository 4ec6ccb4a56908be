//! Dataset ingestion and mask writers.
//!
//! Layouts, keyed by image stem:
//! - images: `<dir>/<stem>.png`
//! - instance masks: `<dir>/<stem>/<instance>.png`, non-zero is foreground
//! - label masks: `<dir>/<stem>.png`, pixel value is the class id
//! - COCO-style JSON with RLE segmentations (list or compressed counts)

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, ImageBuffer, Luma, RgbImage};
use maskforge::mask::{BinaryMask, LabelMask, RleMask};
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Instance,
    Semantic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum MaskFormat {
    InstanceDir,
    LabelDir,
    Coco,
}

impl MaskFormat {
    /// `.json` files are COCO; directories of PNGs are labels when any
    /// top-level entry is a PNG, instance sub-directories otherwise.
    pub fn detect(path: &Path) -> Result<Self> {
        if path.is_file() {
            return match path.extension().and_then(|e| e.to_str()) {
                Some("json") => Ok(MaskFormat::Coco),
                _ => Err(HarnessError::dataset(
                    path,
                    "expected a directory or a .json file",
                )),
            };
        }
        if !path.is_dir() {
            return Err(HarnessError::MissingFile(path.to_path_buf()));
        }
        let has_png = list_dir(path)?.iter().any(|p| p.is_file() && is_png(p));
        Ok(if has_png {
            MaskFormat::LabelDir
        } else {
            MaskFormat::InstanceDir
        })
    }
}

/// Masks of one image.
#[derive(Clone, Debug, PartialEq)]
pub enum Targets {
    /// `(instance id, mask)` in id order.
    Instances(Vec<(String, BinaryMask)>),
    Semantic(LabelMask),
}

impl Targets {
    pub fn dims(&self) -> Option<(u32, u32)> {
        match self {
            Targets::Instances(v) => v.first().map(|(_, m)| m.dims()),
            Targets::Semantic(l) => Some(l.dims()),
        }
    }

    pub fn instances(&self) -> Option<&[(String, BinaryMask)]> {
        match self {
            Targets::Instances(v) => Some(v),
            Targets::Semantic(_) => None,
        }
    }

    pub fn semantic(&self) -> Option<&LabelMask> {
        match self {
            Targets::Semantic(l) => Some(l),
            Targets::Instances(_) => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaskSource {
    pub path: PathBuf,
    pub format: MaskFormat,
}

impl MaskSource {
    pub fn new(path: &Path, format: Option<MaskFormat>) -> Result<Self> {
        let format = match format {
            Some(f) => f,
            None => MaskFormat::detect(path)?,
        };
        Ok(Self {
            path: path.to_path_buf(),
            format,
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetSpec {
    pub mode: Mode,
    pub images: PathBuf,
    pub coarse: MaskSource,
    pub gt: Option<MaskSource>,
}

#[derive(Clone, Debug)]
pub struct Sample {
    pub name: String,
    pub image: RgbImage,
    pub coarse: Targets,
    pub gt: Option<Targets>,
}

fn list_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let rd = std::fs::read_dir(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in rd {
        out.push(entry.map_err(|e| HarnessError::io(dir, e))?.path());
    }
    out.sort();
    Ok(out)
}

fn is_png(p: &Path) -> bool {
    p.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn stem(p: &Path) -> String {
    p.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

fn open(path: &Path) -> Result<image::DynamicImage> {
    if !path.is_file() {
        return Err(HarnessError::MissingFile(path.to_path_buf()));
    }
    image::open(path).map_err(|source| HarnessError::Image {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_image(path: &Path) -> Result<RgbImage> {
    Ok(open(path)?.to_rgb8())
}

pub fn read_binary_png(path: &Path) -> Result<BinaryMask> {
    let img = open(path)?.to_luma16();
    let (w, h) = img.dimensions();
    Ok(BinaryMask::from_fn(w, h, |x, y| {
        img.get_pixel(x, y).0[0] != 0
    }))
}

pub fn read_label_png(path: &Path) -> Result<LabelMask> {
    let img = open(path)?;
    let (w, h) = (img.width(), img.height());
    let data = match img {
        image::DynamicImage::ImageLuma8(g) => g.pixels().map(|p| p.0[0] as u32).collect(),
        image::DynamicImage::ImageLuma16(g) => g.pixels().map(|p| p.0[0] as u32).collect(),
        _ => {
            return Err(HarnessError::dataset(
                path,
                "label masks must be single-channel PNGs",
            ))
        }
    };
    Ok(LabelMask::from_vec(w, h, data)?)
}

/// Images of a directory by stem.
pub fn list_images(dir: &Path) -> Result<BTreeMap<String, PathBuf>> {
    if !dir.is_dir() {
        return Err(HarnessError::MissingFile(dir.to_path_buf()));
    }
    let mut out = BTreeMap::new();
    for p in list_dir(dir)? {
        if p.is_file() && is_png(&p) && out.insert(stem(&p), p.clone()).is_some() {
            return Err(HarnessError::dataset(&p, "duplicate image stem"));
        }
    }
    Ok(out)
}

fn check_dims(path: &Path, what: &str, got: (u32, u32), want: (u32, u32)) -> Result<()> {
    if got != want {
        return Err(HarnessError::DimMismatch {
            path: path.to_path_buf(),
            message: format!(
                "{what} is {}x{}, expected {}x{}",
                got.0, got.1, want.0, want.1
            ),
        });
    }
    Ok(())
}

fn instances_to_labels(path: &Path, inst: &[(String, BinaryMask)]) -> Result<LabelMask> {
    let Some((_, first)) = inst.first() else {
        return Err(HarnessError::dataset(path, "no masks to compose"));
    };
    let mut labels = LabelMask::new(first.width(), first.height());
    for (id, m) in inst {
        let class: u32 = id.parse().map_err(|_| {
            HarnessError::dataset(path, format!("instance `{id}` is not a class id"))
        })?;
        for (x, y) in m.foreground() {
            labels.set(x, y, class);
        }
    }
    Ok(labels)
}

fn labels_to_instances(l: &LabelMask) -> Vec<(String, BinaryMask)> {
    l.labels()
        .into_iter()
        .map(|c| (c.to_string(), l.mask_of(c)))
        .collect()
}

fn convert(path: &Path, t: Targets, mode: Mode) -> Result<Targets> {
    Ok(match (t, mode) {
        (Targets::Instances(v), Mode::Semantic) => {
            Targets::Semantic(instances_to_labels(path, &v)?)
        }
        (Targets::Semantic(l), Mode::Instance) => Targets::Instances(labels_to_instances(&l)),
        (t, _) => t,
    })
}

fn load_instance_dir(dir: &Path) -> Result<BTreeMap<String, Targets>> {
    let mut out = BTreeMap::new();
    for sub in list_dir(dir)? {
        if !sub.is_dir() {
            continue;
        }
        let mut masks = Vec::new();
        for p in list_dir(&sub)? {
            if p.is_file() && is_png(&p) {
                let m = read_binary_png(&p)?;
                if let Some((_, first)) = masks.first() {
                    check_dims(&p, "instance mask", m.dims(), BinaryMask::dims(first))?;
                }
                masks.push((stem(&p), m));
            }
        }
        out.insert(stem(&sub), Targets::Instances(masks));
    }
    Ok(out)
}

fn load_label_dir(dir: &Path) -> Result<BTreeMap<String, Targets>> {
    let mut out = BTreeMap::new();
    for p in list_dir(dir)? {
        if p.is_file() && is_png(&p) {
            out.insert(stem(&p), Targets::Semantic(read_label_png(&p)?));
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CocoCounts {
    List(Vec<u32>),
    Compressed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoRle {
    pub size: [u32; 2],
    pub counts: CocoCounts,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoImage {
    pub id: u64,
    pub file_name: String,
    pub width: u32,
    pub height: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CocoAnnotation {
    pub id: u64,
    pub image_id: u64,
    #[serde(default)]
    pub category_id: u32,
    pub segmentation: CocoRle,
    /// Instance name when it is not the annotation id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CocoFile {
    pub images: Vec<CocoImage>,
    pub annotations: Vec<CocoAnnotation>,
}

impl CocoRle {
    pub fn from_mask(m: &BinaryMask) -> Self {
        let r = RleMask::encode(m);
        Self {
            size: r.size,
            counts: CocoCounts::List(r.counts),
        }
    }

    pub fn decode(&self) -> maskforge::Result<BinaryMask> {
        match &self.counts {
            CocoCounts::List(c) => RleMask {
                size: self.size,
                counts: c.clone(),
            }
            .decode(),
            CocoCounts::Compressed(s) => RleMask::from_compressed(self.size, s)?.decode(),
        }
    }
}

fn load_coco(path: &Path, mode: Mode) -> Result<BTreeMap<String, Targets>> {
    let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
    let file: CocoFile = serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    let mut images = BTreeMap::new();
    for img in &file.images {
        if images.insert(img.id, img).is_some() {
            return Err(HarnessError::dataset(
                path,
                format!("duplicate image id {}", img.id),
            ));
        }
    }
    let mut anns: Vec<&CocoAnnotation> = file.annotations.iter().collect();
    anns.sort_by_key(|a| a.id);
    let mut per_image: BTreeMap<String, Vec<&CocoAnnotation>> = BTreeMap::new();
    for img in &file.images {
        per_image
            .entry(stem(Path::new(&img.file_name)))
            .or_default();
    }
    for a in anns {
        let img = images.get(&a.image_id).ok_or_else(|| {
            HarnessError::dataset(
                path,
                format!("annotation {} names unknown image {}", a.id, a.image_id),
            )
        })?;
        per_image
            .get_mut(&stem(Path::new(&img.file_name)))
            .expect("registered")
            .push(a);
    }
    let mut out = BTreeMap::new();
    for img in &file.images {
        let key = stem(Path::new(&img.file_name));
        let mut masks = Vec::new();
        for a in &per_image[&key] {
            let m = a
                .segmentation
                .decode()
                .map_err(|e| HarnessError::MalformedRle {
                    path: path.to_path_buf(),
                    message: format!("annotation {}: {e}", a.id),
                })?;
            check_dims(
                path,
                &format!("annotation {}", a.id),
                m.dims(),
                (img.width, img.height),
            )?;
            masks.push((a, m));
        }
        let targets = match mode {
            Mode::Instance => Targets::Instances(
                masks
                    .into_iter()
                    .map(|(a, m)| (a.instance.clone().unwrap_or_else(|| a.id.to_string()), m))
                    .collect(),
            ),
            Mode::Semantic => {
                let mut labels = LabelMask::new(img.width, img.height);
                for (a, m) in masks {
                    for (x, y) in m.foreground() {
                        labels.set(x, y, a.category_id);
                    }
                }
                Targets::Semantic(labels)
            }
        };
        out.insert(key, targets);
    }
    Ok(out)
}

/// Every image's masks from `source`, converted to `mode`.
pub fn load_targets(source: &MaskSource, mode: Mode) -> Result<BTreeMap<String, Targets>> {
    let raw = match source.format {
        MaskFormat::InstanceDir => load_instance_dir(&source.path)?,
        MaskFormat::LabelDir => load_label_dir(&source.path)?,
        MaskFormat::Coco => load_coco(&source.path, mode)?,
    };
    raw.into_iter()
        .map(|(k, t)| Ok((k, convert(&source.path, t, mode)?)))
        .collect()
}

/// Samples in stem order. Images without coarse masks are skipped; coarse
/// or ground-truth masks without an image are errors.
pub fn ingest(spec: &DatasetSpec) -> Result<Vec<Sample>> {
    let images = list_images(&spec.images)?;
    let mut coarse = load_targets(&spec.coarse, spec.mode)?;
    let mut gt = match &spec.gt {
        Some(s) => Some(load_targets(s, spec.mode)?),
        None => None,
    };
    for key in coarse.keys() {
        if !images.contains_key(key) {
            return Err(HarnessError::dataset(
                &spec.coarse.path,
                format!("no image for `{key}`"),
            ));
        }
    }
    let mut out = Vec::new();
    for (name, path) in images {
        let Some(c) = coarse.remove(&name) else {
            continue;
        };
        let image = read_image(&path)?;
        let dims = image.dimensions();
        if let Some(d) = c.dims() {
            check_dims(
                &spec.coarse.path,
                &format!("coarse masks of `{name}`"),
                d,
                dims,
            )?;
        }
        let g = match (&mut gt, &spec.gt) {
            (Some(all), Some(src)) => {
                let g = all.remove(&name).ok_or_else(|| {
                    HarnessError::dataset(&src.path, format!("no ground truth for `{name}`"))
                })?;
                if let Some(d) = g.dims() {
                    check_dims(&src.path, &format!("ground truth of `{name}`"), d, dims)?;
                }
                Some(g)
            }
            _ => None,
        };
        out.push(Sample {
            name,
            image,
            coarse: c,
            gt: g,
        });
    }
    Ok(out)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))
}

fn save(img: &image::DynamicImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)
        .map_err(|source| HarnessError::Image {
            path: path.to_path_buf(),
            source,
        })
}

pub fn write_binary_png(path: &Path, m: &BinaryMask) -> Result<()> {
    let (w, h) = m.dims();
    let img = GrayImage::from_fn(w, h, |x, y| Luma([if m.get(x, y) { 255 } else { 0 }]));
    save(&img.into(), path)
}

/// 8-bit when every label fits, 16-bit otherwise.
pub fn write_label_png(path: &Path, l: &LabelMask) -> Result<()> {
    let (w, h) = l.dims();
    let max = l.max_label();
    if max <= u8::MAX as u32 {
        save(
            &GrayImage::from_fn(w, h, |x, y| Luma([l.get(x, y) as u8])).into(),
            path,
        )
    } else if max <= u16::MAX as u32 {
        let img: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(w, h, |x, y| Luma([l.get(x, y) as u16]));
        save(&img.into(), path)
    } else {
        Err(HarnessError::dataset(
            path,
            format!("label {max} does not fit a 16-bit PNG"),
        ))
    }
}

pub fn write_image(path: &Path, img: &RgbImage) -> Result<()> {
    save(&img.clone().into(), path)
}

/// Writes `targets` in the layout `load_targets` reads back: instance PNGs
/// plus a COCO index for instances, label PNGs for semantic masks.
pub fn write_targets(dir: &Path, items: &[(String, Targets)]) -> Result<()> {
    create_dir(dir)?;
    let mut coco = CocoFile::default();
    for (i, (name, t)) in items.iter().enumerate() {
        match t {
            Targets::Instances(v) => {
                let sub = dir.join(name);
                create_dir(&sub)?;
                let (w, h) = t.dims().unwrap_or((0, 0));
                coco.images.push(CocoImage {
                    id: i as u64 + 1,
                    file_name: format!("{name}.png"),
                    width: w,
                    height: h,
                });
                for (id, m) in v {
                    write_binary_png(&sub.join(format!("{id}.png")), m)?;
                    coco.annotations.push(CocoAnnotation {
                        id: coco.annotations.len() as u64 + 1,
                        image_id: i as u64 + 1,
                        category_id: 1,
                        segmentation: CocoRle::from_mask(m),
                        instance: Some(id.clone()),
                    });
                }
            }
            Targets::Semantic(l) => write_label_png(&dir.join(format!("{name}.png")), l)?,
        }
    }
    if !coco.images.is_empty() {
        let path = dir.join("index.json");
        let text = serde_json::to_string(&coco).map_err(|source| HarnessError::Json {
            path: path.clone(),
            source,
        })?;
        std::fs::write(&path, text + "\n").map_err(|e| HarnessError::io(&path, e))?;
    }
    Ok(())
}
