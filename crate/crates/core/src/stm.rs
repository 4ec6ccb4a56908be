//! Split-then-merge: break a class mask into connected regions, then regroup
//! nearby regions into targets that can each be prompted as one object.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mask::{connected_components, BBox, BinaryMask, Connectivity, LabelMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MergeConfig {
    /// Occupancy threshold for merging two regions.
    pub mu: f64,
    /// Regions smaller than this that stay isolated are not prompted.
    pub min_region_px: u64,
}

impl Default for MergeConfig {
    fn default() -> Self {
        Self {
            mu: 0.5,
            min_region_px: 4,
        }
    }
}

impl MergeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.mu > 0.0 && self.mu <= 1.0) {
            return Err(Error::Config(format!("mu {} outside (0, 1]", self.mu)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Region {
    /// 1-based label in the owning [`RegionSet::labels`].
    pub id: u32,
    pub mask: BinaryMask,
    pub bbox: BBox,
    pub box_area: u64,
    pub mask_area: u64,
}

impl Region {
    pub fn is_trivial(&self, min_region_px: u64) -> bool {
        self.mask_area < min_region_px
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegionSet {
    pub labels: LabelMask,
    pub regions: Vec<Region>,
}

/// 8-connected regions of `mask`, numbered in raster first-touch order.
pub fn split(mask: &BinaryMask) -> RegionSet {
    let (labels, count) = connected_components(mask, Connectivity::Eight);
    let (w, h) = mask.dims();
    let mut boxes = vec![(u32::MAX, u32::MAX, 0u32, 0u32); count as usize];
    let mut areas = vec![0u64; count as usize];
    for y in 0..h {
        for x in 0..w {
            let l = labels.get(x, y);
            if l == 0 {
                continue;
            }
            let b = &mut boxes[l as usize - 1];
            b.0 = b.0.min(x);
            b.1 = b.1.min(y);
            b.2 = b.2.max(x + 1);
            b.3 = b.3.max(y + 1);
            areas[l as usize - 1] += 1;
        }
    }
    let regions = (1..=count)
        .map(|id| {
            let (x0, y0, x1, y1) = boxes[id as usize - 1];
            let bbox = BBox { x0, y0, x1, y1 };
            Region {
                id,
                mask: labels.mask_of(id),
                bbox,
                box_area: bbox.area(),
                mask_area: areas[id as usize - 1],
            }
        })
        .collect();
    RegionSet { labels, regions }
}

/// One output of [`merge_groups`].
#[derive(Clone, Debug, PartialEq)]
pub struct MergedGroup {
    /// Region ids in ascending order.
    pub region_ids: Vec<u32>,
    pub mask: BinaryMask,
    pub bbox: BBox,
    pub mask_area: u64,
    /// A lone region below the noise floor.
    pub trivial: bool,
}

/// Whether two regions (or groups) qualify for merging: both the summed box
/// areas and the summed mask areas must exceed `mu` times the area of their
/// joint bounding box.
pub fn should_merge(a: (BBox, u64), b: (BBox, u64), mu: f64) -> bool {
    let joint = a.0.union(&b.0).area() as f64;
    let boxes = (a.0.area() + b.0.area()) as f64;
    let masks = (a.1 + b.1) as f64;
    boxes > mu * joint && masks > mu * joint
}

/// Single pass over region pairs `(i, j)`, `i < j`, in ascending id order.
/// Qualifying pairs are unioned immediately and later tests use the box and
/// area of the current merged groups.
pub fn merge_groups(rs: &RegionSet, cfg: &MergeConfig) -> Vec<MergedGroup> {
    let n = rs.regions.len();
    let mut parent: Vec<usize> = (0..n).collect();
    let mut stats: Vec<(BBox, u64)> = rs.regions.iter().map(|r| (r.bbox, r.mask_area)).collect();

    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }

    for i in 0..n {
        for j in i + 1..n {
            let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
            if ri == rj {
                continue;
            }
            if should_merge(stats[ri], stats[rj], cfg.mu) {
                let (lo, hi) = (ri.min(rj), ri.max(rj));
                stats[lo] = (stats[ri].0.union(&stats[rj].0), stats[ri].1 + stats[rj].1);
                parent[hi] = lo;
            }
        }
    }

    let mut members: BTreeMap<usize, Vec<u32>> = BTreeMap::new();
    for i in 0..n {
        let root = find(&mut parent, i);
        members.entry(root).or_default().push(rs.regions[i].id);
    }
    let (w, h) = rs.labels.dims();
    members
        .into_iter()
        .map(|(root, region_ids)| {
            let ids = &region_ids;
            let mask = BinaryMask::from_fn(w, h, |x, y| {
                let l = rs.labels.get(x, y);
                l != 0 && ids.binary_search(&l).is_ok()
            });
            let (bbox, mask_area) = stats[root];
            let trivial = region_ids.len() == 1 && mask_area < cfg.min_region_px;
            MergedGroup {
                region_ids,
                mask,
                bbox,
                mask_area,
                trivial,
            }
        })
        .collect()
}

/// Masks of every merged group, trivial ones included.
pub fn merge(rs: &RegionSet, cfg: &MergeConfig) -> Vec<BinaryMask> {
    merge_groups(rs, cfg).into_iter().map(|g| g.mask).collect()
}

/// Prompting targets of one class.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassTargets {
    pub targets: Vec<BinaryMask>,
    /// Trivial regions, kept as-is instead of being refined.
    pub passthrough: Vec<BinaryMask>,
}

/// Split and merge every non-zero class of `semantic`. Classes without
/// foreground do not appear.
pub fn stm_refine_inputs(semantic: &LabelMask, cfg: &MergeConfig) -> BTreeMap<u32, ClassTargets> {
    semantic
        .labels()
        .into_iter()
        .map(|class| {
            let rs = split(&semantic.mask_of(class));
            let mut out = ClassTargets {
                targets: Vec::new(),
                passthrough: Vec::new(),
            };
            for g in merge_groups(&rs, cfg) {
                if g.trivial {
                    out.passthrough.push(g.mask);
                } else {
                    out.targets.push(g.mask);
                }
            }
            (class, out)
        })
        .collect()
}
