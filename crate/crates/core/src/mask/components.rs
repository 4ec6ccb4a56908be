use serde::{Deserialize, Serialize};

use super::{BinaryMask, LabelMask};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connectivity {
    #[serde(rename = "4")]
    Four,
    #[default]
    #[serde(rename = "8")]
    Eight,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn new() -> Self {
        Self { parent: vec![0] }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

/// Two-pass union-find labeling. Labels `1..=count` are assigned in the order
/// each component is first touched by a raster scan.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> (LabelMask, u32) {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let mut provisional = vec![0u32; w * h];
    let mut sets = DisjointSet::new();
    let data = mask.data();

    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !data[i] {
                continue;
            }
            let mut label = 0u32;
            let join = |n: usize, label: &mut u32, sets: &mut DisjointSet| {
                let l = provisional[n];
                if l == 0 {
                    return;
                }
                *label = if *label == 0 {
                    l
                } else {
                    sets.union(*label, l)
                };
            };
            if x > 0 {
                join(i - 1, &mut label, &mut sets);
            }
            if y > 0 {
                join(i - w, &mut label, &mut sets);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        join(i - w - 1, &mut label, &mut sets);
                    }
                    if x + 1 < w {
                        join(i - w + 1, &mut label, &mut sets);
                    }
                }
            }
            provisional[i] = if label == 0 { sets.make() } else { label };
        }
    }

    let mut remap = vec![0u32; sets.parent.len()];
    let mut count = 0u32;
    for l in provisional.iter_mut() {
        if *l == 0 {
            continue;
        }
        let root = sets.find(*l) as usize;
        if remap[root] == 0 {
            count += 1;
            remap[root] = count;
        }
        *l = remap[root];
    }
    let labels = LabelMask::from_vec(mask.width(), mask.height(), provisional)
        .expect("label buffer matches mask dims");
    (labels, count)
}
