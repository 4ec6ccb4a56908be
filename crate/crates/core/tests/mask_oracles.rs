use std::collections::VecDeque;

use maskforge::mask::{
    connected_components, dilate, distance_to_foreground, distance_transform, erode, resize,
    resize_mask_nearest, BinaryMask, Connectivity, Raster, ResizeMode, RleMask,
};
use proptest::prelude::*;

fn arb_mask(max: u32) -> impl Strategy<Value = BinaryMask> {
    (1..=max, 1..=max, 0.05f64..0.95).prop_flat_map(|(w, h, p)| {
        prop::collection::vec(prop::bool::weighted(p), (w * h) as usize)
            .prop_map(move |data| BinaryMask::from_vec(w, h, data).unwrap())
    })
}

/// Nearest background by exhaustive search; pixels outside the image count
/// as background.
fn brute_dt(m: &BinaryMask) -> Vec<f64> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let mut out = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !m.get(x as u32, y as u32) {
                out.push(0.0);
                continue;
            }
            let mut best = i64::MAX;
            for v in -1..=h {
                for u in -1..=w {
                    let outside = u < 0 || v < 0 || u >= w || v >= h;
                    if outside || !m.get(u as u32, v as u32) {
                        best = best.min((u - x).pow(2) + (v - y).pow(2));
                    }
                }
            }
            out.push((best as f64).sqrt());
        }
    }
    out
}

fn brute_to_fg(m: &BinaryMask) -> Vec<f64> {
    let fg: Vec<(i64, i64)> = m.foreground().map(|(x, y)| (x as i64, y as i64)).collect();
    let mut out = Vec::new();
    for y in 0..m.height() as i64 {
        for x in 0..m.width() as i64 {
            let best = fg
                .iter()
                .map(|&(u, v)| (u - x).pow(2) + (v - y).pow(2))
                .min();
            out.push(best.map_or(f64::INFINITY, |b| (b as f64).sqrt()));
        }
    }
    out
}

/// Breadth-first labelling in raster first-touch order.
fn flood_labels(m: &BinaryMask, eight: bool) -> Vec<u32> {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let mut labels = vec![0u32; (w * h) as usize];
    let mut next = 0;
    for start in 0..(w * h) {
        if !m.data()[start as usize] || labels[start as usize] != 0 {
            continue;
        }
        next += 1;
        labels[start as usize] = next;
        let mut q = VecDeque::from([start]);
        while let Some(i) = q.pop_front() {
            let (x, y) = (i % w, i / w);
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    if (dx == 0 && dy == 0) || (!eight && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (u, v) = (x + dx, y + dy);
                    if u < 0 || v < 0 || u >= w || v >= h {
                        continue;
                    }
                    let j = (v * w + u) as usize;
                    if m.data()[j] && labels[j] == 0 {
                        labels[j] = next;
                        q.push_back(j as i64);
                    }
                }
            }
        }
    }
    labels
}

proptest! {
    #[test]
    fn dt_matches_brute_force(m in arb_mask(20)) {
        let dt = distance_transform(&m).unwrap();
        prop_assert_eq!(dt.data(), &brute_dt(&m)[..]);
    }

    #[test]
    fn distance_to_foreground_matches_brute_force(m in arb_mask(20)) {
        let d = distance_to_foreground(&m).unwrap();
        prop_assert_eq!(d.data(), &brute_to_fg(&m)[..]);
    }

    #[test]
    fn components_match_flood_fill(m in arb_mask(24)) {
        for (conn, eight) in [(Connectivity::Four, false), (Connectivity::Eight, true)] {
            let (labels, n) = connected_components(&m, conn);
            let want = flood_labels(&m, eight);
            prop_assert_eq!(labels.data(), &want[..]);
            prop_assert_eq!(n, want.iter().copied().max().unwrap_or(0));
        }
    }

    #[test]
    fn rle_round_trips(m in arb_mask(24)) {
        let rle = RleMask::encode(&m);
        prop_assert_eq!(rle.size, [m.height(), m.width()]);
        prop_assert_eq!(rle.counts.iter().map(|&c| c as u64).sum::<u64>(), m.len() as u64);
        prop_assert!(rle.counts.iter().skip(1).all(|&c| c > 0));
        prop_assert_eq!(rle.decode().unwrap(), m);
    }

    #[test]
    fn morphology_matches_disk_oracle(m in arb_mask(16), r in 0u32..5) {
        let (w, h) = (m.width() as i64, m.height() as i64);
        let r2 = (r * r) as i64;
        let eroded = erode(&m, r);
        let dilated = dilate(&m, r);
        for y in 0..h {
            for x in 0..w {
                let mut any_fg = false;
                let mut all_fg = true;
                for v in (y - r as i64)..=(y + r as i64) {
                    for u in (x - r as i64)..=(x + r as i64) {
                        if (u - x).pow(2) + (v - y).pow(2) > r2 {
                            continue;
                        }
                        let inside = u >= 0 && v >= 0 && u < w && v < h;
                        let on = inside && m.get(u as u32, v as u32);
                        any_fg |= on;
                        all_fg &= on;
                    }
                }
                prop_assert_eq!(dilated.get(x as u32, y as u32), any_fg);
                prop_assert_eq!(eroded.get(x as u32, y as u32), all_fg);
            }
        }
    }

    #[test]
    fn erosion_shrinks_dilation_grows(m in arb_mask(16), r in 0u32..4) {
        let e = erode(&m, r);
        let d = dilate(&m, r);
        prop_assert_eq!(e.and_not(&m).unwrap().area(), 0);
        prop_assert_eq!(m.and_not(&d).unwrap().area(), 0);
    }

    #[test]
    fn nearest_resize_uses_floor(m in arb_mask(16), ow in 1u32..24, oh in 1u32..24) {
        let out = resize_mask_nearest(&m, ow, oh);
        for y in 0..oh {
            for x in 0..ow {
                let sx = (x as u64 * m.width() as u64 / ow as u64) as u32;
                let sy = (y as u64 * m.height() as u64 / oh as u64) as u32;
                prop_assert_eq!(out.get(x, y), m.get(sx, sy));
            }
        }
    }

    #[test]
    fn bilinear_stays_within_range(vals in prop::collection::vec(-5.0f64..5.0, 16), ow in 1u32..12, oh in 1u32..12) {
        let r = Raster { width: 4, height: 4, data: vals.clone() };
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for v in resize(&r, ow, oh, ResizeMode::Bilinear).data {
            prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}

/// Reference strings produced by pycocotools for row-major bit patterns.
#[test]
fn compressed_rle_matches_reference_vectors() {
    let text = include_str!("fixtures/coco_rle_vectors.txt");
    let mut n = 0;
    for line in text.lines() {
        let parts: Vec<&str> = line.split(' ').collect();
        let (h, w): (u32, u32) = (parts[0].parse().unwrap(), parts[1].parse().unwrap());
        let bits = parts[3].as_bytes();
        let m = BinaryMask::from_fn(w, h, |x, y| bits[(y * w + x) as usize] == b'1');
        let r = RleMask::encode(&m);
        assert_eq!(r.to_compressed(), parts[2], "{h}x{w}");
        let back = RleMask::from_compressed([h, w], parts[2]).unwrap();
        assert_eq!(back.decode().unwrap(), m);
        n += 1;
    }
    assert_eq!(n, 5);
}
