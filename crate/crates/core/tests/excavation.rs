use maskforge::excavation::{
    cebox, excavate, gaussian_field, gaussian_mask, negative_point, positive_point,
    query_embedding, ExcavationConfig, ImageEmbedding, PromptKinds, MIN_NEGATIVE_DISTANCE,
};
use maskforge::mask::{BinaryMask, Polarity};
use proptest::prelude::*;

fn arb_nonempty(max: u32) -> impl Strategy<Value = BinaryMask> {
    (2..=max, 2..=max, 0.2f64..0.9)
        .prop_flat_map(|(w, h, p)| {
            prop::collection::vec(prop::bool::weighted(p), (w * h) as usize)
                .prop_map(move |data| BinaryMask::from_vec(w, h, data).unwrap())
        })
        .prop_filter("non-empty", |m| !m.is_empty())
}

fn sq(a: (u32, u32), b: (u32, u32)) -> i64 {
    (a.0 as i64 - b.0 as i64).pow(2) + (a.1 as i64 - b.1 as i64).pow(2)
}

/// Squared distance to the nearest background pixel, outside included.
fn depth2(m: &BinaryMask, x: u32, y: u32) -> i64 {
    let (w, h) = (m.width() as i64, m.height() as i64);
    let mut best = i64::MAX;
    for v in -1..=h {
        for u in -1..=w {
            if u < 0 || v < 0 || u >= w || v >= h || !m.get(u as u32, v as u32) {
                best = best.min((u - x as i64).pow(2) + (v - y as i64).pow(2));
            }
        }
    }
    best
}

#[test]
fn gaussian_center_and_e_folding() {
    // 1-px line of 16 pixels: every pixel has depth 1, so the first one is
    // the center and the pixel 8 to its right sits at d^2 = 64 = area * gamma
    let line = BinaryMask::from_fn(40, 5, |x, y| y == 2 && (10..26).contains(&x));
    let cfg = ExcavationConfig::default();
    let gm = gaussian_field(&line, &cfg).unwrap();
    assert_eq!(gm.center, (10, 2));
    assert_eq!(gm.data[2 * 40 + 10], 15.0);
    assert!((gm.data[2 * 40 + 18] - 15.0 / std::f64::consts::E).abs() < 1e-9);
    assert_eq!(gm.max(), 15.0);
}

proptest! {
    #[test]
    fn gaussian_matches_formula(m in arb_nonempty(16)) {
        let cfg = ExcavationConfig::default();
        let gm = gaussian_field(&m, &cfg).unwrap();
        let area = m.area() as f64;
        for y in 0..m.height() {
            for x in 0..m.width() {
                let want = if m.get(x, y) {
                    15.0 * (-(sq((x, y), gm.center) as f64) / (area * 4.0)).exp()
                } else {
                    0.0
                };
                prop_assert!((gm.data[(y * m.width() + x) as usize] - want).abs() < 1e-12);
            }
        }
        prop_assert_eq!(gm.support(), m);
    }

    #[test]
    fn positive_point_is_first_deepest(m in arb_nonempty(14)) {
        let p = positive_point(&m).unwrap();
        prop_assert_eq!(p.polarity, Polarity::Positive);
        let mut best = (0, 0, -1);
        for y in 0..m.height() {
            for x in 0..m.width() {
                if m.get(x, y) && depth2(&m, x, y) > best.2 {
                    best = (x, y, depth2(&m, x, y));
                }
            }
        }
        prop_assert_eq!((p.x, p.y), (best.0, best.1));
    }

    #[test]
    fn negative_point_is_farthest_from_foreground(m in arb_nonempty(14)) {
        let bbox = m.tight_box().unwrap();
        let fg: Vec<(u32, u32)> = m.foreground().collect();
        let mut best: Option<(u32, u32, i64)> = None;
        for y in bbox.y0..bbox.y1 {
            for x in bbox.x0..bbox.x1 {
                if m.get(x, y) {
                    continue;
                }
                let d = fg.iter().map(|&f| sq(f, (x, y))).min().unwrap();
                if best.is_none_or(|b| d > b.2) {
                    best = Some((x, y, d));
                }
            }
        }
        let want = best.filter(|b| (b.2 as f64).sqrt() >= MIN_NEGATIVE_DISTANCE);
        let got = negative_point(&m, &bbox).unwrap();
        prop_assert_eq!(got.map(|p| (p.x, p.y)), want.map(|b| (b.0, b.1)));
        if let Some(p) = got {
            prop_assert_eq!(p.polarity, Polarity::Negative);
        }
    }

    #[test]
    fn cebox_contains_tight_box(m in arb_nonempty(24), seed in 0u64..1000) {
        let (w, h) = m.dims();
        let emb = ImageEmbedding::from_fn(w.div_ceil(4), h.div_ceil(4), 3, w, h, |x, y| {
            let v = (seed.wrapping_mul(31).wrapping_add((x * 7 + y * 13) as u64) % 5) as f32;
            vec![1.0, v, 0.5]
        });
        let b = cebox(&m, &emb, &ExcavationConfig::default()).unwrap();
        prop_assert!(b.contains_box(&m.tight_box().unwrap()));
        prop_assert!(b.fits(w, h));
    }
}

#[test]
fn query_is_mean_of_covered_cells() {
    let emb = ImageEmbedding::from_fn(4, 4, 2, 16, 16, |x, y| vec![x as f32, y as f32]);
    // covers cells x in 0..2, y = 0
    let m = BinaryMask::from_fn(16, 16, |x, y| x < 8 && y < 4);
    let q = query_embedding(&emb, &m).unwrap();
    assert_eq!(q.vector, vec![0.5, 0.0]);
}

#[test]
fn soft_mask_resampled_to_prompt_grid() {
    let m = BinaryMask::from_fn(64, 32, |x, y| (10..40).contains(&x) && (8..24).contains(&y));
    let cfg = ExcavationConfig::default();
    let small = gaussian_mask(&m, &cfg, 16, 8).unwrap();
    assert_eq!((small.width, small.height), (16, 8));
    let full = gaussian_field(&m, &cfg).unwrap();
    for y in 0..8u32 {
        for x in 0..16u32 {
            assert_eq!(
                small.data[(y * 16 + x) as usize],
                full.data[(y * 4 * 64 + x * 4) as usize]
            );
        }
    }
}

#[test]
fn prompt_subsets_follow_enabled_kinds() {
    let m = BinaryMask::from_fn(32, 32, |x, y| (4..20).contains(&x) && (6..26).contains(&y));
    let emb = ImageEmbedding::from_fn(8, 8, 2, 32, 32, |_, _| vec![1.0, 0.0]);
    for kinds in [
        PromptKinds::POINT,
        PromptKinds::BOX,
        PromptKinds::MASK,
        PromptKinds::ALL,
    ] {
        let p = excavate(&m, &emb, &ExcavationConfig::default(), kinds, (32, 32)).unwrap();
        assert_eq!(p.enabled, kinds);
        assert_eq!(p.soft_mask.is_some(), kinds.mask);
        let back = maskforge::excavation::PromptSet::from_json(&p.to_json().unwrap()).unwrap();
        assert_eq!(back, p);
    }
}
