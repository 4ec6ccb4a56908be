use std::collections::BTreeMap;

use maskforge::mask::{BinaryMask, LabelMask};
use maskforge::metrics::{
    boundary_band, boundary_iou, iou, miou, top1_accuracy, EvalReport, InstanceRow,
    MiouAccumulator, Top1Record,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_labels(rng: &mut ChaCha8Rng, w: u32, h: u32, classes: u32) -> LabelMask {
    // blocky labels so classes form regions rather than salt noise
    let data = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            let seed = (x / 4 + 7 * (y / 4)) as u64;
            if rng.random_bool(0.2) {
                rng.random_range(0..classes)
            } else {
                (seed % classes as u64) as u32
            }
        })
        .collect();
    LabelMask::from_vec(w, h, data).unwrap()
}

#[test]
fn miou_matches_pooled_confusion_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let classes = 5;
    for _ in 0..20 {
        let pairs: Vec<(LabelMask, LabelMask)> = (0..2)
            .map(|_| {
                let gt = random_labels(&mut rng, 24, 20, classes);
                let pred = random_labels(&mut rng, 24, 20, classes);
                (pred, gt)
            })
            .collect();
        let mut conf = vec![vec![0u64; classes as usize]; classes as usize];
        let mut acc = MiouAccumulator::new(classes);
        for (pred, gt) in &pairs {
            acc.add(pred, gt).unwrap();
            for (&p, &g) in pred.data().iter().zip(gt.data()) {
                conf[g as usize][p as usize] += 1;
            }
        }
        let summary = acc.summary();
        let mut ious = Vec::new();
        for c in 0..classes as usize {
            let tp = conf[c][c];
            let row: u64 = conf[c].iter().sum();
            let col: u64 = conf.iter().map(|r| r[c]).sum();
            let union = row + col - tp;
            if union > 0 {
                let v = tp as f64 / union as f64;
                assert!((summary.per_class[&(c as u32)] - v).abs() < 1e-12);
                ious.push(v);
            } else {
                assert!(!summary.per_class.contains_key(&(c as u32)));
            }
        }
        let mean = ious.iter().sum::<f64>() / ious.len() as f64;
        assert!((summary.mean - mean).abs() < 1e-12);
    }
}

#[test]
fn miou_hand_cases() {
    let gt = LabelMask::from_vec(4, 1, vec![0, 1, 1, 0]).unwrap();
    let s = miou(&gt, &gt, 3).unwrap();
    assert_eq!(s.per_class[&1], 1.0);
    assert!(!s.per_class.contains_key(&2));
    let bg = LabelMask::new(4, 1);
    assert_eq!(miou(&bg, &gt, 3).unwrap().per_class[&1], 0.0);
    let bad = LabelMask::from_vec(4, 1, vec![0, 7, 0, 0]).unwrap();
    assert!(miou(&bad, &gt, 3).is_err());
}

/// An interior edit leaves the outer band untouched; the only disagreement is
/// the ring the edit itself creates.
#[test]
fn boundary_iou_ignores_deep_interior() {
    let d = 3;
    let a = BinaryMask::from_fn(40, 40, |x, y| (5..35).contains(&x) && (5..35).contains(&y));
    let hole = |x: u32, y: u32| (18..22).contains(&x) && (18..22).contains(&y);
    let b = BinaryMask::from_fn(40, 40, |x, y| a.get(x, y) && !hole(x, y));
    let ring = BinaryMask::from_fn(40, 40, |x, y| {
        b.get(x, y)
            && (18..22)
                .flat_map(|v| (18..22).map(move |u| (u, v)))
                .any(|(u, v)| {
                    (u as i64 - x as i64).pow(2) + (v as i64 - y as i64).pow(2) <= (d * d) as i64
                })
    });
    let (band_a, band_b) = (boundary_band(&a, d), boundary_band(&b, d));
    assert_eq!(band_a.intersection_area(&ring), 0);
    assert_eq!(band_b, band_a.or(&ring).unwrap());
    let want = band_a.area() as f64 / (band_a.area() + ring.area()) as f64;
    assert_eq!(boundary_iou(&a, &b, d).unwrap(), want);
}

#[test]
fn iou_hand_cases() {
    let a = BinaryMask::from_fn(4, 4, |x, y| x < 2 && y < 2);
    let b = BinaryMask::from_fn(4, 4, |x, y| (1..3).contains(&x) && y < 2);
    assert_eq!(iou(&a, &b).unwrap(), 2.0 / 6.0);
    assert_eq!(iou(&a, &a).unwrap(), 1.0);
    let c = BinaryMask::from_fn(4, 4, |x, y| x >= 2 && y >= 2);
    assert_eq!(iou(&a, &c).unwrap(), 0.0);
    assert_eq!(
        iou(&BinaryMask::new(3, 3), &BinaryMask::new(3, 3)).unwrap(),
        1.0
    );
    assert!(iou(&a, &BinaryMask::new(3, 4)).is_err());
}

fn arb_pair() -> impl Strategy<Value = (BinaryMask, BinaryMask)> {
    (1u32..12, 1u32..12).prop_flat_map(|(w, h)| {
        let n = (w * h) as usize;
        (
            prop::collection::vec(any::<bool>(), n),
            prop::collection::vec(any::<bool>(), n),
        )
            .prop_map(move |(a, b)| {
                (
                    BinaryMask::from_vec(w, h, a).unwrap(),
                    BinaryMask::from_vec(w, h, b).unwrap(),
                )
            })
    })
}

proptest! {
    #[test]
    fn iou_symmetric_and_bounded((a, b) in arb_pair()) {
        let x = iou(&a, &b).unwrap();
        prop_assert_eq!(x, iou(&b, &a).unwrap());
        prop_assert!((0.0..=1.0).contains(&x));
    }

    #[test]
    fn boundary_iou_is_band_iou((a, b) in arb_pair(), d in 1u32..4) {
        let want = iou(&boundary_band(&a, d), &boundary_band(&b, d)).unwrap();
        prop_assert_eq!(boundary_iou(&a, &b, d).unwrap(), want);
    }
}

#[test]
fn constant_selector_scores_about_one_in_k() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let records: Vec<Top1Record> = (0..6000)
        .map(|_| Top1Record {
            scores: BTreeMap::from([("constant".to_string(), vec![0.5; 3])]),
            gt_ious: (0..3).map(|_| rng.random::<f64>()).collect(),
        })
        .collect();
    let acc = top1_accuracy(&records).unwrap()["constant"];
    assert!((acc - 1.0 / 3.0).abs() < 0.03, "{acc}");
}

#[test]
fn gt_scores_are_perfect_and_ties_count() {
    let rec = |scores: Vec<f64>, gt: Vec<f64>| Top1Record {
        scores: BTreeMap::from([("s".to_string(), scores)]),
        gt_ious: gt,
    };
    let records = vec![
        rec(vec![0.1, 0.9, 0.3], vec![0.1, 0.9, 0.3]),
        rec(vec![0.0, 0.0, 1.0], vec![0.5, 0.7, 0.7]),
    ];
    assert_eq!(top1_accuracy(&records).unwrap()["s"], 1.0);
    assert!(top1_accuracy(&[]).is_err());
}

#[test]
fn report_aggregates_recompute_from_rows() {
    let rows: Vec<InstanceRow> = (0..7)
        .map(|i| InstanceRow {
            image: format!("img{}", i / 3),
            instance: i.to_string(),
            iou: 0.1 * i as f64,
            boundary_iou: 0.05 * i as f64,
            coarse_iou: Some(0.5),
            coarse_boundary_iou: None,
        })
        .collect();
    let report = EvalReport::new(rows, 3, None, BTreeMap::new());
    assert!(report.aggregates_consistent());
    let back: EvalReport = serde_json::from_str(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
    assert_eq!(report.to_csv().lines().count(), 8);
}
