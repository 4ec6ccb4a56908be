#![cfg(feature = "neural")]

use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};
use maskforge::excavation::{excavate, ExcavationConfig, PromptKinds};
use maskforge::mask::BinaryMask;
use maskforge::pipeline::{refine_instance, RefineConfig, SelectionContext};
use maskforge::segmenter::{parity_check, NeuralSegmenter, PromptedSegmenter};
use maskforge::Error;

fn model_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tiny_model")
}

fn load() -> NeuralSegmenter {
    NeuralSegmenter::load(&model_dir().join("manifest.json")).unwrap()
}

/// Copies the model into a temp dir with `edit` applied to the manifest.
fn variant(edit: impl FnOnce(&mut serde_json::Value)) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["encoder.onnx", "decoder.onnx", "decoder_narrow.onnx"] {
        std::fs::copy(model_dir().join(f), dir.path().join(f)).unwrap();
    }
    let text = std::fs::read_to_string(model_dir().join("manifest.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    edit(&mut v);
    std::fs::write(dir.path().join("manifest.json"), v.to_string()).unwrap();
    dir
}

fn gradient_image(w: u32, h: u32) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        Rgb([(x * 6) as u8, (y * 9) as u8, ((x + y) * 3) as u8])
    })
}

#[test]
fn golden_fixtures_match_within_tolerance() {
    let report = parity_check(&load(), &model_dir().join("fixtures")).unwrap();
    assert_eq!(report.fixtures.len(), 4);
    for f in &report.fixtures {
        assert!(f.passed, "{}: {:?}", f.name, f.max_abs);
        assert_eq!(f.max_abs.len(), 4);
    }
    assert!(report.passed);
    assert_eq!(report.tolerance, 1e-3);
}

#[test]
fn narrow_hidden_tap_is_a_dim_mismatch() {
    let dir = variant(|v| v["decoder"] = "decoder_narrow.onnx".into());
    let err = NeuralSegmenter::load(&dir.path().join("manifest.json"))
        .err()
        .unwrap();
    assert!(
        matches!(err, Error::DimMismatch(ref m) if m.contains("iou hidden")),
        "{err}"
    );
}

#[test]
fn wrong_embedding_dims_are_rejected() {
    let dir = variant(|v| v["embedding"]["channels"] = 16.into());
    assert!(matches!(
        NeuralSegmenter::load(&dir.path().join("manifest.json")),
        Err(Error::DimMismatch(_)) | Err(Error::GraphLoad { .. })
    ));
}

#[test]
fn missing_graph_and_version_errors() {
    let dir = variant(|v| v["encoder"] = "nope.onnx".into());
    let err = NeuralSegmenter::load(&dir.path().join("manifest.json"))
        .err()
        .unwrap();
    assert!(
        matches!(err, Error::MissingFile(ref p) if p.ends_with("nope.onnx")),
        "{err}"
    );

    let dir = variant(|v| v["format_version"] = 7.into());
    assert!(matches!(
        NeuralSegmenter::load(&dir.path().join("manifest.json")),
        Err(Error::VersionMismatch { .. })
    ));

    let dir = variant(|_| {});
    std::fs::write(dir.path().join("decoder.onnx"), b"not a graph").unwrap();
    let err = NeuralSegmenter::load(&dir.path().join("manifest.json"))
        .err()
        .unwrap();
    assert!(
        matches!(err, Error::GraphLoad { ref file, .. } if file.ends_with("decoder.onnx")),
        "{err}"
    );
}

#[test]
fn preprocessing_normalizes_and_pads_bottom_right() {
    let seg = load();
    let m = seg.manifest().clone();
    let img = RgbImage::from_pixel(40, 24, Rgb([200, 100, 50]));
    let t = seg.preprocess(&img).unwrap();
    let s = m.input_size as usize;
    assert_eq!(t.len(), 3 * s * s);
    // 40x24 scales to 32x19
    assert_eq!(m.resized_dims(40, 24), (32, 19));
    for c in 0..3 {
        let want =
            (([200.0, 100.0, 50.0][c] - m.pixel_mean[c] as f64) / m.pixel_std[c] as f64) as f32;
        for y in 0..s {
            for x in 0..s {
                let v = t[c * s * s + y * s + x];
                if y < 19 {
                    assert!((v - want).abs() < 1e-5);
                } else {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }
}

#[test]
fn prompt_encoding_conventions() {
    let seg = load();
    let img = gradient_image(40, 24);
    let emb = seg.embed(&img).unwrap();
    assert_eq!((emb.valid_width, emb.valid_height), (4, 3));
    assert_eq!(seg.prompt_grid(&emb), (16, 10));

    let target = BinaryMask::from_fn(40, 24, |x, y| (8..30).contains(&x) && (4..20).contains(&y));
    let prompts = excavate(
        &target,
        &emb,
        &ExcavationConfig::default(),
        PromptKinds::ALL,
        seg.prompt_grid(&emb),
    )
    .unwrap();
    let enc = seg.encode_prompts(&emb, &prompts).unwrap();
    let s = 0.8;
    let p = prompts.positive;
    assert_eq!(
        &enc.point_coords[..2],
        &[(p.x as f64 * s) as f32, (p.y as f64 * s) as f32]
    );
    let n_points = 1 + prompts.negative.is_some() as usize;
    let mut labels = vec![1.0];
    if prompts.negative.is_some() {
        labels.push(0.0);
    }
    labels.extend([2.0, 3.0]);
    labels.resize(4, -1.0);
    assert_eq!(enc.point_labels, labels);
    let b = prompts.bbox;
    assert_eq!(
        &enc.point_coords[2 * n_points..2 * n_points + 4],
        &[
            (b.x0 as f64 * s) as f32,
            (b.y0 as f64 * s) as f32,
            ((b.x1 - 1) as f64 * s) as f32,
            ((b.y1 - 1) as f64 * s) as f32
        ]
    );
    assert_eq!(enc.has_mask_input, 1.0);
    let soft = prompts.soft_mask.as_ref().unwrap();
    assert_eq!((soft.width, soft.height), (16, 10));
    for y in 0..16 {
        for x in 0..16 {
            let v = enc.mask_input[y * 16 + x];
            if y < 10 {
                assert_eq!(v, soft.data[y * 16 + x] as f32);
            } else {
                assert_eq!(v, 0.0);
            }
        }
    }

    let points_only = excavate(
        &target,
        &emb,
        &ExcavationConfig::default(),
        PromptKinds::POINT,
        (16, 10),
    )
    .unwrap();
    let enc = seg.encode_prompts(&emb, &points_only).unwrap();
    assert_eq!(enc.has_mask_input, 0.0);
    assert!(enc.mask_input.iter().all(|v| *v == 0.0));
}

#[test]
fn predict_produces_consistent_candidates() {
    let seg = load();
    let img = gradient_image(40, 24);
    let emb = seg.embed(&img).unwrap();
    let caps = seg.capabilities();
    assert_eq!(caps.embedding_grid, (4, 4, 8));
    let target = BinaryMask::from_fn(40, 24, |x, y| (8..30).contains(&x) && (4..20).contains(&y));
    for kinds in [
        PromptKinds::POINT,
        PromptKinds::BOX,
        PromptKinds::MASK,
        PromptKinds::ALL,
    ] {
        let prompts = excavate(
            &target,
            &emb,
            &ExcavationConfig::default(),
            kinds,
            seg.prompt_grid(&emb),
        )
        .unwrap();
        let out = seg.predict(&emb, &prompts).unwrap();
        out.check_consistency().unwrap();
        assert_eq!(out.len(), caps.candidates);
        for (m, l) in out.masks.iter().zip(&out.logits) {
            assert_eq!(m.dims(), (40, 24));
            assert_eq!((l.width, l.height), (16, 10));
        }
        assert!(out.iou_pred.iter().all(|v| (0.0..=1.0).contains(v)));
        assert!(out.hidden.iter().all(|h| h.len() == caps.hidden_dim));
        // deterministic
        assert_eq!(seg.predict(&emb, &prompts).unwrap(), out);
    }
    let cfg = RefineConfig::default();
    let r = refine_instance(&emb, &target, &cfg, &seg, &SelectionContext::default()).unwrap();
    assert_eq!(r.refined.dims(), (40, 24));
}
