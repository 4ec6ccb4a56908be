use std::path::Path;

use image::RgbImage;
use maskforge::mask::{BinaryMask, LabelMask, RleMask};
use maskforge_harness::dataset::{
    ingest, load_targets, write_binary_png, write_image, write_label_png, write_targets,
    CocoAnnotation, CocoCounts, CocoFile, CocoImage, CocoRle, DatasetSpec, MaskFormat, MaskSource,
    Mode, Targets,
};
use maskforge_harness::HarnessError;

fn rect(w: u32, h: u32, x0: u32, y0: u32, x1: u32, y1: u32) -> BinaryMask {
    BinaryMask::from_fn(w, h, |x, y| x >= x0 && x < x1 && y >= y0 && y < y1)
}

fn two_image_dir(root: &Path) -> DatasetSpec {
    let images = root.join("images");
    std::fs::create_dir_all(&images).unwrap();
    for name in ["a", "b"] {
        write_image(&images.join(format!("{name}.png")), &RgbImage::new(10, 8)).unwrap();
    }
    let coarse = root.join("coarse");
    for (dir, id, m) in [
        ("a", "002", rect(10, 8, 5, 1, 9, 4)),
        ("a", "001", rect(10, 8, 0, 0, 3, 3)),
        ("b", "003", rect(10, 8, 2, 2, 8, 7)),
    ] {
        std::fs::create_dir_all(coarse.join(dir)).unwrap();
        write_binary_png(&coarse.join(dir).join(format!("{id}.png")), &m).unwrap();
    }
    DatasetSpec {
        mode: Mode::Instance,
        images,
        coarse: MaskSource::new(&coarse, None).unwrap(),
        gt: None,
    }
}

#[test]
fn instance_dirs_ingest_in_id_order() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = two_image_dir(tmp.path());
    assert_eq!(spec.coarse.format, MaskFormat::InstanceDir);
    let samples = ingest(&spec).unwrap();
    let names: Vec<(&str, Vec<&str>)> = samples
        .iter()
        .map(|s| {
            let ids = s
                .coarse
                .instances()
                .unwrap()
                .iter()
                .map(|(k, _)| k.as_str())
                .collect();
            (s.name.as_str(), ids)
        })
        .collect();
    assert_eq!(names, vec![("a", vec!["001", "002"]), ("b", vec!["003"])]);
    let (_, m) = &samples[1].coarse.instances().unwrap()[0];
    assert_eq!(*m, rect(10, 8, 2, 2, 8, 7));
}

#[test]
fn label_maps_yield_present_classes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("labels");
    std::fs::create_dir_all(&dir).unwrap();
    let l = LabelMask::from_vec(4, 2, vec![0, 1, 1, 5, 0, 0, 5, 5]).unwrap();
    write_label_png(&dir.join("x.png"), &l).unwrap();
    let src = MaskSource::new(&dir, None).unwrap();
    assert_eq!(src.format, MaskFormat::LabelDir);

    let sem = load_targets(&src, Mode::Semantic).unwrap();
    assert_eq!(sem["x"].semantic().unwrap(), &l);
    let inst = load_targets(&src, Mode::Instance).unwrap();
    let ids: Vec<&str> = inst["x"]
        .instances()
        .unwrap()
        .iter()
        .map(|(k, _)| k.as_str())
        .collect();
    assert_eq!(ids, ["1", "5"]);
}

#[test]
fn wide_labels_survive_sixteen_bit_png() {
    let tmp = tempfile::tempdir().unwrap();
    let l = LabelMask::from_vec(3, 1, vec![0, 300, 65535]).unwrap();
    write_targets(tmp.path(), &[("w".into(), Targets::Semantic(l.clone()))]).unwrap();
    let back = load_targets(&MaskSource::new(tmp.path(), None).unwrap(), Mode::Semantic).unwrap();
    assert_eq!(back["w"].semantic().unwrap(), &l);
}

#[test]
fn coco_round_trip_is_exact() {
    let tmp = tempfile::tempdir().unwrap();
    let items = vec![
        (
            "p".to_string(),
            Targets::Instances(vec![
                ("001".into(), rect(13, 7, 1, 1, 6, 5)),
                ("002".into(), rect(13, 7, 0, 0, 13, 7)),
            ]),
        ),
        (
            "q".to_string(),
            Targets::Instances(vec![("001".into(), BinaryMask::new(13, 7))]),
        ),
    ];
    write_targets(tmp.path(), &items).unwrap();
    let index = tmp.path().join("index.json");
    let src = MaskSource::new(&index, None).unwrap();
    assert_eq!(src.format, MaskFormat::Coco);
    let back = load_targets(&src, Mode::Instance).unwrap();
    let want: std::collections::BTreeMap<_, _> = items.into_iter().collect();
    assert_eq!(back, want);

    // the instance directories written alongside read back the same
    let dirs = load_targets(
        &MaskSource::new(tmp.path(), Some(MaskFormat::InstanceDir)).unwrap(),
        Mode::Instance,
    )
    .unwrap();
    assert_eq!(dirs, want);
}

fn coco_file(counts: CocoCounts) -> CocoFile {
    CocoFile {
        images: vec![CocoImage {
            id: 1,
            file_name: "img.png".into(),
            width: 6,
            height: 4,
        }],
        annotations: vec![CocoAnnotation {
            id: 1,
            image_id: 1,
            category_id: 2,
            segmentation: CocoRle {
                size: [4, 6],
                counts,
            },
            instance: None,
        }],
    }
}

fn write_coco(dir: &Path, f: &CocoFile) -> std::path::PathBuf {
    let p = dir.join("ann.json");
    std::fs::write(&p, serde_json::to_string(f).unwrap()).unwrap();
    p
}

#[test]
fn compressed_counts_decode() {
    let tmp = tempfile::tempdir().unwrap();
    let m = rect(6, 4, 1, 1, 5, 3);
    let text = RleMask::encode(&m).to_compressed();
    let p = write_coco(tmp.path(), &coco_file(CocoCounts::Compressed(text)));
    let back = load_targets(&MaskSource::new(&p, None).unwrap(), Mode::Instance).unwrap();
    assert_eq!(
        back["img"].instances().unwrap(),
        &[("1".to_string(), m.clone())]
    );

    let sem = load_targets(&MaskSource::new(&p, None).unwrap(), Mode::Semantic).unwrap();
    assert_eq!(sem["img"].semantic().unwrap().mask_of(2), m);
}

#[test]
fn malformed_rle_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    for counts in [
        CocoCounts::List(vec![3, 4]),
        CocoCounts::Compressed("\x7f".into()),
    ] {
        let p = write_coco(tmp.path(), &coco_file(counts));
        let err = load_targets(&MaskSource::new(&p, None).unwrap(), Mode::Instance).unwrap_err();
        assert!(matches!(err, HarnessError::MalformedRle { .. }), "{err}");
    }
}

#[test]
fn missing_file_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let err =
        maskforge_harness::dataset::read_binary_png(&tmp.path().join("nope.png")).unwrap_err();
    assert!(matches!(err, HarnessError::MissingFile(_)), "{err}");
    let err = MaskSource::new(&tmp.path().join("nothing"), None)
        .and_then(|s| load_targets(&s, Mode::Instance))
        .unwrap_err();
    assert!(matches!(err, HarnessError::MissingFile(_)), "{err}");
}

#[test]
fn dimension_mismatch_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = two_image_dir(tmp.path());
    write_binary_png(
        &spec.coarse.path.join("b").join("004.png"),
        &BinaryMask::new(9, 8),
    )
    .unwrap();
    let err = ingest(&spec).unwrap_err();
    assert!(matches!(err, HarnessError::DimMismatch { .. }), "{err}");

    let tmp = tempfile::tempdir().unwrap();
    let spec = two_image_dir(tmp.path());
    write_image(&spec.images.join("b.png"), &RgbImage::new(12, 8)).unwrap();
    let err = ingest(&spec).unwrap_err();
    assert!(matches!(err, HarnessError::DimMismatch { .. }), "{err}");
}

#[test]
fn coarse_without_image_is_an_error() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = two_image_dir(tmp.path());
    std::fs::remove_file(spec.images.join("b.png")).unwrap();
    let err = ingest(&spec).unwrap_err();
    assert!(matches!(err, HarnessError::Dataset { .. }), "{err}");
}
