use proptest::prelude::*;
use superpatch::cache::{decode, encode, CacheKey};
use superpatch::formats::{ann_field_jsonl, export_decomposition, import_decomposition, parse_ann_field, probabilities_csv};
use superpatch::io::{label_csv, load_image, load_labelmap, parse_label_csv, save_image, save_labelmap};
use superpatch::CliError;
use superpatch_core::spm::RunResult;
use superpatch_core::{AnnField, Decomposition, FeatureConfig, FeatureTable, ImageGrid, LabelFusionMap, LabelMap, Match};

#[test]
fn white_png_loads_as_ones() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("white.png");
    image::RgbImage::from_pixel(2, 2, image::Rgb([255, 255, 255])).save(&p).unwrap();
    let img = load_image(&p).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (2, 2, 3));
    assert!(img.data().iter().all(|&v| v == 1.0));
}

#[test]
fn lfw_sized_image_loads() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("face.ppm");
    image::RgbImage::from_pixel(250, 250, image::Rgb([10, 20, 30])).save(&p).unwrap();
    let img = load_image(&p).unwrap();
    assert_eq!((img.width(), img.height(), img.channels()), (250, 250, 3));
}

#[test]
fn truncated_png_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.png");
    image::RgbImage::from_pixel(16, 16, image::Rgb([1, 2, 3])).save(&p).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    std::fs::write(&p, &bytes[..bytes.len() / 2]).unwrap();
    let err = load_image(&p).unwrap_err();
    assert!(matches!(err, CliError::Io { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn label_csv_cases() {
    let m = parse_label_csv("0,1\n2,0").unwrap();
    assert_eq!((m.width(), m.height()), (2, 2));
    assert_eq!(m.labels(), &[0, 1, 2, 0]);
    let err = parse_label_csv("0,-1\n1,1").unwrap_err();
    assert!(matches!(err, CliError::Core(superpatch_core::Error::Domain(_))), "{err:?}");
}

#[test]
fn three_class_mask_png() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("mask.png");
    let labels: Vec<u32> = (0..64).map(|i| (i % 3) as u32).collect();
    save_labelmap(&LabelMap::new(8, 8, labels).unwrap(), &p).unwrap();
    let m = load_labelmap(&p).unwrap();
    assert!(m.labels().iter().all(|&l| l < 3));
    assert_eq!(m.label_bound(), 3);
}

#[test]
fn decomposition_round_trip_through_png_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.png");
    let d = Decomposition::grid(9, 7, 3, 2).unwrap();
    export_decomposition(&d, &p).unwrap();
    assert!(dir.path().join("d.json").exists());
    assert_eq!(import_decomposition(&p).unwrap(), d);
}

#[test]
fn inconsistent_sidecar_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.png");
    export_decomposition(&Decomposition::grid(4, 4, 2, 2).unwrap(), &p).unwrap();
    let other = Decomposition::grid(4, 4, 4, 2).unwrap();
    save_labelmap(&other.label_map(), &p).unwrap();
    assert!(import_decomposition(&p).is_err());
}

#[test]
fn probabilities_csv_layout() {
    let map = LabelFusionMap::from_rows(&[vec![0.25, 0.75], vec![1.0, 0.0]]).unwrap();
    let csv = probabilities_csv(&map);
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("superpixel,p0,p1"));
    assert!(lines.next().unwrap().starts_with("0,0.25,0.75"));
}

fn match_strategy() -> impl Strategy<Value = Match> {
    (0usize..4, 0usize..50, 0.0f64..1e6).prop_map(|(image, superpixel, distance)| Match {
        image,
        superpixel,
        distance,
    })
}

proptest! {
    #[test]
    fn label_map_round_trips(w in 1usize..12, h in 1usize..12, seed in prop::collection::vec(0u32..70000, 144)) {
        let labels: Vec<u32> = seed[..w * h].iter().map(|&l| l % 65536).collect();
        let map = LabelMap::new(w, h, labels).unwrap();
        prop_assert_eq!(parse_label_csv(&label_csv(&map)).unwrap(), map.clone());
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        save_labelmap(&map, &p).unwrap();
        prop_assert_eq!(load_labelmap(&p).unwrap(), map);
    }

    #[test]
    fn sixteen_bit_images_round_trip(w in 1usize..10, h in 1usize..10, c in prop::sample::select(vec![1usize, 3]), seed in prop::collection::vec(0u16..=u16::MAX, 300)) {
        let data: Vec<f64> = seed[..w * h * c].iter().map(|&v| v as f64 / 65535.0).collect();
        let img = ImageGrid::new(w, h, c, data).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("i.png");
        save_image(&img, &p, true).unwrap();
        prop_assert_eq!(load_image(&p).unwrap(), img);
    }

    #[test]
    fn ann_field_jsonl_round_trips(rows in prop::collection::vec(prop::collection::vec(match_strategy(), 3), 1..20)) {
        let field = AnnField {
            matches: rows.clone(),
            traces: vec![],
            evaluations: vec![],
        };
        prop_assert_eq!(parse_ann_field(&ann_field_jsonl(&field)).unwrap(), rows);
    }

    #[test]
    fn feature_cache_round_trips(n in 1usize..10, dim in 1usize..6, seed in prop::collection::vec(-1e3f64..1e3, 60)) {
        let img = ImageGrid::filled(n, 1, 1, 0.5).unwrap();
        let d = Decomposition::grid(n, 1, 1, 1).unwrap();
        let key = CacheKey::new(&img, &d, &FeatureConfig::default());
        let table = FeatureTable::new(dim, seed[..n * dim].to_vec()).unwrap();
        let bytes = encode(&key, &table);
        prop_assert_eq!(decode(std::path::Path::new("c"), &bytes, &key).unwrap(), table);
        let other = CacheKey::new(&ImageGrid::filled(n, 1, 1, 0.25).unwrap(), &d, &FeatureConfig::default());
        let is_stale = matches!(decode(std::path::Path::new("c"), &bytes, &other), Err(CliError::StaleCache { .. }));
        prop_assert!(is_stale);
    }
}

#[test]
fn ann_field_from_runs_serializes_per_superpixel() {
    let m = |sp, d| Match {
        image: 0,
        superpixel: sp,
        distance: d,
    };
    let runs = vec![
        RunResult {
            matches: vec![m(1, 0.5), m(2, 0.25)],
            trace: vec![vec![0.5], vec![0.25]],
            evaluations: vec![],
        },
        RunResult {
            matches: vec![m(3, 0.75), m(0, 0.0)],
            trace: vec![vec![0.75], vec![0.0]],
            evaluations: vec![],
        },
    ];
    let text = ann_field_jsonl(&AnnField::from_runs(runs));
    assert_eq!(
        text.lines().next().unwrap(),
        r#"{"i":0,"matches":[{"img":0,"sp":1,"d":0.5},{"img":0,"sp":3,"d":0.75}]}"#
    );
}
