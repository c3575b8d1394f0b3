use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucbs_core::dataset::{
    build_auxiliary_dataset, load_manifest, load_other_classes, load_split, make_validation_scenarios, save_manifest,
    ManifestWarning, Part, ScenarioKind,
};
use ucbs_core::synth::{generate, write_split, SynthConfig};
use ucbs_core::{slic_segment, Error, Image, SlicParams};

fn noise(seed: u64, class: &str) -> Image {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let px = (0..24 * 24 * 3).map(|_| rng.random_range(0..=255u8) as f32 / 255.0).collect();
    Image::new(24, 24, 3, px, format!("{class}{seed}")).unwrap().with_class(class)
}

fn same_content(a: &Image, b: &Image) -> bool {
    a.id == b.id && a.class_label == b.class_label && a.pixels() == b.pixels()
}

#[test]
fn superpixel_count_is_sum_of_realized_counts() {
    let targets: Vec<Image> = (0..12).map(|i| noise(i, "t")).collect();
    let others: Vec<Image> = (100..110).map(|i| noise(i, "o")).collect();
    for (m, k, seed) in [(3, 4, 0), (5, 9, 1), (12, 2, 2)] {
        let slic = SlicParams::with_k(k);
        let d = build_auxiliary_dataset("t", &targets, &others, m, &slic, 4, seed).unwrap();
        let brute: usize = d
            .provenance
            .segmented_ids
            .iter()
            .map(|id| {
                let img = targets.iter().find(|t| &t.id == id).unwrap();
                slic_segment(img, &slic).unwrap().count()
            })
            .sum();
        assert_eq!(d.superpixels.len(), brute);
        assert_eq!(d.provenance.segmented_ids.len(), m);
        assert_eq!(d.ood.len(), 4);
        assert_eq!(d.originals.len(), 12);
        // labels by part
        for (part, img) in d.samples() {
            match part {
                Part::OutOfDistribution => {
                    assert_eq!(part.label(), 0);
                    assert_eq!(img.class_label.as_deref(), Some("o"));
                }
                _ => assert_eq!(part.label(), 1),
            }
        }
        let again = build_auxiliary_dataset("t", &targets, &others, m, &slic, 4, seed).unwrap();
        assert_eq!(again.provenance, d.provenance);
        assert!(again.superpixels.iter().zip(&d.superpixels).all(|(a, b)| a == b));
    }
}

#[test]
fn single_segment_superpixel_equals_original() {
    let targets = vec![noise(1, "t")];
    let others = vec![noise(2, "o")];
    let d = build_auxiliary_dataset("t", &targets, &others, 1, &SlicParams::with_k(1), 1, 0).unwrap();
    assert_eq!(d.superpixels.len(), 1);
    assert_eq!(d.superpixels[0].image.pixels(), targets[0].pixels());
}

#[test]
fn insufficient_sources() {
    let targets = vec![noise(1, "t")];
    let others = vec![noise(2, "o")];
    let slic = SlicParams::with_k(4);
    assert!(matches!(
        build_auxiliary_dataset("t", &targets, &others, 2, &slic, 1, 0),
        Err(Error::InvalidArgument(_))
    ));
    assert!(matches!(
        build_auxiliary_dataset("t", &targets, &others, 1, &slic, 2, 0),
        Err(Error::InvalidArgument(_))
    ));
}

#[test]
fn validation_scenario_sizes() {
    let small = |seed: u64, class: &str| {
        Image::new(8, 8, 1, vec![(seed % 255) as f32 / 255.0; 64], format!("{class}{seed}")).unwrap()
    };
    let pos: Vec<Image> = (0..50).map(|i| small(i, "p")).collect();
    let neg: Vec<Image> = (0..1200).map(|i| small(i, "n")).collect();
    let s = make_validation_scenarios(&pos, &neg, 1000, 4).unwrap();
    let shape: Vec<(ScenarioKind, usize, usize)> =
        s.iter().map(|v| (v.kind, v.positives.len(), v.negatives.len())).collect();
    assert_eq!(
        shape,
        vec![
            (ScenarioKind::ValPure, 50, 0),
            (ScenarioKind::ValEqual, 50, 50),
            (ScenarioKind::ValN, 50, 1000)
        ]
    );
    let again = make_validation_scenarios(&pos, &neg, 1000, 4).unwrap();
    assert_eq!(s, again);
    assert!(make_validation_scenarios(&pos, &neg, 0, 4).is_err());
    assert!(make_validation_scenarios(&pos, &neg[..40], 10, 4).is_err());
}

fn written_dataset(dir: &std::path::Path) -> ucbs_core::dataset::AuxiliaryDataset {
    let cfg = SynthConfig {
        train_per_class: 12,
        val_per_class: 2,
        seed: 5,
        ..Default::default()
    };
    let split = generate(&cfg).unwrap();
    let data = dir.join("data");
    write_split(&split, &data).unwrap();
    let target = &split.class_names[0];
    let targets = load_split(&data, target, "train").unwrap();
    let others = load_other_classes(&data, target, "train").unwrap();
    build_auxiliary_dataset(target, &targets, &others, 3, &SlicParams::with_k(6), 5, 8).unwrap()
}

#[test]
fn manifest_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = written_dataset(dir.path());
    let path = dir.path().join("out").join("aux_c0.json");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    save_manifest(&d, &path).unwrap();
    let loaded = load_manifest(&path).unwrap();
    assert!(loaded.warnings.is_empty(), "{:?}", loaded.warnings);
    let l = loaded.dataset;
    assert_eq!(l.target_class, d.target_class);
    assert_eq!(l.provenance, d.provenance);
    assert_eq!(l.originals.len(), d.originals.len());
    assert!(l.originals.iter().zip(&d.originals).all(|(a, b)| same_content(a, b)));
    assert!(l.ood.iter().zip(&d.ood).all(|(a, b)| same_content(a, b)));
    assert_eq!(l.superpixels.len(), d.superpixels.len());
    for (a, b) in l.superpixels.iter().zip(&d.superpixels) {
        assert_eq!((a.segment_index, &a.parent_id, &a.mask), (b.segment_index, &b.parent_id, &b.mask));
        assert_eq!(a.image.pixels(), b.image.pixels());
    }
    for (a, b) in l.segmented.iter().zip(&d.segmented) {
        assert_eq!((a.parent, &a.mask), (b.parent, &b.mask));
    }
    // saving twice gives the same bytes
    let first = std::fs::read(&path).unwrap();
    save_manifest(&d, &path).unwrap();
    assert_eq!(first, std::fs::read(&path).unwrap());
}

#[test]
fn edited_manifest_loads_with_warnings() {
    let dir = tempfile::tempdir().unwrap();
    let d = written_dataset(dir.path());
    let path = dir.path().join("aux.json");
    save_manifest(&d, &path).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    v["ood"].as_array_mut().unwrap().pop();
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    let loaded = load_manifest(&path).unwrap();
    assert_eq!(loaded.dataset.ood.len(), d.ood.len() - 1);
    assert!(loaded.warnings.iter().any(|w| matches!(w, ManifestWarning::ChecksumMismatch { .. })));
    assert!(loaded.warnings.iter().any(|w| matches!(
        w,
        ManifestWarning::CountMismatch { part: Part::OutOfDistribution, .. }
    )));
}

#[test]
fn truncated_and_future_manifests_fail() {
    let dir = tempfile::tempdir().unwrap();
    let d = written_dataset(dir.path());
    let path = dir.path().join("aux.json");
    save_manifest(&d, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();

    let cut = dir.path().join("cut.json");
    std::fs::write(&cut, &text[..text.len() / 2]).unwrap();
    let err = load_manifest(&cut).unwrap_err();
    assert!(matches!(err, Error::Format { expected: 1, .. }), "{err}");
    assert!(err.to_string().contains("byte offset"), "{err}");

    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["version"] = 2.into();
    let future = dir.path().join("future.json");
    std::fs::write(&future, serde_json::to_string(&v).unwrap()).unwrap();
    assert!(matches!(
        load_manifest(&future),
        Err(Error::VersionMismatch { found: 2, expected: 1, .. })
    ));

    let missing = dir.path().join("nope.json");
    let err = load_manifest(&missing).unwrap_err();
    assert!(err.to_string().contains("nope.json"), "{err}");
}
