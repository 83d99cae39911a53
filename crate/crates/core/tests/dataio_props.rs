use fundus_core::dataio::{
    apply_plan, load_image, load_mask, sample_plan, save_image, save_mask, split_dataset, synth_generate,
    write_corpus, DatasetManifest, Record, Split, SyntheticSpec,
};
use fundus_core::segnet::SegMask;
use fundus_core::Tensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn augmentation_keeps_image_and_mask_aligned() {
    let n = 16;
    let labels: Vec<u8> = (0..n * n).map(|i| ((i * 7) % 3 == 0) as u8).collect();
    let mask = SegMask::new(n, n, labels.clone()).unwrap();
    let image = Tensor::new(vec![n, n, 1], labels.iter().map(|&l| l as f64).collect()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..50 {
        if let Some(plan) = sample_plan(n, &mut rng) {
            let (img, m) = apply_plan(&image, Some(&mask), &plan).unwrap();
            let m = m.unwrap();
            let from_img: Vec<u8> = img.data().iter().map(|&v| (v >= 0.5) as u8).collect();
            assert_eq!(from_img, m.labels);
        }
    }
}

#[test]
fn png_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let img = Tensor::new(vec![8, 8, 3], (0..192).map(|i| (i % 256) as f64 / 255.0).collect()).unwrap();
    save_image(&dir.path().join("a.png"), &img).unwrap();
    let back = load_image(&dir.path().join("a.png"), 8).unwrap();
    assert!(back.max_abs_diff(&img) < 1e-12);
    let mask = SegMask::new(8, 8, (0..64).map(|i| (i % 5 == 0) as u8).collect()).unwrap();
    save_mask(&dir.path().join("m.png"), &mask).unwrap();
    assert_eq!(load_mask(&dir.path().join("m.png"), 8).unwrap(), mask);
}

#[test]
fn stratified_split_proportions() {
    let classes = vec!["a".to_string(), "b".to_string()];
    let records = (0..100)
        .map(|i| Record { image_path: format!("img{i}.png").into(), label: classes[i % 2].clone(), split: Split::Unassigned })
        .collect();
    let m = DatasetManifest::new(classes, records).unwrap();
    let s = split_dataset(&m, [0.7, 0.1, 0.2], 1, true).unwrap();
    assert_eq!(s.count(Split::Train), 70);
    assert_eq!(s.count(Split::Val), 10);
    assert_eq!(s.count(Split::Test), 20);
    assert_eq!(s, split_dataset(&m, [0.7, 0.1, 0.2], 1, true).unwrap());
}

#[test]
fn written_corpus_is_byte_identical_for_same_seed() {
    let spec = SyntheticSpec { n_classes: 3, n_per_class: 2, image_size: 32, ..SyntheticSpec::default() };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_corpus(&synth_generate(&spec).unwrap(), a.path()).unwrap();
    write_corpus(&synth_generate(&spec).unwrap(), b.path()).unwrap();
    for sub in ["images", "masks"] {
        for entry in std::fs::read_dir(a.path().join(sub)).unwrap() {
            let e = entry.unwrap();
            let other = b.path().join(sub).join(e.file_name());
            assert_eq!(std::fs::read(e.path()).unwrap(), std::fs::read(other).unwrap());
        }
    }
    assert_eq!(
        std::fs::read(a.path().join("manifest.csv")).unwrap(),
        std::fs::read(b.path().join("manifest.csv")).unwrap()
    );
}
