//! End-to-end flows across modules, through files where the CLI would.

use bcs_core::acquisition::{acquire, calibrate, CalibrationParams, DetectorModel, TargetScene};
use bcs_core::container::{read_matrix, read_raw, read_tensor, write_matrix, write_raw, write_tensor};
use bcs_core::data::synthetic::{scene, SceneKind};
use bcs_core::data::{load_corpus, split_corpus};
use bcs_core::metrics::{evaluate_set, psnr};
use bcs_core::sensing::{generate_block_matrix, sample_image};
use bcs_core::tv::{tv_reconstruct_traced, TvConfig};
use bcs_core::{Error, ImagePlane, SamplingConfig};

#[test]
fn acquire_calibrate_reconstruct_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let matrix = generate_block_matrix(&SamplingConfig::new(4, 0.5, 9)).unwrap();
    write_matrix(&matrix, dir.path().join("a.bcsm")).unwrap();
    let matrix = read_matrix(dir.path().join("a.bcsm")).unwrap();

    let image = scene(SceneKind::Shapes, 32, 4);
    let detector = DetectorModel { gain: 0.7, dark_offset: 0.05, noise_sigma: 0.0 };
    let raw = acquire(&TargetScene::new(image.clone()), &matrix, &detector, 1).unwrap();
    write_raw(&raw, dir.path().join("r.bcsr")).unwrap();
    let raw = read_raw(dir.path().join("r.bcsr")).unwrap();

    // With a = g·min and b = g·max the calibrated data samples the
    // min-max normalized scene.
    let (lo, hi) = image.min_max();
    let params = CalibrationParams::new(detector.gain * lo, detector.gain * hi).unwrap();
    let tensor = calibrate(&raw, &params, &matrix, 8, 8).unwrap();
    write_tensor(&tensor, dir.path().join("y.bcsy")).unwrap();
    let tensor = read_tensor(dir.path().join("y.bcsy")).unwrap();
    assert_eq!(tensor.shape(), (8, 8, matrix.rows()));

    let solution = tv_reconstruct_traced(&matrix, &tensor, 32, 32, &TvConfig::default()).unwrap();
    assert!(solution.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(solution.image.pixels().iter().all(|p| (0.0..=1.0).contains(p)));
    // Reconstructing a normalized scene from calibrated data at S = 0.5
    // beats a flat grey guess by a wide margin.
    let grey = ImagePlane::filled(32, 32, 0.5).unwrap();
    let normalized = TargetScene::new(image).normalized();
    let recon = psnr(&normalized, &solution.image).unwrap();
    assert!(recon > psnr(&normalized, &grey).unwrap() + 5.0, "TV PSNR {recon}");
}

#[test]
fn tensor_from_another_matrix_is_rejected() {
    let a = generate_block_matrix(&SamplingConfig::new(4, 0.25, 1)).unwrap();
    let b = generate_block_matrix(&SamplingConfig::new(4, 0.25, 2)).unwrap();
    let y = sample_image(&a, &scene(SceneKind::Strokes, 32, 0)).unwrap();
    let err = tv_reconstruct_traced(&b, &y, 32, 32, &TvConfig::default()).unwrap_err();
    assert!(matches!(err, Error::Provenance(_)), "{err:?}");
}

#[test]
fn corpus_directory_loads_splits_and_scores() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("nested")).unwrap();
    for i in 0..20 {
        let sub = if i % 2 == 0 { "" } else { "nested" };
        scene(SceneKind::Shapes, 32, i).write_pgm(dir.path().join(sub).join(format!("s{i:02}.pgm"))).unwrap();
    }
    std::fs::write(dir.path().join("notes.txt"), "not an image").unwrap();

    let corpus = load_corpus(dir.path()).unwrap();
    assert_eq!(corpus.len(), 20);
    let split = split_corpus(&corpus, 5).unwrap();
    assert_eq!((split.train.len(), split.validation.len(), split.test.len()), (16, 2, 2));
    assert_eq!(split, split_corpus(&corpus, 5).unwrap());

    let pairs: Vec<_> = split.test.iter().map(|n| (n.name.clone(), &n.image, &n.image)).collect();
    let report = evaluate_set(pairs, "identity", "shapes", 1.0).unwrap();
    assert_eq!(report.scores.len(), 2);
    assert_eq!(report.mean_ssim, 1.0);
    assert!(report.to_csv().starts_with("method,dataset,ratio"));
}
