use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bcs_core::acquisition::{self, CalibrationParams, DarkMode, DetectorModel, TargetScene};
use bcs_core::container;
use bcs_core::data::{load_corpus, split_corpus, AugmentConfig};
use bcs_core::metrics::evaluate_set;
use bcs_core::sensing::{generate_block_matrix, sample_image, valid_ratios};
use bcs_core::tv::{tv_reconstruct_traced, TvConfig};
use bcs_core::{BlockMatrix, Error, ImagePlane, SamplingConfig};
use bcs_unet::{ModelArtifact, ModelConfig, Network, TrainConfig};
use log::{info, warn};

use crate::sidecar::RunRecord;
use crate::{CalibrateArgs, EvaluateArgs, GenMatrixArgs, ReconstructArgs, SampleArgs, SimulateArgs, TrainArgs};

fn read_matrix(path: &Path) -> Result<BlockMatrix> {
    container::read_matrix(path).with_context(|| format!("reading matrix {}", path.display()))
}

fn read_image(path: &Path) -> Result<ImagePlane> {
    ImagePlane::load(path).with_context(|| format!("reading image {}", path.display()))
}

/// Parses `AxB` into `(A, B)`.
fn parse_pair(text: &str, what: &str) -> Result<(usize, usize)> {
    let parse = || -> Option<(usize, usize)> {
        let (a, b) = text.split_once(['x', 'X'])?;
        Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
    };
    match parse() {
        Some((a, b)) if a > 0 && b > 0 => Ok((a, b)),
        _ => Err(Error::Argument(format!("{what} must look like 32x32, got {text:?}")).into()),
    }
}

fn record_matrix(record: &mut RunRecord, path: &Path, matrix: &BlockMatrix) {
    record
        .path("matrix", path)
        .set("matrix_fingerprint", matrix.fingerprint())
        .set("block_size", matrix.block_size())
        .set("measurements_per_block", matrix.rows())
        .set("ratio", matrix.ratio());
}

pub fn gen_matrix(args: &GenMatrixArgs) -> Result<()> {
    let config = SamplingConfig::new(args.block, args.ratio, args.seed);
    if args.block >= 2 && !config.is_realizable() {
        let valid: Vec<String> = valid_ratios(args.block).iter().map(|r| r.to_string()).collect();
        return Err(Error::InvalidRatio(format!(
            "{} is not realizable with {}x{} blocks; valid ratios are multiples of 1/{}: {}",
            args.ratio,
            args.block,
            args.block,
            args.block * args.block,
            valid.join(", ")
        ))
        .into());
    }
    let matrix = generate_block_matrix(&config)?;
    let zero = matrix.zero_rows();
    if !zero.is_empty() {
        warn!("matrix rows {zero:?} are all zero and will measure nothing; consider another seed");
    }
    container::write_matrix(&matrix, &args.out)?;
    println!("{}", matrix.fingerprint());
    let mut record = RunRecord::new("gen-matrix");
    record
        .set("block", args.block)
        .set("ratio", args.ratio)
        .set("seed", args.seed)
        .path("out", &args.out)
        .set("matrix_fingerprint", matrix.fingerprint())
        .set("measurements_per_block", matrix.rows())
        .set("zero_rows", zero.len());
    record.write_for(&args.out)?;
    Ok(())
}

pub fn sample(args: &SampleArgs) -> Result<()> {
    let matrix = read_matrix(&args.matrix)?;
    let image = read_image(&args.image)?;
    let tensor = sample_image(&matrix, &image)?;
    container::write_tensor(&tensor, &args.out)?;
    let (h, w, c) = tensor.shape();
    info!("wrote {h}x{w}x{c} tensor ({} measurements)", tensor.len());
    let mut record = RunRecord::new("sample");
    record_matrix(&mut record, &args.matrix, &matrix);
    record
        .path("image", &args.image)
        .set("image_size", format!("{}x{}", image.width(), image.height()))
        .set("tensor_shape", format!("{h}x{w}x{c}"))
        .path("out", &args.out);
    record.write_for(&args.out)?;
    Ok(())
}

pub fn simulate_acquire(args: &SimulateArgs) -> Result<()> {
    let matrix = read_matrix(&args.matrix)?;
    let scene = TargetScene::new(read_image(&args.scene)?);
    let detector = DetectorModel { gain: args.gain, dark_offset: args.dark, noise_sigma: args.noise };
    let raw = acquisition::acquire(&scene, &matrix, &detector, args.seed)?;
    container::write_raw(&raw, &args.out)?;
    info!(
        "acquired {} voltages; dark {:.6}, all-ON {:.6}",
        raw.voltages.len(),
        raw.dark_reading,
        raw.bright_reading
    );
    let mut record = RunRecord::new("simulate-acquire");
    record_matrix(&mut record, &args.matrix, &matrix);
    record
        .path("scene", &args.scene)
        .set("scene_size", format!("{}x{}", scene.width(), scene.height()))
        .set("gain", args.gain)
        .set("dark", args.dark)
        .set("noise", args.noise)
        .set("seed", args.seed)
        .set("dark_reading", raw.dark_reading)
        .set("bright_reading", raw.bright_reading)
        .path("out", &args.out);
    record.write_for(&args.out)?;
    Ok(())
}

pub fn calibrate(args: &CalibrateArgs) -> Result<()> {
    let matrix = read_matrix(&args.matrix)?;
    let raw = container::read_raw(&args.raw).with_context(|| format!("reading {}", args.raw.display()))?;
    if raw.matrix_fingerprint != matrix.fingerprint() {
        return Err(Error::Provenance(format!(
            "{} was acquired with matrix {} but {} has fingerprint {}",
            args.raw.display(),
            raw.matrix_fingerprint,
            args.matrix.display(),
            matrix.fingerprint()
        ))
        .into());
    }
    let (grid_h, grid_w) = match &args.grid {
        Some(text) => parse_pair(text, "--grid")?,
        None => {
            let side = acquisition::infer_square_grid(raw.voltages.len(), matrix.rows())?;
            (side, side)
        }
    };
    let (height, width) = (grid_h * matrix.block_size(), grid_w * matrix.block_size());
    let (params, source) = match (args.a, args.b) {
        (Some(a), Some(b)) => (CalibrationParams::new(a, b)?, "override"),
        _ => {
            let mode = if args.assume_zero_dark { DarkMode::AssumeZero } else { DarkMode::Measured };
            (acquisition::estimate_params(&raw, height, width, mode)?, "estimated")
        }
    };
    let tensor = acquisition::calibrate(&raw, &params, &matrix, grid_h, grid_w)?;
    container::write_tensor(&tensor, &args.out)?;
    info!("calibrated with a={} b={} ({source})", params.a, params.b);
    let mut record = RunRecord::new("calibrate");
    record_matrix(&mut record, &args.matrix, &matrix);
    record
        .path("raw", &args.raw)
        .set("grid", format!("{grid_h}x{grid_w}"))
        .set("a", params.a)
        .set("b", params.b)
        .set("params_source", source)
        .set("assume_zero_dark", args.assume_zero_dark)
        .path("out", &args.out);
    record.write_for(&args.out)?;
    Ok(())
}

fn loss_log_path(args: &TrainArgs) -> PathBuf {
    args.loss_log.clone().unwrap_or_else(|| {
        let mut name = args.out.as_os_str().to_owned();
        name.push(".loss.csv");
        PathBuf::from(name)
    })
}

pub fn train(args: &TrainArgs) -> Result<()> {
    let matrix = read_matrix(&args.matrix)?;
    let corpus = load_corpus(&args.corpus)?;
    let split = split_corpus(&corpus, args.seed)?;
    info!(
        "corpus of {}: {} train / {} validation / {} test",
        corpus.len(),
        split.train.len(),
        split.validation.len(),
        split.test.len()
    );
    let model_config = ModelConfig {
        upsample_channels: args.upsample_channels,
        encoder_channels: args.encoder_channels.clone(),
        ..ModelConfig::new(matrix.rows())
    };
    let train_config = TrainConfig {
        batch_size: args.batch_size,
        initial_lr: args.lr,
        plateau_factor: args.plateau_factor,
        plateau_patience: args.plateau_patience,
        max_epochs: args.max_epochs,
        early_stop_patience: args.early_stop_patience,
        weight_decay: args.weight_decay,
        seed: args.seed,
        augment: if args.no_augment { AugmentConfig::disabled() } else { AugmentConfig::default() },
    };
    let mut record = RunRecord::new("train");
    record_matrix(&mut record, &args.matrix, &matrix);
    record
        .path("corpus", &args.corpus)
        .set("corpus_size", corpus.len())
        .set("train_images", split.train.len())
        .set("validation_images", split.validation.len())
        .set("test_images", split.test.len())
        .set("test_split", split.test.iter().map(|n| n.name.as_str()).collect::<Vec<_>>().join(","))
        .set("batch_size", train_config.batch_size)
        .set("lr", train_config.initial_lr)
        .set("plateau_factor", train_config.plateau_factor)
        .set("plateau_patience", train_config.plateau_patience)
        .set("max_epochs", train_config.max_epochs)
        .set("early_stop_patience", train_config.early_stop_patience)
        .set("weight_decay", train_config.weight_decay)
        .set("seed", args.seed)
        .set("augment", train_config.augment.enabled)
        .set("upsample_channels", model_config.upsample_channels)
        .set(
            "encoder_channels",
            model_config.encoder_channels.iter().map(usize::to_string).collect::<Vec<_>>().join(","),
        )
        .set("leaky_slope", model_config.leaky_slope);

    let network = Network::new(model_config, args.seed)?;
    let images = |items: &[bcs_core::data::NamedImage]| items.iter().map(|n| n.image.clone()).collect::<Vec<_>>();
    let outcome = bcs_unet::train(network, &images(&split.train), &images(&split.validation), &matrix, &train_config)?;
    let log_path = loss_log_path(args);
    if let Some(dir) = log_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(&log_path, outcome.history_csv())?;
    outcome.artifact.save(&args.out)?;
    let meta = &outcome.artifact.metadata;
    let last = outcome.history.last().expect("at least one epoch");
    info!("trained {} epochs; best validation MAE {:?}", meta.epochs, meta.val_loss);
    record
        .path("loss_log", &log_path)
        .path("out", &args.out)
        .set("epochs_run", meta.epochs)
        .set("best_epoch", meta.best_epoch.map_or("none".to_string(), |e| e.to_string()))
        .set("best_val_loss", meta.val_loss.map_or("none".to_string(), |v| v.to_string()))
        .set("final_train_loss", last.train_loss)
        .set("final_lr", last.lr);
    record.write_for(&args.out)?;
    Ok(())
}

pub fn reconstruct(args: &ReconstructArgs) -> Result<()> {
    let tensor = container::read_tensor(&args.tensor).with_context(|| format!("reading {}", args.tensor.display()))?;
    let mut record = RunRecord::new("reconstruct");
    record.path("tensor", &args.tensor).set("tensor_fingerprint", tensor.matrix_fingerprint());
    let dims = args.dims.as_deref().map(|d| parse_pair(d, "--dims")).transpose()?;
    let image = match &args.artifact {
        Some(path) => {
            let artifact = ModelArtifact::load(path).with_context(|| format!("reading artifact {}", path.display()))?;
            if let Some(matrix_path) = &args.matrix {
                let matrix = read_matrix(matrix_path)?;
                if matrix.fingerprint() != artifact.matrix_fingerprint() {
                    return Err(Error::Provenance(format!(
                        "artifact was trained for matrix {} but {} has {}",
                        artifact.matrix_fingerprint(),
                        matrix_path.display(),
                        matrix.fingerprint()
                    ))
                    .into());
                }
            }
            let image = artifact.reconstruct(&tensor)?;
            if let Some((w, h)) = dims {
                if (w, h) != (image.width(), image.height()) {
                    bail!(Error::Shape(format!(
                        "the model produces {}x{} images from this tensor, not {w}x{h}",
                        image.width(),
                        image.height()
                    )));
                }
            }
            record
                .set("method", "unet")
                .path("artifact", path)
                .set("artifact_fingerprint", artifact.matrix_fingerprint());
            image
        }
        None => {
            let matrix_path = args.matrix.as_ref().context("--tv needs --matrix")?;
            let matrix = read_matrix(matrix_path)?;
            let (w, h) = dims.unwrap_or((tensor.grid_w() * matrix.block_size(), tensor.grid_h() * matrix.block_size()));
            let config = TvConfig { lambda: args.lambda, max_iters: args.max_iters, tol: args.tol, ..TvConfig::default() };
            let solution = tv_reconstruct_traced(&matrix, &tensor, w, h, &config)?;
            info!(
                "TV converged after {} iterations, objective {:.6e}",
                solution.iterations,
                solution.objective_trace.last().copied().unwrap_or(f64::NAN)
            );
            record_matrix(&mut record, matrix_path, &matrix);
            record
                .set("method", "tv")
                .set("lambda", config.lambda)
                .set("max_iters", config.max_iters)
                .set("tol", config.tol)
                .set("smoothing_eps", config.smoothing_eps)
                .set("iterations", solution.iterations);
            solution.image
        }
    };
    image.write_pgm(&args.out)?;
    record.set("dims", format!("{}x{}", image.width(), image.height())).path("out", &args.out);
    record.write_for(&args.out)?;
    Ok(())
}

fn image_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "pgm" | "png"))
        })
        .collect();
    files.sort();
    Ok(files)
}

pub fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let mut pairs = Vec::new();
    for reference in image_files(&args.reference)? {
        let name = reference.file_name().expect("listed file").to_os_string();
        let stem = reference.file_stem().expect("listed file").to_os_string();
        let exact = args.reconstruction.join(&name);
        let candidate = if exact.is_file() {
            Some(exact)
        } else {
            // allow a PNG reference to pair with a PGM reconstruction
            let mut pgm = stem;
            pgm.push(".pgm");
            Some(args.reconstruction.join(pgm)).filter(|p| p.is_file())
        };
        match candidate {
            Some(recon) => pairs.push((name.to_string_lossy().into_owned(), read_image(&reference)?, read_image(&recon)?)),
            None => warn!("no reconstruction for {}", reference.display()),
        }
    }
    if pairs.is_empty() {
        return Err(Error::Argument(format!(
            "no matching image pairs between {} and {}",
            args.reference.display(),
            args.reconstruction.display()
        ))
        .into());
    }
    let report = evaluate_set(pairs.iter().map(|(n, r, x)| (n.clone(), r, x)), &args.method, &args.dataset, args.ratio)?;
    fs::write(&args.out, report.to_csv())?;
    print!("{}", report.to_table());
    let mut record = RunRecord::new("evaluate");
    record
        .path("reference", &args.reference)
        .path("reconstruction", &args.reconstruction)
        .set("method", &args.method)
        .set("dataset", &args.dataset)
        .set("ratio", args.ratio)
        .set("pairs", report.scores.len())
        .set("mean_psnr_db", report.mean_psnr_db)
        .set("mean_ssim", report.mean_ssim)
        .path("out", &args.out);
    record.write_for(&args.out)?;
    Ok(())
}
