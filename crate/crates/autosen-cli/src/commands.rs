//! Subcommand implementations.
//!
//! Every command is a pure function of its config: outputs are rewritten in
//! full, never appended, so rerunning a command reproduces its files byte
//! for byte.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use autosen::csi::{sanitize_sample, CsiSample};
use autosen::data::{
    cache_read, cache_write, downsample, load_csv, load_label_manifest, make_split,
    window_samples, CsiStream, LabelSpan, ManifestEntry,
};
use autosen::model::{
    evaluate, few_shot_calibrate, metrics_csv, metrics_json, pretrain, run_ablation,
    summary_table, train_full_supervision, AblationGrid, Metrics, Mode, TrainConfig,
};
use autosen::nn::{
    check_gradients, check_gradients_against, load_stacks, save_stacks, Conv2d, ConvTranspose2d,
    Dense, GradCheckConfig, GradCheckReport, Layer, LayerStack,
};
use autosen::seed::rng_from;
use autosen::synth::{default_benchmark_classes, generate_activity_dataset, generate_unlabeled_pool};
use autosen::tensor::Tensor;
use autosen::Error;

use crate::config::{CliError, RunConfig};

type CmdResult = Result<(), CliError>;

fn ensure_out_dir(cfg: &RunConfig) -> CmdResult {
    fs::create_dir_all(&cfg.paths.out_dir)?;
    Ok(())
}

fn class_counts(samples: &[CsiSample], classes: usize) -> Vec<usize> {
    let mut counts = vec![0usize; classes];
    for s in samples {
        if let Some(c) = s.label {
            if c < classes {
                counts[c] += 1;
            }
        }
    }
    counts
}

fn gather(samples: &[CsiSample], idx: &[usize]) -> Vec<CsiSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Generate the synthetic labeled set and unlabeled pool, then cache both.
pub fn cmd_synth(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let classes = default_benchmark_classes(cfg.classes);
    let labeled = generate_activity_dataset(
        &classes,
        cfg.samples_per_class,
        &cfg.channel,
        &cfg.offsets,
        cfg.seed,
    )?;
    let unlabeled = generate_unlabeled_pool(
        &classes,
        cfg.unlabeled_samples,
        &cfg.channel,
        &cfg.offsets,
        cfg.seed,
    )?;
    cache_write(&labeled, &cfg.paths.labeled_cache())?;
    cache_write(&unlabeled, &cfg.paths.unlabeled_cache())?;
    let (t, d) = (labeled[0].timestamps(), labeled[0].channels());
    println!(
        "labeled: {} samples ({} classes x {}), {}x{} each -> {}",
        labeled.len(),
        cfg.classes,
        cfg.samples_per_class,
        t,
        d,
        cfg.paths.labeled_cache().display()
    );
    println!("per-class counts: {:?}", class_counts(&labeled, cfg.classes));
    println!(
        "unlabeled: {} samples -> {}",
        unlabeled.len(),
        cfg.paths.unlabeled_cache().display()
    );
    Ok(())
}

fn sanitize_all(cfg: &RunConfig, samples: &[CsiSample]) -> Result<Vec<CsiSample>, CliError> {
    let antennas = cfg.channel.antennas;
    let per_antenna = cfg.channel.subcarrier_indices.len();
    samples
        .iter()
        .map(|s| {
            sanitize_sample(s, antennas, per_antenna, &cfg.channel.subcarrier_indices)
                .map_err(CliError::from)
        })
        .collect()
}

fn ingest_stream(cfg: &RunConfig, path: &Path) -> Result<CsiStream, CliError> {
    let stream = load_csv(path, &cfg.layout)?;
    Ok(downsample(&stream, cfg.downsample)?)
}

fn ingest_csv(cfg: &RunConfig) -> Result<(Vec<CsiSample>, Vec<CsiSample>), CliError> {
    let data = cfg.paths.data.as_ref().expect("caller checked");
    let rate = cfg.channel.packet_rate_hz / cfg.downsample as f64;
    let stream = ingest_stream(cfg, data)?;
    let mut labeled = Vec::new();
    let mut unlabeled = Vec::new();
    match &cfg.paths.labels {
        Some(manifest) => {
            let entries = load_label_manifest(manifest)?;
            let spans: Vec<LabelSpan> = entries
                .iter()
                .filter_map(|e| match e {
                    ManifestEntry::Span(s) => Some(*s),
                    ManifestEntry::File { .. } => None,
                })
                .collect();
            for w in window_samples(&stream, cfg.window, cfg.stride, rate, Some(&spans))? {
                if w.label.is_some() {
                    labeled.push(w);
                } else {
                    unlabeled.push(w);
                }
            }
            let base = manifest.parent().unwrap_or_else(|| Path::new("."));
            for e in &entries {
                if let ManifestEntry::File { path, class_id } = e {
                    let p = PathBuf::from(path);
                    let p = if p.is_absolute() { p } else { base.join(p) };
                    let s = ingest_stream(cfg, &p)?;
                    let span = [LabelSpan {
                        start: 0,
                        end: s.rows(),
                        class_id: *class_id,
                    }];
                    labeled.extend(window_samples(&s, cfg.window, cfg.stride, rate, Some(&span))?);
                }
            }
        }
        None => unlabeled = window_samples(&stream, cfg.window, cfg.stride, rate, None)?,
    }
    Ok((labeled, unlabeled))
}

/// Attach sanitized phase to every cached sample, or ingest a CSV recording
/// first when one is configured.
pub fn cmd_sanitize(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    if cfg.paths.data.is_some() {
        let (labeled, unlabeled) = ingest_csv(cfg)?;
        if labeled.is_empty() && unlabeled.is_empty() {
            return Err(Error::InvalidInput("recording produced no windows".into()).into());
        }
        if !labeled.is_empty() {
            let labeled = sanitize_all(cfg, &labeled)?;
            cache_write(&labeled, &cfg.paths.labeled_cache())?;
            println!(
                "labeled: {} windows sanitized -> {}",
                labeled.len(),
                cfg.paths.labeled_cache().display()
            );
        }
        if !unlabeled.is_empty() {
            let unlabeled = sanitize_all(cfg, &unlabeled)?;
            cache_write(&unlabeled, &cfg.paths.unlabeled_cache())?;
            println!(
                "unlabeled: {} windows sanitized -> {}",
                unlabeled.len(),
                cfg.paths.unlabeled_cache().display()
            );
        }
        return Ok(());
    }
    let mut touched = false;
    for path in [cfg.paths.labeled_cache(), cfg.paths.unlabeled_cache()] {
        if !path.exists() {
            continue;
        }
        let samples = sanitize_all(cfg, &cache_read(&path)?)?;
        cache_write(&samples, &path)?;
        println!("{}: {} samples sanitized", path.display(), samples.len());
        touched = true;
    }
    if !touched {
        return Err(Error::MissingInput(format!(
            "no cache at {} or {}; run synth first or set paths.data",
            cfg.paths.labeled_cache().display(),
            cfg.paths.unlabeled_cache().display()
        ))
        .into());
    }
    Ok(())
}

#[derive(Serialize)]
struct LossRecord<'a> {
    mode: Mode,
    latent_size: usize,
    seed: u64,
    epoch_losses: &'a [f64],
}

fn write_loss_files(cfg: &RunConfig, mode: Mode, train: &TrainConfig, losses: &[f64]) -> CmdResult {
    let mut csv = String::from("epoch,loss\n");
    for (i, l) in losses.iter().enumerate() {
        csv.push_str(&format!("{},{}\n", i, l));
    }
    fs::write(cfg.paths.losses_csv(), csv)?;
    let record = LossRecord {
        mode,
        latent_size: train.latent_size,
        seed: train.seed,
        epoch_losses: losses,
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| Error::Format(format!("loss serialization failed: {}", e)))?;
    fs::write(cfg.paths.losses_json(), json)?;
    Ok(())
}

/// Pretrain the autoencoder on the unlabeled cache; store encoder and
/// decoder in the checkpoint and the loss curve in the metrics files.
pub fn cmd_pretrain(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let unlabeled = cache_read(&cfg.paths.unlabeled_cache())?;
    let train = cfg.train_config();
    println!(
        "pretraining {} on {} unlabeled samples ({} epochs, batch {}, lr {})",
        train.mode,
        unlabeled.len(),
        train.epochs,
        train.batch_size,
        train.lr
    );
    let out = pretrain(&unlabeled, &train)?;
    save_stacks(
        &cfg.paths.checkpoint(),
        &[("encoder", &out.encoder), ("decoder", &out.decoder)],
    )?;
    write_loss_files(cfg, train.mode, &train, &out.epoch_losses)?;
    println!(
        "epoch loss: first {:.6}, last {:.6} ({} epochs) -> {}",
        out.epoch_losses[0],
        out.epoch_losses[out.epoch_losses.len() - 1],
        out.epoch_losses.len(),
        cfg.paths.losses_csv().display()
    );
    println!("checkpoint -> {}", cfg.paths.checkpoint().display());
    Ok(())
}

fn take_stack(path: &Path, name: &str) -> Result<LayerStack, CliError> {
    let mut stacks = load_stacks(path)?;
    stacks
        .iter()
        .position(|(n, _)| n == name)
        .map(|i| stacks.swap_remove(i).1)
        .ok_or_else(|| {
            Error::MissingInput(format!("{} has no {:?} section", path.display(), name)).into()
        })
}

/// Calibrate the classifier head on the few-shot split with the pretrained
/// encoder frozen; the checkpoint is rewritten with encoder + classifier.
pub fn cmd_fewshot(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let labeled = cache_read(&cfg.paths.labeled_cache())?;
    let encoder = take_stack(&cfg.paths.checkpoint(), "encoder")?;
    let split = make_split(&labeled, &cfg.split_spec())?;
    let pool = gather(&labeled, &split.fewshot);
    let train = cfg.train_config();
    println!(
        "calibrating on {} labeled samples ({} classes x {} shots)",
        pool.len(),
        cfg.classes,
        cfg.split.shots_per_class
    );
    let cal = few_shot_calibrate(&encoder, &pool, cfg.classes, &train)?;
    save_stacks(
        &cfg.paths.checkpoint(),
        &[("encoder", &encoder), ("classifier", &cal.classifier)],
    )?;
    println!(
        "final calibration loss {:.6} -> {}",
        cal.epoch_losses[cal.epoch_losses.len() - 1],
        cfg.paths.checkpoint().display()
    );
    Ok(())
}

/// Train the supervised baseline end to end and store its checkpoint.
pub fn cmd_fullsup(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let labeled = cache_read(&cfg.paths.labeled_cache())?;
    let split = make_split(&labeled, &cfg.split_spec())?;
    let pool_idx: Vec<usize> = match cfg.fullsup_pool {
        autosen::model::FullSupPool::FewShot => split.fewshot.clone(),
        autosen::model::FullSupPool::AllLabeled => {
            let held: std::collections::HashSet<usize> = split.eval.iter().copied().collect();
            (0..labeled.len()).filter(|i| !held.contains(i)).collect()
        }
    };
    let pool = gather(&labeled, &pool_idx);
    let train = TrainConfig {
        mode: Mode::FullSup,
        ..cfg.train_config()
    };
    println!("full supervision on {} labeled samples", pool.len());
    let sup = train_full_supervision(&pool, cfg.classes, &train)?;
    save_stacks(
        &cfg.paths.checkpoint(),
        &[("encoder", &sup.encoder), ("classifier", &sup.classifier)],
    )?;
    write_loss_files(cfg, Mode::FullSup, &train, &sup.epoch_losses)?;
    println!(
        "final training loss {:.6} -> {}",
        sup.epoch_losses[sup.epoch_losses.len() - 1],
        cfg.paths.checkpoint().display()
    );
    Ok(())
}

/// Evaluate the checkpoint on the eval split and write one metrics row.
pub fn cmd_eval(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let labeled = cache_read(&cfg.paths.labeled_cache())?;
    let encoder = take_stack(&cfg.paths.checkpoint(), "encoder")?;
    let classifier = take_stack(&cfg.paths.checkpoint(), "classifier")?;
    let split = make_split(&labeled, &cfg.split_spec())?;
    let eval_set = gather(&labeled, &split.eval);
    let train = cfg.train_config();
    let (accuracy, per_class) =
        evaluate(&encoder, &classifier, train.mode, &eval_set, cfg.classes)?;
    let row = Metrics {
        mode: train.mode,
        shots: cfg.split.shots_per_class,
        latent_size: train.latent_size,
        seed: cfg.seed,
        epoch_losses: Vec::new(),
        accuracy,
        per_class_accuracy: per_class.clone(),
        encoder_params: encoder.param_count(),
        classifier_params: classifier.param_count(),
    };
    write_metrics(cfg, std::slice::from_ref(&row))?;
    println!("accuracy {:.4} on {} eval samples", accuracy, eval_set.len());
    for (c, acc) in per_class.iter().enumerate() {
        println!("class {}: {:.4}", c, acc);
    }
    Ok(())
}

fn write_metrics(cfg: &RunConfig, rows: &[Metrics]) -> CmdResult {
    fs::write(cfg.paths.metrics_csv(), metrics_csv(rows))?;
    fs::write(cfg.paths.metrics_json(), metrics_json(rows)?)?;
    Ok(())
}

fn run_grid(cfg: &RunConfig, grid: &AblationGrid) -> CmdResult {
    let unlabeled = cache_read(&cfg.paths.unlabeled_cache())?;
    let labeled = cache_read(&cfg.paths.labeled_cache())?;
    let report = run_ablation(&unlabeled, &labeled, cfg.classes, grid)?;
    write_metrics(cfg, &report.rows)?;
    print!("{}", summary_table(&report, &grid.shots));
    println!(
        "{} rows -> {} and {}",
        report.rows.len(),
        cfg.paths.metrics_csv().display(),
        cfg.paths.metrics_json().display()
    );
    Ok(())
}

/// Sweep the configured modes over shots and seeds at one latent size.
pub fn cmd_ablate(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let grid = AblationGrid {
        modes: cfg.modes.clone(),
        shots: cfg.shots.clone(),
        latent_sizes: vec![cfg.train.latent_size],
        seeds: cfg.seeds.clone(),
        eval_per_class: cfg.split.eval_per_class,
        fullsup_pool: cfg.fullsup_pool,
        base: cfg.train_config(),
    };
    run_grid(cfg, &grid)
}

/// Sweep latent sizes for the cross-modal mode over shots and seeds.
pub fn cmd_sweep_latent(cfg: &RunConfig) -> CmdResult {
    ensure_out_dir(cfg)?;
    let grid = AblationGrid {
        modes: vec![Mode::CrossModal],
        shots: cfg.shots.clone(),
        latent_sizes: cfg.latent_sizes.clone(),
        seeds: cfg.seeds.clone(),
        eval_per_class: cfg.split.eval_per_class,
        fullsup_pool: cfg.fullsup_pool,
        base: cfg.train_config(),
    };
    run_grid(cfg, &grid)
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor {
    use rand::Rng;
    let mut rng = rng_from(seed);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .expect("shape matches data")
}

fn gradcheck_reports(corrupt: bool) -> Result<Vec<GradCheckReport>, CliError> {
    use autosen::nn::{cross_entropy_loss, mse_loss};
    let gc = GradCheckConfig::default();
    let mut reports = Vec::new();

    let mut conv = LayerStack::new(vec![Layer::Conv2d(Conv2d::init(
        2,
        3,
        (3, 2),
        (2, 2),
        &mut rng_from(1),
    )?)]);
    let x = random_tensor(&[2, 7, 6], 2);
    let t = random_tensor(&[3, 3, 3], 3);
    let loss = move |out: &Tensor| mse_loss(out, &t);
    reports.push(check_gradients("conv2d", &mut conv, &x, &loss, &gc)?);

    let mut convt = LayerStack::new(vec![Layer::ConvTranspose2d(ConvTranspose2d::init(
        3,
        2,
        (3, 2),
        (3, 2),
        &mut rng_from(4),
    )?)]);
    let x = random_tensor(&[3, 2, 2], 5);
    let t = random_tensor(&[2, 6, 4], 6);
    let loss = move |out: &Tensor| mse_loss(out, &t);
    reports.push(check_gradients("conv_transpose2d", &mut convt, &x, &loss, &gc)?);

    let mut dense = LayerStack::new(vec![
        Layer::Dense(Dense::init(10, 7, &mut rng_from(7))?),
        Layer::Relu,
        Layer::Dense(Dense::init(7, 4, &mut rng_from(8))?),
    ]);
    let x = random_tensor(&[10], 9);
    let t = random_tensor(&[4], 10);
    let loss = move |out: &Tensor| mse_loss(out, &t);
    if corrupt {
        // negative control: report the dense row with a poisoned gradient
        let tape = dense.forward_recorded(&x)?;
        let (_, grad_out) = loss(tape.output())?;
        let (input_grad, mut grads) = dense.backward(&tape, &grad_out)?;
        grads[0].weight.as_mut().expect("dense has weights").data_mut()[3] += 0.5;
        reports.push(check_gradients_against(
            "dense", &mut dense, &x, &loss, &gc, &grads, &input_grad,
        )?);
    } else {
        reports.push(check_gradients("dense", &mut dense, &x, &loss, &gc)?);
    }

    // parameterless stacks isolate the loss gradients themselves
    let mut id6 = LayerStack::new(vec![Layer::Reshape(vec![6])]);
    let x = random_tensor(&[6], 11);
    let t = random_tensor(&[6], 12);
    let loss = move |out: &Tensor| mse_loss(out, &t);
    reports.push(check_gradients("mse", &mut id6, &x, &loss, &gc)?);

    let mut id7 = LayerStack::new(vec![Layer::Reshape(vec![7])]);
    let x = random_tensor(&[7], 13);
    let loss = |out: &Tensor| cross_entropy_loss(out, 3);
    reports.push(check_gradients("ce", &mut id7, &x, &loss, &gc)?);

    Ok(reports)
}

/// Compare every layer and loss gradient against central differences.
pub fn cmd_gradcheck(corrupt: bool) -> CmdResult {
    let reports = gradcheck_reports(corrupt)?;
    for r in &reports {
        println!("{}", r.summary_line());
    }
    let failed: Vec<&str> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| r.name.as_str())
        .collect();
    if failed.is_empty() {
        println!("all {} gradient checks passed", reports.len());
        Ok(())
    } else {
        Err(Error::Numerical(format!("gradient check failed: {}", failed.join(", "))).into())
    }
}
