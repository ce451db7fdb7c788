//! Training loops: autoencoder pretraining, frozen-encoder calibration,
//! joint full supervision, prediction and evaluation.
//!
//! Every loop walks seeded shuffles in a fixed order and averages per-sample
//! gradients within each mini-batch, so a (config, seed) pair fully
//! determines the trained parameters. The trailing batch of an epoch may be
//! smaller; no sample is dropped.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::csi::CsiSample;
use crate::error::{Error, Result};
use crate::model::arch::{
    build_classifier, build_decoder, build_encoder, classifier_rng, decoder_rng, encoder_rng,
    model_input, reconstruction_target, ModelSpec, Mode,
};
use crate::nn::{
    accumulate_grads, cross_entropy_loss, mse_loss, zero_grads_like, Adam, AdamConfig, LayerStack,
};
use crate::seed::{mix3, rng_from};
use crate::tensor::Tensor;

const SHUFFLE_SALT: u64 = 0x7368_75;

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub mode: Mode,
    pub latent_size: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 64,
            lr: 1e-3,
            seed: 0,
            mode: Mode::CrossModal,
            latent_size: 256,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch_size must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::InvalidInput(format!("learning rate {} must be positive", self.lr)));
        }
        if self.latent_size == 0 {
            return Err(Error::InvalidInput("latent_size must be positive".into()));
        }
        Ok(())
    }

    fn adam(&self) -> Adam {
        Adam::new(AdamConfig {
            lr: self.lr,
            ..AdamConfig::default()
        })
    }
}

/// Seeded permutation of `0..n`, fresh per epoch.
fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng_from(mix3(seed, SHUFFLE_SALT, epoch as u64)));
    idx
}

fn uniform_dims(samples: &[CsiSample]) -> Result<(usize, usize)> {
    let first = samples
        .first()
        .ok_or_else(|| Error::InvalidInput("empty dataset".into()))?;
    let dims = (first.timestamps(), first.channels());
    for (i, s) in samples.iter().enumerate() {
        if (s.timestamps(), s.channels()) != dims {
            return Err(Error::ShapeMismatch(format!(
                "sample {} is {}x{}, expected {}x{}",
                i,
                s.timestamps(),
                s.channels(),
                dims.0,
                dims.1
            )));
        }
    }
    Ok(dims)
}

/// A pretrained autoencoder and its per-epoch mean reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PretrainOutcome {
    pub encoder: LayerStack,
    pub decoder: LayerStack,
    pub epoch_losses: Vec<f64>,
}

/// Train the autoencoder of `cfg.mode` on unlabeled samples. The epoch loss
/// is the mean over samples of the per-sample mean squared element error.
pub fn pretrain(samples: &[CsiSample], cfg: &TrainConfig) -> Result<PretrainOutcome> {
    cfg.validate()?;
    if !cfg.mode.is_pretrained() {
        return Err(Error::InvalidInput(
            "fullsup has no pretraining stage; use train_full_supervision".into(),
        ));
    }
    let (t, d) = uniform_dims(samples)?;
    let inputs: Vec<Tensor> = samples
        .iter()
        .map(|s| model_input(cfg.mode, s))
        .collect::<Result<_>>()?;
    let targets: Vec<Tensor> = samples
        .iter()
        .map(|s| reconstruction_target(cfg.mode, s))
        .collect::<Result<_>>()?;

    let spec = ModelSpec {
        latent_size: cfg.latent_size,
        input_channels: cfg.mode.input_channels(),
        class_count: 2,
        time_steps: t,
        csi_channels: d,
    };
    let mut encoder = build_encoder(&spec, &mut encoder_rng(cfg.seed))?;
    let mut decoder = build_decoder(&spec, &mut decoder_rng(cfg.seed))?;
    let mut adam_enc = cfg.adam();
    let mut adam_dec = cfg.adam();

    let n = samples.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads_enc = zero_grads_like(&encoder);
            let mut grads_dec = zero_grads_like(&decoder);
            for &i in batch {
                let enc_tape = encoder.forward_recorded(&inputs[i])?;
                let dec_tape = decoder.forward_recorded(enc_tape.output())?;
                let (loss, dloss) = mse_loss(dec_tape.output(), &targets[i])?;
                loss_sum += loss;
                let (grad_h, dd) = decoder.backward(&dec_tape, &dloss)?;
                let (_, de) = encoder.backward(&enc_tape, &grad_h)?;
                accumulate_grads(&mut grads_dec, &dd, scale)?;
                accumulate_grads(&mut grads_enc, &de, scale)?;
            }
            adam_dec.step(&mut decoder, &grads_dec)?;
            adam_enc.step(&mut encoder, &grads_enc)?;
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok(PretrainOutcome {
        encoder,
        decoder,
        epoch_losses,
    })
}

/// A trained classifier head and its per-epoch mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub classifier: LayerStack,
    pub epoch_losses: Vec<f64>,
}

fn check_labels(labels: &[usize], classes: usize) -> Result<()> {
    if classes < 2 {
        return Err(Error::InvalidInput("need at least two classes".into()));
    }
    let mut seen = vec![false; classes];
    for &y in labels {
        if y >= classes {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {} classes",
                y, classes
            )));
        }
        seen[y] = true;
    }
    if let Some(missing) = seen.iter().position(|&s| !s) {
        return Err(Error::InvalidInput(format!(
            "class {} has no training samples",
            missing
        )));
    }
    Ok(())
}

/// Train a classifier head on fixed embedding vectors by cross-entropy.
pub fn train_classifier_on_embeddings(
    embeddings: &[Tensor],
    labels: &[usize],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<CalibrationOutcome> {
    cfg.validate()?;
    if embeddings.is_empty() || embeddings.len() != labels.len() {
        return Err(Error::InvalidInput(format!(
            "{} embeddings vs {} labels",
            embeddings.len(),
            labels.len()
        )));
    }
    check_labels(labels, classes)?;
    let latent = embeddings[0].len();
    let spec = ModelSpec {
        latent_size: latent,
        class_count: classes,
        ..ModelSpec::default()
    };
    let mut classifier = build_classifier(&spec, &mut classifier_rng(cfg.seed))?;
    let mut adam = cfg.adam();

    let n = embeddings.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads = zero_grads_like(&classifier);
            for &i in batch {
                let tape = classifier.forward_recorded(&embeddings[i])?;
                let (loss, dlogits) = cross_entropy_loss(tape.output(), labels[i])?;
                loss_sum += loss;
                let (_, g) = classifier.backward(&tape, &dlogits)?;
                accumulate_grads(&mut grads, &g, scale)?;
            }
            adam.step(&mut classifier, &grads)?;
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok(CalibrationOutcome {
        classifier,
        epoch_losses,
    })
}

/// Embed each labeled sample with the frozen encoder, then train only the
/// classifier head. The encoder is never updated.
pub fn few_shot_calibrate(
    encoder: &LayerStack,
    labeled: &[CsiSample],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<CalibrationOutcome> {
    let mut embeddings = Vec::with_capacity(labeled.len());
    let mut labels = Vec::with_capacity(labeled.len());
    for (i, s) in labeled.iter().enumerate() {
        let y = s.label.ok_or_else(|| {
            Error::InvalidInput(format!("calibration sample {} is unlabeled", i))
        })?;
        embeddings.push(encoder.forward(&model_input(cfg.mode, s)?)?);
        labels.push(y);
    }
    train_classifier_on_embeddings(&embeddings, &labels, classes, cfg)
}

/// Index of the largest value; ties break toward the lowest index.
pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate().skip(1) {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Class prediction for one sample.
pub fn predict(
    encoder: &LayerStack,
    classifier: &LayerStack,
    mode: Mode,
    sample: &CsiSample,
) -> Result<usize> {
    let h = encoder.forward(&model_input(mode, sample)?)?;
    let logits = classifier.forward(&h)?;
    Ok(argmax(logits.data()))
}

/// Top-1 accuracy and per-class accuracy over a labeled test set. A class
/// absent from the set reports 0.0.
pub fn evaluate(
    encoder: &LayerStack,
    classifier: &LayerStack,
    mode: Mode,
    test: &[CsiSample],
    classes: usize,
) -> Result<(f64, Vec<f64>)> {
    if test.is_empty() {
        return Err(Error::InvalidInput("empty test set".into()));
    }
    let mut correct = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (i, s) in test.iter().enumerate() {
        let y = s
            .label
            .ok_or_else(|| Error::InvalidInput(format!("test sample {} is unlabeled", i)))?;
        if y >= classes {
            return Err(Error::InvalidInput(format!(
                "label {} out of range for {} classes",
                y, classes
            )));
        }
        total[y] += 1;
        if predict(encoder, classifier, mode, s)? == y {
            correct[y] += 1;
        }
    }
    let accuracy = correct.iter().sum::<usize>() as f64 / test.len() as f64;
    let per_class = correct
        .iter()
        .zip(&total)
        .map(|(&c, &t)| if t == 0 { 0.0 } else { c as f64 / t as f64 })
        .collect();
    Ok((accuracy, per_class))
}

/// A jointly trained supervised model and its per-epoch mean cross-entropy.
#[derive(Debug, Clone, PartialEq)]
pub struct FullSupOutcome {
    pub encoder: LayerStack,
    pub classifier: LayerStack,
    pub epoch_losses: Vec<f64>,
}

/// Supervised baseline: encoder and classifier trained end to end on
/// amplitude with cross-entropy, no pretraining.
pub fn train_full_supervision(
    labeled: &[CsiSample],
    classes: usize,
    cfg: &TrainConfig,
) -> Result<FullSupOutcome> {
    cfg.validate()?;
    let (t, d) = uniform_dims(labeled)?;
    let mut inputs = Vec::with_capacity(labeled.len());
    let mut labels = Vec::with_capacity(labeled.len());
    for (i, s) in labeled.iter().enumerate() {
        let y = s
            .label
            .ok_or_else(|| Error::InvalidInput(format!("training sample {} is unlabeled", i)))?;
        inputs.push(model_input(Mode::FullSup, s)?);
        labels.push(y);
    }
    check_labels(&labels, classes)?;

    let spec = ModelSpec {
        latent_size: cfg.latent_size,
        input_channels: Mode::FullSup.input_channels(),
        class_count: classes,
        time_steps: t,
        csi_channels: d,
    };
    let mut encoder = build_encoder(&spec, &mut encoder_rng(cfg.seed))?;
    let mut classifier = build_classifier(&spec, &mut classifier_rng(cfg.seed))?;
    let mut adam_enc = cfg.adam();
    let mut adam_cls = cfg.adam();

    let n = labeled.len();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let order = epoch_order(n, cfg.seed, epoch);
        let mut loss_sum = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let scale = 1.0 / batch.len() as f64;
            let mut grads_enc = zero_grads_like(&encoder);
            let mut grads_cls = zero_grads_like(&classifier);
            for &i in batch {
                let enc_tape = encoder.forward_recorded(&inputs[i])?;
                let cls_tape = classifier.forward_recorded(enc_tape.output())?;
                let (loss, dlogits) = cross_entropy_loss(cls_tape.output(), labels[i])?;
                loss_sum += loss;
                let (grad_h, gc) = classifier.backward(&cls_tape, &dlogits)?;
                let (_, ge) = encoder.backward(&enc_tape, &grad_h)?;
                accumulate_grads(&mut grads_cls, &gc, scale)?;
                accumulate_grads(&mut grads_enc, &ge, scale)?;
            }
            adam_cls.step(&mut classifier, &grads_cls)?;
            adam_enc.step(&mut encoder, &grads_enc)?;
        }
        epoch_losses.push(loss_sum / n as f64);
    }
    Ok(FullSupOutcome {
        encoder,
        classifier,
        epoch_losses,
    })
}
