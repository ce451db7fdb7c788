//! Network assembly: encoder, mirrored decoder, classifier head.
//!
//! The encoder compresses a (C x T x D) sample to a latent vector through
//! three strided convolutions (kernel equals stride, so patches tile the
//! input exactly) and a dense bottleneck. The decoder mirrors the encoder
//! with transposed convolutions and ends linear, since its target (signed,
//! zero-mean phase) cannot pass through a ReLU. The classifier consumes the
//! latent vector only, which keeps encoder and classifier sizes independent
//! of the training mode.

use std::fmt;
use std::str::FromStr;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::csi::CsiSample;
use crate::error::{Error, Result};
use crate::nn::{Conv2d, ConvTranspose2d, Dense, Layer, LayerStack};
use crate::seed::{mix, rng_from};
use crate::tensor::Tensor;

const ENCODER_SALT: u64 = 0x656e_63;
const DECODER_SALT: u64 = 0x6465_63;
const CLASSIFIER_SALT: u64 = 0x636c_73;

/// Training and input-wiring variants.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Mode {
    /// Amplitude in, sanitized phase out.
    #[serde(rename = "cross-modal")]
    CrossModal,
    /// Amplitude autoencoder.
    #[serde(rename = "amp-only")]
    AmpOnly,
    /// Sanitized-phase autoencoder.
    #[serde(rename = "pha-only")]
    PhaOnly,
    /// Both modalities stacked as two channels, in and out.
    #[serde(rename = "concat")]
    Concat,
    /// End-to-end supervised baseline on amplitude, no pretraining.
    #[serde(rename = "fullsup")]
    FullSup,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::CrossModal,
        Mode::AmpOnly,
        Mode::PhaOnly,
        Mode::Concat,
        Mode::FullSup,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mode::CrossModal => "cross-modal",
            Mode::AmpOnly => "amp-only",
            Mode::PhaOnly => "pha-only",
            Mode::Concat => "concat",
            Mode::FullSup => "fullsup",
        }
    }

    pub fn input_channels(self) -> usize {
        match self {
            Mode::Concat => 2,
            _ => 1,
        }
    }

    pub fn needs_sanitized_phase(self) -> bool {
        matches!(self, Mode::CrossModal | Mode::PhaOnly | Mode::Concat)
    }

    /// Whether the mode trains an autoencoder before calibration.
    pub fn is_pretrained(self) -> bool {
        !matches!(self, Mode::FullSup)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                Error::InvalidInput(format!(
                    "unknown mode {:?}; expected one of cross-modal, amp-only, pha-only, concat, fullsup",
                    s
                ))
            })
    }
}

/// Shared geometry of encoder, decoder, and classifier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSpec {
    pub latent_size: usize,
    /// Modality planes fed to the first convolution (1, or 2 for concat).
    pub input_channels: usize,
    pub class_count: usize,
    pub time_steps: usize,
    pub csi_channels: usize,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            latent_size: 256,
            input_channels: 1,
            class_count: 7,
            time_steps: 500,
            csi_channels: 90,
        }
    }
}

impl ModelSpec {
    pub fn for_mode(mode: Mode, sample: &CsiSample, class_count: usize, latent_size: usize) -> Self {
        ModelSpec {
            latent_size,
            input_channels: mode.input_channels(),
            class_count,
            time_steps: sample.timestamps(),
            csi_channels: sample.channels(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_size == 0 || self.input_channels == 0 || self.class_count < 2 {
            return Err(Error::InvalidInput(format!(
                "latent {}, input channels {}, classes {}: need latent >= 1, channels >= 1, classes >= 2",
                self.latent_size, self.input_channels, self.class_count
            )));
        }
        // kernel == stride everywhere, so every stage must divide exactly:
        // time 10*10*5, width 5*3*1
        if self.time_steps == 0 || self.time_steps % 500 != 0 {
            return Err(Error::InvalidInput(format!(
                "time steps {} not divisible by the 10*10*5 stride chain",
                self.time_steps
            )));
        }
        if self.csi_channels == 0 || self.csi_channels % 15 != 0 {
            return Err(Error::InvalidInput(format!(
                "channel count {} not divisible by the 5*3*1 stride chain",
                self.csi_channels
            )));
        }
        Ok(())
    }

    /// Spatial shape after the third convolution.
    pub fn bottleneck_shape(&self) -> [usize; 3] {
        [96, self.time_steps / 500, self.csi_channels / 15]
    }

    /// Flattened size feeding the encoder's dense layer.
    pub fn flattened_dim(&self) -> usize {
        let [c, h, w] = self.bottleneck_shape();
        c * h * w
    }
}

pub fn build_encoder(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<LayerStack> {
    spec.validate()?;
    Ok(LayerStack::new(vec![
        Layer::Conv2d(Conv2d::init(spec.input_channels, 32, (10, 5), (10, 5), rng)?),
        Layer::Relu,
        Layer::Conv2d(Conv2d::init(32, 64, (10, 3), (10, 3), rng)?),
        Layer::Relu,
        Layer::Conv2d(Conv2d::init(64, 96, (5, 1), (5, 1), rng)?),
        Layer::Relu,
        Layer::Dense(Dense::init(spec.flattened_dim(), spec.latent_size, rng)?),
        Layer::Relu,
    ]))
}

pub fn build_decoder(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<LayerStack> {
    spec.validate()?;
    let [c, h, w] = spec.bottleneck_shape();
    Ok(LayerStack::new(vec![
        Layer::Dense(Dense::init(spec.latent_size, spec.flattened_dim(), rng)?),
        Layer::Relu,
        Layer::Reshape(vec![c, h, w]),
        Layer::ConvTranspose2d(ConvTranspose2d::init(96, 64, (5, 1), (5, 1), rng)?),
        Layer::Relu,
        Layer::ConvTranspose2d(ConvTranspose2d::init(64, 32, (10, 3), (10, 3), rng)?),
        Layer::Relu,
        // linear output: the phase target is signed and zero-mean
        Layer::ConvTranspose2d(ConvTranspose2d::init(
            32,
            spec.input_channels,
            (10, 5),
            (10, 5),
            rng,
        )?),
    ]))
}

pub fn build_classifier(spec: &ModelSpec, rng: &mut ChaCha8Rng) -> Result<LayerStack> {
    spec.validate()?;
    Ok(LayerStack::new(vec![
        Layer::Dense(Dense::init(spec.latent_size, 256, rng)?),
        Layer::Relu,
        Layer::Dense(Dense::init(256, 128, rng)?),
        Layer::Relu,
        // logits; softmax lives in the loss and in predict
        Layer::Dense(Dense::init(128, spec.class_count, rng)?),
    ]))
}

/// The three networks of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoSen {
    pub encoder: LayerStack,
    pub decoder: LayerStack,
    pub classifier: LayerStack,
}

/// Build all three networks from one seed. Each component draws from its own
/// seed stream, so the encoder init depends only on (seed, geometry), not on
/// whether a decoder or classifier is built alongside.
pub fn build_autosen(spec: &ModelSpec, seed: u64) -> Result<AutoSen> {
    Ok(AutoSen {
        encoder: build_encoder(spec, &mut rng_from(mix(seed, ENCODER_SALT)))?,
        decoder: build_decoder(spec, &mut rng_from(mix(seed, DECODER_SALT)))?,
        classifier: build_classifier(spec, &mut rng_from(mix(seed, CLASSIFIER_SALT)))?,
    })
}

pub(crate) fn encoder_rng(seed: u64) -> ChaCha8Rng {
    rng_from(mix(seed, ENCODER_SALT))
}

pub(crate) fn decoder_rng(seed: u64) -> ChaCha8Rng {
    rng_from(mix(seed, DECODER_SALT))
}

pub(crate) fn classifier_rng(seed: u64) -> ChaCha8Rng {
    rng_from(mix(seed, CLASSIFIER_SALT))
}

fn plane(t: &Tensor) -> Result<Tensor> {
    let (h, w) = (t.shape()[0], t.shape()[1]);
    t.reshaped(&[1, h, w])
}

fn two_planes(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (h, w) = (a.shape()[0], a.shape()[1]);
    let mut data = Vec::with_capacity(2 * h * w);
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[2, h, w], data)
}

fn sanitized(sample: &CsiSample) -> Result<&Tensor> {
    sample.phase_sanitized().ok_or_else(|| {
        Error::MissingInput("sample has no sanitized phase; run sanitization first".into())
    })
}

/// The tensor the encoder consumes for `mode`, shaped (C x T x D).
pub fn model_input(mode: Mode, sample: &CsiSample) -> Result<Tensor> {
    match mode {
        Mode::CrossModal | Mode::AmpOnly | Mode::FullSup => plane(&sample.amplitude),
        Mode::PhaOnly => plane(sanitized(sample)?),
        Mode::Concat => two_planes(&sample.amplitude, sanitized(sample)?),
    }
}

/// The tensor the decoder must reconstruct for `mode`, shaped (C x T x D).
pub fn reconstruction_target(mode: Mode, sample: &CsiSample) -> Result<Tensor> {
    match mode {
        Mode::CrossModal | Mode::PhaOnly => plane(sanitized(sample)?),
        Mode::AmpOnly => plane(&sample.amplitude),
        Mode::Concat => two_planes(&sample.amplitude, sanitized(sample)?),
        Mode::FullSup => Err(Error::InvalidInput(
            "fullsup trains on labels, not reconstruction".into(),
        )),
    }
}
