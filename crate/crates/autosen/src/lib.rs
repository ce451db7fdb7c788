//! Cross-modal WiFi CSI sensing pipeline.
//!
//! The crate is organized around five subsystems:
//!
//! - [`csi`]: CSI frames, amplitude/phase extraction, phase unwrapping and
//!   linear phase sanitization.
//! - [`synth`]: a multipath channel synthesizer that generates labeled CSI
//!   sequences with controllable activity dynamics and injectable
//!   CFO/SFO/PDD offsets.
//! - [`nn`]: a minimal dense-tensor neural network engine (conv2d,
//!   transposed conv2d, dense, ReLU, MSE/cross-entropy, reverse-mode
//!   gradients, Adam, finite-difference gradient checking).
//! - [`model`]: the cross-modal autoencoder, few-shot calibration,
//!   full-supervision baseline, evaluation and the ablation harness.
//! - [`data`]: CSV ingestion, downsampling, windowing, few-shot splits and
//!   a binary sample cache.
//!
//! All randomness flows from explicit seeds and every computation uses a
//! fixed summation order, so identical inputs produce bit-identical outputs.

pub mod csi;
pub mod data;
pub mod error;
pub mod model;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
