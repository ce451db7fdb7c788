//! CSI representation and phase sanitization.
//!
//! Raw CSI phase carries hardware offsets (CFO, SFO, packet detection delay)
//! that appear as an affine-in-subcarrier-index component per packet and
//! antenna. Sanitization unwraps the phase across subcarriers, fits a line
//! `k*m_i + b` over the physical subcarrier indices `m_i`, and subtracts it,
//! leaving only motion-induced phase.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const TAU: f64 = 2.0 * PI;

/// One packet's complex CSI across antennas and subcarriers.
///
/// Values are stored antenna-major: entry `(a, i)` sits at `a * K + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiFrame {
    antennas: usize,
    subcarriers: usize,
    values: Vec<Complex64>,
    subcarrier_indices: Vec<i32>,
}

impl CsiFrame {
    pub fn new(
        antennas: usize,
        subcarriers: usize,
        values: Vec<Complex64>,
        subcarrier_indices: Vec<i32>,
    ) -> Result<Self> {
        if values.len() != antennas * subcarriers {
            return Err(Error::ShapeMismatch(format!(
                "frame: {} antennas x {} subcarriers needs {} values, got {}",
                antennas,
                subcarriers,
                antennas * subcarriers,
                values.len()
            )));
        }
        validate_indices(&subcarrier_indices, subcarriers)?;
        Ok(CsiFrame {
            antennas,
            subcarriers,
            values,
            subcarrier_indices,
        })
    }

    pub fn antennas(&self) -> usize {
        self.antennas
    }

    pub fn subcarriers(&self) -> usize {
        self.subcarriers
    }

    pub fn subcarrier_indices(&self) -> &[i32] {
        &self.subcarrier_indices
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn value(&self, antenna: usize, subcarrier: usize) -> Complex64 {
        self.values[antenna * self.subcarriers + subcarrier]
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex64] {
        &mut self.values
    }
}

fn validate_indices(indices: &[i32], expected_len: usize) -> Result<()> {
    if indices.len() != expected_len {
        return Err(Error::InvalidInput(format!(
            "subcarrier index list has length {}, expected {}",
            indices.len(),
            expected_len
        )));
    }
    for w in indices.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidInput(format!(
                "subcarrier indices must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

/// The 30-subcarrier Intel 5300 HT20 grouping: [-28, -26, ..., -2, -1, 1, 3, ..., 27, 28].
pub fn intel_ht20_indices() -> Vec<i32> {
    let mut v: Vec<i32> = (1..=14).map(|i| -2 * i).rev().collect();
    v.push(-1);
    v.extend((0..14).map(|i| 1 + 2 * i));
    v.push(28);
    debug_assert_eq!(v.len(), 30);
    v
}

/// One activity window: amplitude and phase tensors of shape (T, D) with
/// D = antennas * subcarriers, flattened antenna-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiSample {
    pub amplitude: Tensor,
    pub phase_raw: Tensor,
    /// Only ever produced by [`sanitize_sample`] (or read back from a cache
    /// written after sanitization); never hand-set.
    phase_sanitized: Option<Tensor>,
    pub label: Option<usize>,
    pub sample_rate_hz: f64,
}

impl CsiSample {
    pub fn new(
        amplitude: Tensor,
        phase_raw: Tensor,
        label: Option<usize>,
        sample_rate_hz: f64,
    ) -> Result<Self> {
        if amplitude.shape() != phase_raw.shape() {
            return Err(Error::ShapeMismatch(format!(
                "amplitude {:?} vs phase {:?}",
                amplitude.shape(),
                phase_raw.shape()
            )));
        }
        if amplitude.shape().len() != 2 {
            return Err(Error::ShapeMismatch(format!(
                "sample tensors must be (T, D), got {:?}",
                amplitude.shape()
            )));
        }
        Ok(CsiSample {
            amplitude,
            phase_raw,
            phase_sanitized: None,
            label,
            sample_rate_hz,
        })
    }

    pub fn timestamps(&self) -> usize {
        self.amplitude.shape()[0]
    }

    pub fn channels(&self) -> usize {
        self.amplitude.shape()[1]
    }

    pub fn phase_sanitized(&self) -> Option<&Tensor> {
        self.phase_sanitized.as_ref()
    }

    pub(crate) fn set_phase_sanitized(&mut self, t: Tensor) {
        self.phase_sanitized = Some(t);
    }
}

/// Slope and offset of the per-(packet, antenna) linear phase model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SanitizationFit {
    /// Radians per subcarrier index step.
    pub k: f64,
    /// Radians.
    pub b: f64,
}

/// Element-wise modulus of a frame, shape (A, K).
pub fn extract_amplitude(frame: &CsiFrame) -> Tensor {
    let data = frame.values.iter().map(|z| z.norm()).collect();
    Tensor::from_vec(&[frame.antennas, frame.subcarriers], data).expect("frame is consistent")
}

/// Element-wise principal-value argument of a frame in (-pi, pi], shape (A, K).
pub fn extract_phase(frame: &CsiFrame) -> Tensor {
    let data = frame.values.iter().map(|z| z.im.atan2(z.re)).collect();
    Tensor::from_vec(&[frame.antennas, frame.subcarriers], data).expect("frame is consistent")
}

/// Unwrap a phase row: adjust successive differences by multiples of 2*pi so
/// each |diff| <= pi. Output is congruent to the input mod 2*pi element-wise.
pub fn unwrap_phase(row: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(row.len());
    if row.is_empty() {
        return out;
    }
    out.push(row[0]);
    for j in 1..row.len() {
        let d = row[j] - row[j - 1];
        let wraps = (d / TAU).round();
        let adjusted = d - TAU * wraps;
        out.push(out[j - 1] + adjusted);
    }
    out
}

/// Fit the linear phase model over the subcarrier index set.
///
/// The slope comes from the endpoints, `k = (phi_K - phi_1) / (m_K - m_1)`;
/// the offset is `b = mean(phi) - k * mean(m)`, which reduces to the plain
/// phase mean whenever the index set is symmetric around zero.
pub fn fit_linear_phase(unwrapped: &[f64], indices: &[i32]) -> Result<SanitizationFit> {
    if unwrapped.len() != indices.len() {
        return Err(Error::InvalidInput(format!(
            "phase row has {} entries but index set has {}",
            unwrapped.len(),
            indices.len()
        )));
    }
    if unwrapped.len() < 2 {
        return Err(Error::InvalidInput(
            "linear phase fit needs at least 2 points".into(),
        ));
    }
    validate_indices(indices, indices.len())?;
    let n = unwrapped.len();
    let m_first = indices[0] as f64;
    let m_last = indices[n - 1] as f64;
    // strictly increasing indices guarantee m_last > m_first
    let k = (unwrapped[n - 1] - unwrapped[0]) / (m_last - m_first);
    let phase_mean = unwrapped.iter().sum::<f64>() / n as f64;
    let index_mean = indices.iter().map(|&m| m as f64).sum::<f64>() / n as f64;
    let b = phase_mean - k * index_mean;
    if !k.is_finite() || !b.is_finite() {
        return Err(Error::Numerical(format!(
            "non-finite sanitization fit: k={}, b={}",
            k, b
        )));
    }
    Ok(SanitizationFit { k, b })
}

/// Subtract the fitted line: `out_i = phi_i - k*m_i - b`. The result has zero
/// mean for any input, and any affine-in-index component is annihilated.
pub fn sanitize_row(unwrapped: &[f64], indices: &[i32]) -> Result<Vec<f64>> {
    let fit = fit_linear_phase(unwrapped, indices)?;
    Ok(unwrapped
        .iter()
        .zip(indices.iter())
        .map(|(&phi, &m)| phi - fit.k * m as f64 - fit.b)
        .collect())
}

/// Sanitize every (timestamp, antenna) phase row of a sample independently:
/// unwrap across the K subcarriers, then subtract the fitted line. Amplitude
/// is untouched; the result lands in `phase_sanitized`.
pub fn sanitize_sample(
    sample: &CsiSample,
    antennas: usize,
    subcarriers_per_antenna: usize,
    indices: &[i32],
) -> Result<CsiSample> {
    let d = sample.channels();
    if antennas * subcarriers_per_antenna != d {
        return Err(Error::ShapeMismatch(format!(
            "{} antennas x {} subcarriers != {} channels",
            antennas, subcarriers_per_antenna, d
        )));
    }
    validate_indices(indices, subcarriers_per_antenna)?;
    let t_len = sample.timestamps();
    let raw = sample.phase_raw.data();
    let mut sanitized = vec![0.0; raw.len()];
    for t in 0..t_len {
        for a in 0..antennas {
            let start = t * d + a * subcarriers_per_antenna;
            let row = &raw[start..start + subcarriers_per_antenna];
            let clean = sanitize_row(&unwrap_phase(row), indices)?;
            sanitized[start..start + subcarriers_per_antenna].copy_from_slice(&clean);
        }
    }
    let mut out = sample.clone();
    out.set_phase_sanitized(Tensor::from_vec(&[t_len, d], sanitized)?);
    Ok(out)
}
