//! Synthetic CSI generation from a multipath channel model.
//!
//! Each subcarrier value is a coherent sum over propagation paths,
//! `H_i(n) = g_a e^{j s_a} sum_p A_p(t_n) exp(j 2pi (f_c + m_i df) tau_p(t_n))`,
//! with per-antenna gain `g_a` and phase shift `s_a`. Hardware offsets (CFO,
//! SFO, PDD) are injected as pure phase rotations so amplitude is untouched
//! and sanitization can be shown to remove them. Activity classes are
//! parameterized path generators whose delay oscillation band is the class
//! signature.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::csi::{extract_amplitude, extract_phase, intel_ht20_indices, CsiFrame, CsiSample};
use crate::error::{Error, Result};
use crate::seed::{mix, mix3, rng_from};
use crate::tensor::Tensor;

const TAU: f64 = 2.0 * PI;

/// A scalar trajectory over time, evaluated at packet timestamps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Profile {
    Constant { value: f64 },
    /// base + amp * sin(2pi freq_hz t + phase)
    Sinusoid {
        base: f64,
        amp: f64,
        freq_hz: f64,
        phase: f64,
    },
    /// base + rate * t
    Linear { base: f64, rate: f64 },
}

impl Profile {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            Profile::Constant { value } => value,
            Profile::Sinusoid {
                base,
                amp,
                freq_hz,
                phase,
            } => base + amp * (TAU * freq_hz * t + phase).sin(),
            Profile::Linear { base, rate } => base + rate * t,
        }
    }
}

/// One propagation path: amplitude and delay trajectories.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpec {
    pub amplitude: Profile,
    /// Seconds.
    pub delay: Profile,
}

/// Physical channel and capture geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChannelConfig {
    pub carrier_hz: f64,
    pub subcarrier_spacing_hz: f64,
    pub subcarrier_indices: Vec<i32>,
    pub antennas: usize,
    pub packet_rate_hz: f64,
    /// Radians added to every path at each antenna.
    pub antenna_phase_shifts: Vec<f64>,
    /// Real gain applied to every path at each antenna.
    pub antenna_gains: Vec<f64>,
    /// Per-component std of additive complex receiver noise; 0 disables.
    pub noise_std: f64,
    /// Std of per-packet lognormal gain jitter (AGC wobble); 0 disables.
    pub gain_jitter_std: f64,
}

impl Default for ChannelConfig {
    fn default() -> Self {
        let antennas = 3;
        ChannelConfig {
            carrier_hz: 5.32e9,
            subcarrier_spacing_hz: 312.5e3,
            subcarrier_indices: intel_ht20_indices(),
            antennas,
            packet_rate_hz: 500.0,
            antenna_phase_shifts: (0..antennas).map(|a| a as f64 * TAU / 3.0).collect(),
            antenna_gains: vec![1.0, 0.85, 1.15],
            noise_std: 0.0,
            gain_jitter_std: 0.0,
        }
    }
}

impl ChannelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.carrier_hz <= 0.0 || self.subcarrier_spacing_hz <= 0.0 || self.packet_rate_hz <= 0.0
        {
            return Err(Error::InvalidInput(
                "carrier, subcarrier spacing, and packet rate must be positive".into(),
            ));
        }
        if self.antennas == 0 || self.subcarrier_indices.is_empty() {
            return Err(Error::InvalidInput(
                "need at least one antenna and one subcarrier".into(),
            ));
        }
        if self.antenna_phase_shifts.len() != self.antennas
            || self.antenna_gains.len() != self.antennas
        {
            return Err(Error::InvalidInput(format!(
                "{} phase shifts and {} gains for {} antennas",
                self.antenna_phase_shifts.len(),
                self.antenna_gains.len(),
                self.antennas
            )));
        }
        if self.noise_std < 0.0 || self.gain_jitter_std < 0.0 {
            return Err(Error::InvalidInput("noise levels must be >= 0".into()));
        }
        for w in self.subcarrier_indices.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::InvalidInput(
                    "subcarrier indices must be strictly increasing".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn channels(&self) -> usize {
        self.antennas * self.subcarrier_indices.len()
    }
}

/// Packet detection delay: one value for the whole capture or one per packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PddSpec {
    Constant(f64),
    PerPacket(Vec<f64>),
}

impl PddSpec {
    fn at(&self, n: usize) -> f64 {
        match self {
            PddSpec::Constant(v) => *v,
            PddSpec::PerPacket(v) => v[n],
        }
    }
}

/// Hardware phase offsets injected on top of the clean channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetSpec {
    pub cfo_hz: f64,
    pub sfo_ppm: f64,
    pub pdd_seconds: PddSpec,
}

impl Default for OffsetSpec {
    fn default() -> Self {
        Self::zero()
    }
}

impl OffsetSpec {
    pub fn zero() -> Self {
        OffsetSpec {
            cfo_hz: 0.0,
            sfo_ppm: 0.0,
            pdd_seconds: PddSpec::Constant(0.0),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.cfo_hz == 0.0
            && self.sfo_ppm == 0.0
            && match &self.pdd_seconds {
                PddSpec::Constant(v) => *v == 0.0,
                PddSpec::PerPacket(v) => v.iter().all(|&x| x == 0.0),
            }
    }
}

/// Synthesize `packets` frames from the multipath model. The seed only
/// matters when the config enables receiver noise or gain jitter; the
/// underlying channel is deterministic in the path profiles.
pub fn synthesize_frames(
    paths: &[PathSpec],
    cfg: &ChannelConfig,
    packets: usize,
    seed: u64,
) -> Result<Vec<CsiFrame>> {
    if paths.is_empty() {
        return Err(Error::InvalidInput("synthesis needs at least one path".into()));
    }
    if packets == 0 {
        return Err(Error::InvalidInput("synthesis needs at least one packet".into()));
    }
    cfg.validate()?;
    let k = cfg.subcarrier_indices.len();
    let mut rng = rng_from(seed);
    let mut frames = Vec::with_capacity(packets);
    for n in 0..packets {
        let t = n as f64 / cfg.packet_rate_hz;
        let mut path_vals = Vec::with_capacity(paths.len());
        for (p, path) in paths.iter().enumerate() {
            let a = path.amplitude.at(t);
            if !(a >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "path {} amplitude {} at t={} (must be >= 0 and finite)",
                    p, a, t
                )));
            }
            let tau = path.delay.at(t);
            if !tau.is_finite() {
                return Err(Error::Numerical(format!("path {} delay {} at t={}", p, tau, t)));
            }
            path_vals.push((a, tau));
        }
        let gain_jitter = if cfg.gain_jitter_std > 0.0 {
            (cfg.gain_jitter_std * rng.sample::<f64, _>(StandardNormal)).exp()
        } else {
            1.0
        };
        let mut values = Vec::with_capacity(cfg.antennas * k);
        for a in 0..cfg.antennas {
            let ant = Complex64::from_polar(cfg.antenna_gains[a], cfg.antenna_phase_shifts[a]);
            for &m in &cfg.subcarrier_indices {
                let freq = cfg.carrier_hz + m as f64 * cfg.subcarrier_spacing_hz;
                let mut h = Complex64::new(0.0, 0.0);
                for &(amp, tau) in &path_vals {
                    h += amp * Complex64::from_polar(1.0, TAU * freq * tau);
                }
                let mut v = gain_jitter * ant * h;
                if cfg.noise_std > 0.0 {
                    v += Complex64::new(
                        cfg.noise_std * rng.sample::<f64, _>(StandardNormal),
                        cfg.noise_std * rng.sample::<f64, _>(StandardNormal),
                    );
                }
                values.push(v);
            }
        }
        frames.push(CsiFrame::new(
            cfg.antennas,
            k,
            values,
            cfg.subcarrier_indices.clone(),
        )?);
    }
    Ok(frames)
}

/// Rotate each value by the offset phase
/// `2pi cfo t_n + 2pi (f_c + m df) pdd_n + 2pi m df sfo t_n`,
/// leaving amplitudes untouched. A zero spec returns the frames bit-exactly.
pub fn inject_offsets(
    frames: Vec<CsiFrame>,
    spec: &OffsetSpec,
    cfg: &ChannelConfig,
) -> Result<Vec<CsiFrame>> {
    cfg.validate()?;
    if !spec.cfo_hz.is_finite() || !spec.sfo_ppm.is_finite() {
        return Err(Error::InvalidInput("offset spec must be finite".into()));
    }
    if let PddSpec::PerPacket(v) = &spec.pdd_seconds {
        if v.len() != frames.len() {
            return Err(Error::InvalidInput(format!(
                "{} per-packet PDD values for {} frames",
                v.len(),
                frames.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("PDD values must be finite".into()));
        }
    } else if let PddSpec::Constant(v) = &spec.pdd_seconds {
        if !v.is_finite() {
            return Err(Error::InvalidInput("PDD value must be finite".into()));
        }
    }
    if spec.is_zero() {
        return Ok(frames);
    }
    let sfo = spec.sfo_ppm * 1e-6;
    let mut frames = frames;
    for (n, frame) in frames.iter_mut().enumerate() {
        let t = n as f64 / cfg.packet_rate_hz;
        let pdd = spec.pdd_seconds.at(n);
        let k = frame.subcarriers();
        let indices: Vec<f64> = frame.subcarrier_indices().iter().map(|&m| m as f64).collect();
        let values = frame.values_mut();
        for (pos, v) in values.iter_mut().enumerate() {
            let m = indices[pos % k];
            let freq_off = m * cfg.subcarrier_spacing_hz;
            let theta = TAU * spec.cfo_hz * t
                + TAU * (cfg.carrier_hz + freq_off) * pdd
                + TAU * freq_off * sfo * t;
            *v *= Complex64::from_polar(1.0, theta);
        }
    }
    Ok(frames)
}

/// Closed interval drawn uniformly per sample; lo == hi pins the value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub fn new(lo: f64, hi: f64) -> Self {
        Band { lo, hi }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        if self.lo == self.hi {
            self.lo
        } else {
            rng.random_range(self.lo..self.hi)
        }
    }

    fn validate(&self, what: &str) -> Result<()> {
        if !self.lo.is_finite() || !self.hi.is_finite() || self.lo > self.hi {
            return Err(Error::InvalidInput(format!(
                "band {} = [{}, {}] is invalid",
                what, self.lo, self.hi
            )));
        }
        Ok(())
    }
}

/// Draws one concrete path per sample from parameter bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathGenerator {
    /// Fixed path, e.g. the line-of-sight component.
    Static { amplitude: Band, delay_ns: Band },
    /// Path whose delay oscillates sinusoidally; the oscillation frequency
    /// band carries the class identity.
    Oscillating {
        amplitude: Band,
        base_delay_ns: Band,
        sweep_ns: Band,
        freq_hz: Band,
    },
}

impl PathGenerator {
    fn validate(&self) -> Result<()> {
        match self {
            PathGenerator::Static { amplitude, delay_ns } => {
                amplitude.validate("amplitude")?;
                delay_ns.validate("delay_ns")
            }
            PathGenerator::Oscillating {
                amplitude,
                base_delay_ns,
                sweep_ns,
                freq_hz,
            } => {
                amplitude.validate("amplitude")?;
                base_delay_ns.validate("base_delay_ns")?;
                sweep_ns.validate("sweep_ns")?;
                freq_hz.validate("freq_hz")
            }
        }
    }

    fn draw(&self, rng: &mut ChaCha8Rng) -> PathSpec {
        match self {
            PathGenerator::Static { amplitude, delay_ns } => PathSpec {
                amplitude: Profile::Constant {
                    value: amplitude.draw(rng),
                },
                delay: Profile::Constant {
                    value: delay_ns.draw(rng) * 1e-9,
                },
            },
            PathGenerator::Oscillating {
                amplitude,
                base_delay_ns,
                sweep_ns,
                freq_hz,
            } => PathSpec {
                amplitude: Profile::Constant {
                    value: amplitude.draw(rng),
                },
                delay: Profile::Sinusoid {
                    base: base_delay_ns.draw(rng) * 1e-9,
                    amp: sweep_ns.draw(rng) * 1e-9,
                    freq_hz: freq_hz.draw(rng),
                    phase: rng.random_range(0.0..TAU),
                },
            },
        }
    }
}

/// One synthetic activity class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivityClassSpec {
    pub class_id: usize,
    pub paths: Vec<PathGenerator>,
    pub duration_packets: usize,
}

fn validate_classes(classes: &[ActivityClassSpec]) -> Result<()> {
    if classes.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 activity classes".into()));
    }
    for spec in classes {
        if spec.paths.is_empty() {
            return Err(Error::InvalidInput(format!(
                "class {} has no paths",
                spec.class_id
            )));
        }
        if spec.duration_packets == 0 {
            return Err(Error::InvalidInput(format!(
                "class {} has zero duration",
                spec.class_id
            )));
        }
        for p in &spec.paths {
            p.validate()?;
        }
    }
    for (i, a) in classes.iter().enumerate() {
        for b in classes.iter().skip(i + 1) {
            if a.class_id == b.class_id {
                return Err(Error::InvalidInput(format!(
                    "duplicate class id {}",
                    a.class_id
                )));
            }
            if a.paths == b.paths {
                return Err(Error::InvalidInput(format!(
                    "classes {} and {} have identical generators",
                    a.class_id, b.class_id
                )));
            }
        }
    }
    Ok(())
}

fn flatten_frames(frames: &[CsiFrame]) -> (Tensor, Tensor) {
    let t_len = frames.len();
    let d = frames[0].antennas() * frames[0].subcarriers();
    let mut amp = Vec::with_capacity(t_len * d);
    let mut pha = Vec::with_capacity(t_len * d);
    for frame in frames {
        amp.extend_from_slice(extract_amplitude(frame).data());
        pha.extend_from_slice(extract_phase(frame).data());
    }
    (
        Tensor::from_vec(&[t_len, d], amp).expect("frame geometry is uniform"),
        Tensor::from_vec(&[t_len, d], pha).expect("frame geometry is uniform"),
    )
}

fn synthesize_sample(
    spec: &ActivityClassSpec,
    cfg: &ChannelConfig,
    offsets: &OffsetSpec,
    sample_seed: u64,
    label: Option<usize>,
) -> Result<CsiSample> {
    let mut draw_rng = rng_from(mix(sample_seed, 0x7061_7468));
    let paths: Vec<PathSpec> = spec.paths.iter().map(|g| g.draw(&mut draw_rng)).collect();
    let frames = synthesize_frames(
        &paths,
        cfg,
        spec.duration_packets,
        mix(sample_seed, 0x6672_616d),
    )?;
    let frames = inject_offsets(frames, offsets, cfg)?;
    let (amp, pha) = flatten_frames(&frames);
    CsiSample::new(amp, pha, label, cfg.packet_rate_hz)
}

/// Labeled dataset: `per_class` samples per class, class-major, deterministic
/// in (specs, seed).
pub fn generate_activity_dataset(
    classes: &[ActivityClassSpec],
    per_class: usize,
    cfg: &ChannelConfig,
    offsets: &OffsetSpec,
    seed: u64,
) -> Result<Vec<CsiSample>> {
    validate_classes(classes)?;
    cfg.validate()?;
    let mut out = Vec::with_capacity(classes.len() * per_class);
    for spec in classes {
        for s in 0..per_class {
            let sample_seed = mix3(seed, spec.class_id as u64, s as u64);
            out.push(synthesize_sample(
                spec,
                cfg,
                offsets,
                sample_seed,
                Some(spec.class_id),
            )?);
        }
    }
    Ok(out)
}

/// Unlabeled pool for pretraining: `total` samples drawn round-robin across
/// the classes with labels stripped, from random draws independent of
/// [`generate_activity_dataset`] at the same seed.
pub fn generate_unlabeled_pool(
    classes: &[ActivityClassSpec],
    total: usize,
    cfg: &ChannelConfig,
    offsets: &OffsetSpec,
    seed: u64,
) -> Result<Vec<CsiSample>> {
    validate_classes(classes)?;
    cfg.validate()?;
    let mut out = Vec::with_capacity(total);
    for i in 0..total {
        let spec = &classes[i % classes.len()];
        let sample_seed = mix3(seed, 0x756e_6c62, i as u64);
        out.push(synthesize_sample(spec, cfg, offsets, sample_seed, None)?);
    }
    Ok(out)
}

/// Benchmark classes: a shared static line-of-sight path plus one moving
/// scatterer per class with disjoint delay and oscillation-frequency bands.
pub fn default_benchmark_classes(n_classes: usize) -> Vec<ActivityClassSpec> {
    (0..n_classes)
        .map(|c| {
            let k = c as f64;
            // one shared room: near-constant path delays across samples, so
            // inter-sample variation comes from the activity dynamics (the
            // scatterer's random starting phase and band draws). More
            // vigorous activity raises the oscillation band and, with it,
            // the scatterer strength and the delay slot, so classes separate
            // in spectrum and in modulation energy at once. The scatterer
            // stays weaker than the static path (amplitude capped) so the
            // channel never nulls, and the sweep sits in the quasi-linear
            // fringe regime (2*pi*f_c*sweep ~ 1 rad) so amplitude modulation
            // stays near the band fundamental.
            let band_lo = 2.1 + 5.0 * k;
            let near = 25.0 + 10.0 * k;
            let amp = (0.20 + 0.13 * k).min(0.80);
            ActivityClassSpec {
                class_id: c,
                paths: vec![
                    PathGenerator::Static {
                        amplitude: Band::new(1.05, 1.25),
                        delay_ns: Band::new(14.0, 16.0),
                    },
                    PathGenerator::Oscillating {
                        amplitude: Band::new(amp, amp + 0.06),
                        base_delay_ns: Band::new(near, near + 2.0),
                        sweep_ns: Band::new(0.028, 0.037),
                        freq_hz: Band::new(band_lo, band_lo + 0.8),
                    },
                ],
                duration_packets: 500,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csi::sanitize_sample;

    fn tiny_cfg() -> ChannelConfig {
        ChannelConfig {
            subcarrier_indices: intel_ht20_indices(),
            ..ChannelConfig::default()
        }
    }

    fn plain_cfg() -> ChannelConfig {
        // no antenna coloring, so values are easy to reason about
        ChannelConfig {
            antenna_phase_shifts: vec![0.0; 3],
            antenna_gains: vec![1.0; 3],
            ..tiny_cfg()
        }
    }

    #[test]
    fn zero_delay_unit_path_gives_all_ones() {
        let paths = [PathSpec {
            amplitude: Profile::Constant { value: 1.0 },
            delay: Profile::Constant { value: 0.0 },
        }];
        let frames = synthesize_frames(&paths, &plain_cfg(), 3, 0).unwrap();
        assert_eq!(frames.len(), 3);
        for f in &frames {
            for v in f.values() {
                assert!((v - Complex64::new(1.0, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_delay_gives_unit_amplitude_and_linear_phase_slope() {
        let tau = 30e-9;
        let paths = [PathSpec {
            amplitude: Profile::Constant { value: 1.0 },
            delay: Profile::Constant { value: tau },
        }];
        let cfg = plain_cfg();
        let frames = synthesize_frames(&paths, &cfg, 1, 0).unwrap();
        let f = &frames[0];
        for v in f.values() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
        // hand-derived slope of the phase in the subcarrier index
        let expect_slope = TAU * cfg.subcarrier_spacing_hz * tau;
        let idx = f.subcarrier_indices();
        for a in 0..cfg.antennas {
            for i in 1..idx.len() {
                let p1 = f.value(a, i).arg();
                let p0 = f.value(a, i - 1).arg();
                let dm = (idx[i] - idx[i - 1]) as f64;
                // wrap the raw difference before dividing by the index gap
                let mut d = p1 - p0;
                if d > PI {
                    d -= TAU;
                } else if d < -PI {
                    d += TAU;
                }
                let slope = d / dm;
                assert!(
                    (slope - expect_slope).abs() < 1e-9,
                    "slope {} vs {}",
                    slope,
                    expect_slope
                );
            }
        }
    }

    #[test]
    fn opposite_phases_cancel() {
        // two unit paths half a carrier period apart at m = 0 null the DC subcarrier
        let cfg = ChannelConfig {
            subcarrier_indices: vec![-1, 0, 1],
            ..plain_cfg()
        };
        let half_period = 0.5 / cfg.carrier_hz;
        let paths = [
            PathSpec {
                amplitude: Profile::Constant { value: 1.0 },
                delay: Profile::Constant { value: 0.0 },
            },
            PathSpec {
                amplitude: Profile::Constant { value: 1.0 },
                delay: Profile::Constant { value: half_period },
            },
        ];
        let frames = synthesize_frames(&paths, &cfg, 1, 0).unwrap();
        let v = frames[0].value(0, 1);
        assert!(v.norm() < 1e-9, "|H| = {}", v.norm());
    }

    #[test]
    fn triangle_inequality_bounds_amplitude() {
        let classes = default_benchmark_classes(3);
        let cfg = tiny_cfg();
        let samples =
            generate_activity_dataset(&classes, 2, &cfg, &OffsetSpec::zero(), 9).unwrap();
        // static cap 1.25 plus the scatterer capped for the last class,
        // times max antenna gain
        let bound = (1.25 + (0.20 + 0.13 * 2.0 + 0.06)) * 1.15 + 1e-9;
        for s in &samples {
            assert!(s.amplitude.data().iter().all(|&v| v <= bound));
        }
    }

    #[test]
    fn negative_amplitude_profile_is_rejected() {
        let paths = [PathSpec {
            amplitude: Profile::Linear {
                base: 0.1,
                rate: -1.0,
            },
            delay: Profile::Constant { value: 0.0 },
        }];
        assert!(synthesize_frames(&paths, &plain_cfg(), 400, 0).is_err());
    }

    #[test]
    fn zero_offsets_leave_frames_bit_exact() {
        let paths = [PathSpec {
            amplitude: Profile::Constant { value: 1.0 },
            delay: Profile::Sinusoid {
                base: 40e-9,
                amp: 0.2e-9,
                freq_hz: 3.0,
                phase: 0.5,
            },
        }];
        let cfg = tiny_cfg();
        let frames = synthesize_frames(&paths, &cfg, 20, 0).unwrap();
        let out = inject_offsets(frames.clone(), &OffsetSpec::zero(), &cfg).unwrap();
        assert_eq!(out, frames);
    }

    #[test]
    fn pure_pdd_adds_phase_linear_in_subcarrier_index() {
        let paths = [PathSpec {
            amplitude: Profile::Constant { value: 1.0 },
            delay: Profile::Constant { value: 25e-9 },
        }];
        let cfg = plain_cfg();
        let clean = synthesize_frames(&paths, &cfg, 4, 0).unwrap();
        let pdd = 0.1e-6;
        let spec = OffsetSpec {
            cfo_hz: 0.0,
            sfo_ppm: 0.0,
            pdd_seconds: PddSpec::Constant(pdd),
        };
        let shifted = inject_offsets(clean.clone(), &spec, &cfg).unwrap();
        for (fc, fs) in clean.iter().zip(shifted.iter()) {
            for (i, &m) in fc.subcarrier_indices().iter().enumerate() {
                let expect =
                    TAU * (cfg.carrier_hz + m as f64 * cfg.subcarrier_spacing_hz) * pdd;
                let got = (fs.value(0, i) / fc.value(0, i)).arg();
                let mut diff = (got - expect) % TAU;
                if diff > PI {
                    diff -= TAU;
                } else if diff < -PI {
                    diff += TAU;
                }
                assert!(diff.abs() < 1e-6, "residual {}", diff);
            }
        }
    }

    #[test]
    fn pure_cfo_preserves_amplitude_and_advances_phase_over_packets() {
        let paths = [PathSpec {
            amplitude: Profile::Constant { value: 1.0 },
            delay: Profile::Constant { value: 25e-9 },
        }];
        let cfg = plain_cfg();
        let clean = synthesize_frames(&paths, &cfg, 50, 0).unwrap();
        let spec = OffsetSpec {
            cfo_hz: 2.0,
            sfo_ppm: 0.0,
            pdd_seconds: PddSpec::Constant(0.0),
        };
        let shifted = inject_offsets(clean.clone(), &spec, &cfg).unwrap();
        for (fc, fs) in clean.iter().zip(shifted.iter()) {
            for (vc, vs) in fc.values().iter().zip(fs.values().iter()) {
                assert!((vc.norm() - vs.norm()).abs() < 1e-12);
            }
        }
        // per-packet phase advance at one subcarrier: slope 2pi cfo / packet_rate
        let series: Vec<f64> = shifted
            .iter()
            .zip(clean.iter())
            .map(|(fs, fc)| (fs.value(1, 7) / fc.value(1, 7)).arg())
            .collect();
        let unwrapped = crate::csi::unwrap_phase(&series);
        let slope = (unwrapped[unwrapped.len() - 1] - unwrapped[0]) / (unwrapped.len() - 1) as f64;
        let expect = TAU * spec.cfo_hz / cfg.packet_rate_hz;
        assert!((slope - expect).abs() < 1e-9, "{} vs {}", slope, expect);
    }

    #[test]
    fn sanitization_removes_injected_offsets() {
        let classes = default_benchmark_classes(2);
        let cfg = tiny_cfg();
        let mut pdd_rng = rng_from(77);
        let pdd: Vec<f64> = (0..500).map(|_| pdd_rng.random_range(0.0..0.15e-6)).collect();
        let offsets = OffsetSpec {
            cfo_hz: 500.0,
            sfo_ppm: 0.3,
            pdd_seconds: PddSpec::PerPacket(pdd),
        };
        let clean = generate_activity_dataset(&classes, 1, &cfg, &OffsetSpec::zero(), 5).unwrap();
        let dirty = generate_activity_dataset(&classes, 1, &cfg, &offsets, 5).unwrap();
        let k = cfg.subcarrier_indices.len();
        for (c, d) in clean.iter().zip(dirty.iter()) {
            let cs = sanitize_sample(c, cfg.antennas, k, &cfg.subcarrier_indices).unwrap();
            let ds = sanitize_sample(d, cfg.antennas, k, &cfg.subcarrier_indices).unwrap();
            let max_abs = cs
                .phase_sanitized()
                .unwrap()
                .data()
                .iter()
                .zip(ds.phase_sanitized().unwrap().data().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_abs < 1e-6, "max abs residual {}", max_abs);
        }
    }

    #[test]
    fn dataset_counts_shapes_and_determinism() {
        let classes = default_benchmark_classes(3);
        let cfg = tiny_cfg();
        let a = generate_activity_dataset(&classes, 10, &cfg, &OffsetSpec::zero(), 123).unwrap();
        assert_eq!(a.len(), 30);
        for c in 0..3 {
            assert_eq!(a.iter().filter(|s| s.label == Some(c)).count(), 10);
        }
        for s in &a {
            assert_eq!(s.amplitude.shape(), &[500, 90]);
            assert_eq!(s.phase_raw.shape(), &[500, 90]);
        }
        let b = generate_activity_dataset(&classes, 10, &cfg, &OffsetSpec::zero(), 123).unwrap();
        assert_eq!(a, b);
        let c = generate_activity_dataset(&classes, 10, &cfg, &OffsetSpec::zero(), 124).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn unlabeled_pool_cycles_classes_and_is_label_free() {
        let classes = default_benchmark_classes(3);
        let cfg = tiny_cfg();
        let pool = generate_unlabeled_pool(&classes, 7, &cfg, &OffsetSpec::zero(), 5).unwrap();
        assert_eq!(pool.len(), 7);
        assert!(pool.iter().all(|s| s.label.is_none()));
        // draws are independent of the labeled set at the same seed
        let labeled = generate_activity_dataset(&classes, 3, &cfg, &OffsetSpec::zero(), 5).unwrap();
        assert_ne!(pool[0].amplitude, labeled[0].amplitude);
    }

    #[test]
    fn spectral_centroid_oracle_separates_benchmark_classes() {
        use rustfft::{num_complex::Complex, FftPlanner};
        let classes = default_benchmark_classes(3);
        let cfg = tiny_cfg();
        let train = generate_activity_dataset(&classes, 6, &cfg, &OffsetSpec::zero(), 31).unwrap();
        let test = generate_activity_dataset(&classes, 4, &cfg, &OffsetSpec::zero(), 32).unwrap();
        // feature: log power spectrum of one amplitude channel, averaged over channels
        let feature = |s: &CsiSample| -> Vec<f64> {
            let t_len = s.amplitude.shape()[0];
            let d = s.amplitude.shape()[1];
            let mut planner = FftPlanner::<f64>::new();
            let fft = planner.plan_fft_forward(t_len);
            let mut acc = vec![0.0; t_len / 2];
            for ch in 0..d {
                let mut buf: Vec<Complex<f64>> = (0..t_len)
                    .map(|t| Complex::new(s.amplitude.at2(t, ch), 0.0))
                    .collect();
                let mean = buf.iter().map(|v| v.re).sum::<f64>() / t_len as f64;
                for v in &mut buf {
                    v.re -= mean;
                }
                fft.process(&mut buf);
                for (i, a) in acc.iter_mut().enumerate() {
                    *a += buf[i].norm_sqr();
                }
            }
            let total: f64 = acc.iter().sum::<f64>().max(1e-300);
            acc.iter().map(|v| v / total).collect()
        };
        let mut centroids = vec![vec![0.0; 250]; 3];
        let mut counts = [0usize; 3];
        for s in &train {
            let c = s.label.unwrap();
            for (acc, v) in centroids[c].iter_mut().zip(feature(s)) {
                *acc += v;
            }
            counts[c] += 1;
        }
        for (cent, &n) in centroids.iter_mut().zip(counts.iter()) {
            for v in cent.iter_mut() {
                *v /= n as f64;
            }
        }
        let mut correct = 0;
        for s in &test {
            let f = feature(s);
            let best = (0..3)
                .min_by(|&a, &b| {
                    let da: f64 = centroids[a].iter().zip(&f).map(|(c, v)| (c - v) * (c - v)).sum();
                    let db: f64 = centroids[b].iter().zip(&f).map(|(c, v)| (c - v) * (c - v)).sum();
                    da.partial_cmp(&db).unwrap()
                })
                .unwrap();
            if best == s.label.unwrap() {
                correct += 1;
            }
        }
        let acc = correct as f64 / test.len() as f64;
        assert!(acc > 0.75, "nearest-centroid accuracy {} at chance 1/3", acc);
    }

    #[test]
    fn class_validation_rejects_degenerate_specs() {
        let mut classes = default_benchmark_classes(2);
        assert!(generate_activity_dataset(
            &classes[..1],
            1,
            &tiny_cfg(),
            &OffsetSpec::zero(),
            0
        )
        .is_err());
        classes[1].paths = classes[0].paths.clone();
        assert!(generate_activity_dataset(&classes, 1, &tiny_cfg(), &OffsetSpec::zero(), 0).is_err());
        let classes = vec![
            ActivityClassSpec {
                class_id: 0,
                paths: vec![],
                duration_packets: 10,
            },
            ActivityClassSpec {
                class_id: 1,
                paths: default_benchmark_classes(2)[1].paths.clone(),
                duration_packets: 10,
            },
        ];
        assert!(generate_activity_dataset(&classes, 1, &tiny_cfg(), &OffsetSpec::zero(), 0).is_err());
    }

    #[test]
    fn receiver_noise_and_jitter_are_seeded_and_bounded() {
        let paths = [PathSpec {
            amplitude: Profile::Constant { value: 1.0 },
            delay: Profile::Constant { value: 20e-9 },
        }];
        let cfg = ChannelConfig {
            noise_std: 0.05,
            gain_jitter_std: 0.1,
            ..plain_cfg()
        };
        let a = synthesize_frames(&paths, &cfg, 10, 42).unwrap();
        let b = synthesize_frames(&paths, &cfg, 10, 42).unwrap();
        assert_eq!(a, b);
        let c = synthesize_frames(&paths, &cfg, 10, 43).unwrap();
        assert_ne!(a, c);
        // jitter is per packet: within one frame amplitudes stay equal across
        // subcarriers up to noise, across frames they spread
        let f0: Vec<f64> = a[0].values().iter().map(|v| v.norm()).collect();
        let spread_in_frame = f0.iter().cloned().fold(f64::MIN, f64::max)
            - f0.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread_in_frame < 0.5);
    }
}
