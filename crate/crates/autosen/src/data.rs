//! Dataset ingestion, windowing, splits, and the binary sample cache.
//!
//! CSV recordings are decimated without filtering, cut into fixed windows
//! (partial tails discarded, never padded), and split per class into
//! disjoint few-shot and evaluation sets. The eval set depends only on the
//! seed, so changing the shot count never moves evaluation samples.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::csi::CsiSample;
use crate::error::{Error, Result};
use crate::seed::{mix, rng_from};
use crate::tensor::Tensor;

/// Column layout of a raw CSV recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsvLayout {
    pub timestamp_col: usize,
    pub amplitude_start: usize,
    pub phase_start: usize,
    /// Width of both the amplitude and the phase column ranges.
    pub channels: usize,
    pub delimiter: char,
    pub has_header: bool,
}

impl Default for CsvLayout {
    fn default() -> Self {
        CsvLayout {
            timestamp_col: 0,
            amplitude_start: 1,
            phase_start: 91,
            channels: 90,
            delimiter: ',',
            has_header: false,
        }
    }
}

impl CsvLayout {
    pub fn validate(&self) -> Result<()> {
        if self.channels == 0 {
            return Err(Error::InvalidInput("layout needs at least one channel".into()));
        }
        let amp = self.amplitude_start..self.amplitude_start + self.channels;
        let pha = self.phase_start..self.phase_start + self.channels;
        let overlap = amp.start < pha.end && pha.start < amp.end;
        if overlap || amp.contains(&self.timestamp_col) || pha.contains(&self.timestamp_col) {
            return Err(Error::InvalidInput(format!(
                "column ranges overlap: timestamp {}, amplitude {:?}, phase {:?}",
                self.timestamp_col, amp, pha
            )));
        }
        Ok(())
    }

    fn min_columns(&self) -> usize {
        (self.timestamp_col + 1)
            .max(self.amplitude_start + self.channels)
            .max(self.phase_start + self.channels)
    }
}

/// A continuous recording: per-row timestamp plus (rows x D) amplitude and
/// phase matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct CsiStream {
    pub timestamps: Vec<f64>,
    pub amplitude: Tensor,
    pub phase: Tensor,
}

impl CsiStream {
    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn channels(&self) -> usize {
        if self.amplitude.shape().len() == 2 {
            self.amplitude.shape()[1]
        } else {
            0
        }
    }
}

/// Parse a CSV recording. Malformed rows fail with their 1-based line number.
pub fn load_csv(path: &Path, layout: &CsvLayout) -> Result<CsiStream> {
    layout.validate()?;
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut timestamps = Vec::new();
    let mut amp = Vec::new();
    let mut pha = Vec::new();
    let need = layout.min_columns();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if i == 0 && layout.has_header {
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(layout.delimiter).collect();
        if fields.len() < need {
            return Err(Error::Parse {
                line: line_no,
                msg: format!("{} columns, need at least {}", fields.len(), need),
            });
        }
        let parse = |col: usize| -> Result<f64> {
            fields[col].trim().parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                msg: format!("column {} is not numeric: {:?}", col, fields[col].trim()),
            })
        };
        timestamps.push(parse(layout.timestamp_col)?);
        for c in 0..layout.channels {
            amp.push(parse(layout.amplitude_start + c)?);
        }
        for c in 0..layout.channels {
            pha.push(parse(layout.phase_start + c)?);
        }
    }
    let rows = timestamps.len();
    Ok(CsiStream {
        timestamps,
        amplitude: Tensor::from_vec(&[rows, layout.channels], amp)?,
        phase: Tensor::from_vec(&[rows, layout.channels], pha)?,
    })
}

/// Keep every `factor`-th row starting at row 0. Plain decimation, no filter.
pub fn downsample(stream: &CsiStream, factor: usize) -> Result<CsiStream> {
    if factor < 1 {
        return Err(Error::InvalidInput("downsample factor must be >= 1".into()));
    }
    if factor == 1 {
        return Ok(stream.clone());
    }
    let d = stream.channels();
    let kept: Vec<usize> = (0..stream.rows()).step_by(factor).collect();
    let mut amp = Vec::with_capacity(kept.len() * d);
    let mut pha = Vec::with_capacity(kept.len() * d);
    let mut timestamps = Vec::with_capacity(kept.len());
    for &r in &kept {
        timestamps.push(stream.timestamps[r]);
        amp.extend_from_slice(&stream.amplitude.data()[r * d..(r + 1) * d]);
        pha.extend_from_slice(&stream.phase.data()[r * d..(r + 1) * d]);
    }
    Ok(CsiStream {
        timestamps,
        amplitude: Tensor::from_vec(&[kept.len(), d], amp)?,
        phase: Tensor::from_vec(&[kept.len(), d], pha)?,
    })
}

/// A labeled row range `[start, end)` of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelSpan {
    pub start: usize,
    pub end: usize,
    pub class_id: usize,
}

fn cut_sample(
    stream: &CsiStream,
    start: usize,
    t: usize,
    rate_hz: f64,
    label: Option<usize>,
) -> Result<CsiSample> {
    let d = stream.channels();
    let amp = stream.amplitude.data()[start * d..(start + t) * d].to_vec();
    let pha = stream.phase.data()[start * d..(start + t) * d].to_vec();
    CsiSample::new(
        Tensor::from_vec(&[t, d], amp)?,
        Tensor::from_vec(&[t, d], pha)?,
        label,
        rate_hz,
    )
}

/// Fixed-length windows at `stride` spacing; a tail shorter than `t` is
/// discarded. A window gets the label of the first span that fully contains
/// it, or stays unlabeled.
pub fn window_samples(
    stream: &CsiStream,
    t: usize,
    stride: usize,
    rate_hz: f64,
    labels: Option<&[LabelSpan]>,
) -> Result<Vec<CsiSample>> {
    if t == 0 || stride == 0 {
        return Err(Error::InvalidInput("window length and stride must be positive".into()));
    }
    if stream.rows() < t {
        return Err(Error::InvalidInput(format!(
            "stream has {} rows, window needs {}",
            stream.rows(),
            t
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + t <= stream.rows() {
        let label = labels.and_then(|spans| {
            spans
                .iter()
                .find(|s| s.start <= start && start + t <= s.end)
                .map(|s| s.class_id)
        });
        out.push(cut_sample(stream, start, t, rate_hz, label)?);
        start += stride;
    }
    Ok(out)
}

/// `count` unlabeled windows at seed-derived uniform start offsets over
/// `[0, rows - t]`.
pub fn random_segments(
    stream: &CsiStream,
    t: usize,
    count: usize,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<CsiSample>> {
    if t == 0 {
        return Err(Error::InvalidInput("segment length must be positive".into()));
    }
    if stream.rows() < t {
        return Err(Error::InvalidInput(format!(
            "stream has {} rows, segment needs {}",
            stream.rows(),
            t
        )));
    }
    let mut rng = rng_from(seed);
    let hi = stream.rows() - t;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let start = rng.random_range(0..=hi);
        out.push(cut_sample(stream, start, t, rate_hz, None)?);
    }
    Ok(out)
}

/// Per-class split sizes and the seed that shuffles each class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub shots_per_class: usize,
    pub eval_per_class: usize,
    pub seed: u64,
}

/// Index lists into the sample slice handed to [`make_split`].
#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub fewshot: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Class-balanced disjoint split. Within each class the samples are shuffled
/// by a class-specific stream of `spec.seed`; the first `eval_per_class` go
/// to evaluation and the next `shots_per_class` to few-shot calibration, so
/// the eval set is identical across shot settings.
pub fn make_split(samples: &[CsiSample], spec: &SplitSpec) -> Result<Split> {
    if spec.shots_per_class == 0 {
        return Err(Error::InvalidInput("shots_per_class must be >= 1".into()));
    }
    let mut classes: Vec<usize> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        match s.label {
            Some(c) => {
                if !classes.contains(&c) {
                    classes.push(c);
                }
            }
            None => {
                return Err(Error::InvalidInput(format!(
                    "sample {} is unlabeled; splits need labeled data",
                    i
                )))
            }
        }
    }
    classes.sort_unstable();
    let need = spec.shots_per_class + spec.eval_per_class;
    let mut fewshot = Vec::new();
    let mut eval = Vec::new();
    for &c in &classes {
        let mut idx: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| s.label == Some(c))
            .map(|(i, _)| i)
            .collect();
        if idx.len() < need {
            return Err(Error::InvalidInput(format!(
                "class {} has {} samples, split needs {}",
                c,
                idx.len(),
                need
            )));
        }
        let mut rng = rng_from(mix(spec.seed, c as u64));
        idx.shuffle(&mut rng);
        eval.extend_from_slice(&idx[..spec.eval_per_class]);
        fewshot.extend_from_slice(&idx[spec.eval_per_class..need]);
    }
    Ok(Split { fewshot, eval })
}

const CACHE_MAGIC: &[u8; 4] = b"ASDS";
const CACHE_VERSION: u32 = 1;
const FLAG_LABEL: u8 = 1;
const FLAG_SANITIZED: u8 = 2;

fn eof_as_truncation(e: std::io::Error, path: &Path) -> Error {
    if e.kind() == std::io::ErrorKind::UnexpectedEof {
        Error::Format(format!("cache {} is truncated", path.display()))
    } else {
        Error::Io(e)
    }
}

/// Write a sample cache. The encoding is raw little-endian f64 bits, so
/// [`cache_read`] restores values bit-exactly.
pub fn cache_write(samples: &[CsiSample], path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_u32::<LittleEndian>(CACHE_VERSION)?;
    w.write_u64::<LittleEndian>(samples.len() as u64)?;
    for s in samples {
        let mut flags = 0u8;
        if s.label.is_some() {
            flags |= FLAG_LABEL;
        }
        if s.phase_sanitized().is_some() {
            flags |= FLAG_SANITIZED;
        }
        w.write_u8(flags)?;
        if let Some(c) = s.label {
            w.write_u32::<LittleEndian>(c as u32)?;
        }
        w.write_f64::<LittleEndian>(s.sample_rate_hz)?;
        w.write_u32::<LittleEndian>(s.timestamps() as u32)?;
        w.write_u32::<LittleEndian>(s.channels() as u32)?;
        for &v in s.amplitude.data() {
            w.write_f64::<LittleEndian>(v)?;
        }
        for &v in s.phase_raw.data() {
            w.write_f64::<LittleEndian>(v)?;
        }
        if let Some(san) = s.phase_sanitized() {
            for &v in san.data() {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Read a sample cache written by [`cache_write`].
pub fn cache_read(path: &Path) -> Result<Vec<CsiSample>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|e| eof_as_truncation(e, path))?;
    if &magic != CACHE_MAGIC {
        return Err(Error::Format(format!(
            "bad cache magic {:?} in {}",
            magic,
            path.display()
        )));
    }
    let version = r
        .read_u32::<LittleEndian>()
        .map_err(|e| eof_as_truncation(e, path))?;
    if version != CACHE_VERSION {
        return Err(Error::Format(format!(
            "cache version {} unsupported (expected {})",
            version, CACHE_VERSION
        )));
    }
    let count = r
        .read_u64::<LittleEndian>()
        .map_err(|e| eof_as_truncation(e, path))? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let trunc = |e| eof_as_truncation(e, path);
        let flags = r.read_u8().map_err(trunc)?;
        let label = if flags & FLAG_LABEL != 0 {
            Some(r.read_u32::<LittleEndian>().map_err(trunc)? as usize)
        } else {
            None
        };
        let rate = r.read_f64::<LittleEndian>().map_err(trunc)?;
        let t = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let d = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        let read_plane = |r: &mut BufReader<File>| -> Result<Tensor> {
            let mut data = vec![0.0; t * d];
            r.read_f64_into::<LittleEndian>(&mut data).map_err(trunc)?;
            Tensor::from_vec(&[t, d], data)
        };
        let amp = read_plane(&mut r)?;
        let pha = read_plane(&mut r)?;
        let mut sample = CsiSample::new(amp, pha, label, rate)?;
        if flags & FLAG_SANITIZED != 0 {
            sample.set_phase_sanitized(read_plane(&mut r)?);
        }
        out.push(sample);
    }
    Ok(out)
}

/// One row of a label manifest.
#[derive(Debug, Clone, PartialEq)]
pub enum ManifestEntry {
    /// Every window from this file carries the class.
    File { path: String, class_id: usize },
    /// Row range `[start, end)` of the current recording carries the class.
    Span(LabelSpan),
}

/// Parse a two-column manifest: `key,class_id` per line, where the key is a
/// `start-end` row range or a file path. `#` lines and blanks are skipped.
pub fn load_label_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    if !path.exists() {
        return Err(Error::MissingInput(path.display().to_string()));
    }
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, class) = trimmed.rsplit_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: "expected `key,class_id`".into(),
        })?;
        let class_id: usize = class.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("class id {:?} is not an integer", class.trim()),
        })?;
        let key = key.trim();
        let as_span = key.split_once('-').and_then(|(a, b)| {
            Some((a.trim().parse::<usize>().ok()?, b.trim().parse::<usize>().ok()?))
        });
        match as_span {
            Some((start, end)) => {
                if end <= start {
                    return Err(Error::Parse {
                        line: line_no,
                        msg: format!("empty row range {}-{}", start, end),
                    });
                }
                out.push(ManifestEntry::Span(LabelSpan {
                    start,
                    end,
                    class_id,
                }));
            }
            None => out.push(ManifestEntry::File {
                path: key.to_string(),
                class_id,
            }),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_layout() -> CsvLayout {
        CsvLayout {
            timestamp_col: 0,
            amplitude_start: 1,
            phase_start: 5,
            channels: 4,
            delimiter: ',',
            has_header: false,
        }
    }

    fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    fn synthetic_stream(rows: usize, d: usize) -> CsiStream {
        let amp: Vec<f64> = (0..rows * d).map(|i| i as f64).collect();
        let pha: Vec<f64> = (0..rows * d).map(|i| -(i as f64)).collect();
        CsiStream {
            timestamps: (0..rows).map(|r| r as f64).collect(),
            amplitude: Tensor::from_vec(&[rows, d], amp).unwrap(),
            phase: Tensor::from_vec(&[rows, d], pha).unwrap(),
        }
    }

    #[test]
    fn load_csv_parses_handcrafted_rows_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "a.csv",
            "0.0,1,2,3,4,0.1,0.2,0.3,0.4\n\
             1.0,5,6,7,8,0.5,0.6,0.7,0.8\n\
             2.0,9,10,11,12,0.9,1.0,1.1,1.2\n",
        );
        let s = load_csv(&p, &tiny_layout()).unwrap();
        assert_eq!(s.rows(), 3);
        assert_eq!(s.channels(), 4);
        assert_eq!(s.timestamps, vec![0.0, 1.0, 2.0]);
        assert_eq!(s.amplitude.at2(1, 2), 7.0);
        assert_eq!(s.phase.at2(2, 3), 1.2);
    }

    #[test]
    fn load_csv_reports_line_of_short_row() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "b.csv",
            "0.0,1,2,3,4,0.1,0.2,0.3,0.4\n0.1,1,2,3,0.1,0.2,0.3,0.4\n",
        );
        match load_csv(&p, &tiny_layout()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn load_csv_reports_line_of_bad_number() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "c.csv",
            "0.0,1,2,3,4,0.1,0.2,0.3,0.4\n0.1,1,oops,3,4,0.1,0.2,0.3,0.4\n",
        );
        match load_csv(&p, &tiny_layout()) {
            Err(Error::Parse { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("oops"));
            }
            other => panic!("expected parse error, got {:?}", other),
        }
    }

    #[test]
    fn load_csv_missing_file_and_header_handling() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_csv(&dir.path().join("absent.csv"), &tiny_layout()),
            Err(Error::MissingInput(_))
        ));
        let p = write_file(
            &dir,
            "d.csv",
            "ts,a1,a2,a3,a4,p1,p2,p3,p4\n0.0,1,2,3,4,0.1,0.2,0.3,0.4\n",
        );
        let layout = CsvLayout {
            has_header: true,
            ..tiny_layout()
        };
        let s = load_csv(&p, &layout).unwrap();
        assert_eq!(s.rows(), 1);
    }

    #[test]
    fn layout_rejects_overlapping_ranges() {
        let bad = CsvLayout {
            amplitude_start: 1,
            phase_start: 3,
            channels: 4,
            ..tiny_layout()
        };
        assert!(bad.validate().is_err());
        let ts_inside = CsvLayout {
            timestamp_col: 2,
            ..tiny_layout()
        };
        assert!(ts_inside.validate().is_err());
    }

    #[test]
    fn downsample_identity_and_decimation() {
        let s = synthetic_stream(1000, 2);
        let same = downsample(&s, 1).unwrap();
        assert_eq!(same, s);
        let half = downsample(&s, 2).unwrap();
        assert_eq!(half.rows(), 500);
        assert_eq!(half.timestamps[0], 0.0);
        assert_eq!(half.timestamps[1], 2.0);
        assert_eq!(half.amplitude.at2(1, 0), s.amplitude.at2(2, 0));
        assert!(downsample(&s, 0).is_err());
    }

    #[test]
    fn downsample_keeps_physical_frequency() {
        use rustfft::{num_complex::Complex, FftPlanner};
        // 50 Hz tone sampled at 1 kHz, decimated by 2 to 500 Hz
        let rows = 1000;
        let tone = 50.0;
        let amp: Vec<f64> = (0..rows)
            .map(|r| (2.0 * std::f64::consts::PI * tone * r as f64 / 1000.0).sin())
            .collect();
        let s = CsiStream {
            timestamps: (0..rows).map(|r| r as f64 / 1000.0).collect(),
            amplitude: Tensor::from_vec(&[rows, 1], amp).unwrap(),
            phase: Tensor::from_vec(&[rows, 1], vec![0.0; rows]).unwrap(),
        };
        let half = downsample(&s, 2).unwrap();
        assert_eq!(half.rows(), 500);
        let mut buf: Vec<Complex<f64>> = half
            .amplitude
            .data()
            .iter()
            .map(|&v| Complex::new(v, 0.0))
            .collect();
        FftPlanner::new().plan_fft_forward(500).process(&mut buf);
        let peak = (1..250)
            .max_by(|&a, &b| buf[a].norm().partial_cmp(&buf[b].norm()).unwrap())
            .unwrap();
        // bin k at 500 samples over 1 s of decimated signal is k Hz
        assert_eq!(peak, 50);
    }

    #[test]
    fn windowing_counts_and_tail_discard() {
        let s = synthetic_stream(1000, 3);
        let w = window_samples(&s, 500, 500, 500.0, None).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.iter().all(|x| x.label.is_none()));
        assert_eq!(w[1].amplitude.at2(0, 0), s.amplitude.at2(500, 0));

        let s = synthetic_stream(499, 3);
        assert!(window_samples(&s, 500, 500, 500.0, None).is_err());

        // floor((1200 - 500) / 250) + 1 = 3 windows at 0, 250, 500
        let s = synthetic_stream(1200, 1);
        let w = window_samples(&s, 500, 250, 500.0, None).unwrap();
        assert_eq!(w.len(), 3);
        for (i, start) in [0usize, 250, 500].iter().enumerate() {
            assert_eq!(w[i].amplitude.at2(0, 0), (*start) as f64);
        }
    }

    #[test]
    fn windowing_attaches_span_labels() {
        let s = synthetic_stream(1000, 1);
        let spans = [
            LabelSpan {
                start: 0,
                end: 500,
                class_id: 4,
            },
            LabelSpan {
                start: 500,
                end: 1000,
                class_id: 6,
            },
        ];
        let w = window_samples(&s, 500, 250, 500.0, Some(&spans)).unwrap();
        assert_eq!(w.len(), 3);
        assert_eq!(w[0].label, Some(4));
        // window at 250 straddles both spans, so it stays unlabeled
        assert_eq!(w[1].label, None);
        assert_eq!(w[2].label, Some(6));
    }

    #[test]
    fn random_segments_empty_and_deterministic() {
        let s = synthetic_stream(700, 1);
        assert!(random_segments(&s, 500, 0, 500.0, 1).unwrap().is_empty());
        let a = random_segments(&s, 500, 5, 500.0, 9).unwrap();
        let b = random_segments(&s, 500, 5, 500.0, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|x| x.label.is_none()));
        assert!(random_segments(&synthetic_stream(100, 1), 500, 1, 500.0, 0).is_err());
    }

    #[test]
    fn random_segment_offsets_are_uniform() {
        // 1499 rows, T = 500: offsets 0..=999 in 10 bins of 100
        let s = synthetic_stream(1499, 1);
        let segs = random_segments(&s, 500, 10_000, 500.0, 1234).unwrap();
        let mut bins = [0usize; 10];
        for seg in &segs {
            // first amplitude value encodes the start row in this stream
            let start = seg.amplitude.at2(0, 0) as usize;
            assert!(start <= 999);
            bins[start / 100] += 1;
        }
        let expected = 1000.0;
        let chi2: f64 = bins
            .iter()
            .map(|&o| {
                let d = o as f64 - expected;
                d * d / expected
            })
            .sum();
        // chi-square critical value, 9 dof, 1% level
        assert!(chi2 < 21.666, "chi2 = {}", chi2);
    }

    fn labeled_set(classes: usize, per_class: usize) -> Vec<CsiSample> {
        let mut out = Vec::new();
        for c in 0..classes {
            for s in 0..per_class {
                let v = (c * per_class + s) as f64;
                out.push(
                    CsiSample::new(
                        Tensor::from_vec(&[1, 1], vec![v]).unwrap(),
                        Tensor::from_vec(&[1, 1], vec![v]).unwrap(),
                        Some(c),
                        500.0,
                    )
                    .unwrap(),
                );
            }
        }
        out
    }

    #[test]
    fn split_counts_match_protocol() {
        let samples = labeled_set(7, 100);
        let split = make_split(
            &samples,
            &SplitSpec {
                shots_per_class: 10,
                eval_per_class: 70,
                seed: 3,
            },
        )
        .unwrap();
        assert_eq!(split.fewshot.len(), 70);
        assert_eq!(split.eval.len(), 490);
        for c in 0..7 {
            let f = split.fewshot.iter().filter(|&&i| samples[i].label == Some(c)).count();
            let e = split.eval.iter().filter(|&&i| samples[i].label == Some(c)).count();
            assert_eq!((f, e), (10, 70));
        }
    }

    #[test]
    fn split_rejects_insufficient_class() {
        let samples = labeled_set(3, 85);
        let err = make_split(
            &samples,
            &SplitSpec {
                shots_per_class: 20,
                eval_per_class: 70,
                seed: 3,
            },
        );
        assert!(err.is_err());
    }

    #[test]
    fn split_sets_are_disjoint_and_eval_is_stable_across_shots() {
        let samples = labeled_set(4, 95);
        let s10 = make_split(
            &samples,
            &SplitSpec {
                shots_per_class: 10,
                eval_per_class: 70,
                seed: 11,
            },
        )
        .unwrap();
        let s20 = make_split(
            &samples,
            &SplitSpec {
                shots_per_class: 20,
                eval_per_class: 70,
                seed: 11,
            },
        )
        .unwrap();
        use std::collections::HashSet;
        let f10: HashSet<_> = s10.fewshot.iter().collect();
        let e10: HashSet<_> = s10.eval.iter().collect();
        assert!(f10.is_disjoint(&e10));
        assert_eq!(s10.eval, s20.eval);
        // the 10-shot pool is a prefix of the 20-shot pool per class
        let f20: HashSet<_> = s20.fewshot.iter().collect();
        assert!(f10.is_subset(&f20));
        // different seed moves the eval set
        let other = make_split(
            &samples,
            &SplitSpec {
                shots_per_class: 10,
                eval_per_class: 70,
                seed: 12,
            },
        )
        .unwrap();
        assert_ne!(s10.eval, other.eval);
    }

    #[test]
    fn split_rejects_unlabeled_samples() {
        let mut samples = labeled_set(2, 5);
        samples.push(
            CsiSample::new(
                Tensor::from_vec(&[1, 1], vec![0.0]).unwrap(),
                Tensor::from_vec(&[1, 1], vec![0.0]).unwrap(),
                None,
                500.0,
            )
            .unwrap(),
        );
        assert!(make_split(
            &samples,
            &SplitSpec {
                shots_per_class: 1,
                eval_per_class: 2,
                seed: 0
            }
        )
        .is_err());
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        use crate::csi::{intel_ht20_indices, sanitize_sample};
        let classes = crate::synth::default_benchmark_classes(2);
        let cfg = crate::synth::ChannelConfig::default();
        let mut samples = crate::synth::generate_activity_dataset(
            &classes,
            1,
            &cfg,
            &crate::synth::OffsetSpec::zero(),
            7,
        )
        .unwrap();
        // one sanitized, one raw, one unlabeled
        samples[0] = sanitize_sample(&samples[0], 3, 30, &intel_ht20_indices()).unwrap();
        samples[1].label = None;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.bin");
        cache_write(&samples, &path).unwrap();
        let back = cache_read(&path).unwrap();
        assert_eq!(back, samples);
        assert!(back[0].phase_sanitized().is_some());
        assert!(back[1].phase_sanitized().is_none());
    }

    #[test]
    fn cache_rejects_truncation_version_and_magic() {
        let samples = labeled_set(2, 2);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.bin");
        cache_write(&samples, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();

        std::fs::write(&path, &bytes[..bytes.len() - 4]).unwrap();
        match cache_read(&path) {
            Err(Error::Format(msg)) => assert!(msg.contains("truncated")),
            other => panic!("expected truncation error, got {:?}", other),
        }

        let mut v = bytes.clone();
        v[4] = 99;
        std::fs::write(&path, &v).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::Format(_))));

        let mut m = bytes.clone();
        m[0] = b'X';
        std::fs::write(&path, &m).unwrap();
        assert!(matches!(cache_read(&path), Err(Error::Format(_))));

        assert!(matches!(
            cache_read(&dir.path().join("absent.bin")),
            Err(Error::MissingInput(_))
        ));
    }

    #[test]
    fn manifest_parses_spans_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let p = write_file(
            &dir,
            "labels.csv",
            "# comment\n0-500,3\nrecordings/run1.csv,5\n500-1000,0\n",
        );
        let entries = load_label_manifest(&p).unwrap();
        assert_eq!(entries.len(), 3);
        assert_eq!(
            entries[0],
            ManifestEntry::Span(LabelSpan {
                start: 0,
                end: 500,
                class_id: 3
            })
        );
        assert_eq!(
            entries[1],
            ManifestEntry::File {
                path: "recordings/run1.csv".into(),
                class_id: 5
            }
        );
        let bad = write_file(&dir, "bad.csv", "5-5,1\n");
        assert!(matches!(
            load_label_manifest(&bad),
            Err(Error::Parse { line: 1, .. })
        ));
        let bad2 = write_file(&dir, "bad2.csv", "justonecolumn\n");
        assert!(matches!(
            load_label_manifest(&bad2),
            Err(Error::Parse { line: 1, .. })
        ));
    }
}
