//! Ablation grid: run every (latent, mode, shots, seed) cell, collect one
//! metrics row per cell, and aggregate per-configuration means with deltas
//! against the cross-modal reference.
//!
//! Pretraining does not depend on the shot count, so each (latent, mode,
//! seed) autoencoder is trained once and calibrated per shot setting. The
//! split seed is never mixed with the shot count, which keeps the eval set
//! fixed while the few-shot pool grows.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::csi::CsiSample;
use crate::data::{make_split, SplitSpec};
use crate::error::{Error, Result};
use crate::model::arch::Mode;
use crate::model::train::{
    evaluate, few_shot_calibrate, pretrain, train_full_supervision, TrainConfig,
};
use crate::seed::mix;

const SPLIT_SALT: u64 = 0x7370_6c;

/// One run's results and identifying metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mode: Mode,
    pub shots: usize,
    pub latent_size: usize,
    pub seed: u64,
    /// Pretraining reconstruction curve, or the supervised CE curve for
    /// fullsup. Empty when evaluating a loaded checkpoint.
    pub epoch_losses: Vec<f64>,
    pub accuracy: f64,
    pub per_class_accuracy: Vec<f64>,
    pub encoder_params: usize,
    pub classifier_params: usize,
}

/// Which labeled pool the fullsup baseline trains on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FullSupPool {
    /// The same few-shot pool the calibrated modes see (default).
    FewShot,
    /// Every labeled sample outside the eval set.
    AllLabeled,
}

/// The grid to sweep and the per-cell training template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationGrid {
    pub modes: Vec<Mode>,
    pub shots: Vec<usize>,
    pub latent_sizes: Vec<usize>,
    pub seeds: Vec<u64>,
    pub eval_per_class: usize,
    pub fullsup_pool: FullSupPool,
    /// Epochs, batch size and learning rate for every cell; its mode, seed
    /// and latent size are overwritten per cell.
    pub base: TrainConfig,
}

impl AblationGrid {
    pub fn validate(&self) -> Result<()> {
        if self.modes.is_empty()
            || self.shots.is_empty()
            || self.latent_sizes.is_empty()
            || self.seeds.is_empty()
        {
            return Err(Error::InvalidInput(
                "ablation grid needs at least one mode, shot count, latent size, and seed".into(),
            ));
        }
        if self.eval_per_class == 0 {
            return Err(Error::InvalidInput("eval_per_class must be positive".into()));
        }
        self.base.validate()
    }

    fn cell(&self, mode: Mode, latent: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            mode,
            latent_size: latent,
            seed,
            ..self.base
        }
    }
}

/// Mean accuracy per shot setting for one (mode, latent) configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationSummary {
    pub mode: Mode,
    pub latent_size: usize,
    /// (shots, mean accuracy over seeds), in grid order.
    pub shot_accuracy: Vec<(usize, f64)>,
    /// Arithmetic mean over the shot settings.
    pub avg_accuracy: f64,
    /// avg minus the cross-modal avg at the same latent size; negative
    /// means worse than cross-modal. Absent when cross-modal was not run.
    pub delta_vs_cross_modal: Option<f64>,
}

/// All per-cell rows plus the per-configuration aggregation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub rows: Vec<Metrics>,
    pub summaries: Vec<AblationSummary>,
}

fn gather<'a>(samples: &'a [CsiSample], idx: &[usize]) -> Vec<CsiSample> {
    idx.iter().map(|&i| samples[i].clone()).collect()
}

/// Run the full grid sequentially in deterministic order: latent-major,
/// then mode, seed, shots.
pub fn run_ablation(
    unlabeled: &[CsiSample],
    labeled: &[CsiSample],
    classes: usize,
    grid: &AblationGrid,
) -> Result<AblationReport> {
    grid.validate()?;
    let mut rows = Vec::new();
    for &latent in &grid.latent_sizes {
        for &mode in &grid.modes {
            for &seed in &grid.seeds {
                let cfg = grid.cell(mode, latent, seed);
                let pre = if mode.is_pretrained() {
                    Some(pretrain(unlabeled, &cfg)?)
                } else {
                    None
                };
                for &shots in &grid.shots {
                    let split = make_split(
                        labeled,
                        &SplitSpec {
                            shots_per_class: shots,
                            eval_per_class: grid.eval_per_class,
                            seed: mix(seed, SPLIT_SALT),
                        },
                    )?;
                    let eval_set = gather(labeled, &split.eval);
                    let row = match &pre {
                        Some(pre) => {
                            let pool = gather(labeled, &split.fewshot);
                            let cal = few_shot_calibrate(&pre.encoder, &pool, classes, &cfg)?;
                            let (accuracy, per_class) =
                                evaluate(&pre.encoder, &cal.classifier, mode, &eval_set, classes)?;
                            Metrics {
                                mode,
                                shots,
                                latent_size: latent,
                                seed,
                                epoch_losses: pre.epoch_losses.clone(),
                                accuracy,
                                per_class_accuracy: per_class,
                                encoder_params: pre.encoder.param_count(),
                                classifier_params: cal.classifier.param_count(),
                            }
                        }
                        None => {
                            let pool = match grid.fullsup_pool {
                                FullSupPool::FewShot => split.fewshot.clone(),
                                FullSupPool::AllLabeled => {
                                    let held: HashSet<usize> = split.eval.iter().copied().collect();
                                    (0..labeled.len()).filter(|i| !held.contains(i)).collect()
                                }
                            };
                            let pool = gather(labeled, &pool);
                            let sup = train_full_supervision(&pool, classes, &cfg)?;
                            let (accuracy, per_class) =
                                evaluate(&sup.encoder, &sup.classifier, mode, &eval_set, classes)?;
                            Metrics {
                                mode,
                                shots,
                                latent_size: latent,
                                seed,
                                epoch_losses: sup.epoch_losses.clone(),
                                accuracy,
                                per_class_accuracy: per_class,
                                encoder_params: sup.encoder.param_count(),
                                classifier_params: sup.classifier.param_count(),
                            }
                        }
                    };
                    rows.push(row);
                }
            }
        }
    }
    let summaries = summarize(&rows, grid);
    Ok(AblationReport { rows, summaries })
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for x in xs {
        sum += x;
        n += 1;
    }
    sum / n as f64
}

fn summarize(rows: &[Metrics], grid: &AblationGrid) -> Vec<AblationSummary> {
    let mut out = Vec::new();
    for &latent in &grid.latent_sizes {
        let cross_avg = grid.modes.contains(&Mode::CrossModal).then(|| {
            mean(
                rows.iter()
                    .filter(|r| r.latent_size == latent && r.mode == Mode::CrossModal)
                    .map(|r| r.accuracy),
            )
        });
        for &mode in &grid.modes {
            let shot_accuracy: Vec<(usize, f64)> = grid
                .shots
                .iter()
                .map(|&shots| {
                    let m = mean(
                        rows.iter()
                            .filter(|r| {
                                r.latent_size == latent && r.mode == mode && r.shots == shots
                            })
                            .map(|r| r.accuracy),
                    );
                    (shots, m)
                })
                .collect();
            let avg_accuracy = mean(shot_accuracy.iter().map(|&(_, a)| a));
            out.push(AblationSummary {
                mode,
                latent_size: latent,
                shot_accuracy,
                avg_accuracy,
                delta_vs_cross_modal: cross_avg.map(|c| avg_accuracy - c),
            });
        }
    }
    out
}

/// Rows as CSV with a header; list-valued columns are `;`-joined.
pub fn metrics_csv(rows: &[Metrics]) -> String {
    let mut out = String::from(
        "mode,shots,latent_size,seed,accuracy,encoder_params,classifier_params,per_class_accuracy,epoch_losses\n",
    );
    for r in rows {
        let per_class = r
            .per_class_accuracy
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        let losses = r
            .epoch_losses
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(";");
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.mode, r.shots, r.latent_size, r.seed, r.accuracy, r.encoder_params,
            r.classifier_params, per_class, losses
        ));
    }
    out
}

/// Rows as pretty-printed JSON.
pub fn metrics_json(rows: &[Metrics]) -> Result<String> {
    serde_json::to_string(&rows)
        .map_err(|e| Error::Format(format!("metrics serialization failed: {}", e)))
}

/// Fixed-width text table of the per-configuration summaries: one row per
/// (mode, latent), accuracy per shot setting, the Avg column, and the delta
/// against cross-modal.
pub fn summary_table(report: &AblationReport, shots: &[usize]) -> String {
    let mut out = format!("{:<14}{:>8}", "mode", "latent");
    for s in shots {
        out.push_str(&format!("{:>12}", format!("{}-shot", s)));
    }
    out.push_str(&format!("{:>10}{:>10}\n", "avg", "delta"));
    for s in &report.summaries {
        out.push_str(&format!("{:<14}{:>8}", s.mode.to_string(), s.latent_size));
        for &(_, acc) in &s.shot_accuracy {
            out.push_str(&format!("{:>12.4}", acc));
        }
        let delta = s
            .delta_vs_cross_modal
            .map(|d| format!("{:+.4}", d))
            .unwrap_or_else(|| "-".into());
        out.push_str(&format!("{:>10.4}{:>10}\n", s.avg_accuracy, delta));
    }
    out
}
