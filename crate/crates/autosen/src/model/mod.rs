//! Cross-modal autoencoder pipeline: architecture assembly, pretraining,
//! few-shot calibration, the supervised baseline, and the ablation harness.

mod ablate;
mod arch;
mod train;

pub use ablate::{
    metrics_csv, metrics_json, run_ablation, summary_table, AblationGrid, AblationReport,
    AblationSummary, FullSupPool, Metrics,
};
pub use arch::{
    build_autosen, build_classifier, build_decoder, build_encoder, model_input,
    reconstruction_target, AutoSen, ModelSpec, Mode,
};
pub use train::{
    evaluate, few_shot_calibrate, predict, pretrain, train_classifier_on_embeddings,
    train_full_supervision, CalibrationOutcome, FullSupOutcome, PretrainOutcome, TrainConfig,
};
