//! File-backed run configuration and CLI error mapping.
//!
//! One TOML file drives every subcommand. A single root seed feeds all
//! stages; `train.seed` and split seeds are derived from it, so a config
//! file pins every random stream. CLI flags override file values.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use autosen::data::{CsvLayout, SplitSpec};
use autosen::model::{FullSupPool, Mode, TrainConfig};
use autosen::seed::mix;
use autosen::synth::{ChannelConfig, OffsetSpec};

const SPLIT_SALT: u64 = 0x7370_6c;

/// Exit codes: 0 success, 1 other failure, 2 config error, 3 missing input,
/// 4 numerical failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Lib(autosen::Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "config error: {}", msg),
            CliError::Lib(e) => write!(f, "{}", e),
        }
    }
}

impl From<autosen::Error> for CliError {
    fn from(e: autosen::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(autosen::Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Lib(autosen::Error::MissingInput(_)) => 3,
            CliError::Lib(autosen::Error::Numerical(_)) => 4,
            CliError::Lib(_) => 1,
        }
    }
}

/// Per-class split sizes; the split seed is derived from the root seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SplitConfig {
    pub shots_per_class: usize,
    pub eval_per_class: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            shots_per_class: 10,
            eval_per_class: 70,
        }
    }
}

/// Input and output locations. Relative output paths resolve under
/// `out_dir`; input paths resolve against the working directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    pub out_dir: PathBuf,
    /// Raw CSV recording to ingest; absent means synthetic data.
    pub data: Option<PathBuf>,
    /// Label manifest for the recording.
    pub labels: Option<PathBuf>,
    pub labeled_cache: PathBuf,
    pub unlabeled_cache: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics_csv: PathBuf,
    pub metrics_json: PathBuf,
    pub losses_csv: PathBuf,
    pub losses_json: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            out_dir: PathBuf::from("out"),
            data: None,
            labels: None,
            labeled_cache: PathBuf::from("labeled.cache"),
            unlabeled_cache: PathBuf::from("unlabeled.cache"),
            checkpoint: PathBuf::from("model.ckpt"),
            metrics_csv: PathBuf::from("metrics.csv"),
            metrics_json: PathBuf::from("metrics.json"),
            losses_csv: PathBuf::from("losses.csv"),
            losses_json: PathBuf::from("losses.json"),
        }
    }
}

impl PathsConfig {
    fn out(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.out_dir.join(p)
        }
    }

    pub fn labeled_cache(&self) -> PathBuf {
        self.out(&self.labeled_cache)
    }

    pub fn unlabeled_cache(&self) -> PathBuf {
        self.out(&self.unlabeled_cache)
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.out(&self.checkpoint)
    }

    pub fn metrics_csv(&self) -> PathBuf {
        self.out(&self.metrics_csv)
    }

    pub fn metrics_json(&self) -> PathBuf {
        self.out(&self.metrics_json)
    }

    pub fn losses_csv(&self) -> PathBuf {
        self.out(&self.losses_csv)
    }

    pub fn losses_json(&self) -> PathBuf {
        self.out(&self.losses_json)
    }
}

/// Everything a run needs. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed; `--seed` overrides it, and every stage (training,
    /// splitting, synthesis) derives its own stream from it. A `train.seed`
    /// set in the file is ignored in favor of this value.
    pub seed: u64,
    /// Activity classes in the synthetic benchmark (and the classifier's C).
    pub classes: usize,
    pub samples_per_class: usize,
    pub unlabeled_samples: usize,
    /// Decimation factor applied to ingested CSV recordings.
    pub downsample: usize,
    /// Window length in packets for CSV ingestion.
    pub window: usize,
    /// Window stride in packets for CSV ingestion.
    pub stride: usize,
    pub train: TrainConfig,
    pub split: SplitConfig,
    /// Shot settings swept by `ablate` and `sweep-latent`.
    pub shots: Vec<usize>,
    /// Latent sizes swept by `sweep-latent`.
    pub latent_sizes: Vec<usize>,
    /// Seeds swept by `ablate` and `sweep-latent`.
    pub seeds: Vec<u64>,
    /// Modes swept by `ablate`.
    pub modes: Vec<Mode>,
    pub fullsup_pool: FullSupPool,
    pub channel: ChannelConfig,
    pub offsets: OffsetSpec,
    pub layout: CsvLayout,
    pub paths: PathsConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            classes: 3,
            samples_per_class: 90,
            unlabeled_samples: 200,
            downsample: 1,
            window: 500,
            stride: 500,
            train: TrainConfig::default(),
            split: SplitConfig::default(),
            shots: vec![10, 20],
            latent_sizes: vec![128, 256, 512],
            seeds: vec![0, 1, 2],
            modes: Mode::ALL.to_vec(),
            fullsup_pool: FullSupPool::FewShot,
            channel: ChannelConfig::default(),
            offsets: OffsetSpec::zero(),
            layout: CsvLayout::default(),
            paths: PathsConfig::default(),
        }
    }
}

impl RunConfig {
    /// The training hyperparameters with the root seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train
        }
    }

    /// The split derived from the root seed; independent of the shot count,
    /// so the eval set is stable across shot settings.
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            shots_per_class: self.split.shots_per_class,
            eval_per_class: self.split.eval_per_class,
            seed: mix(self.seed, SPLIT_SALT),
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        if self.classes < 2 {
            return bad(format!("classes = {}, need at least 2", self.classes));
        }
        if self.samples_per_class == 0 || self.unlabeled_samples == 0 {
            return bad("samples_per_class and unlabeled_samples must be positive".into());
        }
        if self.downsample == 0 || self.window == 0 || self.stride == 0 {
            return bad("downsample, window, and stride must be positive".into());
        }
        if self.split.shots_per_class == 0 || self.split.eval_per_class == 0 {
            return bad("split sizes must be positive".into());
        }
        if self.shots.is_empty() || self.latent_sizes.is_empty() || self.seeds.is_empty() {
            return bad("shots, latent_sizes, and seeds must be non-empty".into());
        }
        if self.modes.is_empty() {
            return bad("modes must be non-empty".into());
        }
        let check = |r: autosen::Result<()>| match r {
            Ok(()) => Ok(()),
            Err(e) => Err(CliError::Config(e.to_string())),
        };
        check(self.train.validate())?;
        check(self.channel.validate())?;
        check(self.layout.validate())?;
        Ok(())
    }
}

/// Load the config from `--config`, else `AUTOSEN_CONFIG`, else defaults,
/// then apply flag overrides and validate.
pub fn load(
    config: Option<&Path>,
    seed: Option<u64>,
    out: Option<&Path>,
) -> Result<RunConfig, CliError> {
    let path = config
        .map(Path::to_path_buf)
        .or_else(|| std::env::var_os("AUTOSEN_CONFIG").map(PathBuf::from));
    let mut cfg = match path {
        Some(p) => {
            let text = std::fs::read_to_string(&p).map_err(|e| {
                CliError::Config(format!("cannot read {}: {}", p.display(), e))
            })?;
            toml::from_str::<RunConfig>(&text)
                .map_err(|e| CliError::Config(format!("{}: {}", p.display(), e)))?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(o) = out {
        cfg.paths.out_dir = o.to_path_buf();
    }
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_the_documented_protocol() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.train.epochs, 100);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.train.lr, 1e-3);
        assert_eq!(cfg.train.latent_size, 256);
        assert_eq!(cfg.channel.packet_rate_hz, 500.0);
        assert_eq!(cfg.split.shots_per_class, 10);
        assert_eq!(cfg.split.eval_per_class, 70);
        assert_eq!(cfg.latent_sizes, vec![128, 256, 512]);
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("verbosity = 3\n").unwrap_err();
        assert!(err.to_string().contains("verbosity"));
        assert!(toml::from_str::<RunConfig>("[train]\nmomentum = 0.9\n").is_err());
    }

    #[test]
    fn partial_sections_merge_over_defaults() {
        let cfg: RunConfig = toml::from_str(
            "seed = 7\n[train]\nepochs = 3\n[channel]\nnoise_std = 0.25\n[split]\nshots_per_class = 20\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, 64);
        assert_eq!(cfg.channel.noise_std, 0.25);
        assert_eq!(cfg.channel.antennas, 3);
        assert_eq!(cfg.split.shots_per_class, 20);
        assert_eq!(cfg.split.eval_per_class, 70);
    }

    #[test]
    fn train_seed_follows_the_root_seed() {
        let cfg: RunConfig = toml::from_str("seed = 11\n[train]\nseed = 99\n").unwrap();
        assert_eq!(cfg.train_config().seed, 11);
    }

    #[test]
    fn split_seed_ignores_shot_count() {
        let mut a = RunConfig::default();
        a.split.shots_per_class = 10;
        let mut b = RunConfig::default();
        b.split.shots_per_class = 20;
        assert_eq!(a.split_spec().seed, b.split_spec().seed);
    }

    #[test]
    fn output_paths_resolve_under_out_dir() {
        let mut cfg = RunConfig::default();
        cfg.paths.out_dir = PathBuf::from("/tmp/run");
        assert_eq!(cfg.paths.checkpoint(), PathBuf::from("/tmp/run/model.ckpt"));
        cfg.paths.metrics_csv = PathBuf::from("/abs/metrics.csv");
        assert_eq!(cfg.paths.metrics_csv(), PathBuf::from("/abs/metrics.csv"));
    }

    #[test]
    fn validation_rejects_bad_values() {
        let mut cfg = RunConfig::default();
        cfg.classes = 1;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.train.lr = 0.0;
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
        let mut cfg = RunConfig::default();
        cfg.seeds.clear();
        assert!(matches!(cfg.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn exit_codes_map_error_classes() {
        assert_eq!(CliError::Config("x".into()).exit_code(), 2);
        assert_eq!(
            CliError::Lib(autosen::Error::MissingInput("x".into())).exit_code(),
            3
        );
        assert_eq!(
            CliError::Lib(autosen::Error::Numerical("x".into())).exit_code(),
            4
        );
        assert_eq!(
            CliError::Lib(autosen::Error::Format("x".into())).exit_code(),
            1
        );
    }
}
