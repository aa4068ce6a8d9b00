//! Flag groups, the TOML config file and their merge into effective settings.
//!
//! Every flag has a config key of the same name with `-` replaced by `_`.
//! Flags win over the file; unset values fall back to library defaults.

use std::path::{Path, PathBuf};

use clap::Args;
use serde::Deserialize;
use xfactor_core::dataset::PipelineConfig;
use xfactor_core::eval::{EvalConfig, SyntheticConfig, DEFAULT_INJECTION_COUNTS, DEFAULT_INJECTION_REPEATS};
use xfactor_core::ingest::Schema;
use xfactor_core::{dsp, TrainConfig, Variant};

use crate::CliError;

/// Keys accepted in a config file.
pub const CONFIG_KEYS: [&str; 26] = [
    "seed",
    "out_dir",
    "jobs",
    "dataset",
    "schema",
    "window_s",
    "overlap",
    "frame_ms",
    "cutoff_hz",
    "filter_order",
    "variants",
    "xi_grid",
    "omega",
    "cv_folds",
    "n_states",
    "top_k",
    "max_iterations",
    "counts",
    "repeats",
    "subjects",
    "windows_per_subject",
    "frames_per_window",
    "activities",
    "dim",
    "fall_prevalence",
    "subject_shift_sd",
];

macro_rules! merge_from {
    ($flags:expr, $file:expr; $($f:ident),+) => {
        $( if $flags.$f.is_none() { $flags.$f = $file.$f.clone(); } )+
    };
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct Common {
    /// TOML file with default values for any flag
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (required)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory receiving all outputs
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 uses all cores
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct Input {
    /// Feature CSV (schema `features`) or raw dataset file/directory
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// One of features, generic-csv, dlr, mobifall
    #[arg(long)]
    pub schema: Option<String>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct Pipeline {
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long)]
    pub frame_ms: Option<f64>,
    #[arg(long)]
    pub cutoff_hz: Option<f64>,
    #[arg(long)]
    pub filter_order: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct Model {
    /// Comma-separated detector variants
    #[arg(long = "variant", alias = "variants", value_delimiter = ',')]
    pub variants: Option<Vec<String>>,
    /// Comma-separated covariance inflation candidates
    #[arg(long, value_delimiter = ',')]
    pub xi_grid: Option<Vec<f64>>,
    /// IQR whisker multiplier
    #[arg(long)]
    pub omega: Option<f64>,
    /// Folds of the inner ξ cross-validation
    #[arg(long)]
    pub cv_folds: Option<usize>,
    #[arg(long)]
    pub n_states: Option<usize>,
    /// Keep the top RELIEF-F features
    #[arg(long)]
    pub top_k: Option<usize>,
    /// Baum-Welch iteration cap
    #[arg(long)]
    pub max_iterations: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct InjectOpts {
    /// Comma-separated numbers of training falls
    #[arg(long, value_delimiter = ',')]
    pub counts: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<usize>,
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
pub struct SynthOpts {
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub windows_per_subject: Option<usize>,
    #[arg(long)]
    pub frames_per_window: Option<usize>,
    #[arg(long)]
    pub activities: Option<usize>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub fall_prevalence: Option<f64>,
    #[arg(long)]
    pub subject_shift_sd: Option<f64>,
}

/// Everything a config file may hold.
#[derive(Debug, Default, Deserialize)]
pub struct FileConfig {
    #[serde(flatten)]
    pub common: Common,
    #[serde(flatten)]
    pub input: Input,
    #[serde(flatten)]
    pub pipeline: Pipeline,
    #[serde(flatten)]
    pub model: Model,
    #[serde(flatten)]
    pub inject: InjectOpts,
    #[serde(flatten)]
    pub synth: SynthOpts,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<FileConfig, CliError> {
        if !path.is_file() {
            return Err(usage(format!("config file {} does not exist", path.display())));
        }
        let text = std::fs::read_to_string(path)
            .map_err(|e| usage(format!("cannot read config file {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| usage(format!("config file {}: {e}", path.display())))?;
        if let Some(k) = table.keys().find(|k| !CONFIG_KEYS.contains(&k.as_str())) {
            return Err(usage(format!("config file {}: unknown key `{k}`", path.display())));
        }
        toml::from_str(&text).map_err(|e| usage(format!("config file {}: {e}", path.display())))
    }
}

impl Common {
    pub fn merge(&mut self, file: &Common) {
        merge_from!(self, file; seed, out_dir, jobs);
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.seed
            .ok_or_else(|| usage("a seed is required: pass --seed or set `seed` in the config file"))
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

/// How the `--dataset` path is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Features,
    Raw(Schema),
}

impl std::fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DatasetKind::Features => f.write_str("features"),
            DatasetKind::Raw(s) => s.fmt(f),
        }
    }
}

impl Input {
    pub fn merge(&mut self, file: &Input) {
        merge_from!(self, file; dataset, schema);
    }

    /// The dataset path, which must exist, and how to read it.
    pub fn resolve(&self, default: DatasetKind) -> Result<(PathBuf, DatasetKind), CliError> {
        let path = self
            .dataset
            .clone()
            .ok_or_else(|| usage("no dataset given: pass --dataset or set `dataset` in the config file"))?;
        if !path.exists() {
            return Err(usage(format!("dataset path {} does not exist", path.display())));
        }
        let kind = match self.schema.as_deref() {
            None => default,
            Some("features") => DatasetKind::Features,
            Some(s) => DatasetKind::Raw(s.parse().map_err(|e: xfactor_core::Error| usage(e.to_string()))?),
        };
        if kind == DatasetKind::Features && !path.is_file() {
            return Err(usage(format!("feature dataset {} is not a file", path.display())));
        }
        Ok((path, kind))
    }
}

impl Pipeline {
    pub fn merge(&mut self, file: &Pipeline) {
        merge_from!(self, file; window_s, overlap, frame_ms, cutoff_hz, filter_order);
    }

    pub fn resolve(&self) -> Result<PipelineConfig, CliError> {
        let d = PipelineConfig::default();
        let cfg = PipelineConfig {
            window_s: self.window_s.unwrap_or(d.window_s),
            overlap: self.overlap.unwrap_or(d.overlap),
            frame_s: self.frame_ms.map_or(dsp::DEFAULT_FRAME_S, |ms| ms / 1000.0),
            cutoff_hz: self.cutoff_hz.unwrap_or(d.cutoff_hz),
            filter_order: self.filter_order.unwrap_or(d.filter_order),
        };
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if !positive(cfg.window_s) {
            return Err(usage(format!("--window-s must be positive, got {}", cfg.window_s)));
        }
        if !(0.0..1.0).contains(&cfg.overlap) {
            return Err(usage(format!("--overlap must lie in [0, 1), got {}", cfg.overlap)));
        }
        if !positive(cfg.frame_s) || cfg.frame_s > cfg.window_s {
            return Err(usage(format!(
                "--frame-ms must be positive and no longer than the window, got {} ms",
                cfg.frame_s * 1000.0
            )));
        }
        if !positive(cfg.cutoff_hz) {
            return Err(usage(format!("--cutoff-hz must be positive, got {}", cfg.cutoff_hz)));
        }
        if cfg.filter_order == 0 {
            return Err(usage("--filter-order must be at least 1"));
        }
        Ok(cfg)
    }
}

impl Model {
    pub fn merge(&mut self, file: &Model) {
        merge_from!(self, file; variants, xi_grid, omega, cv_folds, n_states, top_k, max_iterations);
    }

    pub fn variants(&self, default: &[Variant]) -> Result<Vec<Variant>, CliError> {
        let Some(names) = &self.variants else {
            return Ok(default.to_vec());
        };
        if names.is_empty() {
            return Err(usage("--variant needs at least one name"));
        }
        names
            .iter()
            .map(|n| n.parse().map_err(|e: xfactor_core::Error| usage(e.to_string())))
            .collect()
    }

    pub fn resolve(&self, seed: u64) -> Result<EvalConfig, CliError> {
        let d = EvalConfig::default();
        let cfg = EvalConfig {
            n_states: self.n_states.unwrap_or(d.n_states),
            omega: self.omega.unwrap_or(d.omega),
            xi_grid: self.xi_grid.clone().unwrap_or(d.xi_grid),
            cv_folds: self.cv_folds.unwrap_or(d.cv_folds),
            seed,
            top_k: self.top_k.or(d.top_k),
            train: TrainConfig {
                max_iterations: self.max_iterations.unwrap_or(d.train.max_iterations),
                ..d.train
            },
            ..d
        };
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}

impl InjectOpts {
    pub fn merge(&mut self, file: &InjectOpts) {
        merge_from!(self, file; counts, repeats);
    }

    pub fn resolve(&self) -> Result<(Vec<usize>, usize), CliError> {
        let counts = self.counts.clone().unwrap_or_else(|| DEFAULT_INJECTION_COUNTS.to_vec());
        let repeats = self.repeats.unwrap_or(DEFAULT_INJECTION_REPEATS);
        if counts.is_empty() || counts.contains(&0) {
            return Err(usage("--counts must list positive fall counts"));
        }
        if repeats == 0 {
            return Err(usage("--repeats must be positive"));
        }
        Ok((counts, repeats))
    }
}

impl SynthOpts {
    pub fn merge(&mut self, file: &SynthOpts) {
        merge_from!(
            self, file;
            subjects, windows_per_subject, frames_per_window, activities, dim, fall_prevalence, subject_shift_sd
        );
    }

    pub fn resolve(&self, seed: u64) -> Result<SyntheticConfig, CliError> {
        let activities = self.activities.unwrap_or(3);
        if !(2..=8).contains(&activities) {
            return Err(usage(format!("--activities must lie in 2..=8, got {activities}")));
        }
        let dim = self.dim.unwrap_or(6);
        if dim == 0 {
            return Err(usage("--dim must be positive"));
        }
        let mut cfg = SyntheticConfig::standard(activities, dim, seed);
        if let Some(n) = self.subjects {
            cfg.n_subjects = n;
        }
        if let Some(n) = self.windows_per_subject {
            cfg.windows_per_subject = n;
        }
        if let Some(n) = self.frames_per_window {
            cfg.frames_per_window = n;
        }
        if let Some(p) = self.fall_prevalence {
            cfg.fall_prevalence = p;
        }
        if let Some(s) = self.subject_shift_sd {
            cfg.subject_shift_sd = s;
        }
        cfg.validate().map_err(|e| usage(e.to_string()))?;
        Ok(cfg)
    }
}
