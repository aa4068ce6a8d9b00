//! Fall detection from wearable inertial-sensor streams using only normal
//! activity data.
//!
//! The crate covers the whole pipeline: raw stream ingestion and gyroscope
//! synchronisation ([`ingest`]), low-pass filtering and windowing ([`dsp`]),
//! the 31 time/frequency features and RELIEF-F ranking ([`features`]), a
//! log-space Gaussian HMM ([`hmm`]), the detector family built on top of it
//! ([`models`]), IQR proxy-outlier tuning of the covariance inflation factor
//! ([`tuning`]) and leave-one-subject-out evaluation ([`eval`]).

pub mod dataset;
pub mod dsp;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod ingest;
pub mod models;
pub mod stats;
pub mod tuning;

pub use dataset::{FeatureDataset, Scaler, WindowRecord};
pub use error::{Error, Result};
pub use hmm::{GaussianHmm, TrainConfig};
pub use models::{FallDetector, Variant, Verdict};

/// Reserved label for fall events.
pub const FALL_LABEL: &str = "fall";
