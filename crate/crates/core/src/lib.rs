//! Anomaly detection in multivariate time-series with generative models.
//!
//! Two detectors share one pipeline:
//!
//! * an adversarially trained pair of LSTM networks, where the discriminator
//!   scores how far a window is from the baseline and a random latent search
//!   through the generator yields a reconstruction residual;
//! * a variational auto-encoder over flattened windows, scored by its
//!   reconstruction residual.
//!
//! Data flows as [`Dataset`] → min-max normalization → unit-step
//! [`WindowMatrix`] windows → per-window scores → per-sample scores →
//! calibrated threshold → alarms, with ROC evaluation on labelled data.

pub mod checkpoint;
pub mod config;
pub mod data;
pub mod detect;
pub mod error;
pub mod eval;
pub mod gan;
pub mod nets;
pub mod pipeline;
pub mod rng;
pub mod types;
pub mod vae;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, Model, FORMAT_VERSION};
pub use config::ExperimentConfig;
pub use data::{NormStats, SynthSpec};
pub use detect::ScoreSeries;
pub use error::{Error, Result};
pub use eval::{Report, RocResult};
pub use gan::GanModel;
pub use rng::{seeded_rng, RunRng};
pub use types::{Dataset, LatentSequence, Matrix, ModelKind, WindowMatrix};
pub use vae::VaeModel;
