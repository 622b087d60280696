//! Experiment configuration, stored as flat `key = value` TOML.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Window length in steps.
    #[serde(rename = "T")]
    pub window_len: usize,
    /// Latent width.
    #[serde(rename = "d_z")]
    pub latent_dim: usize,
    pub gen_hidden: usize,
    pub gen_layers: usize,
    pub disc_hidden: usize,
    pub disc_layers: usize,
    pub enc_hidden1: usize,
    pub enc_hidden2: usize,
    pub dec_hidden1: usize,
    pub dec_hidden2: usize,
    pub gan_lr: f64,
    pub vae_lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub gan_epochs: usize,
    pub vae_epochs: usize,
    pub batch_size: usize,
    /// Latent draws per window in the residual search.
    #[serde(rename = "K")]
    pub residual_samples: usize,
    /// Weight of the residual loss in the anomaly score.
    pub lambda: f64,
    /// Weight of the KL term in the VAE objective.
    pub kl_weight: f64,
    /// Z-score discrimination and residual losses on calibration data before mixing.
    pub standardize_scores: bool,
    /// Non-overlapping aggregation block applied before normalization.
    pub aggregate_block: usize,
    pub target_fpr: f64,
    /// Fixed alarm threshold; when absent it is calibrated.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            window_len: 20,
            latent_dim: 4,
            gen_hidden: 16,
            gen_layers: 1,
            disc_hidden: 16,
            disc_layers: 1,
            enc_hidden1: 64,
            enc_hidden2: 32,
            dec_hidden1: 32,
            dec_hidden2: 64,
            gan_lr: 1e-3,
            vae_lr: 1e-3,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            gan_epochs: 20,
            vae_epochs: 50,
            batch_size: 32,
            residual_samples: 64,
            lambda: 0.5,
            kl_weight: 1.0,
            standardize_scores: false,
            aggregate_block: 1,
            target_fpr: 0.01,
            threshold: None,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("T", self.window_len),
            ("d_z", self.latent_dim),
            ("gen_hidden", self.gen_hidden),
            ("gen_layers", self.gen_layers),
            ("disc_hidden", self.disc_hidden),
            ("disc_layers", self.disc_layers),
            ("enc_hidden1", self.enc_hidden1),
            ("enc_hidden2", self.enc_hidden2),
            ("dec_hidden1", self.dec_hidden1),
            ("dec_hidden2", self.dec_hidden2),
            ("batch_size", self.batch_size),
            ("K", self.residual_samples),
            ("aggregate_block", self.aggregate_block),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("{name} must be positive")));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::Config(format!(
                "lambda {} outside [0, 1]",
                self.lambda
            )));
        }
        if !(self.target_fpr > 0.0 && self.target_fpr < 1.0) {
            return Err(Error::Config(format!(
                "target_fpr {} outside (0, 1)",
                self.target_fpr
            )));
        }
        for (name, v) in [
            ("gan_lr", self.gan_lr),
            ("vae_lr", self.vae_lr),
            ("kl_weight", self.kl_weight),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        for (name, v) in [
            ("adam_beta1", self.adam_beta1),
            ("adam_beta2", self.adam_beta2),
        ] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(
                "seed must fit in a signed 64-bit integer".into(),
            ));
        }
        if let Some(t) = self.threshold {
            if t.is_nan() {
                return Err(Error::Config("threshold is NaN".into()));
            }
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|e| Error::io(path, e))
    }
}
