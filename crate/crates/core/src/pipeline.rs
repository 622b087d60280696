//! End-to-end composition: prepare, train, score, evaluate.

use rayon::prelude::*;

use crate::checkpoint::{Checkpoint, Model};
use crate::config::ExperimentConfig;
use crate::data::{aggregate, minmax_apply, minmax_fit, sliding_windows, NormStats};
use crate::detect::{
    anomaly_score, calibrate_threshold, column_residuals, discrimination_loss, mean_abs_diff,
    per_sample_scores, residual_loss, ScoreMode, ScoreSeries, WindowScore,
};
use crate::error::{Error, Result};
use crate::eval::{roc_curve, Report};
use crate::gan::gan_train;
use crate::rng::{seeded_rng, window_rng};
use crate::types::{Dataset, ModelKind};
use crate::vae::{vae_train, Sampling};

/// Aggregates, then normalizes with `stats`.
pub fn prepare(ds: &Dataset, stats: &NormStats, block: usize) -> Result<Dataset> {
    minmax_apply(&aggregate(ds, block)?, stats)
}

/// Fits normalization on the (aggregated) baseline data and trains a model on its windows.
pub fn train(kind: ModelKind, baseline: &Dataset, config: &ExperimentConfig) -> Result<Checkpoint> {
    config.validate()?;
    let agg = aggregate(baseline, config.aggregate_block)?;
    let stats = minmax_fit(&agg);
    let norm = minmax_apply(&agg, &stats)?;
    let windows = sliding_windows(&norm, config.window_len)?;
    let mut rng = seeded_rng(config.seed);
    let model = match kind {
        ModelKind::Gan => Model::Gan(gan_train(&windows, config, &mut rng)?),
        ModelKind::Vae => Model::Vae(vae_train(&windows, config, &mut rng)?),
    };
    Ok(Checkpoint::new(
        model,
        stats,
        config.clone(),
        baseline.names().to_vec(),
    ))
}

/// Per-sample score components before mixing.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    /// Discrimination loss per sample (adversarial model only).
    pub disc: Option<Vec<Option<f64>>>,
    pub resid: Vec<Option<f64>>,
}

/// Scores every unit-step window of normalized data. Window `i` draws its
/// latent candidates from a stream seeded by `seed ^ i`, so results do not
/// depend on evaluation order.
pub fn score_components(
    model: &Model,
    norm: &Dataset,
    config: &ExperimentConfig,
) -> Result<Components> {
    let t = model.window_len();
    let windows = sliding_windows(norm, t)?;
    match model {
        Model::Gan(m) => {
            let scored: Vec<(WindowScore, f64)> = windows
                .par_iter()
                .map(|w| {
                    let mut rng = window_rng(config.seed, w.start_index);
                    let disc = discrimination_loss(&m.discriminator, w)?;
                    let (resid, best) =
                        residual_loss(&m.generator, w, config.residual_samples, &mut rng)?;
                    Ok((
                        WindowScore {
                            start_index: w.start_index,
                            value: resid,
                            per_column: column_residuals(&w.values, &best.values),
                        },
                        disc,
                    ))
                })
                .collect::<Result<_>>()?;
            let disc_windows: Vec<WindowScore> = scored
                .iter()
                .map(|(w, d)| WindowScore {
                    start_index: w.start_index,
                    value: *d,
                    per_column: Vec::new(),
                })
                .collect();
            let resid_windows: Vec<WindowScore> = scored.into_iter().map(|(w, _)| w).collect();
            Ok(Components {
                disc: Some(per_sample_scores(
                    &disc_windows,
                    norm.len(),
                    t,
                    ScoreMode::Discrimination,
                )?),
                resid: per_sample_scores(&resid_windows, norm.len(), t, ScoreMode::Residual)?,
            })
        }
        Model::Vae(m) => {
            let scored: Vec<WindowScore> = windows
                .par_iter()
                .map(|w| {
                    let recon = m.reconstruct(w, Sampling::Mean)?;
                    Ok(WindowScore {
                        start_index: w.start_index,
                        value: mean_abs_diff(&w.values, &recon.values),
                        per_column: column_residuals(&w.values, &recon.values),
                    })
                })
                .collect::<Result<_>>()?;
            Ok(Components {
                disc: None,
                resid: per_sample_scores(&scored, norm.len(), t, ScoreMode::Residual)?,
            })
        }
    }
}

/// Mean and standard deviation of each component on calibration data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub disc: (f64, f64),
    pub resid: (f64, f64),
}

fn moments(xs: &[Option<f64>]) -> (f64, f64) {
    let v: Vec<f64> = xs.iter().flatten().copied().collect();
    if v.is_empty() {
        return (0.0, 1.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let sd = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

impl Standardization {
    pub fn fit(c: &Components) -> Self {
        Standardization {
            disc: c.disc.as_deref().map_or((0.0, 1.0), moments),
            resid: moments(&c.resid),
        }
    }
}

/// Mixes components into the anomaly score (residual only for the VAE).
pub fn combine(
    c: &Components,
    lambda: f64,
    standardization: Option<&Standardization>,
) -> Vec<Option<f64>> {
    let z = |v: f64, (m, s): (f64, f64)| (v - m) / s;
    c.resid
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let r = (*r)?;
            let r = standardization.map_or(r, |st| z(r, st.resid));
            match &c.disc {
                None => Some(r),
                Some(disc) => {
                    let d = disc[i]?;
                    let d = standardization.map_or(d, |st| z(d, st.disc));
                    Some(anomaly_score(d, r, lambda))
                }
            }
        })
        .collect()
}

/// Where the alarm threshold comes from, in precedence order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdSource {
    Explicit(f64),
    Calibrated { target_fpr: f64 },
    Config(f64),
}

/// Scores raw (un-normalized) data with a checkpoint.
///
/// `config` supplies run-time settings (`K`, `lambda`, `seed`,
/// `target_fpr`, standardization); shape-defining settings come from the
/// checkpoint. The threshold is `explicit`, else calibrated on
/// `calibration`, else `config.threshold`.
pub fn score(
    ckpt: &Checkpoint,
    data: &Dataset,
    config: &ExperimentConfig,
    calibration: Option<&Dataset>,
    explicit: Option<f64>,
) -> Result<(ScoreSeries, ThresholdSource)> {
    config.validate()?;
    let n = ckpt.model.n_series();
    for (what, ds) in
        std::iter::once(("data", data)).chain(calibration.map(|c| ("calibration data", c)))
    {
        if ds.n_series() != n {
            return Err(Error::ShapeMismatch(format!(
                "checkpoint expects n = {n} series, {what} supplies n = {}",
                ds.n_series()
            )));
        }
    }
    let block = ckpt.config.aggregate_block;
    let components = score_components(&ckpt.model, &prepare(data, &ckpt.stats, block)?, config)?;
    let calib = calibration
        .map(|c| score_components(&ckpt.model, &prepare(c, &ckpt.stats, block)?, config))
        .transpose()?;
    let standardization = match (config.standardize_scores, &calib) {
        (false, _) => None,
        (true, Some(c)) => Some(Standardization::fit(c)),
        (true, None) => {
            return Err(Error::Config(
                "standardize_scores needs calibration data".into(),
            ))
        }
    };
    let scores = combine(&components, config.lambda, standardization.as_ref());
    let source = match (explicit, &calib, config.threshold) {
        (Some(t), _, _) => ThresholdSource::Explicit(t),
        (None, Some(_), _) => ThresholdSource::Calibrated {
            target_fpr: config.target_fpr,
        },
        (None, None, Some(t)) => ThresholdSource::Config(t),
        (None, None, None) => {
            return Err(Error::Config(
                "no threshold: give one explicitly, supply calibration data, or set threshold"
                    .into(),
            ))
        }
    };
    let threshold = match source {
        ThresholdSource::Explicit(t) | ThresholdSource::Config(t) => t,
        ThresholdSource::Calibrated { target_fpr } => {
            let c = calib
                .as_ref()
                .expect("calibrated source implies calibration scores");
            let baseline: Vec<f64> = combine(c, config.lambda, standardization.as_ref())
                .into_iter()
                .flatten()
                .collect();
            calibrate_threshold(&baseline, target_fpr)?
        }
    };
    Ok((ScoreSeries::new(scores, threshold), source))
}

/// Builds a report from per-sample scores and labelled data that has
/// already been aggregated like the scores were.
pub fn evaluate_scores(
    scores: &ScoreSeries,
    labels: &[u8],
    kind: Option<ModelKind>,
) -> Result<Report> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "score file has {} samples, labelled data has {}",
            scores.len(),
            labels.len()
        )));
    }
    Ok(Report::from_roc(&roc_curve(&scores.scores, labels)?, kind))
}

/// Scores labelled raw data with a checkpoint and evaluates the result.
pub fn evaluate_run(
    ckpt: &Checkpoint,
    data: &Dataset,
    config: &ExperimentConfig,
    calibration: Option<&Dataset>,
) -> Result<(ScoreSeries, Report)> {
    let labels = aggregate(data, ckpt.config.aggregate_block)?
        .labels()
        .ok_or_else(|| Error::InvalidArgument("evaluation data has no labels".into()))?
        .to_vec();
    // The ROC does not depend on the threshold, so do not insist on one.
    let explicit = match (calibration, config.threshold) {
        (None, None) => Some(f64::INFINITY),
        _ => None,
    };
    let (scores, _) = score(ckpt, data, config, calibration, explicit)?;
    let report = evaluate_scores(&scores, &labels, Some(ckpt.model.kind()))?;
    Ok((scores, report))
}
