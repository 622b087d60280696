use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use netgan_core::data::{aggregate, load_csv, render_csv, synth_generate};
use netgan_core::eval::render_roc_svg;
use netgan_core::pipeline::{self, evaluate_scores, ThresholdSource};
use netgan_core::{Checkpoint, ExperimentConfig, ModelKind, ScoreSeries, SynthSpec};

/// Adversarial and variational anomaly detection for multivariate time series.
#[derive(Parser)]
#[command(name = "netgan", version)]
struct Cli {
    /// Suppress progress lines on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labelled synthetic dataset from a TOML spec.
    Synth {
        spec: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model on baseline data and write a checkpoint.
    Train {
        #[arg(value_parser = parse_kind)]
        kind: ModelKind,
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score every sample of a dataset with a trained checkpoint.
    Score {
        checkpoint: PathBuf,
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Alarm threshold; takes precedence over calibration and config.
        #[arg(long)]
        threshold: Option<f64>,
        /// Baseline CSV used to calibrate the threshold (and standardize scores).
        #[arg(long)]
        calibration: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Build a ROC report from a score file and labelled data.
    Eval {
        scores: PathBuf,
        labelled: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write the ROC curve as SVG to this path.
        #[arg(long)]
        plot: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Overrides {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Target false-positive rate for calibration.
    #[arg(long)]
    fpr: Option<f64>,
    /// Weight of the residual loss in the combined score.
    #[arg(long)]
    lambda: Option<f64>,
    /// Latent candidates per window for residual scoring.
    #[arg(long = "K")]
    k: Option<usize>,
}

impl Overrides {
    fn resolve(&self, base: ExperimentConfig) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => base,
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(f) = self.fpr {
            cfg.target_fpr = f;
        }
        if let Some(l) = self.lambda {
            cfg.lambda = l;
        }
        if let Some(k) = self.k {
            cfg.residual_samples = k;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn parse_kind(s: &str) -> Result<ModelKind, String> {
    s.parse::<ModelKind>().map_err(|e| e.to_string())
}

/// Writes via a sibling temp file so a failed run never leaves a partial output.
fn write_output(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("writing {}", path.display()))
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn run(cli: Cli) -> Result<()> {
    let log = |msg: String| {
        if !cli.quiet {
            eprintln!("{msg}");
        }
    };
    match &cli.command {
        Command::Synth { spec, out } => {
            let spec = SynthSpec::load(spec)?;
            let ds = synth_generate(&spec)?;
            write_output(out, render_csv(&ds))?;
            log(format!(
                "wrote {} samples x {} series to {}",
                ds.len(),
                ds.n_series(),
                out.display()
            ));
        }
        Command::Train {
            kind,
            data,
            out,
            overrides,
        } => {
            let cfg = overrides.resolve(ExperimentConfig::default())?;
            let ds = load_csv(data, false)?;
            if ds.labels().is_some_and(|l| l.contains(&1)) {
                log("warning: training data contains labelled anomalies".into());
            }
            let ckpt = pipeline::train(*kind, &ds, &cfg)?;
            write_output(&sibling(out, ".config.toml"), cfg.render())?;
            write_output(&sibling(out, ".log.csv"), ckpt.model.training_log())?;
            write_output(out, ckpt.to_bytes())?;
            log(format!(
                "trained {kind} on {} samples; checkpoint {}",
                ds.len(),
                out.display()
            ));
        }
        Command::Score {
            checkpoint,
            data,
            out,
            threshold,
            calibration,
            overrides,
        } => {
            let ckpt = Checkpoint::from_bytes(
                &fs::read(checkpoint)
                    .with_context(|| format!("reading {}", checkpoint.display()))?,
            )
            .with_context(|| format!("loading {}", checkpoint.display()))?;
            let mut cfg = overrides.resolve(ckpt.config.clone())?;
            let ds = load_csv(data, false)?;
            let calib = calibration
                .as_deref()
                .map(|p| load_csv(p, false))
                .transpose()?;
            let (scores, source) = pipeline::score(&ckpt, &ds, &cfg, calib.as_ref(), *threshold)?;
            cfg.threshold = Some(scores.threshold);
            let origin = match source {
                ThresholdSource::Explicit(_) => "flag".to_string(),
                ThresholdSource::Calibrated { target_fpr } => {
                    format!("calibration at target_fpr {target_fpr}")
                }
                ThresholdSource::Config(_) => "config".to_string(),
            };
            write_output(
                &sibling(out, ".config.toml"),
                format!("# threshold source: {origin}\n{}", cfg.render()),
            )?;
            write_output(out, scores.render())?;
            let alarms = scores.alarms.iter().filter(|&&a| a == 1).count();
            log(format!(
                "scored {} samples; threshold {} ({origin}); {alarms} alarms",
                scores.len(),
                scores.threshold
            ));
        }
        Command::Eval {
            scores,
            labelled,
            out,
            plot,
            config,
        } => {
            let cfg = match config {
                Some(p) => ExperimentConfig::load(p)?,
                None => ExperimentConfig::default(),
            };
            let text = fs::read_to_string(scores)
                .with_context(|| format!("reading {}", scores.display()))?;
            let series = ScoreSeries::parse(&text)
                .with_context(|| format!("parsing {}", scores.display()))?;
            let ds = aggregate(&load_csv(labelled, true)?, cfg.aggregate_block)?;
            let Some(labels) = ds.labels() else {
                bail!("{} has no label column", labelled.display());
            };
            let report = evaluate_scores(&series, labels, None)?;
            if let Some(p) = plot {
                write_output(p, render_roc_svg(&report.roc(), "ROC"))?;
            }
            write_output(out, report.render())?;
            log(format!(
                "auc {:.4}; tpr at fpr<=0.01: {:.4}; {} excluded",
                report.auc,
                report.tpr_at(0.01).unwrap_or(0.0),
                report.excluded
            ));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
