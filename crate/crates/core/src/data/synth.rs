//! Synthetic multivariate telemetry with labelled anomaly injections.

use std::f64::consts::TAU;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{gaussian, seeded_rng};
use crate::types::{Dataset, Matrix};

/// Base signal of one series: `offset + amplitude * sin(2π t / period + phase) + trend * t + noise`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesSpec {
    pub offset: f64,
    pub amplitude: f64,
    pub period: f64,
    pub phase: f64,
    pub trend: f64,
    pub noise_std: f64,
}

impl Default for SeriesSpec {
    fn default() -> Self {
        SeriesSpec {
            offset: 0.0,
            amplitude: 1.0,
            period: 50.0,
            phase: 0.0,
            trend: 0.0,
            noise_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InjectionKind {
    /// Short additive burst.
    Spike,
    /// Sustained additive offset.
    LevelShift,
    /// The target series' periodic component flips sign, decoupling it from the others.
    CorrelationBreak,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: InjectionKind,
    #[serde(default)]
    pub series: usize,
    pub start: usize,
    pub duration: usize,
    /// In units of the target series' clean standard deviation.
    #[serde(default = "default_magnitude")]
    pub magnitude: f64,
}

fn default_magnitude() -> f64 {
    5.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n: usize,
    #[serde(rename = "L")]
    pub length: usize,
    #[serde(default = "default_period")]
    pub sample_period: f64,
    pub seed: u64,
    /// One entry per series; when empty, series are drawn from the seed.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub series: Vec<SeriesSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub injections: Vec<Injection>,
}

fn default_period() -> f64 {
    1.0
}

impl SynthSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("synth spec always serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.length == 0 {
            return Err(Error::InvalidArgument("n and L must be positive".into()));
        }
        if !self.series.is_empty() && self.series.len() != self.n {
            return Err(Error::InvalidArgument(format!(
                "{} series specs for n = {}",
                self.series.len(),
                self.n
            )));
        }
        if let Some(s) = self
            .series
            .iter()
            .find(|s| s.period.is_nan() || s.period <= 0.0)
        {
            return Err(Error::InvalidArgument(format!(
                "series period {} must be positive",
                s.period
            )));
        }
        for (index, inj) in self.injections.iter().enumerate() {
            let bad = |reason: String| Err(Error::InvalidInjection { index, reason });
            if inj.duration == 0 {
                return bad("duration must be >= 1".into());
            }
            if inj.start >= self.length || inj.start + inj.duration > self.length {
                return bad(format!(
                    "range [{}, {}) outside [0, {})",
                    inj.start,
                    inj.start + inj.duration,
                    self.length
                ));
            }
            if inj.series >= self.n {
                return bad(format!("series {} outside 0..{}", inj.series, self.n));
            }
            if !inj.magnitude.is_finite() {
                return bad("magnitude must be finite".into());
            }
        }
        Ok(())
    }

    fn resolved_series(&self) -> Vec<SeriesSpec> {
        if !self.series.is_empty() {
            return self.series.clone();
        }
        // Shared period so the series are mutually correlated.
        let mut rng = seeded_rng(self.seed.wrapping_add(0x5eed));
        let period = rng.random_range(30.0..70.0);
        (0..self.n)
            .map(|_| SeriesSpec {
                offset: rng.random_range(-1.0..1.0),
                amplitude: rng.random_range(0.5..2.0),
                period,
                phase: rng.random_range(0.0..TAU),
                trend: 0.0,
                noise_std: rng.random_range(0.02..0.1),
            })
            .collect()
    }
}

pub fn synth_generate(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let series = spec.resolved_series();
    let len = spec.length;
    let mut rng = seeded_rng(spec.seed);

    let mut periodic = Matrix::zeros(spec.n, len);
    let mut values = Matrix::zeros(spec.n, len);
    for (r, s) in series.iter().enumerate() {
        for t in 0..len {
            let tf = t as f64;
            let wave = s.amplitude * (TAU * tf / s.period + s.phase).sin();
            periodic.set(r, t, wave);
            values.set(
                r,
                t,
                s.offset + wave + s.trend * tf + s.noise_std * gaussian(&mut rng),
            );
        }
    }
    let sigma: Vec<f64> = (0..spec.n).map(|r| std_dev(values.row(r))).collect();

    let mut labels = vec![0u8; len];
    for inj in &spec.injections {
        let range = inj.start..inj.start + inj.duration;
        let row = inj.series;
        let delta = inj.magnitude * sigma[row];
        for t in range.clone() {
            let v = values.get(row, t);
            let shifted = match inj.kind {
                InjectionKind::Spike | InjectionKind::LevelShift => v + delta,
                InjectionKind::CorrelationBreak => v - 2.0 * periodic.get(row, t),
            };
            values.set(row, t, shifted);
        }
        labels[range].fill(1);
    }

    let names = (0..spec.n).map(|i| format!("ts{i}")).collect();
    Dataset::new(names, values, spec.sample_period, Some(labels))
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}
