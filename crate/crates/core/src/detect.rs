//! Application phase: per-window losses, per-sample attribution, threshold
//! calibration and the alarm rule.

use crate::error::{Error, Result};
use crate::gan::PROB_CLAMP;
use crate::nets::{discriminator_forward, LstmStack};
use crate::rng::RunRng;
use crate::types::{LatentSequence, Matrix, WindowMatrix};

/// `-log D*(x)` under the probability clamp; large when D* disbelieves `x`.
pub fn discrimination_loss(discriminator: &LstmStack, x: &WindowMatrix) -> Result<f64> {
    let p = discriminator_forward(discriminator, x)?;
    Ok(-p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP).ln())
}

/// Mean absolute per-element difference.
pub fn mean_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
    debug_assert_eq!(a.shape(), b.shape());
    let s = a.as_slice();
    s.iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).abs())
        .sum::<f64>()
        / s.len() as f64
}

/// Per column, the largest absolute difference across series.
pub fn column_residuals(x: &Matrix, reconstruction: &Matrix) -> Vec<f64> {
    debug_assert_eq!(x.shape(), reconstruction.shape());
    (0..x.cols())
        .map(|c| {
            (0..x.rows())
                .map(|r| (x.get(r, c) - reconstruction.get(r, c)).abs())
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Random latent search: draws `k` latent sequences from `rng`, generates a
/// candidate from each and keeps the one closest to `x`. Returns the
/// distance and the winning candidate; ties keep the earliest draw.
pub fn residual_loss(
    generator: &LstmStack,
    x: &WindowMatrix,
    k: usize,
    rng: &mut RunRng,
) -> Result<(f64, WindowMatrix)> {
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if x.n_series() != generator.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "generator emits {} series, window has {}",
            generator.output_dim(),
            x.n_series()
        )));
    }
    let mut best: Option<(f64, Matrix)> = None;
    for _ in 0..k {
        let z = LatentSequence::sample(generator.input_dim(), x.len(), rng);
        let candidate = generator.forward(&z.values)?;
        let d = mean_abs_diff(&x.values, &candidate);
        if best.as_ref().is_none_or(|(b, _)| d < *b) {
            best = Some((d, candidate));
        }
    }
    let (d, m) = best.expect("k >= 1");
    Ok((d, WindowMatrix::new(m, x.start_index)?))
}

/// `lambda * resid + (1 - lambda) * disc`.
pub fn anomaly_score(disc: f64, resid: f64, lambda: f64) -> f64 {
    lambda * resid + (1.0 - lambda) * disc
}

/// How window-level results are spread over the samples they cover.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreMode {
    /// Mean of the covering windows' per-column residuals.
    Residual,
    /// Mean of the covering windows' scalar scores.
    Discrimination,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowScore {
    pub start_index: usize,
    /// Window-level scalar (discrimination loss, or residual distance).
    pub value: f64,
    /// Per-column residuals; length `T` in residual mode.
    pub per_column: Vec<f64>,
}

/// Spreads window scores over a length-`len` timeline. Samples covered by no
/// window are `None`.
pub fn per_sample_scores(
    windows: &[WindowScore],
    len: usize,
    window_len: usize,
    mode: ScoreMode,
) -> Result<Vec<Option<f64>>> {
    if window_len == 0 || window_len > len {
        return Err(Error::InvalidArgument(format!(
            "window length {window_len} incompatible with {len} samples"
        )));
    }
    let mut sum = vec![0.0; len];
    let mut count = vec![0usize; len];
    let mut seen = vec![false; len - window_len + 1];
    for w in windows {
        let start = w.start_index;
        if start + window_len > len {
            return Err(Error::InvalidArgument(format!(
                "window at {start} runs past {len} samples"
            )));
        }
        if std::mem::replace(&mut seen[start], true) {
            return Err(Error::InvalidArgument(format!(
                "duplicate window at {start}"
            )));
        }
        match mode {
            ScoreMode::Residual => {
                if w.per_column.len() != window_len {
                    return Err(Error::InvalidArgument(format!(
                        "window at {start} has {} column residuals, expected {window_len}",
                        w.per_column.len()
                    )));
                }
                for (c, v) in w.per_column.iter().enumerate() {
                    sum[start + c] += v;
                    count[start + c] += 1;
                }
            }
            ScoreMode::Discrimination => {
                for t in start..start + window_len {
                    sum[t] += w.value;
                    count[t] += 1;
                }
            }
        }
    }
    Ok(sum
        .into_iter()
        .zip(count)
        .map(|(s, c)| (c > 0).then(|| s / c as f64))
        .collect())
}

/// Threshold with at most `target_fpr` of `baseline` strictly above it.
///
/// Starts from the linearly interpolated `(1 - target_fpr)` quantile and
/// raises it to the order statistic that caps the exceedance count at
/// `floor(target_fpr * N)` when interpolation alone would overshoot.
pub fn calibrate_threshold(baseline: &[f64], target_fpr: f64) -> Result<f64> {
    if baseline.is_empty() {
        return Err(Error::Empty("calibration needs at least one score".into()));
    }
    if !(target_fpr > 0.0 && target_fpr < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "target FPR {target_fpr} outside (0, 1)"
        )));
    }
    if baseline.iter().any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN calibration score".into()));
    }
    let mut s = baseline.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let pos = (1.0 - target_fpr) * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let interpolated = s[lo] + (pos - lo as f64) * (s[hi] - s[lo]);
    let allowed = (target_fpr * n as f64).floor() as usize;
    Ok(interpolated.max(s[n - 1 - allowed]))
}

/// `alarm[t] = 1` iff a score is present and strictly above `threshold`.
pub fn decide(scores: &[Option<f64>], threshold: f64) -> Vec<u8> {
    scores
        .iter()
        .map(|s| u8::from(s.is_some_and(|v| v > threshold)))
        .collect()
}

/// Any-sample rule over the window `start..start + window_len`.
pub fn window_verdict(alarms: &[u8], start: usize, window_len: usize) -> bool {
    alarms[start..start + window_len].contains(&1)
}

/// Per-sample scores with the threshold decision.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSeries {
    pub scores: Vec<Option<f64>>,
    pub threshold: f64,
    pub alarms: Vec<u8>,
}

const SCORE_HEADER: &str = "index,score,alarm";
const ABSENT: &str = "NA";

impl ScoreSeries {
    pub fn new(scores: Vec<Option<f64>>, threshold: f64) -> Self {
        let alarms = decide(&scores, threshold);
        ScoreSeries {
            scores,
            threshold,
            alarms,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// `# threshold=...` line, then one `index,score,alarm` record per sample
    /// with `NA` for absent scores.
    pub fn render(&self) -> String {
        let mut out = format!("# threshold={}\n{SCORE_HEADER}\n", self.threshold);
        for (i, (s, a)) in self.scores.iter().zip(&self.alarms).enumerate() {
            match s {
                Some(v) => out.push_str(&format!("{i},{v},{a}\n")),
                None => out.push_str(&format!("{i},{ABSENT},{a}\n")),
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |m: String| Error::InvalidArgument(format!("score file: {m}"));
        let mut lines = text.lines();
        let threshold = lines
            .next()
            .and_then(|l| l.strip_prefix("# threshold="))
            .ok_or_else(|| bad("missing threshold line".into()))?
            .parse::<f64>()
            .map_err(|e| bad(e.to_string()))?;
        if lines.next() != Some(SCORE_HEADER) {
            return Err(bad("missing header".into()));
        }
        let mut scores = Vec::new();
        let mut alarms = Vec::new();
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').collect();
            let [idx, score, alarm] = fields[..] else {
                return Err(bad(format!("record {i} has {} fields", fields.len())));
            };
            if idx.parse::<usize>() != Ok(i) {
                return Err(bad(format!("record {i} has index {idx}")));
            }
            scores.push(match score {
                ABSENT => None,
                v => Some(
                    v.parse::<f64>()
                        .map_err(|e| bad(format!("record {i}: {e}")))?,
                ),
            });
            alarms.push(match alarm {
                "0" => 0,
                "1" => 1,
                other => return Err(bad(format!("record {i} alarm {other:?}"))),
            });
        }
        Ok(ScoreSeries {
            scores,
            threshold,
            alarms,
        })
    }
}
