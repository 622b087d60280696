//! ROC evaluation at sample level.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::ModelKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Samples scoring at or above this value are flagged.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
    /// Samples dropped because their score was absent.
    pub excluded: usize,
}

/// Sweeps the threshold over every distinct score, flipping tied samples
/// together. Absent scores are excluded and counted.
pub fn roc_curve(scores: &[Option<f64>], labels: &[u8]) -> Result<RocResult> {
    if scores.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    let mut pairs: Vec<(f64, bool)> = Vec::with_capacity(scores.len());
    for (s, &l) in scores.iter().zip(labels) {
        if l > 1 {
            return Err(Error::InvalidArgument(format!("label {l} is not 0 or 1")));
        }
        if let Some(v) = s {
            if v.is_nan() {
                return Err(Error::NonFinite("NaN score".into()));
            }
            pairs.push((*v, l == 1));
        }
    }
    let excluded = scores.len() - pairs.len();
    let positives = pairs.iter().filter(|p| p.1).count();
    let negatives = pairs.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::SingleClass {
            positives,
            negatives,
        });
    }
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));

    let (p, n) = (positives as f64, negatives as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < pairs.len() {
        let value = pairs[i].0;
        while i < pairs.len() && pairs[i].0 == value {
            if pairs[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
            threshold: value,
        });
    }
    let auc = trapezoid(&points);
    Ok(RocResult {
        points,
        auc,
        positives,
        negatives,
        excluded,
    })
}

fn trapezoid(points: &[RocPoint]) -> f64 {
    points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum()
}

/// Best observed TPR among points with FPR at most `fpr_cap`.
pub fn tpr_at_fpr(roc: &RocResult, fpr_cap: f64) -> f64 {
    roc.points
        .iter()
        .filter(|p| p.fpr <= fpr_cap)
        .map(|p| p.tpr)
        .fold(0.0, f64::max)
}

pub const REPORT_VERSION: u32 = 1;

/// FPR caps summarised in every report.
pub const REPORT_FPR_CAPS: [f64; 3] = [0.0, 0.01, 0.05];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TprAtFpr {
    pub fpr_cap: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_kind: Option<ModelKind>,
    pub auc: f64,
    pub positives: usize,
    pub negatives: usize,
    pub excluded: usize,
    pub tpr_at_fpr: Vec<TprAtFpr>,
    pub points: Vec<RocPoint>,
}

impl Report {
    pub fn from_roc(roc: &RocResult, model_kind: Option<ModelKind>) -> Self {
        Report {
            format_version: REPORT_VERSION,
            model_kind,
            auc: roc.auc,
            positives: roc.positives,
            negatives: roc.negatives,
            excluded: roc.excluded,
            tpr_at_fpr: REPORT_FPR_CAPS
                .iter()
                .map(|&cap| TprAtFpr {
                    fpr_cap: cap,
                    tpr: tpr_at_fpr(roc, cap),
                })
                .collect(),
            points: roc.points.clone(),
        }
    }

    pub fn roc(&self) -> RocResult {
        RocResult {
            points: self.points.clone(),
            auc: self.auc,
            positives: self.positives,
            negatives: self.negatives,
            excluded: self.excluded,
        }
    }

    pub fn tpr_at(&self, cap: f64) -> Option<f64> {
        self.tpr_at_fpr
            .iter()
            .find(|t| t.fpr_cap == cap)
            .map(|t| t.tpr)
    }

    pub fn render(&self) -> String {
        toml::to_string(self).expect("report always serializes")
    }

    pub fn parse(text: &str) -> Result<Self> {
        let r: Report = toml::from_str(text).map_err(|e| Error::Report(e.to_string()))?;
        if r.format_version != REPORT_VERSION {
            return Err(Error::Report(format!(
                "report version {} (expected {REPORT_VERSION})",
                r.format_version
            )));
        }
        Ok(r)
    }
}

/// Minimal standalone SVG of the ROC curve.
pub fn render_roc_svg(roc: &RocResult, title: &str) -> String {
    const SIZE: f64 = 400.0;
    const PAD: f64 = 50.0;
    let x = |fpr: f64| PAD + fpr * SIZE;
    let y = |tpr: f64| PAD + (1.0 - tpr) * SIZE;
    let total = SIZE + 2.0 * PAD;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r##"<rect x="{PAD}" y="{PAD}" width="{SIZE}" height="{SIZE}" fill="none" stroke="#444"/>"##
    );
    let _ = writeln!(
        svg,
        r##"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="#bbb" stroke-dasharray="4 4"/>"##,
        x(0.0),
        y(0.0),
        x(1.0),
        y(1.0)
    );
    let path: Vec<String> = roc
        .points
        .iter()
        .map(|p| format!("{:.2},{:.2}", x(p.fpr), y(p.tpr)))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline points="{}" fill="none" stroke="#1f77b4" stroke-width="2"/>"##,
        path.join(" ")
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="30" text-anchor="middle" font-family="sans-serif" font-size="16">{} (AUC {:.4})</text>"#,
        total / 2.0,
        escape(title),
        roc.auc
    );
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13">false positive rate</text>"#,
        total / 2.0,
        total - 15.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="15" y="{}" text-anchor="middle" font-family="sans-serif" font-size="13" transform="rotate(-90 15 {})">true positive rate</text>"#,
        total / 2.0,
        total / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn some(v: &[f64]) -> Vec<Option<f64>> {
        v.iter().copied().map(Some).collect()
    }

    #[test]
    fn perfect_separation() {
        let roc = roc_curve(&some(&[0.9, 0.8, 0.1, 0.2]), &[1, 1, 0, 0]).unwrap();
        assert_eq!(roc.auc, 1.0);
        assert_eq!(tpr_at_fpr(&roc, 0.0), 1.0);
        assert_eq!(tpr_at_fpr(&roc, 1.0), 1.0);
        let first = roc.points[0];
        let last = *roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn all_tied_is_chance() {
        let roc = roc_curve(&some(&[0.5; 4]), &[1, 0, 1, 0]).unwrap();
        assert_eq!(roc.auc, 0.5);
        assert_eq!(roc.points.len(), 2);
    }

    #[test]
    fn absent_scores_are_excluded() {
        let roc = roc_curve(&[None, Some(0.3), Some(0.1), None], &[1, 1, 0, 0]).unwrap();
        assert_eq!(roc.excluded, 2);
        assert_eq!((roc.positives, roc.negatives), (1, 1));
    }

    #[test]
    fn single_class_rejected() {
        assert!(matches!(
            roc_curve(&some(&[0.1, 0.2]), &[0, 0]),
            Err(Error::SingleClass {
                positives: 0,
                negatives: 2
            })
        ));
        assert!(roc_curve(&some(&[0.1]), &[0, 1]).is_err());
    }

    #[test]
    fn report_round_trip() {
        let roc = roc_curve(&some(&[0.9, 0.4, 0.4, 0.1, 0.7]), &[1, 0, 1, 0, 0]).unwrap();
        let report = Report::from_roc(&roc, Some(ModelKind::Vae));
        let text = report.render();
        assert_eq!(Report::parse(&text).unwrap(), report);
        assert_eq!(report.tpr_at(0.01), Some(tpr_at_fpr(&roc, 0.01)));
        assert!(Report::parse(&text.replace("format_version = 1", "format_version = 2")).is_err());
    }

    #[test]
    fn svg_has_curve() {
        let roc = roc_curve(&some(&[0.9, 0.1]), &[1, 0]).unwrap();
        let svg = render_roc_svg(&roc, "a<b");
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("polyline"));
        assert!(svg.contains("a&lt;b"));
    }
}
