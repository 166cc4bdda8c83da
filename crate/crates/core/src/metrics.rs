//! Window-level sensitivity, false prediction rate, ROC curve and AUC.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Label;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub preictal_probability: f64,
    pub label: Label,
}

impl ScoredSample {
    pub fn new(preictal_probability: f64, label: Label) -> Self {
        ScoredSample {
            preictal_probability,
            label,
        }
    }

    fn flagged(&self, threshold: f64) -> bool {
        self.preictal_probability >= threshold
    }
}

/// Fraction of preictal windows scored at or above `threshold`.
pub fn sensitivity(scored: &[ScoredSample], threshold: f64) -> Result<f64> {
    let positives: Vec<_> = scored.iter().filter(|s| s.label.is_preictal()).collect();
    if positives.is_empty() {
        return Err(Error::UndefinedMetric("sensitivity needs at least one preictal window".into()));
    }
    let hits = positives.iter().filter(|s| s.flagged(threshold)).count();
    Ok(hits as f64 / positives.len() as f64)
}

/// False alarms per hour of interictal signal, taking each interictal window as
/// `window_s` seconds of non-overlapping time.
pub fn fpr_per_hour(scored: &[ScoredSample], threshold: f64, window_s: f64) -> Result<f64> {
    let negatives: Vec<_> = scored.iter().filter(|s| !s.label.is_preictal()).collect();
    if negatives.is_empty() {
        return Err(Error::UndefinedMetric("FPR needs at least one interictal window".into()));
    }
    let false_alarms = negatives.iter().filter(|s| s.flagged(threshold)).count();
    let hours = negatives.len() as f64 * window_s / 3600.0;
    Ok(false_alarms as f64 / hours)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub fpr: f64,
    pub tpr: f64,
    /// Windows scoring at or above this value are flagged; `+inf` for the origin.
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC curve over every distinct score, with AUC by the trapezoidal rule.
///
/// Equal scores form a single threshold step, so ties contribute half credit.
pub fn roc_and_auc(scored: &[ScoredSample]) -> Result<RocCurve> {
    let pos = scored.iter().filter(|s| s.label.is_preictal()).count();
    let neg = scored.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "ROC needs both classes, got {pos} preictal and {neg} interictal"
        )));
    }
    if scored.iter().any(|s| s.preictal_probability.is_nan()) {
        return Err(Error::UndefinedMetric("NaN score".into()));
    }
    let mut sorted: Vec<&ScoredSample> = scored.iter().collect();
    sorted.sort_by(|a, b| b.preictal_probability.total_cmp(&a.preictal_probability));

    let (p, n) = (pos as f64, neg as f64);
    let mut points = vec![RocPoint {
        fpr: 0.0,
        tpr: 0.0,
        threshold: f64::INFINITY,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut area = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let score = sorted[i].preictal_probability;
        let (tp0, fp0) = (tp, fp);
        while i < sorted.len() && sorted[i].preictal_probability == score {
            if sorted[i].label.is_preictal() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area += (fp - fp0) as f64 * (tp + tp0) as f64 / 2.0;
        points.push(RocPoint {
            fpr: fp as f64 / n,
            tpr: tp as f64 / p,
            threshold: score,
        });
    }
    Ok(RocCurve {
        points,
        auc: area / (p * n),
    })
}

impl RocCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for pt in &self.points {
            let _ = writeln!(out, "{},{},{}", pt.threshold, pt.fpr, pt.tpr);
        }
        out
    }

    /// Square plot of the curve with the chance diagonal drawn dashed.
    pub fn to_svg(&self, title: &str) -> String {
        const SIZE: f64 = 400.0;
        const MARGIN: f64 = 50.0;
        let px = |fpr: f64| MARGIN + fpr * SIZE;
        let py = |tpr: f64| MARGIN + (1.0 - tpr) * SIZE;
        let path: Vec<String> = self
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", px(p.fpr), py(p.tpr)))
            .collect();
        let total = SIZE + 2.0 * MARGIN;
        let mut svg = String::new();
        let _ = writeln!(
            svg,
            r#"<svg xmlns="http://www.w3.org/2000/svg" width="{total}" height="{total}" viewBox="0 0 {total} {total}">"#
        );
        let _ = writeln!(svg, r#"<rect x="0" y="0" width="{total}" height="{total}" fill="white"/>"#);
        let _ = writeln!(
            svg,
            r#"<rect x="{MARGIN}" y="{MARGIN}" width="{SIZE}" height="{SIZE}" fill="none" stroke="black"/>"#
        );
        let _ = writeln!(
            svg,
            r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="6,4"/>"#,
            px(0.0),
            py(0.0),
            px(1.0),
            py(1.0)
        );
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="steelblue" stroke-width="2"/>"#,
            path.join(" ")
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="14">{} (AUC = {:.3})</text>"#,
            MARGIN,
            MARGIN - 15.0,
            escape(title),
            self.auc
        );
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle">False positive rate</text>"#,
            MARGIN + SIZE / 2.0,
            total - 15.0
        );
        let _ = writeln!(
            svg,
            r#"<text x="15" y="{}" font-family="sans-serif" font-size="12" text-anchor="middle" transform="rotate(-90 15 {})">True positive rate</text>"#,
            MARGIN + SIZE / 2.0,
            MARGIN + SIZE / 2.0
        );
        svg.push_str("</svg>\n");
        svg
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Headline numbers for one scored set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub threshold: f64,
    pub preictal_windows: usize,
    pub interictal_windows: usize,
    pub sensitivity: f64,
    pub fpr_per_hour: f64,
    pub auc: f64,
}

pub fn evaluate(scored: &[ScoredSample], threshold: f64, window_s: f64) -> Result<EvaluationReport> {
    let pre = scored.iter().filter(|s| s.label.is_preictal()).count();
    Ok(EvaluationReport {
        threshold,
        preictal_windows: pre,
        interictal_windows: scored.len() - pre,
        sensitivity: sensitivity(scored, threshold)?,
        fpr_per_hour: fpr_per_hour(scored, threshold, window_s)?,
        auc: roc_and_auc(scored)?.auc,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scored(pos: &[f64], neg: &[f64]) -> Vec<ScoredSample> {
        pos.iter()
            .map(|&p| ScoredSample::new(p, Label::Preictal))
            .chain(neg.iter().map(|&p| ScoredSample::new(p, Label::Interictal)))
            .collect()
    }

    #[test]
    fn sensitivity_counts() {
        let s = scored(&[0.9, 0.8, 0.7, 0.6, 0.55, 0.5, 0.51, 0.99, 0.2, 0.49], &[]);
        assert_eq!(sensitivity(&s, 0.5).unwrap(), 0.8);
        assert_eq!(sensitivity(&scored(&[1.0, 1.0], &[0.3]), 0.5).unwrap(), 1.0);
        assert!(matches!(sensitivity(&scored(&[], &[0.3]), 0.5), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn fpr_arithmetic() {
        let mut neg = vec![0.1; 357];
        neg.extend([0.9, 0.6, 0.5]);
        let s = scored(&[], &neg);
        assert!((fpr_per_hour(&s, 0.5, 20.0).unwrap() - 1.5).abs() < 1e-12);
        assert_eq!(fpr_per_hour(&scored(&[0.9], &[0.1; 10]), 0.5, 20.0).unwrap(), 0.0);
        assert!(fpr_per_hour(&scored(&[0.9], &[]), 0.5, 20.0).is_err());
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_and_auc(&scored(&[0.9, 0.4], &[0.6, 0.1])).unwrap().auc, 0.75);
        assert_eq!(roc_and_auc(&scored(&[0.9, 0.8], &[0.2, 0.1])).unwrap().auc, 1.0);
        assert_eq!(roc_and_auc(&scored(&[0.5, 0.5, 0.5], &[0.5, 0.5])).unwrap().auc, 0.5);
        assert!(roc_and_auc(&scored(&[0.5], &[])).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let roc = roc_and_auc(&scored(&[0.9, 0.4, 0.4], &[0.6, 0.1])).unwrap();
        let first = roc.points.first().unwrap();
        let last = roc.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr, first.threshold), (0.0, 0.0, f64::INFINITY));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
        assert!(roc.to_csv().starts_with("threshold,fpr,tpr\ninf,0,0\n"));
        let svg = roc.to_svg("a<b");
        assert!(svg.contains("stroke-dasharray") && svg.contains("a&lt;b"));
    }

    #[test]
    fn report_combines_metrics() {
        let s = scored(&[0.9, 0.4], &[0.6, 0.1]);
        let r = evaluate(&s, 0.5, 20.0).unwrap();
        assert_eq!(r.sensitivity, 0.5);
        assert_eq!(r.fpr_per_hour, 1.0 / (2.0 * 20.0 / 3600.0));
        assert_eq!(r.auc, 0.75);
        assert_eq!(sensitivity(&s, 0.0).unwrap(), 1.0);
    }
}
