//! Four-way confusion matrices and the aggregate and safety metrics derived
//! from them.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrant::Quadrant;

pub const PREDICTIONS_FILE: &str = "PREDICTIONS.jsonl";
pub const REPORT_FILE: &str = "REPORT.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: String,
    pub gold: Quadrant,
    pub predicted: Quadrant,
}

/// Counts indexed `[gold][predicted]`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfusionMatrix {
    pub counts: [[u64; 4]; 4],
}

impl ConfusionMatrix {
    pub fn get(&self, gold: Quadrant, predicted: Quadrant) -> u64 {
        self.counts[gold.index()][predicted.index()]
    }

    pub fn add(&mut self, gold: Quadrant, predicted: Quadrant) {
        self.counts[gold.index()][predicted.index()] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn gold_total(&self, gold: Quadrant) -> u64 {
        self.counts[gold.index()].iter().sum()
    }

    pub fn predicted_total(&self, predicted: Quadrant) -> u64 {
        self.counts.iter().map(|row| row[predicted.index()]).sum()
    }

    pub fn correct(&self) -> u64 {
        (0..4).map(|i| self.counts[i][i]).sum()
    }
}

pub fn build_confusion(predictions: &[Prediction]) -> Result<ConfusionMatrix> {
    if predictions.is_empty() {
        return Err(Error::InvalidArgument("no predictions to score".into()));
    }
    let mut seen = BTreeSet::new();
    let mut m = ConfusionMatrix::default();
    for p in predictions {
        if !seen.insert(p.sample_id.as_str()) {
            return Err(Error::Integrity(format!("duplicate sample_id {} in predictions", p.sample_id)));
        }
        m.add(p.gold, p.predicted);
    }
    Ok(m)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Share of gold-Q2 samples predicted Q1; `None` without gold Q2.
pub fn compute_hsr(m: &ConfusionMatrix) -> Option<f64> {
    let den = m.gold_total(Quadrant::Q2);
    (den > 0).then(|| m.get(Quadrant::Q2, Quadrant::Q1) as f64 / den as f64)
}

/// Share of gold-Q3 samples predicted Q1; `None` without gold Q3.
pub fn compute_tir(m: &ConfusionMatrix) -> Option<f64> {
    let den = m.gold_total(Quadrant::Q3);
    (den > 0).then(|| m.get(Quadrant::Q3, Quadrant::Q1) as f64 / den as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub total: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Q1..Q4.
    pub per_quadrant_precision: [f64; 4],
    pub per_quadrant_recall: [f64; 4],
    pub per_quadrant_f1: [f64; 4],
    pub support_counts: [u64; 4],
    pub hsr: Option<f64>,
    pub tir: Option<f64>,
    pub confusion: ConfusionMatrix,
}

/// Precision, recall and F1 are 0 whenever their denominator is 0; macro
/// values are unweighted means over the four quadrants.
pub fn compute_report(m: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = m.total();
    if total == 0 {
        return Err(Error::InvalidArgument("empty confusion matrix".into()));
    }
    let mut precision = [0.0; 4];
    let mut recall = [0.0; 4];
    let mut f1 = [0.0; 4];
    let mut support = [0; 4];
    for q in Quadrant::ALL {
        let i = q.index();
        let tp = m.get(q, q);
        support[i] = m.gold_total(q);
        precision[i] = ratio(tp, m.predicted_total(q));
        recall[i] = ratio(tp, support[i]);
        // 2tp / (2tp + fp + fn) equals the harmonic mean and avoids 0/0.
        f1[i] = ratio(2 * tp, m.predicted_total(q) + support[i]);
    }
    let mean = |v: &[f64; 4]| v.iter().sum::<f64>() / 4.0;
    Ok(MetricsReport {
        total,
        accuracy: m.correct() as f64 / total as f64,
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        per_quadrant_precision: precision,
        per_quadrant_recall: recall,
        per_quadrant_f1: f1,
        support_counts: support,
        hsr: compute_hsr(m),
        tir: compute_tir(m),
        confusion: *m,
    })
}

pub fn evaluate(predictions: &[Prediction]) -> Result<MetricsReport> {
    compute_report(&build_confusion(predictions)?)
}

/// Human-readable summary with percentages.
pub fn render_report(name: &str, r: &MetricsReport) -> String {
    let pct = |x: f64| format!("{:.1}", 100.0 * x);
    let opt = |x: Option<f64>| x.map(pct).unwrap_or_else(|| "-".into());
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{name}: n={} acc={} P={} R={} F1={} HSR={} TIR={}",
        r.total,
        pct(r.accuracy),
        pct(r.macro_precision),
        pct(r.macro_recall),
        pct(r.macro_f1),
        opt(r.hsr),
        opt(r.tir)
    );
    let _ = write!(s, "  F1 per quadrant:");
    for q in Quadrant::ALL {
        let _ = write!(s, " {q}={}", pct(r.per_quadrant_f1[q.index()]));
    }
    s
}

pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut buf = String::new();
    for p in predictions {
        buf.push_str(&serde_json::to_string(p)?);
        buf.push('\n');
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn read_predictions(path: &Path) -> Result<Vec<Prediction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                file: path.display().to_string(),
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn write_report(path: &Path, report: &MetricsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report)?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_report(path: &Path) -> Result<MetricsReport> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
