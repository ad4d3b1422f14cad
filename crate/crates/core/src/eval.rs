//! Accuracy / F1 metrics per inference mode and the mode comparison table.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::counterfactual::{predict, InferenceMode};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::par::map_ordered;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeMetrics {
    pub mode: InferenceMode,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    /// Samples missing a modality, scored with the baseline rule instead.
    pub baseline_fallbacks: usize,
    pub delta_accuracy: Option<f64>,
    pub delta_macro_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub dataset_digest: String,
    pub n: usize,
    pub modes: Vec<ModeMetrics>,
}

impl EvalReport {
    pub fn mode(&self, mode: InferenceMode) -> Option<&ModeMetrics> {
        self.modes.iter().find(|m| m.mode == mode)
    }

    pub fn accuracy(&self, mode: InferenceMode) -> Option<f64> {
        self.mode(mode).map(|m| m.accuracy)
    }

    /// JSON document keyed by mode name.
    pub fn to_json(&self) -> String {
        let mut modes = serde_json::Map::new();
        for m in &self.modes {
            modes.insert(m.mode.as_str().to_string(), serde_json::to_value(m).expect("metrics serialize"));
        }
        let doc = serde_json::json!({
            "dataset": self.dataset,
            "dataset_digest": self.dataset_digest,
            "n": self.n,
            "modes": modes,
        });
        let mut s = serde_json::to_string_pretty(&doc).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Metrics derived from a confusion matrix. Classes with no support or no
/// predictions get precision/recall 0, and F1 is 0 whenever both are 0.
pub fn metrics_from_confusion(mode: InferenceMode, confusion: Vec<Vec<usize>>, labels: &[String]) -> ModeMetrics {
    let k = confusion.len();
    let n: usize = confusion.iter().flatten().sum();
    let correct: usize = (0..k).map(|i| confusion[i][i]).sum();
    let mut per_class = Vec::with_capacity(k);
    for c in 0..k {
        let tp = confusion[c][c] as f64;
        let support: usize = confusion[c].iter().sum();
        let predicted: usize = confusion.iter().map(|row| row[c]).sum();
        let precision = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
        let recall = if support > 0 { tp / support as f64 } else { 0.0 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        per_class.push(ClassMetrics { label: labels[c].clone(), precision, recall, f1, support });
    }
    let macro_f1 = per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64;
    let weighted_f1 = if n > 0 {
        per_class.iter().map(|m| m.f1 * m.support as f64).sum::<f64>() / n as f64
    } else {
        0.0
    };
    ModeMetrics {
        mode,
        accuracy: if n > 0 { correct as f64 / n as f64 } else { 0.0 },
        macro_f1,
        weighted_f1,
        per_class,
        confusion,
        baseline_fallbacks: 0,
        delta_accuracy: None,
        delta_macro_f1: None,
    }
}

/// Predictions of every requested mode for every sample, in dataset order.
pub fn predictions(params: &ModelParams, d: &Dataset, modes: &[InferenceMode]) -> Result<Vec<Vec<(usize, bool)>>> {
    params.dims.check_header(&d.header)?;
    let rows = map_ordered(&d.samples, |s| -> Result<Vec<(usize, bool)>> {
        let b = params.bundle(s)?;
        modes
            .iter()
            .map(|&m| match predict(&b, m) {
                Ok(y) => Ok((y, false)),
                Err(Error::ModeUnavailable(_)) => Ok((predict(&b, InferenceMode::TeBaseline)?, true)),
                Err(e) => Err(e),
            })
            .collect()
    });
    rows.into_iter().collect()
}

pub fn evaluate(params: &ModelParams, d: &Dataset, modes: &[InferenceMode]) -> Result<EvalReport> {
    if d.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let k = d.num_classes();
    let preds = predictions(params, d, modes)?;
    let mut out = Vec::with_capacity(modes.len());
    for (j, &mode) in modes.iter().enumerate() {
        let mut confusion = vec![vec![0usize; k]; k];
        let mut fallbacks = 0;
        for (s, row) in d.samples.iter().zip(&preds) {
            let (y, fell_back) = row[j];
            confusion[s.label][y] += 1;
            fallbacks += fell_back as usize;
        }
        let mut m = metrics_from_confusion(mode, confusion, &d.header.labels);
        m.baseline_fallbacks = fallbacks;
        out.push(m);
    }
    let baseline = out
        .iter()
        .find(|m| m.mode == InferenceMode::TeBaseline)
        .map(|m| (m.accuracy, m.macro_f1));
    if let Some((acc, f1)) = baseline {
        for m in &mut out {
            m.delta_accuracy = Some(m.accuracy - acc);
            m.delta_macro_f1 = Some(m.macro_f1 - f1);
        }
    }
    Ok(EvalReport {
        dataset: d.provenance.source.clone(),
        dataset_digest: d.provenance.digest.clone(),
        n: d.len(),
        modes: out,
    })
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

fn signed_pct(x: Option<f64>) -> String {
    match x {
        Some(v) => format!("{:+.2}", 100.0 * v),
        None => "n/a".to_string(),
    }
}

/// Aligned plain-text table: one row per mode, and for each report the
/// accuracy, macro-F1, weighted-F1 (all in percent) and the accuracy delta
/// against the baseline.
pub fn compare_report(reports: &[EvalReport]) -> Result<String> {
    let first = reports
        .first()
        .ok_or_else(|| Error::InvalidInput("compare_report needs at least one report".into()))?;
    let mut modes: Vec<InferenceMode> = first.modes.iter().map(|m| m.mode).collect();
    for r in &reports[1..] {
        for m in &r.modes {
            if !modes.contains(&m.mode) {
                modes.push(m.mode);
            }
        }
    }

    let mut header = vec!["condition".to_string()];
    for r in reports {
        for col in ["ACC", "macro-F1", "weighted-F1", "dACC"] {
            header.push(format!("{} {col}", r.dataset));
        }
    }
    let mut rows = vec![header];
    for mode in modes {
        let mut row = vec![mode.label().to_string()];
        for r in reports {
            match r.mode(mode) {
                Some(m) => {
                    row.push(pct(m.accuracy));
                    row.push(pct(m.macro_f1));
                    row.push(pct(m.weighted_f1));
                    row.push(signed_pct(m.delta_accuracy));
                }
                None => row.extend(std::iter::repeat_n("-".to_string(), 4)),
            }
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (cell, &w))| if c == 0 { format!("{cell:<w$}") } else { format!("{cell:>w$}") })
            .collect();
        writeln!(out, "{}", cells.join("  ").trim_end()).expect("write to string");
        if i == 0 {
            let total: usize = widths.iter().sum::<usize>() + 2 * (widths.len() - 1);
            writeln!(out, "{}", "-".repeat(total)).expect("write to string");
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels() -> Vec<String> {
        ["positive", "neutral", "negative"].iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_predictor() {
        let conf = vec![vec![5, 0, 0], vec![0, 2, 0], vec![0, 0, 3]];
        let m = metrics_from_confusion(InferenceMode::TeBaseline, conf, &labels());
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.weighted_f1, 1.0);
    }

    #[test]
    fn constant_class_zero_predictor() {
        // half the samples are class 0, the rest split evenly over 1 and 2
        let conf = vec![vec![4, 0, 0], vec![2, 0, 0], vec![2, 0, 0]];
        let m = metrics_from_confusion(InferenceMode::TeBaseline, conf, &labels());
        assert_eq!(m.accuracy, 0.5);
        // class 0: precision 1/2, recall 1 -> F1 2/3; other classes 0
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((m.macro_f1 - 2.0 / 9.0).abs() < 1e-15);
        assert!((m.macro_f1 - 0.2222).abs() < 1e-4);
    }

    #[test]
    fn confusion_rows_match_support() {
        let conf = vec![vec![3, 1, 0], vec![2, 5, 1], vec![0, 0, 7]];
        let m = metrics_from_confusion(InferenceMode::TieText, conf.clone(), &labels());
        for (row, c) in conf.iter().zip(&m.per_class) {
            assert_eq!(row.iter().sum::<usize>(), c.support);
        }
        let mean: f64 = m.per_class.iter().map(|c| c.f1).sum::<f64>() / 3.0;
        assert!((m.macro_f1 - mean).abs() < 1e-12);
    }

    fn report(name: &str, accs: &[(InferenceMode, f64)]) -> EvalReport {
        let base = accs.iter().find(|(m, _)| *m == InferenceMode::TeBaseline).map(|x| x.1);
        EvalReport {
            dataset: name.into(),
            dataset_digest: String::new(),
            n: 10,
            modes: accs
                .iter()
                .map(|&(mode, acc)| {
                    let mut m = metrics_from_confusion(mode, vec![vec![1, 0], vec![0, 1]], &labels()[..2]);
                    m.accuracy = acc;
                    m.delta_accuracy = base.map(|b| acc - b);
                    m
                })
                .collect(),
        }
    }

    #[test]
    fn single_baseline_table() {
        let r = report("synthetic", &[(InferenceMode::TeBaseline, 0.7)]);
        let t = compare_report(&[r]).unwrap();
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[2].starts_with("baseline (TE)"));
        assert!(lines[2].ends_with("+0.00"));
    }

    #[test]
    fn identical_reports_have_zero_deltas() {
        let accs = [(InferenceMode::TeBaseline, 0.7), (InferenceMode::TieText, 0.7)];
        let t = compare_report(&[report("a", &accs), report("b", &accs)]).unwrap();
        assert_eq!(t.matches("+0.00").count(), 4);
        assert!(compare_report(&[]).is_err());
    }
}
