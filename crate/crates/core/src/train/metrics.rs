use std::fmt;

use rayon::prelude::*;

use crate::data::SampleSource;
use crate::error::{Error, Result};
use crate::graph::ModelGraph;

/// `counts[true][predicted]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    pub class_names: Vec<String>,
}

impl ConfusionMatrix {
    pub fn new(class_names: Vec<String>) -> Self {
        let k = class_names.len();
        ConfusionMatrix {
            counts: vec![vec![0; k]; k],
            class_names,
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>, class_names: Vec<String>) -> Result<Self> {
        if counts.len() != class_names.len() || counts.iter().any(|r| r.len() != counts.len()) {
            return Err(Error::arg("confusion counts must be K x K with K class names"));
        }
        Ok(ConfusionMatrix {
            counts,
            class_names,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let k = self.num_classes();
        if truth >= k || predicted >= k {
            return Err(Error::Data(format!(
                "label {truth} / prediction {predicted} outside {k} classes"
            )));
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|k| self.counts[k][k]).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassMetrics {
    pub name: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub samples: u64,
}

/// F1 as the harmonic mean of precision and recall (0 when both are 0).
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One-vs-rest per-class metrics and micro accuracy.
pub fn metrics_from_confusion(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::arg("confusion matrix is empty"));
    }
    let k = cm.num_classes();
    let ratio = |num: u64, den: u64| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    let classes: Vec<ClassMetrics> = (0..k)
        .map(|c| {
            let tp = cm.counts[c][c];
            let predicted: u64 = (0..k).map(|i| cm.counts[i][c]).sum();
            let support: u64 = cm.counts[c].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                name: cm.class_names[c].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
            }
        })
        .collect();
    let macro_f1 = classes.iter().map(|c| c.f1).sum::<f64>() / k as f64;
    Ok(MetricsReport {
        classes,
        accuracy: cm.trace() as f64 / total as f64,
        macro_f1,
        samples: total,
    })
}

/// Inference-mode predictions over `data`. Samples are decoded and scored in
/// parallel; counts are tallied in sample order.
pub fn evaluate<S: SampleSource + ?Sized>(
    model: &ModelGraph<f32>,
    data: &S,
) -> Result<(ConfusionMatrix, MetricsReport)> {
    if data.is_empty() {
        return Err(Error::arg("cannot evaluate on an empty dataset"));
    }
    let k = model.num_classes();
    for i in 0..data.len() {
        if data.label(i) >= k {
            return Err(Error::Data(format!(
                "sample {i} has label {} but the model has {k} classes",
                data.label(i)
            )));
        }
    }
    let predictions: Vec<Result<(usize, usize)>> = (0..data.len())
        .into_par_iter()
        .map(|i| {
            let s = data.load(i)?;
            let probs = model.infer(&s.pixels)?;
            Ok((s.label, probs.argmax()))
        })
        .collect();
    let mut cm = ConfusionMatrix::new(model.class_names().to_vec());
    for p in predictions {
        let (t, y) = p?;
        cm.record(t, y)?;
    }
    let report = metrics_from_confusion(&cm)?;
    Ok((cm, report))
}

impl fmt::Display for MetricsReport {
    /// One row per (metric, class), classes as columns.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.classes.iter().map(|c| c.name.len()).max().unwrap_or(0).max(8);
        write!(f, "{:<10}", "Metric")?;
        for c in &self.classes {
            write!(f, "  {:>width$}", c.name)?;
        }
        writeln!(f)?;
        let rows: [(&str, fn(&ClassMetrics) -> f64); 3] = [
            ("Precision", |c| c.precision),
            ("Recall", |c| c.recall),
            ("F1-score", |c| c.f1),
        ];
        for (label, get) in rows {
            write!(f, "{label:<10}")?;
            for c in &self.classes {
                write!(f, "  {:>width$.2}", get(c))?;
            }
            writeln!(f)?;
        }
        write!(f, "{:<10}", "Support")?;
        for c in &self.classes {
            write!(f, "  {:>width$}", c.support)?;
        }
        writeln!(f)?;
        writeln!(f, "Accuracy  {:.2}%", self.accuracy * 100.0)?;
        write!(f, "Macro F1  {:.4}", self.macro_f1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn empty_matrix_is_rejected() {
        assert!(metrics_from_confusion(&ConfusionMatrix::new(names(3))).is_err());
    }

    #[test]
    fn empty_column_gives_zero_precision() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 0], vec![3, 0]], names(2)).unwrap();
        let r = metrics_from_confusion(&cm).unwrap();
        assert_eq!(r.classes[1].precision, 0.0);
        assert_eq!(r.classes[1].f1, 0.0);
        assert_eq!(r.classes[0].recall, 1.0);
    }

    #[test]
    fn record_checks_range() {
        let mut cm = ConfusionMatrix::new(names(2));
        assert!(matches!(cm.record(2, 0), Err(Error::Data(_))));
    }
}
