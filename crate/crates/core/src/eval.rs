//! Accuracy, MAE, confusion matrices and run reports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::ensemble::{set_accuracy, PredictionSet};
use crate::error::{Error, Result};

/// Fraction of gold documents whose predicted class matches.
pub fn accuracy(preds: &PredictionSet, gold: &Corpus) -> Result<f64> {
    set_accuracy(preds, gold)
}

pub fn accuracy_labels(preds: &[usize], gold: &[usize]) -> Result<f64> {
    if preds.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: preds.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("no labels".into()));
    }
    let correct = preds.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(correct as f64 / gold.len() as f64)
}

/// Mean absolute error of scalar predictions against gold labels.
pub fn mae(preds: &PredictionSet, gold: &Corpus) -> Result<f64> {
    if gold.is_empty() {
        return Err(Error::Empty("no gold documents".into()));
    }
    let labels = gold.labels()?;
    let aligned = preds.aligned(gold)?;
    let values = aligned
        .iter()
        .map(|p| {
            p.as_scalar()
                .ok_or_else(|| Error::InvalidArgument(format!("{}: not scalar predictions", preds.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let gold: Vec<f64> = labels.into_iter().map(|l| l as f64).collect();
    mae_values(&values, &gold)
}

pub fn mae_values(preds: &[f64], gold: &[f64]) -> Result<f64> {
    if preds.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: preds.len(),
        });
    }
    if gold.is_empty() {
        return Err(Error::Empty("no values".into()));
    }
    Ok(preds.iter().zip(gold).map(|(p, g)| (p - g).abs()).sum::<f64>() / gold.len() as f64)
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            classes,
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("gold\\pred");
        for c in 0..self.classes {
            out.push_str(&format!(",{c}"));
        }
        out.push('\n');
        for (g, row) in self.counts.iter().enumerate() {
            out.push_str(&g.to_string());
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |line: usize, message: &str| Error::Parse {
            line,
            message: message.to_owned(),
        };
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad(1, "empty confusion CSV"))?;
        let classes = header.split(',').count() - 1;
        let mut counts = Vec::with_capacity(classes);
        for (i, line) in lines.enumerate() {
            let row = line
                .split(',')
                .skip(1)
                .map(|v| v.parse::<u64>().map_err(|_| bad(i + 2, "bad count")))
                .collect::<Result<Vec<_>>>()?;
            if row.len() != classes {
                return Err(bad(i + 2, "ragged row"));
            }
            counts.push(row);
        }
        if counts.len() != classes {
            return Err(bad(classes + 1, "row count differs from column count"));
        }
        Ok(ConfusionMatrix { classes, counts })
    }
}

pub fn confusion_labels(preds: &[usize], gold: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != gold.len() {
        return Err(Error::DimensionMismatch {
            expected: gold.len(),
            got: preds.len(),
        });
    }
    let mut m = ConfusionMatrix::new(classes);
    for (&p, &g) in preds.iter().zip(gold) {
        if p >= classes || g >= classes {
            return Err(Error::InvalidArgument(format!(
                "label out of range: gold {g}, predicted {p}, classes {classes}"
            )));
        }
        m.counts[g][p] += 1;
    }
    Ok(m)
}

pub fn confusion(preds: &PredictionSet, gold: &Corpus, classes: usize) -> Result<ConfusionMatrix> {
    let aligned = preds.aligned(gold)?;
    let predicted = aligned
        .iter()
        .map(|p| {
            p.as_class()
                .ok_or_else(|| Error::InvalidArgument(format!("{}: not class predictions", preds.name)))
        })
        .collect::<Result<Vec<_>>>()?;
    let gold_labels = gold
        .labels()?
        .into_iter()
        .map(|l| {
            usize::try_from(l).map_err(|_| Error::InvalidArgument(format!("negative gold label {l}")))
        })
        .collect::<Result<Vec<_>>>()?;
    confusion_labels(&predicted, &gold_labels, classes)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentMetric {
    pub name: String,
    pub metric: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMetric {
    pub weights: Vec<f64>,
    pub metric: f64,
}

/// Evaluation summary for one task and split. Contains no wall-clock data,
/// so identical inputs give identical reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub task: String,
    pub split: String,
    /// `"accuracy"` or `"mae"`.
    pub metric: String,
    pub components: Vec<ComponentMetric>,
    pub ensemble: Option<EnsembleMetric>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub confusion: Option<ConfusionMatrix>,
    pub confusion_csv_path: Option<String>,
    #[serde(default)]
    pub config: serde_json::Value,
}

impl RunReport {
    pub fn new(task: impl Into<String>, split: impl Into<String>, metric: impl Into<String>) -> Self {
        RunReport {
            task: task.into(),
            split: split.into(),
            metric: metric.into(),
            components: Vec::new(),
            ensemble: None,
            confusion: None,
            confusion_csv_path: None,
            config: serde_json::Value::Null,
        }
    }
}

fn csv_path_for(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("report");
    path.with_file_name(format!("{stem}.confusion.csv"))
}

/// Writes the report as pretty JSON at `path`. When it carries a confusion
/// matrix, the matrix is also written as `<stem>.confusion.csv` next to it
/// and the file name is recorded in `confusion_csv_path`.
pub fn emit_report(report: &RunReport, path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let mut report = report.clone();
    if let Some(matrix) = &report.confusion {
        let csv_path = csv_path_for(path);
        std::fs::write(&csv_path, matrix.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
        report.confusion_csv_path = csv_path.file_name().and_then(|s| s.to_str()).map(str::to_owned);
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut out, &report)?;
    out.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))?;
    Ok(report)
}

pub fn read_report(path: impl AsRef<Path>) -> Result<RunReport> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, LabelScheme};
    use crate::ensemble::{Prediction, PredictionKind};
    use proptest::prelude::*;

    fn gold(labels: &[i64]) -> Corpus {
        Corpus::new(
            labels
                .iter()
                .enumerate()
                .map(|(i, &l)| Document::new(format!("d{i}"), "w").with_label(l))
                .collect(),
            LabelScheme::Binary,
        )
        .unwrap()
    }

    fn classes(preds: &[usize]) -> PredictionSet {
        let mut s = PredictionSet::new("p", PredictionKind::Class);
        for (i, &p) in preds.iter().enumerate() {
            s.insert(format!("d{i}"), Prediction::Class(p)).unwrap();
        }
        s
    }

    #[test]
    fn accuracy_examples() {
        let g = gold(&[0, 1, 1, 0]);
        assert_eq!(accuracy(&classes(&[0, 1, 1, 0]), &g).unwrap(), 1.0);
        assert_eq!(accuracy(&classes(&[0, 1, 0, 0]), &g).unwrap(), 0.75);
        let mut other = PredictionSet::new("x", PredictionKind::Class);
        other.insert("zz", Prediction::Class(0)).unwrap();
        assert!(accuracy(&other, &g).is_err());
    }

    #[test]
    fn confusion_examples() {
        let perfect = confusion(&classes(&[0, 1]), &gold(&[0, 1]), 2).unwrap();
        assert_eq!(perfect.counts, vec![vec![1, 0], vec![0, 1]]);
        let m = confusion(&classes(&[0, 1, 1]), &gold(&[0, 0, 1]), 2).unwrap();
        assert_eq!(m.counts, vec![vec![1, 1], vec![0, 1]]);
        let acc = accuracy(&classes(&[0, 1, 1]), &gold(&[0, 0, 1])).unwrap();
        assert_eq!(m.accuracy(), Some(acc));
        assert!(confusion(&classes(&[0, 2]), &gold(&[0, 1]), 2).is_err());
    }

    #[test]
    fn report_round_trip_and_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("report.json");
        let mut report = RunReport::new("binary", "dev", "accuracy");
        report.components.push(ComponentMetric {
            name: "tfidf+softmax".into(),
            metric: 0.75,
        });
        report.confusion = Some(confusion_labels(&[0, 1, 1, 0], &[0, 0, 1, 1], 2).unwrap());
        let written = emit_report(&report, &path).unwrap();
        assert_eq!(written.confusion_csv_path.as_deref(), Some("report.confusion.csv"));
        let back = read_report(&path).unwrap();
        assert_eq!(back, written);
        assert!(back.ensemble.is_none());

        let csv = std::fs::read_to_string(dir.path().join("report.confusion.csv")).unwrap();
        let parsed = ConfusionMatrix::from_csv(&csv).unwrap();
        assert_eq!(Some(&parsed), back.confusion.as_ref());
        assert_eq!(parsed.total(), 4);
    }

    #[test]
    fn mae_values_examples() {
        assert_eq!(mae_values(&[3.0, 5.0], &[1.0, 5.0]).unwrap(), 1.0);
        assert!(mae_values(&[], &[]).is_err());
    }

    proptest! {
        #[test]
        fn accuracy_is_trace_over_total(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..50)) {
            let (p, g): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let m = confusion_labels(&p, &g, 4).unwrap();
            prop_assert_eq!(m.accuracy().unwrap(), accuracy_labels(&p, &g).unwrap());
        }

        #[test]
        fn metrics_ignore_document_order(
            rows in prop::collection::vec((0usize..3, 0usize..3, -50.0f64..50.0, -50.0f64..50.0), 1..30),
            seed in any::<u64>(),
        ) {
            use rand::{seq::SliceRandom, SeedableRng};
            let mut shuffled = rows.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            let acc = |r: &[(usize, usize, f64, f64)]| {
                let (p, g): (Vec<_>, Vec<_>) = r.iter().map(|t| (t.0, t.1)).unzip();
                accuracy_labels(&p, &g).unwrap()
            };
            let err = |r: &[(usize, usize, f64, f64)]| {
                let (p, g): (Vec<_>, Vec<_>) = r.iter().map(|t| (t.2, t.3)).unzip();
                mae_values(&p, &g).unwrap()
            };
            prop_assert_eq!(acc(&rows), acc(&shuffled));
            prop_assert!((err(&rows) - err(&shuffled)).abs() < 1e-12);
        }
    }
}
