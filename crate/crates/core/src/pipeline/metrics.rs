use std::io::Write;

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::infusion::SourceStore;
use crate::linalg::argmax;
use crate::par::{self, Execution};

use super::train::Predictor;
use super::ModelParams;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// True instances of the class in the test set.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub accuracy: f64,
    /// Unweighted mean F1 over classes that occur in the truth or the predictions.
    pub macro_f1: f64,
    pub per_class: Vec<ClassScores>,
    pub fold: usize,
}

impl Metrics {
    pub fn from_predictions(truth: &[usize], predicted: &[usize], classes: usize, fold: usize) -> Result<Self> {
        if truth.is_empty() {
            return Err(Error::EmptyCorpus);
        }
        if truth.len() != predicted.len() {
            return Err(Error::dims("predictions", truth.len(), predicted.len()));
        }
        let mut tp = vec![0usize; classes];
        let mut pred_count = vec![0usize; classes];
        let mut true_count = vec![0usize; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(Error::invalid("class index out of range"));
            }
            true_count[t] += 1;
            pred_count[p] += 1;
            if t == p {
                tp[t] += 1;
            }
        }
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let per_class: Vec<ClassScores> = (0..classes)
            .map(|c| {
                let precision = ratio(tp[c], pred_count[c]);
                let recall = ratio(tp[c], true_count[c]);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassScores {
                    precision,
                    recall,
                    f1,
                    support: true_count[c],
                }
            })
            .collect();
        let present: Vec<usize> = (0..classes).filter(|&c| true_count[c] + pred_count[c] > 0).collect();
        let macro_f1 = present.iter().map(|&c| per_class[c].f1).sum::<f64>() / present.len() as f64;
        Ok(Metrics {
            accuracy: tp.iter().sum::<usize>() as f64 / truth.len() as f64,
            macro_f1,
            per_class,
            fold,
        })
    }
}

/// Accuracy and F1 of `model` on `test`. Infused models need their stores.
pub fn evaluate(model: &ModelParams, test: &LabeledCorpus, stores: Option<&[SourceStore]>) -> Result<Metrics> {
    let predictor = Predictor::new(model, stores)?;
    evaluate_with(Execution::default(), &predictor, test, 0)
}

pub fn evaluate_with(exec: Execution, predictor: &Predictor<'_>, test: &LabeledCorpus, fold: usize) -> Result<Metrics> {
    if test.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if test.classes != predictor.model().classes {
        return Err(Error::invalid("test classes differ from the model's classes"));
    }
    let predicted = par::map_slice(exec, &test.documents, |d| predictor.predict_text(&d.text).map(|(y, _)| argmax(&y)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Metrics::from_predictions(&test.labels(), &predicted, test.num_classes(), fold)
}

/// One line of the metrics CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub fold: usize,
    pub phase: String,
    pub fraction: f64,
    /// Source store tags joined with `+`; empty for baselines.
    pub sources: String,
    pub accuracy: f64,
    pub macro_f1: f64,
}

pub const CSV_HEADER: &str = "run_id,fold,phase,fraction,sources,accuracy,macro_f1";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Header plus one line per row; floats have fixed precision so identical runs
/// produce identical bytes.
pub fn write_metrics_csv(rows: &[MetricsRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.2},{},{:.6},{:.6}",
            csv_field(&r.run_id),
            r.fold,
            csv_field(&r.phase),
            r.fraction,
            csv_field(&r.sources),
            r.accuracy,
            r.macro_f1
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_predictions(&[0, 1, 2, 1], &[0, 1, 2, 1], 3, 0).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn all_one_class_binary() {
        let m = Metrics::from_predictions(&[0, 0, 1, 1], &[0, 0, 0, 0], 2, 0).unwrap();
        assert_eq!(m.accuracy, 0.5);
        assert!((m.per_class[0].f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class[1].f1, 0.0);
        assert!((m.macro_f1 - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(m.per_class.iter().map(|c| c.support).sum::<usize>(), 4);
    }

    #[test]
    fn order_invariance() {
        let truth = [0, 1, 2, 2, 1, 0, 0];
        let pred = [0, 2, 2, 1, 1, 0, 1];
        let a = Metrics::from_predictions(&truth, &pred, 3, 0).unwrap();
        let perm = [3, 0, 6, 1, 5, 2, 4];
        let t2: Vec<usize> = perm.iter().map(|&i| truth[i]).collect();
        let p2: Vec<usize> = perm.iter().map(|&i| pred[i]).collect();
        assert_eq!(a, Metrics::from_predictions(&t2, &p2, 3, 0).unwrap());
    }

    #[test]
    fn empty_test_errors() {
        assert!(matches!(Metrics::from_predictions(&[], &[], 2, 0), Err(Error::EmptyCorpus)));
    }

    #[test]
    fn csv_layout() {
        let rows = vec![MetricsRow {
            run_id: "r".into(),
            fold: 3,
            phase: "infused".into(),
            fraction: 0.5,
            sources: "bbc+news20".into(),
            accuracy: 0.91234567,
            macro_f1: 0.9,
        }];
        let mut buf = Vec::new();
        write_metrics_csv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "run_id,fold,phase,fraction,sources,accuracy,macro_f1\nr,3,infused,0.50,bbc+news20,0.912346,0.900000\n"
        );
    }
}
