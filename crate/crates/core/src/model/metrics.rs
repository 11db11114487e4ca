//! Accuracy and macro-averaged precision, recall and F1.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Fractions in [0, 1]; [`fmt::Display`] prints percentages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// `confusion[true][predicted]`.
    pub confusion: [[usize; 2]; 2],
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predictions: &[usize]) -> Option<Self> {
        if labels.is_empty() || labels.len() != predictions.len() {
            return None;
        }
        let mut confusion = [[0usize; 2]; 2];
        for (&y, &p) in labels.iter().zip(predictions) {
            confusion[y][p] += 1;
        }
        let ratio = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
        let mut precision = 0.0;
        let mut recall = 0.0;
        let mut f1 = 0.0;
        for c in 0..2 {
            let tp = confusion[c][c];
            let predicted = confusion[0][c] + confusion[1][c];
            let actual = confusion[c][0] + confusion[c][1];
            let p = ratio(tp, predicted);
            let r = ratio(tp, actual);
            precision += p / 2.0;
            recall += r / 2.0;
            f1 += if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 } / 2.0;
        }
        let correct = confusion[0][0] + confusion[1][1];
        Some(Self {
            accuracy: correct as f64 / labels.len() as f64,
            precision,
            recall,
            f1,
            confusion,
        })
    }

    pub fn n(&self) -> usize {
        self.confusion.iter().flatten().sum()
    }
}

impl fmt::Display for Metrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "ACC {:.1}  PRC {:.1}  RCL {:.1}  F1 {:.1}",
            100.0 * self.accuracy,
            100.0 * self.precision,
            100.0 * self.recall,
            100.0 * self.f1
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_confusion() {
        let m = Metrics::from_predictions(&[1, 1, 0, 0], &[1, 0, 0, 0]).unwrap();
        assert!((100.0 * m.accuracy - 75.0).abs() < 1e-9);
        assert!((100.0 * m.precision - 250.0 / 3.0).abs() < 1e-9);
        assert!((100.0 * m.recall - 75.0).abs() < 1e-9);
        // Class 1: P 1, R 1/2, F1 2/3. Class 0: P 2/3, R 1, F1 4/5.
        assert!((100.0 * m.f1 - 100.0 * (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-9);
        assert_eq!(m.confusion, [[2, 0], [1, 1]]);
    }

    #[test]
    fn perfect_predictions() {
        let m = Metrics::from_predictions(&[0, 1, 1], &[0, 1, 1]).unwrap();
        assert_eq!(format!("{m}"), "ACC 100.0  PRC 100.0  RCL 100.0  F1 100.0");
    }

    #[test]
    fn never_predicted_class_counts_zero() {
        let m = Metrics::from_predictions(&[0, 1], &[0, 0]).unwrap();
        assert!((m.precision - 0.25).abs() < 1e-12);
        assert!(Metrics::from_predictions(&[], &[]).is_none());
    }

    #[test]
    fn display_format() {
        let m = Metrics {
            accuracy: 0.659,
            precision: 0.653,
            recall: 0.611,
            f1: 0.557,
            confusion: [[0; 2]; 2],
        };
        assert_eq!(m.to_string(), "ACC 65.9  PRC 65.3  RCL 61.1  F1 55.7");
    }
}
