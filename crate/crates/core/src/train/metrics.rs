use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::{Emotion, Result, SerError};

const K: usize = Emotion::COUNT;

/// Recognition metrics. Percentages throughout; confusion rows are true
/// classes, columns predictions, each row normalized to 100. Classes with
/// no test samples have a `None` row and are left out of `class_accuracy`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub overall_accuracy: f64,
    pub class_accuracy: f64,
    pub confusion: [Option<[f64; K]>; K],
    pub counts: [[usize; K]; K],
    pub support: [usize; K],
    pub absent_classes: Vec<Emotion>,
}

impl Metrics {
    pub fn from_predictions(truth: &[Emotion], predicted: &[Emotion]) -> Result<Metrics> {
        if truth.len() != predicted.len() {
            return Err(SerError::Shape(format!(
                "{} labels but {} predictions",
                truth.len(),
                predicted.len()
            )));
        }
        if truth.is_empty() {
            return Err(SerError::EmptyInput("no test samples".into()));
        }
        let mut counts = [[0usize; K]; K];
        for (t, p) in truth.iter().zip(predicted) {
            counts[t.index()][p.index()] += 1;
        }
        Ok(Metrics::from_counts(counts))
    }

    pub fn from_counts(counts: [[usize; K]; K]) -> Metrics {
        let support = counts.map(|row| row.iter().sum::<usize>());
        let total: usize = support.iter().sum();
        let correct: usize = (0..K).map(|c| counts[c][c]).sum();
        let mut confusion = [None; K];
        let mut absent = Vec::new();
        let mut diag_sum = 0.0;
        for c in 0..K {
            if support[c] == 0 {
                absent.push(Emotion::ALL[c]);
                continue;
            }
            let row = counts[c].map(|v| 100.0 * v as f64 / support[c] as f64);
            diag_sum += row[c];
            confusion[c] = Some(row);
        }
        let present = K - absent.len();
        Metrics {
            overall_accuracy: 100.0 * correct as f64 / total.max(1) as f64,
            class_accuracy: if present == 0 { 0.0 } else { diag_sum / present as f64 },
            confusion,
            counts,
            support,
            absent_classes: absent,
        }
    }

    pub fn diagonal(&self) -> [Option<f64>; K] {
        std::array::from_fn(|c| self.confusion[c].map(|r| r[c]))
    }
}

/// Index of the largest value; ties resolve to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(v: &[T]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Confusion matrix as CSV, rows and columns in [`Emotion`] order.
pub fn confusion_csv(m: &Metrics) -> String {
    let mut s = String::from("true/predicted");
    for e in Emotion::ALL {
        let _ = write!(s, ",{e}");
    }
    s.push('\n');
    for e in Emotion::ALL {
        s.push_str(e.name());
        match m.confusion[e.index()] {
            Some(row) => row.iter().for_each(|v| {
                let _ = write!(s, ",{v:.1}");
            }),
            None => s.push_str(",NA,NA,NA,NA"),
        }
        s.push('\n');
    }
    s
}
