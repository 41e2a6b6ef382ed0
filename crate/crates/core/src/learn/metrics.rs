use serde::{Deserialize, Serialize};

use super::train::EpochLog;
use crate::sim::GestureKind;

/// Confusion counts with rows indexed by truth and columns by prediction.
/// Out-of-range labels are ignored.
pub fn confusion_matrix(pred: &[usize], truth: &[usize], k: usize) -> Vec<Vec<u64>> {
    let mut c = vec![vec![0u64; k]; k];
    for (&p, &t) in pred.iter().zip(truth) {
        if p < k && t < k {
            c[t][p] += 1;
        }
    }
    c
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub name: String,
    pub support: u64,
    /// Per-class accuracy, i.e. recall (%).
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Accuracy, per-class scores and macro-F1, all in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

fn class_name(i: usize) -> String {
    GestureKind::from_index(i)
        .map(|g| g.name().to_string())
        .unwrap_or_else(|_| format!("class{i}"))
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let k = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|i| {
                let tp = confusion[i][i];
                let support: u64 = confusion[i].iter().sum();
                let predicted: u64 = confusion.iter().map(|r| r[i]).sum();
                let (fn_, fp) = (support - tp, predicted - tp);
                let recall = 100.0 * ratio(tp, support);
                ClassMetrics {
                    name: class_name(i),
                    support,
                    accuracy: recall,
                    precision: 100.0 * ratio(tp, predicted),
                    recall,
                    f1: 100.0 * ratio(2 * tp, 2 * tp + fp + fn_),
                }
            })
            .collect();
        let macro_f1 = if k == 0 {
            0.0
        } else {
            per_class.iter().map(|c| c.f1).sum::<f64>() / k as f64
        };
        Self {
            accuracy: 100.0 * ratio(correct, total),
            macro_f1,
            confusion,
            per_class,
        }
    }

    pub fn from_predictions(pred: &[usize], truth: &[usize], k: usize) -> Self {
        Self::from_confusion(confusion_matrix(pred, truth, k))
    }
}

/// Test-set metrics plus model cost and training history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    pub params: u64,
    pub gflops: f64,
    pub loss_curve: Vec<EpochLog>,
}

impl EvalReport {
    pub fn new(model: &str, m: Metrics, params: u64, gflops: f64) -> Self {
        Self {
            model: model.into(),
            accuracy: m.accuracy,
            macro_f1: m.macro_f1,
            confusion: m.confusion,
            per_class: m.per_class,
            params,
            gflops,
            loss_curve: Vec::new(),
        }
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let t = [0, 1, 2, 3, 4, 0];
        let m = Metrics::from_predictions(&t, &t, 5);
        assert_eq!(m.accuracy, 100.0);
        assert_eq!(m.macro_f1, 100.0);
    }

    #[test]
    fn two_class_reduction() {
        let m = Metrics::from_confusion(vec![vec![1, 1], vec![0, 2]]);
        assert_eq!(m.accuracy, 75.0);
        let want = (2.0 / 3.0 + 4.0 / 5.0) / 2.0 * 100.0;
        assert!((m.macro_f1 - want).abs() < 1e-12);
        assert!((m.macro_f1 - 73.333).abs() < 1e-3);
    }

    #[test]
    fn constant_predictor_on_balanced_set() {
        let truth: Vec<usize> = (0..50).map(|i| i % 5).collect();
        let pred = vec![2; 50];
        let m = Metrics::from_predictions(&pred, &truth, 5);
        assert_eq!(m.accuracy, 20.0);
        // F1 of class 2: 2·10 / (2·10 + 40 + 0)
        assert!((m.macro_f1 - 100.0 * (20.0 / 60.0) / 5.0).abs() < 1e-12);
    }

    #[test]
    fn rows_are_truth() {
        let c = confusion_matrix(&[1, 1, 0], &[0, 0, 0], 2);
        assert_eq!(c, vec![vec![1, 2], vec![0, 0]]);
        let m = Metrics::from_confusion(c);
        assert_eq!(m.per_class[0].support, 3);
        assert_eq!(m.per_class[1].f1, 0.0);
    }

    proptest! {
        #[test]
        fn macro_f1_is_permutation_invariant(
            pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200),
            perm in Just([0usize, 1, 2, 3, 4]).prop_shuffle(),
        ) {
            let pred: Vec<usize> = pairs.iter().map(|p| p.0).collect();
            let truth: Vec<usize> = pairs.iter().map(|p| p.1).collect();
            let a = Metrics::from_predictions(&pred, &truth, 5);
            let pp: Vec<usize> = pred.iter().map(|&i| perm[i]).collect();
            let tp: Vec<usize> = truth.iter().map(|&i| perm[i]).collect();
            let b = Metrics::from_predictions(&pp, &tp, 5);
            prop_assert_eq!(a.accuracy, b.accuracy);
            prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-9);
            let rows: Vec<u64> = a.confusion.iter().map(|r| r.iter().sum()).collect();
            for (i, r) in rows.iter().enumerate() {
                prop_assert_eq!(*r, truth.iter().filter(|&&t| t == i).count() as u64);
            }
        }
    }
}
