use serde::Serialize;

/// `m[true][pred]` counts.
pub fn confusion_matrix(predictions: &[usize], labels: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in predictions.iter().zip(labels) {
        m[t][p] += 1;
    }
    m
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hits = predictions.iter().zip(labels).filter(|(p, t)| p == t).count();
    hits as f64 / labels.len() as f64
}

/// Per-class F1 = 2PR/(P+R); 0 when P+R = 0 (including classes seen in
/// neither predictions nor labels).
pub fn per_class_f1(predictions: &[usize], labels: &[usize], classes: usize) -> Vec<f64> {
    let m = confusion_matrix(predictions, labels, classes);
    (0..classes)
        .map(|c| {
            let tp = m[c][c] as f64;
            let predicted: usize = (0..classes).map(|t| m[t][c]).sum();
            let actual: usize = m[c].iter().sum();
            let p = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let r = if actual == 0 { 0.0 } else { tp / actual as f64 };
            if p + r == 0.0 {
                0.0
            } else {
                2.0 * p * r / (p + r)
            }
        })
        .collect()
}

/// Mean F1 over classes that occur in the labels or the predictions.
pub fn macro_f1(predictions: &[usize], labels: &[usize], classes: usize) -> f64 {
    let f1 = per_class_f1(predictions, labels, classes);
    let mut seen = vec![false; classes];
    for &c in predictions.iter().chain(labels) {
        seen[c] = true;
    }
    let present: Vec<f64> = f1.iter().zip(&seen).filter(|(_, &s)| s).map(|(f, _)| *f).collect();
    if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    }
}

/// Mean F1 over the given class subset.
pub fn prominent_f1(predictions: &[usize], labels: &[usize], prominent: &[usize]) -> f64 {
    if prominent.is_empty() {
        return 0.0;
    }
    let classes = predictions
        .iter()
        .chain(labels)
        .chain(prominent)
        .max()
        .map_or(0, |&m| m + 1);
    let f1 = per_class_f1(predictions, labels, classes);
    prominent.iter().map(|&c| f1[c]).sum::<f64>() / prominent.len() as f64
}

/// Population standard deviation of per-client test accuracy (Welford).
pub fn performance_fairness(accuracies: &[f64]) -> f64 {
    if accuracies.is_empty() {
        return 0.0;
    }
    let (mut mean, mut m2) = (0.0, 0.0);
    for (i, &x) in accuracies.iter().enumerate() {
        let delta = x - mean;
        mean += delta / (i + 1) as f64;
        m2 += delta * (x - mean);
    }
    (m2 / accuracies.len() as f64).max(0.0).sqrt()
}

/// Train minus test accuracy; negative values are reported as they are.
pub fn overfit_gap(train_acc: f64, test_acc: f64) -> f64 {
    train_acc - test_acc
}

/// The headline numbers of an evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Score {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub accuracy: f64,
    pub per_class_f1: Vec<f64>,
    pub macro_f1: f64,
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Evaluation {
    pub fn new(predictions: Vec<usize>, labels: Vec<usize>, classes: usize, loss: f64) -> Self {
        Evaluation {
            accuracy: accuracy(&predictions, &labels),
            per_class_f1: per_class_f1(&predictions, &labels, classes),
            macro_f1: macro_f1(&predictions, &labels, classes),
            loss,
            predictions,
            labels,
        }
    }

    pub fn score(&self) -> Score {
        Score {
            accuracy: self.accuracy,
            macro_f1: self.macro_f1,
            loss: self.loss,
        }
    }

    pub fn prominent_f1(&self, prominent: &[usize]) -> f64 {
        prominent_f1(&self.predictions, &self.labels, prominent)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let y = vec![0, 1, 2, 1, 0];
        assert_eq!(accuracy(&y, &y), 1.0);
        assert!(per_class_f1(&y, &y, 3).iter().all(|&f| f == 1.0));
        assert_eq!(macro_f1(&y, &y, 3), 1.0);
        assert_eq!(prominent_f1(&y, &y, &[0, 2]), 1.0);
    }

    #[test]
    fn constant_predictor_on_balanced_pair() {
        assert_eq!(accuracy(&[0, 0, 0, 0], &[0, 1, 0, 1]), 0.5);
    }

    #[test]
    fn absent_class_contributes_zero() {
        let y = vec![0, 1, 0, 1];
        assert_eq!(prominent_f1(&y, &y, &[0, 5]), 0.5);
    }

    #[test]
    fn ten_sample_hand_case() {
        let labels = [0, 0, 0, 1, 1, 1, 1, 2, 2, 2];
        let preds = [0, 1, 0, 1, 1, 2, 1, 2, 0, 2];
        // confusion (true x pred): [[2,1,0],[0,3,1],[1,0,2]]
        assert_eq!(
            confusion_matrix(&preds, &labels, 3),
            vec![vec![2, 1, 0], vec![0, 3, 1], vec![1, 0, 2]]
        );
        // class 0: P = 2/3, R = 2/3 -> 2/3; class 1: P = 3/4, R = 3/4 -> 3/4;
        // class 2: P = 2/3, R = 2/3 -> 2/3
        let f1 = per_class_f1(&preds, &labels, 3);
        let expected = [2.0 / 3.0, 0.75, 2.0 / 3.0];
        for (a, b) in f1.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((prominent_f1(&preds, &labels, &[1, 2]) - (0.75 + 2.0 / 3.0) / 2.0).abs() < 1e-12);
        assert_eq!(accuracy(&preds, &labels), 0.7);
    }

    #[test]
    fn fairness_closed_forms() {
        assert_eq!(performance_fairness(&[0.7, 0.7, 0.7]), 0.0);
        assert!((performance_fairness(&[0.8, 0.9]) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn overfit_gap_values() {
        assert!((overfit_gap(0.998, 0.92) - 0.078).abs() < 1e-12);
        assert_eq!(overfit_gap(0.5, 0.5), 0.0);
        assert!(overfit_gap(0.4, 0.5) < 0.0);
    }

    fn two_pass_std(x: &[f64]) -> f64 {
        let mean = x.iter().sum::<f64>() / x.len() as f64;
        (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
    }

    proptest! {
        #[test]
        fn fairness_matches_two_pass(x in proptest::collection::vec(0.0f64..1.0, 1..50)) {
            prop_assert!((performance_fairness(&x) - two_pass_std(&x)).abs() < 1e-12);
        }
    }
}
