use serde::{Deserialize, Serialize};

use super::{ClassId, EvalError, Result};

/// Scores for one train/test split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub default_accuracy: f64,
    pub balanced_accuracy: f64,
    /// `confusion[true][predicted]` counts.
    pub confusion: Vec<Vec<u64>>,
    /// Classes with no test samples in this run; excluded from balanced accuracy.
    pub skipped_classes: Vec<ClassId>,
}

impl RunMetrics {
    pub fn from_pairs(n_classes: usize, pairs: &[(ClassId, ClassId)]) -> Result<Self> {
        if pairs.is_empty() {
            return Err(EvalError::Input("no predictions to score".into()));
        }
        let mut confusion = vec![vec![0u64; n_classes]; n_classes];
        for &(t, p) in pairs {
            if t >= n_classes || p >= n_classes {
                return Err(EvalError::Input(format!(
                    "class id out of range: ({t}, {p}) with {n_classes} classes"
                )));
            }
            confusion[t][p] += 1;
        }
        let correct: u64 = (0..n_classes).map(|c| confusion[c][c]).sum();
        let mut recalls = Vec::new();
        let mut skipped = Vec::new();
        for (c, row) in confusion.iter().enumerate() {
            let support: u64 = row.iter().sum();
            if support == 0 {
                skipped.push(c);
            } else {
                recalls.push(row[c] as f64 / support as f64);
            }
        }
        Ok(Self {
            default_accuracy: correct as f64 / pairs.len() as f64,
            balanced_accuracy: recalls.iter().sum::<f64>() / recalls.len() as f64,
            confusion,
            skipped_classes: skipped,
        })
    }

    pub fn recall(&self, class: ClassId) -> Option<f64> {
        let row = self.confusion.get(class)?;
        let support: u64 = row.iter().sum();
        (support > 0).then(|| row[class] as f64 / support as f64)
    }
}

/// Accuracies across repeated runs plus the element-wise mean confusion matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub n_classes: usize,
    pub runs: Vec<RunMetrics>,
    pub mean_default_accuracy: f64,
    pub mean_balanced_accuracy: f64,
    pub mean_confusion: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub class_names: Vec<String>,
}

impl EvaluationReport {
    pub fn from_runs(n_classes: usize, runs: Vec<RunMetrics>) -> Result<Self> {
        if runs.is_empty() {
            return Err(EvalError::Input("no runs to aggregate".into()));
        }
        let k = runs.len() as f64;
        let mut mean_confusion = vec![vec![0.0; n_classes]; n_classes];
        for r in &runs {
            for (t, row) in r.confusion.iter().enumerate() {
                for (p, &c) in row.iter().enumerate() {
                    mean_confusion[t][p] += c as f64 / k;
                }
            }
        }
        Ok(Self {
            n_classes,
            mean_default_accuracy: runs.iter().map(|r| r.default_accuracy).sum::<f64>() / k,
            mean_balanced_accuracy: runs.iter().map(|r| r.balanced_accuracy).sum::<f64>() / k,
            mean_confusion,
            runs,
            class_names: Vec::new(),
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Self {
        self.class_names = names;
        self
    }

    pub fn default_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.default_accuracy).collect()
    }

    pub fn balanced_accuracies(&self) -> Vec<f64> {
        self.runs.iter().map(|r| r.balanced_accuracy).collect()
    }
}

/// Run `predict` on every split and aggregate. `predict` returns
/// `(true, predicted)` pairs for the split's test set.
pub fn evaluate_classifier<P, F>(n_classes: usize, splits: &[P], mut predict: F) -> Result<EvaluationReport>
where
    F: FnMut(usize, &P) -> Result<Vec<(ClassId, ClassId)>>,
{
    if n_classes == 0 {
        return Err(EvalError::Config("n_classes must be positive".into()));
    }
    let runs = splits
        .iter()
        .enumerate()
        .map(|(i, s)| RunMetrics::from_pairs(n_classes, &predict(i, s)?))
        .collect::<Result<Vec<_>>>()?;
    EvaluationReport::from_runs(n_classes, runs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn balanced_accuracy_is_mean_recall() {
        // class 0: 3/4, class 1: 1/2, class 2 absent
        let pairs = [(0, 0), (0, 0), (0, 0), (0, 1), (1, 1), (1, 0)];
        let m = RunMetrics::from_pairs(3, &pairs).unwrap();
        assert_eq!(m.default_accuracy, 4.0 / 6.0);
        assert_eq!(m.balanced_accuracy, (0.75 + 0.5) / 2.0);
        assert_eq!(m.skipped_classes, vec![2]);
    }

    #[test]
    fn out_of_range_class_is_rejected() {
        assert!(RunMetrics::from_pairs(2, &[(0, 2)]).is_err());
    }

    proptest! {
        #[test]
        fn accuracies_are_in_unit_interval(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..60)) {
            let m = RunMetrics::from_pairs(4, &pairs).unwrap();
            prop_assert!((0.0..=1.0).contains(&m.default_accuracy));
            prop_assert!((0.0..=1.0).contains(&m.balanced_accuracy));
        }

        #[test]
        fn mean_confusion_diagonal_is_recall_times_support(
            preds in prop::collection::vec(prop::collection::vec(0usize..3, 9), 1..6)
        ) {
            // fixed per-class support of 3 in every run
            let truth: Vec<usize> = (0..9).map(|i| i / 3).collect();
            let runs: Vec<RunMetrics> = preds
                .iter()
                .map(|p| {
                    let pairs: Vec<_> = truth.iter().copied().zip(p.iter().copied()).collect();
                    RunMetrics::from_pairs(3, &pairs).unwrap()
                })
                .collect();
            let rep = EvaluationReport::from_runs(3, runs.clone()).unwrap();
            for c in 0..3 {
                let mean_recall: f64 =
                    runs.iter().map(|r| r.recall(c).unwrap()).sum::<f64>() / runs.len() as f64;
                prop_assert!((rep.mean_confusion[c][c] - mean_recall * 3.0).abs() < 1e-9);
            }
        }
    }
}
