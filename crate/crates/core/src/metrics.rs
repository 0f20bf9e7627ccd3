//! Confusion counts and the per-class recognition rate.

use serde::{Deserialize, Serialize};

use crate::error::{ElmError, Result};

/// `counts[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(ElmError::shape(
                "confusion",
                format!("{} true labels vs {} predictions", truth.len(), predicted.len()),
            ));
        }
        let mut counts = vec![vec![0usize; classes]; classes];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= classes || p >= classes {
                return Err(ElmError::InvalidInput(format!(
                    "label pair ({t}, {p}) outside {classes} classes"
                )));
            }
            counts[t][p] += 1;
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn support(&self, class: usize) -> usize {
        self.counts[class].iter().sum()
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    /// Recall per class; `None` where the class never occurs in the truth.
    pub fn recalls(&self) -> Vec<Option<f64>> {
        (0..self.classes())
            .map(|c| match self.support(c) {
                0 => None,
                n => Some(self.counts[c][c] as f64 / n as f64),
            })
            .collect()
    }

    pub fn accuracy(&self) -> f64 {
        let correct: usize = (0..self.classes()).map(|c| self.counts[c][c]).sum();
        match self.total() {
            0 => 0.0,
            n => correct as f64 / n as f64,
        }
    }
}

/// Scores of one model on one labelled block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub per_class_recall: Vec<Option<f64>>,
    /// Unweighted mean of the recalls of classes present in the truth.
    pub mean_per_class_rate: f64,
    pub accuracy: f64,
    /// Classes with no true samples, left out of the mean.
    pub absent_classes: Vec<usize>,
    pub train_seconds: Option<f64>,
    pub infer_seconds: Option<f64>,
}

impl Evaluation {
    pub fn from_labels(truth: &[usize], predicted: &[usize], classes: usize) -> Result<Self> {
        let confusion = ConfusionMatrix::from_labels(truth, predicted, classes)?;
        let per_class_recall = confusion.recalls();
        let absent_classes: Vec<usize> = per_class_recall
            .iter()
            .enumerate()
            .filter_map(|(c, r)| r.is_none().then_some(c))
            .collect();
        let present: Vec<f64> = per_class_recall.iter().flatten().copied().collect();
        if present.is_empty() {
            return Err(ElmError::InvalidInput("no labelled samples to evaluate".into()));
        }
        let mean_per_class_rate = present.iter().sum::<f64>() / present.len() as f64;
        Ok(Evaluation {
            accuracy: confusion.accuracy(),
            confusion,
            per_class_recall,
            mean_per_class_rate,
            absent_classes,
            train_seconds: None,
            infer_seconds: None,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 2, 1, 0];
        let ev = Evaluation::from_labels(&y, &y, 3).unwrap();
        assert_eq!(ev.mean_per_class_rate, 1.0);
        assert_eq!(ev.accuracy, 1.0);
        assert!(ev.absent_classes.is_empty());
    }

    #[test]
    fn hand_computed_mean() {
        // class 0: 2/2 right, class 1: 1/2 right
        let ev = Evaluation::from_labels(&[0, 0, 1, 1], &[0, 0, 1, 0], 2).unwrap();
        assert_eq!(ev.per_class_recall, vec![Some(1.0), Some(0.5)]);
        assert_eq!(ev.mean_per_class_rate, 0.75);
        assert_eq!(ev.accuracy, 0.75);
    }

    #[test]
    fn absent_class_is_flagged() {
        let ev = Evaluation::from_labels(&[0, 0, 2], &[0, 1, 2], 3).unwrap();
        assert_eq!(ev.absent_classes, vec![1]);
        assert_eq!(ev.per_class_recall[1], None);
        assert_eq!(ev.mean_per_class_rate, (0.5 + 1.0) / 2.0);
    }

    #[test]
    fn rejects_bad_labels() {
        assert!(ConfusionMatrix::from_labels(&[0, 1], &[0], 2).is_err());
        assert!(ConfusionMatrix::from_labels(&[0, 2], &[0, 1], 2).is_err());
        assert!(Evaluation::from_labels(&[], &[], 2).is_err());
    }
}
