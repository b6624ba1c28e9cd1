//! Supervised learners used by the metrics and by guided traversal.

pub mod forest;
pub mod linear;
pub mod tree;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use forest::{ForestParams, RandomForest};
pub use linear::{LinearClassifier, LinearParams};
pub use tree::{Branch, DecisionTree, Node, NodeKind, PathStep, TreeParams, TreePath};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScore {
    pub accuracy: f64,
    /// Recall of every class present in the truth.
    pub per_class_recall: BTreeMap<usize, f64>,
    /// Unweighted mean of `per_class_recall`.
    pub macro_recall: f64,
}

pub fn score(predictions: &[usize], truth: &[usize]) -> Result<ClassificationScore> {
    if predictions.len() != truth.len() {
        return Err(Error::Data(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if truth.is_empty() {
        return Err(Error::Data("cannot score an empty prediction set".into()));
    }
    let correct = predictions.iter().zip(truth).filter(|(p, t)| p == t).count();
    let mut per_class: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (p, t) in predictions.iter().zip(truth) {
        let e = per_class.entry(*t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    let per_class_recall: BTreeMap<usize, f64> = per_class
        .into_iter()
        .map(|(c, (hit, total))| (c, hit as f64 / total as f64))
        .collect();
    let macro_recall = per_class_recall.values().sum::<f64>() / per_class_recall.len() as f64;
    Ok(ClassificationScore {
        accuracy: correct as f64 / truth.len() as f64,
        per_class_recall,
        macro_recall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_counted_example() {
        // truth AABB, pred ABBB
        let s = score(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(s.accuracy, 0.75);
        assert_eq!(s.per_class_recall[&0], 0.5);
        assert_eq!(s.per_class_recall[&1], 1.0);
        assert_eq!(s.macro_recall, 0.75);
    }

    #[test]
    fn class_absent_from_truth_excluded() {
        let s = score(&[2, 0, 0], &[0, 0, 0]).unwrap();
        assert_eq!(s.per_class_recall.len(), 1);
        assert!((s.macro_recall - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn length_mismatch_is_error() {
        assert!(score(&[0, 1], &[0]).is_err());
    }

    proptest! {
        #[test]
        fn self_score_is_perfect(p in prop::collection::vec(0usize..5, 1..50)) {
            let s = score(&p, &p).unwrap();
            prop_assert_eq!(s.accuracy, 1.0);
            prop_assert_eq!(s.macro_recall, 1.0);
            prop_assert!(s.per_class_recall.values().all(|&r| r == 1.0));
        }
    }
}
