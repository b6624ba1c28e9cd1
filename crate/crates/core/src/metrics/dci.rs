//! Importance-matrix scores: disentanglement, completeness, informativeness.

use serde::{Deserialize, Serialize};

use super::SPLIT_STREAM;
use crate::dataset::{train_test_split, FactorSchema, LatentDataset, Seed};
use crate::error::{Error, Result};
use crate::learners::{ForestParams, LinearClassifier, LinearParams, RandomForest};

/// Factor x dimension importances; every row is non-negative and sums to one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestImportance {
    pub factors: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub skipped: Vec<String>,
}

/// Rows and labels of the samples annotated for `factor`.
fn annotated(ds: &LatentDataset, schema: &FactorSchema, factor: &str) -> Result<(Vec<Vec<f64>>, Vec<usize>)> {
    let labels = ds.class_labels(schema, factor)?;
    Ok(ds
        .samples()
        .iter()
        .zip(labels)
        .filter_map(|(s, l)| l.map(|c| (s.vector.clone(), c)))
        .unzip())
}

/// One random forest per factor, labels = value index (categorical) or
/// occurrence count; rows are the normalized impurity importances.
/// Factors with constant labels are skipped.
pub fn dci_importance(ds: &LatentDataset, schema: &FactorSchema, params: &ForestParams, seed: Seed) -> Result<ForestImportance> {
    let mut out = ForestImportance {
        factors: Vec::new(),
        matrix: Vec::new(),
        skipped: Vec::new(),
    };
    for (k, f) in schema.factors().iter().enumerate() {
        let (x, y) = annotated(ds, schema, &f.name)?;
        if x.is_empty() {
            out.skipped.push(format!("factor {} is never annotated", f.name));
            continue;
        }
        let forest = RandomForest::fit(&x, &y, params, seed.derive(k as u64))?;
        match forest.importance() {
            Ok(row) => {
                out.factors.push(f.name.clone());
                out.matrix.push(row);
            }
            Err(Error::DegenerateLabels(why)) => {
                out.skipped.push(format!("factor {}: degenerate labels ({why})", f.name));
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Entropy of a non-negative vector normalized to a distribution, in base
/// `base` (0 when `base <= 1` or the mass is zero).
fn normalized_entropy(v: &[f64], base: usize) -> f64 {
    let total: f64 = v.iter().sum();
    if base <= 1 || total <= 0.0 {
        return 0.0;
    }
    let h: f64 = v
        .iter()
        .filter(|&&x| x > 0.0)
        .map(|&x| {
            let p = x / total;
            -p * p.ln()
        })
        .sum();
    h / (base as f64).ln()
}

/// `sum_d rho_d (1 - H_K(column d))` with `rho_d` the column's share of the
/// total importance mass and `H_K` the entropy in base `#factors`.
pub fn disentanglement_score(r: &[Vec<f64>]) -> f64 {
    let k = r.len();
    if k == 0 {
        return 0.0;
    }
    let dims = r[0].len();
    let total: f64 = r.iter().flatten().sum();
    if total <= 0.0 {
        return 0.0;
    }
    (0..dims)
        .map(|d| {
            let col: Vec<f64> = r.iter().map(|row| row[d]).collect();
            let mass: f64 = col.iter().sum();
            if mass <= 0.0 {
                return 0.0;
            }
            mass / total * (1.0 - normalized_entropy(&col, k))
        })
        .sum()
}

/// Mean over factors of `1 - H_D(row)` with `H_D` the entropy in base `#dims`.
pub fn completeness_score(r: &[Vec<f64>]) -> f64 {
    if r.is_empty() {
        return 0.0;
    }
    let dims = r[0].len();
    r.iter()
        .map(|row| 1.0 - normalized_entropy(row, dims))
        .sum::<f64>()
        / r.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformativenessConfig {
    pub test_fraction: f64,
    pub classifier: LinearParams,
}

impl Default for InformativenessConfig {
    fn default() -> Self {
        InformativenessConfig {
            test_fraction: 0.2,
            classifier: LinearParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformativenessResult {
    /// Mean held-out error over factors; lower is better.
    pub error: f64,
    pub factors: Vec<String>,
    pub per_factor_accuracy: Vec<f64>,
    pub skipped: Vec<String>,
}

/// Per-factor linear classifiers on the raw latents; the score is the mean
/// test error.
pub fn informativeness_score(
    ds: &LatentDataset,
    schema: &FactorSchema,
    cfg: &InformativenessConfig,
    seed: Seed,
) -> Result<InformativenessResult> {
    let (train, test) = train_test_split(ds, cfg.test_fraction, seed.derive(SPLIT_STREAM))?;
    let mut out = InformativenessResult {
        error: 0.0,
        factors: Vec::new(),
        per_factor_accuracy: Vec::new(),
        skipped: Vec::new(),
    };
    for (k, f) in schema.factors().iter().enumerate() {
        let (xtr, ytr) = annotated(&train, schema, &f.name)?;
        let (xte, yte) = annotated(&test, schema, &f.name)?;
        if xte.is_empty() {
            out.skipped.push(format!("factor {} has no test samples", f.name));
            continue;
        }
        let clf = match LinearClassifier::fit(&xtr, &ytr, &cfg.classifier, seed.derive(k as u64)) {
            Ok(c) => c,
            Err(Error::DegenerateLabels(_)) | Err(Error::Data(_)) => {
                out.skipped.push(format!("factor {}: degenerate training labels", f.name));
                continue;
            }
            Err(e) => return Err(e),
        };
        let hits = xte.iter().zip(&yte).filter(|(x, &y)| clf.classify(x) == y).count();
        out.factors.push(f.name.clone());
        out.per_factor_accuracy.push(hits as f64 / yte.len() as f64);
    }
    if out.factors.is_empty() {
        return Err(Error::Data("no factor usable for informativeness".into()));
    }
    out.error = out.per_factor_accuracy.iter().map(|a| 1.0 - a).sum::<f64>() / out.factors.len() as f64;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_importance_is_perfect() {
        let r = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]];
        assert!((disentanglement_score(&r) - 1.0).abs() < 1e-12);
        assert!((completeness_score(&r) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_importance_scores_zero() {
        let r = vec![vec![0.25; 4]; 4];
        assert!(disentanglement_score(&r).abs() < 1e-12);
        assert!(completeness_score(&r).abs() < 1e-12);
        let half = vec![vec![0.5, 0.5], vec![0.5, 0.5]];
        assert!(disentanglement_score(&half).abs() < 1e-12);
        assert!(completeness_score(&half).abs() < 1e-12);
    }

    #[test]
    fn zero_column_carries_no_weight() {
        let r = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
        // column 0 is uniform over both factors, column 1 is empty
        assert!(disentanglement_score(&r).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_mixed_matrix() {
        // column 0: (0.8, 0.2) -> H2 = 0.721928..., column 1: (0.2, 0.8) same
        let r = vec![vec![0.8, 0.2], vec![0.2, 0.8]];
        let h = -(0.8f64 * 0.8f64.log2() + 0.2 * 0.2f64.log2());
        assert!((disentanglement_score(&r) - (1.0 - h)).abs() < 1e-12);
        assert!((completeness_score(&r) - (1.0 - h)).abs() < 1e-12);
    }
}
