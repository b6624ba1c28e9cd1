//! Multinomial logistic regression trained by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::dataset::Seed;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearParams {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for LinearParams {
    fn default() -> Self {
        LinearParams {
            learning_rate: 0.5,
            epochs: 500,
            l2: 1e-4,
        }
    }
}

/// Softmax classifier over standardized features.
///
/// Features are z-scored with the training mean and population standard
/// deviation (unit scale for constant features) before the affine map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    /// `classes x features`
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_scale: Vec<f64>,
    pub params: LinearParams,
    /// Training objective before each update.
    pub loss_trace: Vec<f64>,
}

fn softmax_in_place(v: &mut [f64]) {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for x in v.iter_mut() {
        *x = (*x - m).exp();
        s += *x;
    }
    for x in v.iter_mut() {
        *x /= s;
    }
}

impl LinearClassifier {
    /// All-zero classifier; predicts class 0 everywhere.
    pub fn zeros(n_classes: usize, n_features: usize) -> Self {
        LinearClassifier {
            weights: vec![vec![0.0; n_features]; n_classes],
            bias: vec![0.0; n_classes],
            feature_mean: vec![0.0; n_features],
            feature_scale: vec![1.0; n_features],
            params: LinearParams::default(),
            loss_trace: Vec::new(),
        }
    }

    /// Initialization is all zeros, so `_seed` does not influence the result;
    /// it is accepted for interface uniformity with the other learners.
    pub fn fit<X: AsRef<[f64]>>(x: &[X], y: &[usize], params: &LinearParams, _seed: Seed) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Data(format!(
                "classifier input has {} rows and {} labels",
                x.len(),
                y.len()
            )));
        }
        let mut classes = y.to_vec();
        classes.sort_unstable();
        classes.dedup();
        if classes.len() < 2 {
            return Err(Error::DegenerateLabels("classifier needs at least 2 classes".into()));
        }
        let f = x[0].as_ref().len();
        if x.iter().any(|r| r.as_ref().len() != f) {
            return Err(Error::Data("classifier rows differ in length".into()));
        }
        if x.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
            return Err(Error::Numerical("classifier features contain non-finite values".into()));
        }
        let n = x.len();
        let k = classes[classes.len() - 1] + 1;

        let mut clf = Self::zeros(k, f);
        clf.params = params.clone();
        for d in 0..f {
            let mean = x.iter().map(|r| r.as_ref()[d]).sum::<f64>() / n as f64;
            let var = x.iter().map(|r| (r.as_ref()[d] - mean).powi(2)).sum::<f64>() / n as f64;
            clf.feature_mean[d] = mean;
            clf.feature_scale[d] = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        }
        let xs: Vec<Vec<f64>> = x.iter().map(|r| clf.standardize(r.as_ref())).collect();

        let mut gw = vec![vec![0.0; f]; k];
        let mut gb = vec![0.0; k];
        let mut p = vec![0.0; k];
        for _ in 0..params.epochs {
            gw.iter_mut().for_each(|r| r.iter_mut().for_each(|v| *v = 0.0));
            gb.iter_mut().for_each(|v| *v = 0.0);
            let mut loss = 0.0;
            for (row, &c) in xs.iter().zip(y) {
                clf.logits_into(row, &mut p);
                softmax_in_place(&mut p);
                loss -= p[c].max(1e-300).ln();
                p[c] -= 1.0;
                for j in 0..k {
                    gb[j] += p[j];
                    for (g, v) in gw[j].iter_mut().zip(row) {
                        *g += p[j] * v;
                    }
                }
            }
            let reg: f64 = clf.weights.iter().flatten().map(|w| w * w).sum();
            clf.loss_trace.push(loss / n as f64 + 0.5 * params.l2 * reg);
            let step = params.learning_rate / n as f64;
            for j in 0..k {
                clf.bias[j] -= step * gb[j];
                for (w, g) in clf.weights[j].iter_mut().zip(&gw[j]) {
                    *w -= step * g + params.learning_rate * params.l2 * *w;
                }
            }
            if clf.weights.iter().flatten().any(|w| !w.is_finite()) {
                return Err(Error::Numerical("classifier diverged".into()));
            }
        }
        Ok(clf)
    }

    fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.feature_mean)
            .zip(&self.feature_scale)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }

    fn logits_into(&self, xs: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = self.bias[j] + self.weights[j].iter().zip(xs).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    /// Arg-max class; ties go to the lowest class index.
    pub fn classify(&self, x: &[f64]) -> usize {
        let mut logits = vec![0.0; self.bias.len()];
        self.logits_into(&self.standardize(x), &mut logits);
        let mut best = 0;
        for (j, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = j;
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_1d_reaches_full_accuracy() {
        let x: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64 - 19.5]).collect();
        let y: Vec<usize> = (0..40).map(|i| usize::from(i >= 20)).collect();
        let clf = LinearClassifier::fit(&x, &y, &LinearParams::default(), Seed(0)).unwrap();
        let test: Vec<(f64, usize)> = vec![(-30.0, 0), (-0.6, 0), (0.6, 1), (25.0, 1)];
        for (v, c) in test {
            assert_eq!(clf.classify(&[v]), c, "at {v}");
        }
    }

    #[test]
    fn zero_classifier_predicts_first_class() {
        let clf = LinearClassifier::zeros(3, 2);
        for v in [[0.0, 0.0], [5.0, -3.0], [-1e6, 1e6]] {
            assert_eq!(clf.classify(&v), 0);
        }
    }

    #[test]
    fn loss_decreases_monotonically_for_small_steps() {
        let x: Vec<Vec<f64>> = (0..30)
            .map(|i| vec![(i as f64 * 0.37).sin(), (i as f64 * 0.11).cos()])
            .collect();
        let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let p = LinearParams {
            learning_rate: 0.1,
            epochs: 200,
            l2: 0.0,
        };
        let clf = LinearClassifier::fit(&x, &y, &p, Seed(0)).unwrap();
        for w in clf.loss_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-15, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn rejects_single_class_and_nonfinite() {
        let x = vec![vec![0.0], vec![1.0]];
        assert!(LinearClassifier::fit(&x, &[0, 0], &LinearParams::default(), Seed(0)).is_err());
        let bad = vec![vec![f64::NAN], vec![1.0]];
        assert!(matches!(
            LinearClassifier::fit(&bad, &[0, 1], &LinearParams::default(), Seed(0)),
            Err(Error::Numerical(_))
        ));
    }
}
