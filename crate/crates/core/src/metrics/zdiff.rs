//! Classifier accuracy on batch-averaged absolute latent differences of
//! pairs that share one factor value.

use rand::seq::IndexedRandom;
use serde::{Deserialize, Serialize};

use super::{value_groups, SPLIT_STREAM};
use crate::dataset::{train_test_split, FactorSchema, LatentDataset, Seed};
use crate::error::{Error, Result};
use crate::learners::{LinearClassifier, LinearParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZDiffConfig {
    /// Pairs averaged into one feature vector.
    pub batch_size: usize,
    pub train_points_per_factor: usize,
    pub test_points_per_factor: usize,
    pub test_fraction: f64,
    pub classifier: LinearParams,
}

impl Default for ZDiffConfig {
    fn default() -> Self {
        ZDiffConfig {
            batch_size: 64,
            train_points_per_factor: 200,
            test_points_per_factor: 100,
            test_fraction: 0.2,
            classifier: LinearParams::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZDiffResult {
    /// Held-out accuracy in percent.
    pub accuracy_percent: f64,
    /// Fewer than two usable factors: the score is trivially 100.
    pub degenerate: bool,
    pub factors: Vec<String>,
    pub skipped: Vec<String>,
}

/// Groups (by value) with at least two members, per usable factor.
fn pairable(ds: &LatentDataset, schema: &FactorSchema, factor: &str) -> Result<Vec<Vec<usize>>> {
    let labels = ds.class_labels(schema, factor)?;
    Ok(value_groups(&labels).into_iter().filter(|g| g.len() >= 2).collect())
}

fn make_point(ds: &LatentDataset, groups: &[Vec<usize>], batch: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    let mut feat = vec![0.0; ds.dim()];
    for _ in 0..batch {
        let g = groups.choose(rng).expect("non-empty groups");
        let pair: Vec<&usize> = g.choose_multiple(rng, 2).collect();
        let (a, b) = (&ds.samples()[*pair[0]].vector, &ds.samples()[*pair[1]].vector);
        for ((f, x), y) in feat.iter_mut().zip(a).zip(b) {
            *f += (x - y).abs();
        }
    }
    feat.iter_mut().for_each(|f| *f /= batch as f64);
    feat
}

pub fn z_diff_accuracy(ds: &LatentDataset, schema: &FactorSchema, cfg: &ZDiffConfig, seed: Seed) -> Result<ZDiffResult> {
    if cfg.batch_size == 0 || cfg.train_points_per_factor == 0 || cfg.test_points_per_factor == 0 {
        return Err(Error::InvalidArgument("z_diff batch and point counts must be positive".into()));
    }
    let (train, test) = train_test_split(ds, cfg.test_fraction, seed.derive(SPLIT_STREAM))?;
    let mut factors = Vec::new();
    let mut skipped = Vec::new();
    let mut groups = Vec::new();
    for f in schema.factors() {
        let tr = pairable(&train, schema, &f.name)?;
        let te = pairable(&test, schema, &f.name)?;
        if tr.is_empty() || te.is_empty() {
            skipped.push(format!("factor {} has no value with 2 samples in both splits", f.name));
            continue;
        }
        factors.push(f.name.clone());
        groups.push((tr, te));
    }
    if factors.len() < 2 {
        return Ok(ZDiffResult {
            accuracy_percent: 100.0,
            degenerate: true,
            factors,
            skipped,
        });
    }

    let mut rng = seed.derive(1).rng();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (k, (tr, _)) in groups.iter().enumerate() {
        for _ in 0..cfg.train_points_per_factor {
            xs.push(make_point(&train, tr, cfg.batch_size, &mut rng));
            ys.push(k);
        }
    }
    let clf = LinearClassifier::fit(&xs, &ys, &cfg.classifier, seed.derive(2))?;

    let mut rng = seed.derive(3).rng();
    let mut correct = 0usize;
    let mut total = 0usize;
    for (k, (_, te)) in groups.iter().enumerate() {
        for _ in 0..cfg.test_points_per_factor {
            let p = make_point(&test, te, cfg.batch_size, &mut rng);
            correct += usize::from(clf.classify(&p) == k);
            total += 1;
        }
    }
    Ok(ZDiffResult {
        accuracy_percent: 100.0 * correct as f64 / total as f64,
        degenerate: false,
        factors,
        skipped,
    })
}
