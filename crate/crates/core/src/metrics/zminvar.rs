//! Majority-vote accuracy of "which dimension varies least when one factor
//! value is held fixed".
//!
//! For each factor, repeatedly subsample training rows sharing one value of
//! that factor, take per-dimension variances of the normalized latents and
//! record the arg-min dimension. The resulting dimension x factor vote table
//! maps every dimension to its most frequent factor (the golden table). The
//! same procedure on the test split scores how often a repeat's arg-min
//! dimension maps back to the factor that generated it.

use rand::seq::{index, IndexedRandom};
use serde::{Deserialize, Serialize};

use super::{value_groups, SPLIT_STREAM};
use crate::dataset::{train_test_split, FactorSchema, LatentDataset, Seed};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZMinVarConfig {
    pub subsample: usize,
    /// Repeats per factor (N).
    pub repeats: usize,
    pub test_fraction: f64,
}

impl Default for ZMinVarConfig {
    fn default() -> Self {
        ZMinVarConfig {
            subsample: 64,
            repeats: 50,
            test_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZMinVarResult {
    pub score: f64,
    pub factors: Vec<String>,
    pub per_factor: Vec<f64>,
    /// Training votes, `[dim][factor]`.
    pub vote_table: Vec<Vec<usize>>,
    pub golden: Vec<Option<usize>>,
    pub skipped: Vec<String>,
}

/// Arg-max factor of every row (lowest index on ties); `None` for rows
/// without votes.
pub fn golden_factors(table: &[Vec<usize>]) -> Vec<Option<usize>> {
    table
        .iter()
        .map(|row| {
            let mut best: Option<usize> = None;
            for (f, &c) in row.iter().enumerate() {
                if c > 0 && best.is_none_or(|b| c > row[b]) {
                    best = Some(f);
                }
            }
            best
        })
        .collect()
}

struct Voter<'a> {
    ds: &'a LatentDataset,
    scale: &'a [Option<f64>],
    subsample: usize,
}

impl Voter<'_> {
    /// Arg-min normalized variance over one random same-value subsample.
    fn vote(&self, groups: &[&Vec<usize>], rng: &mut impl rand::Rng) -> Option<usize> {
        let g = groups.choose(rng)?;
        let take = self.subsample.min(g.len());
        let rows: Vec<usize> = index::sample(rng, g.len(), take).into_iter().map(|i| g[i]).collect();
        let mut best: Option<(usize, f64)> = None;
        for (d, s) in self.scale.iter().enumerate() {
            let Some(s) = s else { continue };
            let vals: Vec<f64> = rows.iter().map(|&r| self.ds.samples()[r].vector[d] / s).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            if best.is_none_or(|(_, b)| var < b) {
                best = Some((d, var));
            }
        }
        best.map(|b| b.0)
    }
}

pub fn z_min_var_score(ds: &LatentDataset, schema: &FactorSchema, cfg: &ZMinVarConfig, seed: Seed) -> Result<ZMinVarResult> {
    if cfg.subsample < 2 || cfg.repeats == 0 {
        return Err(Error::InvalidArgument("z_min_var needs subsample >= 2 and repeats >= 1".into()));
    }
    let scale: Vec<Option<f64>> = ds
        .dim_stats()
        .iter()
        .map(|s| (s.std > 0.0).then_some(s.std))
        .collect();
    if scale.iter().all(Option::is_none) {
        return Err(Error::Data("every latent dimension is constant".into()));
    }
    let (train, test) = train_test_split(ds, cfg.test_fraction, seed.derive(SPLIT_STREAM))?;

    let mut factors = Vec::new();
    let mut skipped = Vec::new();
    let mut train_groups = Vec::new();
    let mut test_groups = Vec::new();
    for f in schema.factors() {
        if ds.class_labels(schema, &f.name)?.iter().all(Option::is_none) {
            skipped.push(format!("factor {} is never annotated", f.name));
            continue;
        }
        let tr: Vec<Vec<usize>> = value_groups(&train.class_labels(schema, &f.name)?)
            .into_iter()
            .filter(|g| g.len() >= 2)
            .collect();
        let te: Vec<Vec<usize>> = value_groups(&test.class_labels(schema, &f.name)?)
            .into_iter()
            .filter(|g| g.len() >= 2)
            .collect();
        if tr.is_empty() {
            return Err(Error::Data(format!("factor {} is absent from the train split", f.name)));
        }
        if te.is_empty() {
            return Err(Error::Data(format!("factor {} is absent from the test split", f.name)));
        }
        factors.push(f.name.clone());
        train_groups.push(tr);
        test_groups.push(te);
    }
    if factors.is_empty() {
        return Err(Error::Data("no annotated factor for z_min_var".into()));
    }

    let mut table = vec![vec![0usize; factors.len()]; ds.dim()];
    let voter = Voter {
        ds: &train,
        scale: &scale,
        subsample: cfg.subsample,
    };
    for (k, groups) in train_groups.iter().enumerate() {
        let mut rng = seed.derive(1).derive(k as u64).rng();
        let refs: Vec<&Vec<usize>> = groups.iter().collect();
        for _ in 0..cfg.repeats {
            if let Some(d) = voter.vote(&refs, &mut rng) {
                table[d][k] += 1;
            }
        }
    }
    let golden = golden_factors(&table);

    let voter = Voter {
        ds: &test,
        scale: &scale,
        subsample: cfg.subsample,
    };
    let per_factor: Vec<f64> = test_groups
        .iter()
        .enumerate()
        .map(|(k, groups)| {
            let mut rng = seed.derive(2).derive(k as u64).rng();
            let refs: Vec<&Vec<usize>> = groups.iter().collect();
            let hits = (0..cfg.repeats)
                .filter(|_| voter.vote(&refs, &mut rng).and_then(|d| golden[d]) == Some(k))
                .count();
            hits as f64 / cfg.repeats as f64
        })
        .collect();
    let score = per_factor.iter().sum::<f64>() / per_factor.len() as f64;
    Ok(ZMinVarResult {
        score,
        factors,
        per_factor,
        vote_table: table,
        golden,
        skipped,
    })
}
