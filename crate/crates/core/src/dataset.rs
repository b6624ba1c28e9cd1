//! Shared data model: factor schemas, annotated latent datasets and seeds.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Master seed for every randomized operation.
///
/// All randomness flows through [`Seed::rng`]; sub-streams are obtained with
/// [`Seed::derive`], so a computation split into indexed units draws the same
/// numbers whether the units run serially or in parallel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Seed(pub u64);

impl Seed {
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    /// Independent child seed for unit `index` (splitmix64 finalizer).
    pub fn derive(self, index: u64) -> Seed {
        let mut x = self
            .0
            .wrapping_add(0x9E37_79B9_7F4A_7C15u64.wrapping_mul(index.wrapping_add(1)));
        x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        Seed(x ^ (x >> 31))
    }
}

impl From<u64> for Seed {
    fn from(v: u64) -> Self {
        Seed(v)
    }
}

/// One generative factor (a semantic-role group) and its content vocabulary.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Factor {
    pub name: String,
    pub values: Vec<String>,
}

impl Factor {
    pub fn new(name: impl Into<String>, values: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Factor {
            name: name.into(),
            values: values.into_iter().map(Into::into).collect(),
        }
    }

    pub fn value_index(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }
}

/// Ordered declaration of generative factors. Iteration order is canonical.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FactorSchema {
    factors: Vec<Factor>,
}

impl FactorSchema {
    pub fn new(factors: Vec<Factor>) -> Result<Self> {
        let mut names = HashSet::new();
        for f in &factors {
            if !names.insert(f.name.as_str()) {
                return Err(Error::Schema(format!("duplicate factor name {:?}", f.name)));
            }
            if f.values.is_empty() {
                return Err(Error::Schema(format!("factor {:?} has no values", f.name)));
            }
            let mut seen = HashSet::new();
            for v in &f.values {
                if !seen.insert(v.as_str()) {
                    return Err(Error::Schema(format!(
                        "factor {:?} lists value {:?} twice",
                        f.name, v
                    )));
                }
            }
        }
        Ok(FactorSchema { factors })
    }

    pub fn factors(&self) -> &[Factor] {
        &self.factors
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn factor(&self, name: &str) -> Option<&Factor> {
        self.factors.iter().find(|f| f.name == name)
    }

    pub fn factor_index(&self, name: &str) -> Option<usize> {
        self.factors.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.factors.iter().map(|f| f.name.as_str())
    }

    fn require(&self, name: &str) -> Result<&Factor> {
        self.factor(name)
            .ok_or_else(|| Error::Schema(format!("unknown factor {name:?}")))
    }
}

/// A per-sample annotation: either a content value or an occurrence count.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Label {
    Value(String),
    Count(u32),
}

impl Label {
    /// Whether this annotation selects `value` of its factor.
    ///
    /// A count annotation carries no content, so it selects every value of the
    /// factor as soon as the factor occurs at all.
    pub fn matches(&self, value: &str) -> bool {
        match self {
            Label::Value(v) => v == value,
            Label::Count(n) => *n > 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FactorKind {
    Categorical,
    Count,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: u64,
    pub vector: Vec<f64>,
    pub labels: BTreeMap<String, Label>,
    pub text: Option<String>,
}

impl Sample {
    pub fn new(id: u64, vector: Vec<f64>) -> Self {
        Sample {
            id,
            vector,
            labels: BTreeMap::new(),
            text: None,
        }
    }

    pub fn with_label(mut self, factor: impl Into<String>, label: Label) -> Self {
        self.labels.insert(factor.into(), label);
        self
    }
}

/// Summary statistics of one latent dimension (population moments).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

/// Latent vectors plus per-sample factor annotations.
///
/// Immutable once built; every operation returns a new dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentDataset {
    dim: usize,
    samples: Vec<Sample>,
}

impl LatentDataset {
    /// Validates and builds a dataset. Requires at least one sample.
    pub fn new(schema: &FactorSchema, dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Data("dataset has no samples".into()));
        }
        Self::validated(schema, dim, samples)
    }

    fn validated(schema: &FactorSchema, dim: usize, samples: Vec<Sample>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("latent dimensionality must be positive".into()));
        }
        let mut ids = HashSet::with_capacity(samples.len());
        let mut kinds: BTreeMap<&str, FactorKind> = BTreeMap::new();
        for s in &samples {
            if !ids.insert(s.id) {
                return Err(Error::Data(format!("duplicate sample id {}", s.id)));
            }
            if s.vector.len() != dim {
                return Err(Error::Data(format!(
                    "sample {} has {} components, expected {dim}",
                    s.id,
                    s.vector.len()
                )));
            }
            if let Some(i) = s.vector.iter().position(|x| !x.is_finite()) {
                return Err(Error::Data(format!(
                    "sample {} has non-finite component at index {i}",
                    s.id
                )));
            }
            for (name, label) in &s.labels {
                let factor = schema.require(name)?;
                let kind = match label {
                    Label::Value(v) => {
                        if factor.value_index(v).is_none() {
                            return Err(Error::Schema(format!(
                                "sample {}: value {v:?} not in vocabulary of factor {name:?}",
                                s.id
                            )));
                        }
                        FactorKind::Categorical
                    }
                    Label::Count(_) => FactorKind::Count,
                };
                match kinds.get(name.as_str()) {
                    Some(k) if *k != kind => {
                        return Err(Error::Schema(format!(
                            "factor {name:?} mixes categorical and count annotations"
                        )))
                    }
                    _ => {
                        kinds.insert(factor.name.as_str(), kind);
                    }
                }
            }
        }
        Ok(LatentDataset { dim, samples })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        self.samples.iter().map(|s| s.vector.as_slice()).collect()
    }

    pub fn ids(&self) -> Vec<u64> {
        self.samples.iter().map(|s| s.id).collect()
    }

    pub fn sample_by_id(&self, id: u64) -> Option<&Sample> {
        self.samples.iter().find(|s| s.id == id)
    }

    /// Annotation kind of `factor` in this dataset, `None` when no sample carries it.
    pub fn factor_kind(&self, factor: &str) -> Option<FactorKind> {
        self.samples.iter().find_map(|s| {
            s.labels.get(factor).map(|l| match l {
                Label::Value(_) => FactorKind::Categorical,
                Label::Count(_) => FactorKind::Count,
            })
        })
    }

    /// Integer class per sample for `factor`: the value index for categorical
    /// annotations, the occurrence count for count annotations, `None` when
    /// the sample is unannotated.
    pub fn class_labels(&self, schema: &FactorSchema, factor: &str) -> Result<Vec<Option<usize>>> {
        let f = schema.require(factor)?;
        Ok(self
            .samples
            .iter()
            .map(|s| match s.labels.get(factor) {
                Some(Label::Value(v)) => f.value_index(v),
                Some(Label::Count(n)) => Some(*n as usize),
                None => None,
            })
            .collect())
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> LatentDataset {
        LatentDataset {
            dim: self.dim,
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Returns a copy with every vector replaced by `f(vector)`. `f` must keep
    /// the dimensionality `dim`.
    pub fn map_vectors(&self, dim: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<LatentDataset> {
        let samples: Vec<Sample> = self
            .samples
            .iter()
            .map(|s| Sample {
                vector: f(&s.vector),
                ..s.clone()
            })
            .collect();
        for s in &samples {
            if s.vector.len() != dim || s.vector.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("mapped vector of sample {} is invalid", s.id)));
            }
        }
        Ok(LatentDataset { dim, samples })
    }

    pub fn dim_stats(&self) -> Vec<DimStats> {
        let n = self.samples.len() as f64;
        (0..self.dim)
            .map(|d| {
                let mut min = f64::INFINITY;
                let mut max = f64::NEG_INFINITY;
                let mut sum = 0.0;
                for s in &self.samples {
                    let x = s.vector[d];
                    min = min.min(x);
                    max = max.max(x);
                    sum += x;
                }
                let mean = sum / n;
                let var = self
                    .samples
                    .iter()
                    .map(|s| (s.vector[d] - mean).powi(2))
                    .sum::<f64>()
                    / n;
                DimStats {
                    min,
                    max,
                    mean,
                    std: var.sqrt(),
                }
            })
            .collect()
    }
}

/// Samples whose annotation for `factor` selects `value`, in original order.
///
/// An empty result is a valid (empty) dataset.
pub fn subset_by_factor(
    ds: &LatentDataset,
    schema: &FactorSchema,
    factor: &str,
    value: &str,
) -> Result<LatentDataset> {
    let f = schema.require(factor)?;
    if f.value_index(value).is_none() {
        return Err(Error::Schema(format!(
            "value {value:?} not in vocabulary of factor {factor:?}"
        )));
    }
    let samples = ds
        .samples
        .iter()
        .filter(|s| s.labels.get(factor).is_some_and(|l| l.matches(value)))
        .cloned()
        .collect();
    Ok(LatentDataset {
        dim: ds.dim,
        samples,
    })
}

/// Seeded disjoint partition into `(train, test)`; each part keeps the
/// original sample order. The test part has `ceil(n * test_fraction)` rows,
/// clamped so both parts are non-empty.
pub fn train_test_split(
    ds: &LatentDataset,
    test_fraction: f64,
    seed: Seed,
) -> Result<(LatentDataset, LatentDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::Data(format!("cannot split {n} sample(s)")));
    }
    let n_test = ((n as f64 * test_fraction) - 1e-9).ceil() as usize;
    let n_test = n_test.clamp(1, n - 1);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut seed.rng());
    let mut test_idx = order[..n_test].to_vec();
    let mut train_idx = order[n_test..].to_vec();
    test_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((ds.select(&train_idx), ds.select(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> FactorSchema {
        FactorSchema::new(vec![Factor::new("ARG0", ["animal", "human", "plant", "something"])])
            .unwrap()
    }

    fn toy() -> (FactorSchema, LatentDataset) {
        let s = schema();
        let labels = ["animal", "human", "animal", "plant", "animal", "human"];
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Sample::new(i as u64, vec![i as f64, -(i as f64)])
                    .with_label("ARG0", Label::Value(l.to_string()))
            })
            .collect();
        let ds = LatentDataset::new(&s, 2, samples).unwrap();
        (s, ds)
    }

    #[test]
    fn subset_filters_and_preserves_order() {
        let (s, ds) = toy();
        let sub = subset_by_factor(&ds, &s, "ARG0", "animal").unwrap();
        assert_eq!(sub.ids(), vec![0, 2, 4]);
        // brute-force linear scan
        let expected: Vec<u64> = ds
            .samples()
            .iter()
            .filter(|x| x.labels["ARG0"] == Label::Value("animal".into()))
            .map(|x| x.id)
            .collect();
        assert_eq!(sub.ids(), expected);
    }

    #[test]
    fn subset_absent_value_is_empty() {
        let (s, ds) = toy();
        let sub = subset_by_factor(&ds, &s, "ARG0", "something").unwrap();
        assert!(sub.is_empty());
    }

    #[test]
    fn subset_unknown_factor_or_value_is_schema_error() {
        let (s, ds) = toy();
        assert!(matches!(
            subset_by_factor(&ds, &s, "ARG9", "animal"),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            subset_by_factor(&ds, &s, "ARG0", "rock"),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn count_labels_select_when_positive() {
        let s = schema();
        let ds = LatentDataset::new(
            &s,
            1,
            vec![
                Sample::new(0, vec![0.0]).with_label("ARG0", Label::Count(2)),
                Sample::new(1, vec![1.0]).with_label("ARG0", Label::Count(0)),
                Sample::new(2, vec![2.0]),
            ],
        )
        .unwrap();
        let sub = subset_by_factor(&ds, &s, "ARG0", "human").unwrap();
        assert_eq!(sub.ids(), vec![0]);
        assert_eq!(
            ds.class_labels(&s, "ARG0").unwrap(),
            vec![Some(2), Some(0), None]
        );
    }

    #[test]
    fn split_sizes_and_determinism() {
        let s = schema();
        let samples = (0..10).map(|i| Sample::new(i, vec![i as f64])).collect();
        let ds = LatentDataset::new(&s, 1, samples).unwrap();
        let (a, b) = train_test_split(&ds, 0.2, Seed(7)).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a2, b2) = train_test_split(&ds, 0.2, Seed(7)).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        let (c, d) = train_test_split(&ds, 0.2, Seed(8)).unwrap();
        assert_eq!((c.len(), d.len()), (8, 2));

        let mut all: Vec<u64> = a.ids().into_iter().chain(b.ids()).collect();
        all.sort_unstable();
        assert_eq!(all, ds.ids());
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let s = schema();
        let samples = (0..4).map(|i| Sample::new(i, vec![0.0])).collect();
        let ds = LatentDataset::new(&s, 1, samples).unwrap();
        for f in [0.0, 1.0, -0.1, f64::NAN] {
            assert!(matches!(
                train_test_split(&ds, f, Seed(1)),
                Err(Error::InvalidArgument(_))
            ));
        }
    }

    #[test]
    fn construction_rejects_bad_rows() {
        let s = schema();
        assert!(LatentDataset::new(&s, 2, vec![]).is_err());
        assert!(LatentDataset::new(&s, 2, vec![Sample::new(0, vec![1.0])]).is_err());
        assert!(LatentDataset::new(&s, 1, vec![Sample::new(0, vec![f64::NAN])]).is_err());
        let bad = Sample::new(0, vec![1.0]).with_label("ARG0", Label::Value("rock".into()));
        assert!(matches!(LatentDataset::new(&s, 1, vec![bad]), Err(Error::Schema(_))));
        let mixed = vec![
            Sample::new(0, vec![1.0]).with_label("ARG0", Label::Count(1)),
            Sample::new(1, vec![1.0]).with_label("ARG0", Label::Value("animal".into())),
        ];
        assert!(LatentDataset::new(&s, 1, mixed).is_err());
    }

    #[test]
    fn schema_rejects_duplicates() {
        assert!(FactorSchema::new(vec![Factor::new("V", ["is"]), Factor::new("V", ["causes"])]).is_err());
        assert!(FactorSchema::new(vec![Factor::new("V", ["is", "is"])]).is_err());
        assert!(FactorSchema::new(vec![Factor::new("V", Vec::<String>::new())]).is_err());
    }

    #[test]
    fn derived_seeds_differ() {
        let s = Seed(1);
        assert_ne!(s.derive(0), s.derive(1));
        assert_eq!(s.derive(3), Seed(1).derive(3));
    }
}
