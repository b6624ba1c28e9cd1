//! Latent-space operations: traversal, interpolation, arithmetic, cone and
//! cluster probes, proxy separability metrics and PCA plots.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{train_test_split, DimStats, FactorSchema, Label, LatentDataset, Seed};
use crate::error::{Error, Result};
use crate::learners::{score, DecisionTree, TreeParams};
use crate::metrics::SPLIT_STREAM;

/// Reads factor values off a latent vector; stands in for decoding a vector
/// to text and re-annotating it.
pub trait Labeler: Sync {
    fn factors(&self) -> Vec<String>;

    fn label_factor(&self, z: &[f64], factor: &str) -> Option<String>;

    fn label(&self, z: &[f64]) -> BTreeMap<String, String> {
        self.factors()
            .into_iter()
            .filter_map(|f| self.label_factor(z, &f).map(|v| (f, v)))
            .collect()
    }
}

/// Maps a vector to a discrete region id.
pub trait RegionClassifier: Sync {
    fn region(&self, z: &[f64]) -> usize;
}

/// Predicted class of a tree.
impl RegionClassifier for DecisionTree {
    fn region(&self, z: &[f64]) -> usize {
        self.predict(z)
    }
}

/// Leaf id of a tree: the axis-aligned cell `z` falls in.
pub struct TreeLeaf<'a>(pub &'a DecisionTree);

impl RegionClassifier for TreeLeaf<'_> {
    fn region(&self, z: &[f64]) -> usize {
        self.0.leaf_of(z)
    }
}

/// One factor of a labeler, as the index of its value in `values`
/// (`values.len()` when the labeler returns nothing or an unknown value).
pub struct LabelerRegion<'a> {
    pub labeler: &'a dyn Labeler,
    pub factor: String,
    pub values: Vec<String>,
}

impl RegionClassifier for LabelerRegion<'_> {
    fn region(&self, z: &[f64]) -> usize {
        self.labeler
            .label_factor(z, &self.factor)
            .and_then(|v| self.values.iter().position(|x| *x == v))
            .unwrap_or(self.values.len())
    }
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::InvalidArgument(format!(
            "vector lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// One copy of `z` per value, with component `dim` replaced.
pub fn traverse_dim(z: &[f64], dim: usize, values: &[f64]) -> Result<Vec<Vec<f64>>> {
    if dim >= z.len() {
        return Err(Error::InvalidArgument(format!(
            "dimension {dim} out of range for length {}",
            z.len()
        )));
    }
    Ok(values
        .iter()
        .map(|&v| {
            let mut out = z.to_vec();
            out[dim] = v;
            out
        })
        .collect())
}

/// `steps` evenly spaced values from `lo` to `hi` inclusive (`lo` alone when
/// `steps == 1`).
pub fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps <= 1 {
        return vec![lo; steps];
    }
    (0..steps)
        .map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64)
        .collect()
}

/// Per-dimension resampling of a seed vector; dimensions not listed stay
/// fixed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraversalPlan {
    pub z: Vec<f64>,
    /// `(dim, lo, hi)` for every traversed dimension.
    pub ranges: Vec<(usize, f64, f64)>,
    pub steps: usize,
}

impl TraversalPlan {
    /// Every dimension over `[mean - 2 std, mean + 2 std]`, 8 steps.
    pub fn default_for(z: Vec<f64>, stats: &[DimStats]) -> Result<Self> {
        if z.len() != stats.len() {
            return Err(Error::InvalidArgument("seed length differs from dataset dim".into()));
        }
        let ranges = stats
            .iter()
            .enumerate()
            .map(|(d, s)| (d, s.mean - 2.0 * s.std, s.mean + 2.0 * s.std))
            .collect();
        Ok(TraversalPlan { z, ranges, steps: 8 })
    }

    pub fn restrict(mut self, dims: &[usize]) -> Self {
        self.ranges.retain(|r| dims.contains(&r.0));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::InvalidArgument("traversal needs at least one step".into()));
        }
        for &(d, lo, hi) in &self.ranges {
            if d >= self.z.len() || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::InvalidArgument(format!("invalid range for dimension {d}")));
            }
        }
        Ok(())
    }

    /// `(dim, resampled vectors)` per traversed dimension.
    pub fn run(&self) -> Result<Vec<(usize, Vec<Vec<f64>>)>> {
        self.validate()?;
        self.ranges
            .iter()
            .map(|&(d, lo, hi)| Ok((d, traverse_dim(&self.z, d, &linspace(lo, hi, self.steps))?)))
            .collect()
    }
}

/// `z_t = z1 (1 - t) + z2 t` for `t = step, 2 step, ...` strictly below 1.
pub fn interpolate(z1: &[f64], z2: &[f64], step: f64) -> Result<Vec<Vec<f64>>> {
    same_len(z1, z2)?;
    if !(step > 0.0 && step < 1.0) {
        return Err(Error::InvalidArgument(format!("step must lie in (0, 1), got {step}")));
    }
    let n = ((1.0 / step) - 1e-9).ceil() as usize - 1;
    Ok((1..=n)
        .map(|k| {
            let t = k as f64 * step;
            interpolate_at(z1, z2, t)
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArithOp {
    Add,
    Sub,
    Hadamard,
}

impl ArithOp {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "add" => Ok(ArithOp::Add),
            "sub" => Ok(ArithOp::Sub),
            "hadamard" => Ok(ArithOp::Hadamard),
            _ => Err(Error::InvalidArgument(format!("unknown operation {s:?}"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArithOp::Add => "add",
            ArithOp::Sub => "sub",
            ArithOp::Hadamard => "hadamard",
        }
    }
}

pub fn arithmetic(z1: &[f64], z2: &[f64], op: ArithOp) -> Result<Vec<f64>> {
    same_len(z1, z2)?;
    Ok(z1
        .iter()
        .zip(z2)
        .map(|(a, b)| match op {
            ArithOp::Add => a + b,
            ArithOp::Sub => a - b,
            ArithOp::Hadamard => a * b,
        })
        .collect())
}

/// Random single-dimension resamples around a point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighborhood {
    pub samples: usize,
    /// Resampling interval per dimension.
    pub ranges: Vec<(f64, f64)>,
}

impl Neighborhood {
    /// 16 samples; ranges `mean +- 2 std` from dataset statistics.
    pub fn from_stats(stats: &[DimStats]) -> Self {
        Neighborhood {
            samples: 16,
            ranges: stats.iter().map(|s| (s.mean - 2.0 * s.std, s.mean + 2.0 * s.std)).collect(),
        }
    }

    /// Each neighbor is `z` with one uniformly chosen dimension redrawn
    /// uniformly from its range.
    pub fn sample(&self, z: &[f64], rng: &mut impl Rng) -> Vec<Vec<f64>> {
        (0..self.samples)
            .map(|_| {
                let mut v = z.to_vec();
                let d = rng.random_range(0..z.len());
                let (lo, hi) = self.ranges[d];
                v[d] = lo + (hi - lo) * rng.random::<f64>();
                v
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyResult {
    pub ratio: f64,
    pub held: usize,
    pub evaluated: usize,
    /// Pairs whose members the labeler does not assign one common value.
    pub skipped: usize,
    pub per_pair: Vec<Option<bool>>,
}

/// Fraction of pairs whose `op` result keeps the pair's shared value of
/// `factor`: the value must be the strict plurality label over the result's
/// neighborhood. Pairs the labeler does not see as sharing one value are
/// skipped; pair `i` draws its neighborhood from `seed.derive(i)`.
pub fn consistency_ratio(
    pairs: &[(Vec<f64>, Vec<f64>)],
    op: ArithOp,
    labeler: &dyn Labeler,
    factor: &str,
    neighborhood: &Neighborhood,
    seed: Seed,
) -> Result<ConsistencyResult> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("no pairs to evaluate".into()));
    }
    if neighborhood.samples == 0 {
        return Err(Error::InvalidArgument("neighborhood needs at least one sample".into()));
    }
    for (a, b) in pairs {
        same_len(a, b)?;
        if a.len() != neighborhood.ranges.len() {
            return Err(Error::InvalidArgument("pair length differs from neighborhood dim".into()));
        }
    }
    let per_pair: Vec<Option<bool>> = pairs
        .par_iter()
        .enumerate()
        .map(|(i, (a, b))| {
            let va = labeler.label_factor(a, factor)?;
            if labeler.label_factor(b, factor).as_ref() != Some(&va) {
                return None;
            }
            let z = arithmetic(a, b, op).expect("lengths checked");
            let mut rng = seed.derive(i as u64).rng();
            let mut counts: BTreeMap<Option<String>, usize> = BTreeMap::new();
            for n in neighborhood.sample(&z, &mut rng) {
                *counts.entry(labeler.label_factor(&n, factor)).or_default() += 1;
            }
            let own = counts.get(&Some(va.clone())).copied().unwrap_or(0);
            Some(counts.iter().all(|(k, &c)| k.as_ref() == Some(&va) || c < own))
        })
        .collect();
    let evaluated = per_pair.iter().flatten().count();
    let held = per_pair.iter().flatten().filter(|&&h| h).count();
    if evaluated == 0 {
        return Err(Error::Data("no pair shares a value under the labeler".into()));
    }
    Ok(ConsistencyResult {
        ratio: held as f64 / evaluated as f64,
        held,
        evaluated,
        skipped: pairs.len() - evaluated,
        per_pair,
    })
}

fn majority_region(cluster: &[Vec<f64>], classifier: &dyn RegionClassifier) -> usize {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for z in cluster {
        *counts.entry(classifier.region(z)).or_default() += 1;
    }
    let mut best = (0, 0);
    for (r, c) in counts {
        if c > best.1 {
            best = (r, c);
        }
    }
    best.0
}

/// Fraction of random convex combinations `(1 - t) z_i + t z_j`, `i != j`,
/// `t` uniform in (0, 1), that the classifier puts in the cluster's majority
/// region.
pub fn convex_combination_test(
    cluster: &[Vec<f64>],
    classifier: &dyn RegionClassifier,
    trials: usize,
    seed: Seed,
) -> Result<f64> {
    if trials == 0 {
        return Err(Error::InvalidArgument("trials must be >= 1".into()));
    }
    if cluster.len() < 2 {
        return Err(Error::InvalidArgument("cluster needs at least 2 vectors".into()));
    }
    let target = majority_region(cluster, classifier);
    let mut rng = seed.rng();
    let mut hits = 0usize;
    for _ in 0..trials {
        let i = rng.random_range(0..cluster.len());
        let j = (i + rng.random_range(1..cluster.len())) % cluster.len();
        let t = loop {
            let t: f64 = rng.random();
            if t > 0.0 {
                break t;
            }
        };
        let z = interpolate_at(&cluster[i], &cluster[j], t);
        hits += usize::from(classifier.region(&z) == target);
    }
    Ok(hits as f64 / trials as f64)
}

/// `(1 - t) a + t b`; components where `a` and `b` agree are copied so a
/// degenerate path is exact.
pub fn interpolate_at(a: &[f64], b: &[f64], t: f64) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| if x == y { x } else { x * (1.0 - t) + y * t })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterSize {
    pub max_cos_dist: f64,
    pub min_cos_dist: f64,
}

pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (1.0 - dot / (na * nb)).clamp(0.0, 2.0)
}

fn check_cluster(cluster: &[Vec<f64>]) -> Result<()> {
    if cluster.len() < 2 {
        return Err(Error::InvalidArgument("cluster needs at least 2 vectors".into()));
    }
    if cluster.iter().any(|z| z.iter().all(|&x| x == 0.0)) {
        return Err(Error::Data("cluster contains a zero vector".into()));
    }
    Ok(())
}

/// Max and min cosine distance over `pair_samples` random distinct pairs.
pub fn cluster_size(cluster: &[Vec<f64>], pair_samples: usize, seed: Seed) -> Result<ClusterSize> {
    check_cluster(cluster)?;
    if pair_samples == 0 {
        return Err(Error::InvalidArgument("pair_samples must be >= 1".into()));
    }
    let mut rng = seed.rng();
    let mut out = ClusterSize {
        max_cos_dist: f64::NEG_INFINITY,
        min_cos_dist: f64::INFINITY,
    };
    for _ in 0..pair_samples {
        let i = rng.random_range(0..cluster.len());
        let j = (i + rng.random_range(1..cluster.len())) % cluster.len();
        let d = cosine_distance(&cluster[i], &cluster[j]);
        out.max_cos_dist = out.max_cos_dist.max(d);
        out.min_cos_dist = out.min_cos_dist.min(d);
    }
    Ok(out)
}

/// Max and min cosine distance over all distinct pairs.
pub fn cluster_size_exhaustive(cluster: &[Vec<f64>]) -> Result<ClusterSize> {
    check_cluster(cluster)?;
    let mut out = ClusterSize {
        max_cos_dist: f64::NEG_INFINITY,
        min_cos_dist: f64::INFINITY,
    };
    for i in 0..cluster.len() {
        for j in i + 1..cluster.len() {
            let d = cosine_distance(&cluster[i], &cluster[j]);
            out.max_cos_dist = out.max_cos_dist.max(d);
            out.min_cos_dist = out.min_cos_dist.min(d);
        }
    }
    Ok(out)
}

/// 1 where `factor` equals `positive`, 0 where it is annotated with another
/// value, `None` where unannotated. Count annotations are positive when
/// non-zero.
pub fn binary_labels(ds: &LatentDataset, schema: &FactorSchema, factor: &str, positive: &str) -> Result<Vec<Option<usize>>> {
    let f = schema
        .factor(factor)
        .ok_or_else(|| Error::Schema(format!("unknown factor {factor}")))?;
    if f.value_index(positive).is_none() {
        return Err(Error::Schema(format!("{positive:?} is not a value of {factor}")));
    }
    Ok(ds
        .samples()
        .iter()
        .map(|s| {
            s.labels.get(factor).map(|l| match l {
                Label::Value(v) => usize::from(v == positive),
                Label::Count(n) => usize::from(*n > 0),
            })
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProxyMetrics {
    /// Held-out accuracy of a decision tree.
    pub separation: f64,
    /// Held-out macro recall of the same tree.
    pub density: f64,
}

/// Tree separability of a binary labelling. Unlabelled samples are ignored.
pub fn proxy_metrics(ds: &LatentDataset, labels: &[Option<usize>], test_fraction: f64, seed: Seed) -> Result<ProxyMetrics> {
    if labels.len() != ds.len() {
        return Err(Error::InvalidArgument("one label per sample required".into()));
    }
    let keep: Vec<usize> = (0..ds.len()).filter(|&i| labels[i].is_some()).collect();
    let y_all: Vec<usize> = keep.iter().map(|&i| labels[i].expect("filtered")).collect();
    if y_all.iter().any(|&c| c > 1) {
        return Err(Error::InvalidArgument("proxy metrics take binary labels".into()));
    }
    for c in 0..2 {
        let n = y_all.iter().filter(|&&y| y == c).count();
        if n < 2 {
            return Err(Error::DegenerateLabels(format!("class {c} has {n} samples, need 2")));
        }
    }
    let sub = ds.select(&keep);
    let by_id: BTreeMap<u64, usize> = sub.ids().into_iter().zip(y_all).collect();
    let (train, test) = train_test_split(&sub, test_fraction, seed.derive(SPLIT_STREAM))?;
    let ytr: Vec<usize> = train.ids().iter().map(|id| by_id[id]).collect();
    let yte: Vec<usize> = test.ids().iter().map(|id| by_id[id]).collect();
    let tree = DecisionTree::fit(&train.vectors(), &ytr, &TreeParams::default(), seed.derive(1))?;
    let pred: Vec<usize> = test.vectors().iter().map(|z| tree.predict(z)).collect();
    let s = score(&pred, &yte)?;
    Ok(ProxyMetrics {
        separation: s.accuracy,
        density: s.macro_recall,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub mean: Vec<f64>,
    /// Principal directions, one per row, by decreasing variance.
    pub components: Vec<Vec<f64>>,
    pub explained_ratio: Vec<f64>,
    pub points: Vec<Vec<f64>>,
}

/// Top-`k` principal components of the population covariance. Each
/// component's largest-magnitude loading is made positive.
pub fn pca_project(vectors: &[Vec<f64>], k: usize) -> Result<Projection> {
    let n = vectors.len();
    let dim = vectors.first().map_or(0, Vec::len);
    if k == 0 || k > dim {
        return Err(Error::InvalidArgument(format!("k must lie in 1..={dim}, got {k}")));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} samples cannot give {k} components")));
    }
    let mut mean = vec![0.0; dim];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, dim, |i, j| vectors[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / n as f64;
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();
    let mut components = Vec::with_capacity(k);
    let mut explained_ratio = Vec::with_capacity(k);
    for &c in order.iter().take(k) {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = v
            .iter()
            .enumerate()
            .fold(0, |best, (i, x)| if x.abs() > v[best].abs() { i } else { best });
        if v[lead] < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        explained_ratio.push(if total > 0.0 {
            eig.eigenvalues[c].max(0.0) / total
        } else {
            0.0
        });
    }
    let points = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|c| c.iter().enumerate().map(|(j, w)| w * centered[(i, j)]).sum())
                .collect()
        })
        .collect();
    Ok(Projection {
        mean,
        components,
        explained_ratio,
        points,
    })
}

pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
];

/// 800x600 scatter of 2-D points colored by cluster index, with a legend.
pub fn render_scatter_svg(points: &[Vec<f64>], clusters: &[usize], names: &[String]) -> Result<String> {
    if points.len() != clusters.len() || points.iter().any(|p| p.len() < 2) {
        return Err(Error::InvalidArgument("one 2-D point and cluster per sample required".into()));
    }
    let (w, h, m) = (800.0, 600.0, 40.0);
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = |a: f64, b: f64| if b > a { b - a } else { 1.0 };
    let (sx, sy) = ((w - 2.0 * m - 160.0) / span(x0, x1), (h - 2.0 * m) / span(y0, y1));
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 800 600" width="800" height="600">"#
    );
    let _ = writeln!(s, r#"<rect x="0" y="0" width="800" height="600" fill="white"/>"#);
    for (p, &c) in points.iter().zip(clusters) {
        let cx = m + (p[0] - x0) * sx;
        let cy = h - m - (p[1] - y0) * sy;
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.3}" cy="{cy:.3}" r="3" fill="{}" fill-opacity="0.8"/>"#,
            PALETTE[c % PALETTE.len()]
        );
    }
    let mut seen: Vec<usize> = clusters.to_vec();
    seen.sort_unstable();
    seen.dedup();
    for (row, c) in seen.iter().enumerate() {
        let y = m + 20.0 * row as f64;
        let name = names.get(*c).map_or_else(|| format!("cluster {c}"), |n| xml_escape(n));
        let _ = writeln!(
            s,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/>"#,
            w - m - 150.0,
            y - 9.0,
            PALETTE[c % PALETTE.len()]
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{y:.1}" font-family="sans-serif" font-size="12">{name}</text>"#,
            w - m - 135.0
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// `id,pc1,pc2,cluster` rows.
pub fn render_projection_csv(ids: &[u64], points: &[Vec<f64>], clusters: &[String]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["id", "pc1", "pc2", "cluster"]).expect("in-memory write");
    for ((id, p), c) in ids.iter().zip(points).zip(clusters) {
        w.write_record([id.to_string(), format!("{:?}", p[0]), format!("{:?}", p[1]), c.clone()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
