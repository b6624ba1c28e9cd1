//! Synthetic factor-annotated latents with known geometry.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{FactorSchema, Label, LatentDataset, Sample, Seed};
use crate::error::{Error, Result};
use crate::geometry::Labeler;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Layout {
    /// Factor `f` lives on dimension `f`; other dimensions are N(0, 1).
    Disentangled,
    /// The disentangled code times a seeded random rotation.
    Rotated,
    /// Factor `f` is written to `copies` adjacent dimensions, each with its
    /// own noise.
    Duplicated { copies: usize },
    /// Disentangled vectors with labels permuted across samples.
    ShuffledLabels,
    /// Disentangled value placement, but every dimension (including unused
    /// ones) carries `noise_std` noise: tight, axis-separated blobs.
    Clusters,
    /// Every (factor, value) pair owns one dimension; a sample carries `gap`
    /// on the dimension of each of its values and noise everywhere. Sums of
    /// same-value vectors stay in the value's cone, differences do not.
    Cones,
}

#[derive(Clone, Debug)]
pub struct SynthSpec {
    pub schema: FactorSchema,
    pub dim: usize,
    pub samples: usize,
    pub noise_std: f64,
    pub layout: Layout,
    pub seed: Seed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub layout: Layout,
    pub gap: f64,
    pub noise_std: f64,
    /// Dimensions carrying each factor, in schema order. For `Cones` the
    /// dimensions are listed in value order.
    pub factor_dims: BTreeMap<String, Vec<usize>>,
    /// Row-major rotation applied as `z_rot = z Q` (rotated layout only).
    pub rotation: Option<Vec<Vec<f64>>>,
    pub seed: u64,
}

/// Spacing between adjacent values on a factor's dimension: 6 noise standard
/// deviations, or 1 when the data is noise-free.
pub fn value_gap(noise_std: f64) -> f64 {
    if noise_std > 0.0 {
        6.0 * noise_std
    } else {
        1.0
    }
}

impl SynthSpec {
    fn validate(&self) -> Result<()> {
        let k = self.schema.len();
        if k == 0 {
            return Err(Error::InvalidArgument("synthetic schema needs a factor".into()));
        }
        if self.samples == 0 || self.dim == 0 {
            return Err(Error::InvalidArgument("samples and dim must be positive".into()));
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::InvalidArgument("noise_std must be finite and >= 0".into()));
        }
        let needed = match self.layout {
            Layout::Disentangled | Layout::Rotated | Layout::ShuffledLabels | Layout::Clusters => k,
            Layout::Duplicated { copies } => {
                if copies == 0 {
                    return Err(Error::InvalidArgument("copies must be >= 1".into()));
                }
                k * copies
            }
            Layout::Cones => self.schema.factors().iter().map(|f| f.values.len()).sum(),
        };
        if self.dim < needed {
            return Err(Error::InvalidArgument(format!(
                "layout needs dim >= {needed}, got {}",
                self.dim
            )));
        }
        Ok(())
    }

    fn factor_dims(&self) -> BTreeMap<String, Vec<usize>> {
        let mut next = 0;
        self.schema
            .factors()
            .iter()
            .enumerate()
            .map(|(f, fac)| {
                let dims: Vec<usize> = match self.layout {
                    Layout::Duplicated { copies } => (f * copies..(f + 1) * copies).collect(),
                    Layout::Cones => {
                        let d = (next..next + fac.values.len()).collect();
                        next += fac.values.len();
                        d
                    }
                    _ => vec![f],
                };
                (fac.name.clone(), dims)
            })
            .collect()
    }
}

pub fn generate(spec: &SynthSpec) -> Result<(FactorSchema, LatentDataset, GroundTruth)> {
    spec.validate()?;
    let gap = value_gap(spec.noise_std);
    let dims = spec.factor_dims();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut rng = spec.seed.derive(0).rng();
    let factors = spec.schema.factors();

    let mut samples = Vec::with_capacity(spec.samples);
    for i in 0..spec.samples {
        let values: Vec<usize> = factors.iter().map(|f| rng.random_range(0..f.values.len())).collect();
        let mut z = vec![0.0; spec.dim];
        let mut used = vec![false; spec.dim];
        for (f, fac) in factors.iter().enumerate() {
            for (j, &d) in dims[&fac.name].iter().enumerate() {
                used[d] = true;
                z[d] = match spec.layout {
                    Layout::Cones => {
                        if j == values[f] {
                            gap
                        } else {
                            0.0
                        }
                    }
                    _ => values[f] as f64 * gap,
                };
            }
        }
        for (d, x) in z.iter_mut().enumerate() {
            *x += if used[d] || matches!(spec.layout, Layout::Cones | Layout::Clusters) {
                noise.sample(&mut rng)
            } else {
                StandardNormal.sample(&mut rng)
            };
        }
        let mut s = Sample::new(i as u64, z);
        for (f, fac) in factors.iter().enumerate() {
            s.labels.insert(fac.name.clone(), Label::Value(fac.values[values[f]].clone()));
        }
        samples.push(s);
    }

    let mut rotation = None;
    if spec.layout == Layout::Rotated {
        let q = random_orthogonal(spec.dim, spec.seed.derive(1))?;
        for s in &mut samples {
            s.vector = (0..spec.dim)
                .map(|j| s.vector.iter().zip(&q).map(|(x, row)| x * row[j]).sum())
                .collect();
        }
        rotation = Some(q);
    }
    if spec.layout == Layout::ShuffledLabels {
        let mut labels: Vec<_> = samples.iter().map(|s| s.labels.clone()).collect();
        labels.shuffle(&mut spec.seed.derive(2).rng());
        for (s, l) in samples.iter_mut().zip(labels) {
            s.labels = l;
        }
    }

    let ds = LatentDataset::new(&spec.schema, spec.dim, samples)?;
    let truth = GroundTruth {
        layout: spec.layout.clone(),
        gap,
        noise_std: spec.noise_std,
        factor_dims: dims,
        rotation,
        seed: spec.seed.0,
    };
    Ok((spec.schema.clone(), ds, truth))
}

/// Haar-style random rotation: QR of a Gaussian matrix with the signs of R's
/// diagonal folded into Q, then one column negated if needed so det = +1.
/// Row-major.
pub fn random_orthogonal(dim: usize, seed: Seed) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be >= 1".into()));
    }
    let mut rng = seed.rng();
    let g = DMatrix::<f64>::from_fn(dim, dim, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    if q.determinant() < 0.0 {
        q.column_mut(0).neg_mut();
    }
    Ok((0..dim).map(|i| (0..dim).map(|j| q[(i, j)]).collect()).collect())
}

/// Nearest value-centroid per factor (Euclidean; lowest value index on ties).
/// Factors never annotated with a categorical value are left out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CentroidLabeler {
    /// factor -> per-value centroids, in schema value order
    pub centroids: Vec<(String, Vec<String>, Vec<Vec<f64>>)>,
}

pub fn centroid_labeler(ds: &LatentDataset, schema: &FactorSchema) -> Result<CentroidLabeler> {
    let mut centroids = Vec::new();
    for f in schema.factors() {
        let mut sums = vec![vec![0.0; ds.dim()]; f.values.len()];
        let mut counts = vec![0usize; f.values.len()];
        for s in ds.samples() {
            if let Some(Label::Value(v)) = s.labels.get(&f.name) {
                let k = f.value_index(v).expect("validated label");
                counts[k] += 1;
                sums[k].iter_mut().zip(&s.vector).for_each(|(a, x)| *a += x);
            }
        }
        if counts.iter().all(|&c| c == 0) {
            // count-only factors have no value centroids
            continue;
        }
        if let Some(k) = counts.iter().position(|&c| c == 0) {
            return Err(Error::Data(format!(
                "value {} of factor {} has no samples",
                f.values[k], f.name
            )));
        }
        for (s, c) in sums.iter_mut().zip(&counts) {
            s.iter_mut().for_each(|x| *x /= *c as f64);
        }
        centroids.push((f.name.clone(), f.values.clone(), sums));
    }
    Ok(CentroidLabeler { centroids })
}

impl CentroidLabeler {
    /// Index of the nearest centroid of `factor`.
    pub fn nearest(&self, z: &[f64], factor: &str) -> Option<usize> {
        let (_, _, cs) = self.centroids.iter().find(|c| c.0 == factor)?;
        let mut best: Option<(usize, f64)> = None;
        for (k, c) in cs.iter().enumerate() {
            let d: f64 = c.iter().zip(z).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.is_none_or(|(_, b)| d < b) {
                best = Some((k, d));
            }
        }
        best.map(|b| b.0)
    }
}

impl Labeler for CentroidLabeler {
    fn factors(&self) -> Vec<String> {
        self.centroids.iter().map(|c| c.0.clone()).collect()
    }

    fn label_factor(&self, z: &[f64], factor: &str) -> Option<String> {
        let k = self.nearest(z, factor)?;
        let (_, values, _) = self.centroids.iter().find(|c| c.0 == factor)?;
        Some(values[k].clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::Factor;

    fn schema(k: usize, v: usize) -> FactorSchema {
        FactorSchema::new(
            (0..k)
                .map(|f| Factor::new(format!("F{f}"), (0..v).map(|i| format!("v{i}"))))
                .collect(),
        )
        .unwrap()
    }

    fn spec(layout: Layout, noise: f64) -> SynthSpec {
        SynthSpec {
            schema: schema(2, 3),
            dim: 8,
            samples: 300,
            noise_std: noise,
            layout,
            seed: Seed(5),
        }
    }

    #[test]
    fn orthogonal_dim_one() {
        assert_eq!(random_orthogonal(1, Seed(3)).unwrap(), vec![vec![1.0]]);
    }

    #[test]
    fn orthogonality_and_determinant() {
        for seed in 0..5 {
            let q = random_orthogonal(7, Seed(seed)).unwrap();
            let m = DMatrix::from_fn(7, 7, |i, j| q[i][j]);
            let dev = (m.transpose() * &m - DMatrix::<f64>::identity(7, 7)).amax();
            assert!(dev <= 1e-10, "{dev}");
            assert!((m.determinant() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn rotation_preserves_distances() {
        let (_, a, _) = generate(&spec(Layout::Disentangled, 0.1)).unwrap();
        let (_, b, truth) = generate(&spec(Layout::Rotated, 0.1)).unwrap();
        assert!(truth.rotation.is_some());
        let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        for i in (0..a.len()).step_by(17) {
            for j in (0..a.len()).step_by(23) {
                let (sa, sb) = (a.samples(), b.samples());
                let d0 = dist(&sa[i].vector, &sa[j].vector);
                let d1 = dist(&sb[i].vector, &sb[j].vector);
                assert!((d0 - d1).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn bit_deterministic() {
        for layout in [Layout::Disentangled, Layout::Rotated, Layout::ShuffledLabels, Layout::Cones, Layout::Clusters] {
            let (_, a, _) = generate(&spec(layout.clone(), 0.1)).unwrap();
            let (_, b, _) = generate(&spec(layout, 0.1)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn disentangled_values_sit_on_the_grid() {
        let (schema, ds, truth) = generate(&spec(Layout::Disentangled, 0.0)).unwrap();
        assert_eq!(truth.gap, 1.0);
        for s in ds.samples() {
            for (f, fac) in schema.factors().iter().enumerate() {
                let Label::Value(v) = &s.labels[&fac.name] else { panic!() };
                assert_eq!(s.vector[f], fac.value_index(v).unwrap() as f64);
            }
        }
    }

    #[test]
    fn layout_dimension_requirements() {
        let mut s = spec(Layout::Cones, 0.1);
        s.dim = 5;
        assert!(generate(&s).is_err());
        let mut s = spec(Layout::Duplicated { copies: 4 }, 0.1);
        s.dim = 7;
        assert!(generate(&s).is_err());
        s.dim = 8;
        let (_, _, t) = generate(&s).unwrap();
        assert_eq!(t.factor_dims["F1"], vec![4, 5, 6, 7]);
    }

    #[test]
    fn centroid_labeler_accuracy_and_ties() {
        // unit-variance filler dimensions would dominate Euclidean distances,
        // so the oracle uses one dimension per factor
        let mut sp = spec(Layout::Disentangled, 0.1);
        sp.dim = 2;
        sp.samples = 2000;
        let (schema, ds, _) = generate(&sp).unwrap();
        let lab = centroid_labeler(&ds, &schema).unwrap();
        let mut hits = 0;
        let mut total = 0;
        for s in ds.samples() {
            for f in schema.names() {
                let Label::Value(v) = &s.labels[f] else { panic!() };
                hits += usize::from(lab.label_factor(&s.vector, f).as_ref() == Some(v));
                total += 1;
            }
        }
        assert!(hits as f64 / total as f64 >= 0.99);

        let tie = CentroidLabeler {
            centroids: vec![("F".into(), vec!["a".into(), "b".into()], vec![vec![-1.0], vec![1.0]])],
        };
        assert_eq!(tie.label_factor(&[0.0], "F").unwrap(), "a");
        assert_eq!(tie.label_factor(&[1.0], "F").unwrap(), "b");
    }

    #[test]
    fn centroid_labeler_needs_every_value() {
        let mut s = spec(Layout::Disentangled, 0.1);
        s.samples = 1;
        let (schema, ds, _) = generate(&s).unwrap();
        assert!(centroid_labeler(&ds, &schema).is_err());
    }
}
