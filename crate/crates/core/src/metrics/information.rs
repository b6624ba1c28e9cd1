//! Histogram entropy and mutual information on a fixed equal-width grid,
//! plus the two MI-derived scores (MIG and modularity). All logs are base 2.

use serde::{Deserialize, Serialize};

use crate::dataset::{FactorSchema, LatentDataset};
use crate::error::{Error, Result};

pub const DEFAULT_BINS: usize = 20;

/// Equal-width bins spanning `[min, max]` of one dimension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimBins {
    pub min: f64,
    pub max: f64,
    pub bins: usize,
}

impl DimBins {
    pub fn new(min: f64, max: f64, bins: usize) -> Result<Self> {
        if bins == 0 || !min.is_finite() || !max.is_finite() || max < min {
            return Err(Error::InvalidArgument(format!(
                "bad bin range [{min}, {max}] with {bins} bins"
            )));
        }
        Ok(DimBins { min, max, bins })
    }

    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    /// `bins + 1` strictly increasing edges; empty for a constant dimension.
    pub fn edges(&self) -> Vec<f64> {
        if self.is_constant() {
            return Vec::new();
        }
        let w = (self.max - self.min) / self.bins as f64;
        (0..=self.bins)
            .map(|i| if i == self.bins { self.max } else { self.min + w * i as f64 })
            .collect()
    }

    /// Bin index; values outside the range clamp to the end bins.
    pub fn bin_of(&self, x: f64) -> usize {
        if self.is_constant() {
            return 0;
        }
        let t = (x - self.min) / (self.max - self.min) * self.bins as f64;
        if t <= 0.0 || t.is_nan() {
            0
        } else {
            (t.floor() as usize).min(self.bins - 1)
        }
    }
}

/// Per-dimension grid built from the full dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BinGrid {
    pub dims: Vec<DimBins>,
}

impl BinGrid {
    pub fn from_dataset(ds: &LatentDataset, bins: usize) -> Result<Self> {
        let dims = ds
            .dim_stats()
            .iter()
            .map(|s| DimBins::new(s.min, s.max, bins))
            .collect::<Result<_>>()?;
        Ok(BinGrid { dims })
    }
}

/// Shannon entropy (bits) of a histogram.
pub fn histogram_entropy(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Plug-in entropy (bits) of `values` binned on `bins`.
pub fn entropy_binned(values: &[f64], bins: &DimBins) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Data("entropy of an empty sample".into()));
    }
    if bins.is_constant() {
        return Ok(0.0);
    }
    let mut counts = vec![0usize; bins.bins];
    for &v in values {
        counts[bins.bin_of(v)] += 1;
    }
    Ok(histogram_entropy(&counts))
}

/// `mi[dim][factor]` in bits, for the factors that have at least two
/// populated values.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiMatrix {
    pub factors: Vec<String>,
    pub mi: Vec<Vec<f64>>,
    /// `H(z_d)` over the full dataset.
    pub dim_entropy: Vec<f64>,
    /// `H(v_k)` of each retained factor's value distribution.
    pub factor_entropy: Vec<f64>,
    /// Factors left out, with the reason.
    pub skipped: Vec<String>,
}

impl MiMatrix {
    pub fn dim(&self) -> usize {
        self.mi.len()
    }
}

/// `MI(z_d, v_k) = H(z_d) - sum_c P(v_k = c) H(z_d | v_k = c)`, every entropy
/// on the same global grid; clamped below at zero.
pub fn mutual_information_matrix(ds: &LatentDataset, schema: &FactorSchema, bins: usize) -> Result<MiMatrix> {
    let grid = BinGrid::from_dataset(ds, bins)?;
    let dim = ds.dim();
    let binned: Vec<Vec<usize>> = ds
        .samples()
        .iter()
        .map(|s| s.vector.iter().zip(&grid.dims).map(|(&v, b)| b.bin_of(v)).collect())
        .collect();
    let dim_entropy: Vec<f64> = (0..dim)
        .map(|d| {
            let mut c = vec![0usize; bins];
            binned.iter().for_each(|r| c[r[d]] += 1);
            if grid.dims[d].is_constant() {
                0.0
            } else {
                histogram_entropy(&c)
            }
        })
        .collect();

    let mut factors = Vec::new();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut factor_entropy = Vec::new();
    let mut skipped = Vec::new();
    for f in schema.factors() {
        let labels = ds.class_labels(schema, &f.name)?;
        let n_classes = labels.iter().flatten().max().map_or(0, |m| m + 1);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, l) in labels.iter().enumerate() {
            if let Some(c) = l {
                groups[*c].push(i);
            }
        }
        groups.retain(|g| !g.is_empty());
        if groups.len() < 2 {
            skipped.push(format!(
                "factor {} has {} populated value(s); MI needs at least 2",
                f.name,
                groups.len()
            ));
            continue;
        }
        let total: usize = groups.iter().map(Vec::len).sum();
        let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
        factor_entropy.push(histogram_entropy(&sizes));
        let column = (0..dim)
            .map(|d| {
                if grid.dims[d].is_constant() {
                    return 0.0;
                }
                let cond: f64 = groups
                    .iter()
                    .map(|g| {
                        let mut c = vec![0usize; bins];
                        g.iter().for_each(|&i| c[binned[i][d]] += 1);
                        g.len() as f64 / total as f64 * histogram_entropy(&c)
                    })
                    .sum();
                (dim_entropy[d] - cond).max(0.0)
            })
            .collect();
        factors.push(f.name.clone());
        columns.push(column);
    }
    let mi = (0..dim)
        .map(|d| columns.iter().map(|c| c[d]).collect())
        .collect();
    Ok(MiMatrix {
        factors,
        mi,
        dim_entropy,
        factor_entropy,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MigResult {
    pub mig: f64,
    /// `(factor, gap)` in factor order.
    pub gaps: Vec<(String, f64)>,
    pub normalized: bool,
}

/// Mean over factors of the gap between the two largest MI values across
/// dimensions. Unnormalized unless `normalized`, which divides each gap by
/// the factor's entropy.
pub fn mig(mi: &MiMatrix, normalized: bool) -> Result<MigResult> {
    if mi.dim() < 2 {
        return Err(Error::Data("MIG needs at least 2 latent dimensions".into()));
    }
    if mi.factors.is_empty() {
        return Err(Error::Data("no factor qualifies for MIG".into()));
    }
    let gaps: Vec<(String, f64)> = mi
        .factors
        .iter()
        .enumerate()
        .map(|(k, name)| {
            let mut col: Vec<f64> = mi.mi.iter().map(|row| row[k]).collect();
            col.sort_by(|a, b| b.total_cmp(a));
            let mut gap = col[0] - col[1];
            if normalized {
                let h = mi.factor_entropy[k];
                gap = if h > 0.0 { gap / h } else { 0.0 };
            }
            (name.clone(), gap)
        })
        .collect();
    let mig = gaps.iter().map(|g| g.1).sum::<f64>() / gaps.len() as f64;
    Ok(MigResult {
        mig,
        gaps,
        normalized,
    })
}

/// Per-dimension `1 - variance` of the MI values left after dropping the
/// largest one, and their mean.
///
/// With `normalize`, each dimension's MI values are first divided by that
/// dimension's maximum (a dimension with zero MI everywhere scores 1).
pub fn modularity_from_mi(mi: &[Vec<f64>], normalize: bool) -> (f64, Vec<f64>) {
    let per_dim: Vec<f64> = mi
        .iter()
        .map(|row| {
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = if normalize {
                if max > 0.0 {
                    max
                } else {
                    return 1.0;
                }
            } else {
                1.0
            };
            let drop = row.iter().position(|&v| v == max).unwrap_or(0);
            let rest: Vec<f64> = row
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, &v)| v / scale)
                .collect();
            if rest.is_empty() {
                return 1.0;
            }
            let mean = rest.iter().sum::<f64>() / rest.len() as f64;
            let var = rest.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / rest.len() as f64;
            1.0 - var
        })
        .collect();
    let mean = per_dim.iter().sum::<f64>() / per_dim.len().max(1) as f64;
    (mean, per_dim)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModularityResult {
    /// Score on max-normalized MI values.
    pub normalized: f64,
    /// Score on raw MI values.
    pub raw: f64,
    pub per_dim_normalized: Vec<f64>,
    pub per_dim_raw: Vec<f64>,
}

pub fn modularity(mi: &MiMatrix) -> Result<ModularityResult> {
    if mi.factors.len() < 2 {
        return Err(Error::Data(format!(
            "modularity needs at least 2 factors, got {}",
            mi.factors.len()
        )));
    }
    let (normalized, per_dim_normalized) = modularity_from_mi(&mi.mi, true);
    let (raw, per_dim_raw) = modularity_from_mi(&mi.mi, false);
    Ok(ModularityResult {
        normalized,
        raw,
        per_dim_normalized,
        per_dim_raw,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{Factor, Label, Sample, Seed};
    use rand::Rng;

    fn bins01() -> DimBins {
        DimBins::new(0.0, 1.0, 20).unwrap()
    }

    #[test]
    fn single_bin_has_zero_entropy() {
        assert_eq!(entropy_binned(&[0.01, 0.02, 0.03], &bins01()).unwrap(), 0.0);
    }

    #[test]
    fn fair_coin_is_one_bit() {
        let h = entropy_binned(&[0.01, 0.02, 0.97, 0.99], &bins01()).unwrap();
        assert!((h - 1.0).abs() < 1e-15);
    }

    #[test]
    fn uniform_fill_approaches_log2_bins() {
        let mut rng = Seed(5).rng();
        let v: Vec<f64> = (0..1000).map(|_| rng.random::<f64>()).collect();
        let h = entropy_binned(&v, &bins01()).unwrap();
        assert!((h - 20f64.log2()).abs() < 0.15, "{h}");
    }

    #[test]
    fn constant_dim_and_clamping() {
        let c = DimBins::new(2.0, 2.0, 20).unwrap();
        assert!(c.is_constant());
        assert!(c.edges().is_empty());
        assert_eq!(entropy_binned(&[2.0, 2.0], &c).unwrap(), 0.0);
        let b = bins01();
        assert_eq!(b.bin_of(-5.0), 0);
        assert_eq!(b.bin_of(1.0), 19);
        assert_eq!(b.bin_of(7.0), 19);
        assert_eq!(b.edges().len(), 21);
        assert!(b.edges().windows(2).all(|w| w[0] < w[1]));
        assert!(entropy_binned(&[], &b).is_err());
    }

    fn dataset(rows: Vec<(Vec<f64>, usize)>) -> (FactorSchema, LatentDataset) {
        let schema = FactorSchema::new(vec![Factor::new("V", ["a", "b"])]).unwrap();
        let dim = rows[0].0.len();
        let samples = rows
            .into_iter()
            .enumerate()
            .map(|(i, (v, c))| {
                Sample::new(i as u64, v).with_label("V", Label::Value(["a", "b"][c].into()))
            })
            .collect();
        let ds = LatentDataset::new(&schema, dim, samples).unwrap();
        (schema, ds)
    }

    #[test]
    fn identity_channel_carries_one_bit() {
        let rows = (0..200).map(|i| (vec![(i % 2) as f64], i % 2)).collect();
        let (s, ds) = dataset(rows);
        let m = mutual_information_matrix(&ds, &s, 20).unwrap();
        assert!((m.mi[0][0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn independent_dim_has_near_zero_mi() {
        let mut rng = Seed(11).rng();
        let rows = (0..2000)
            .map(|i| (vec![rng.random::<f64>()], i % 2))
            .collect();
        let (s, ds) = dataset(rows);
        let m = mutual_information_matrix(&ds, &s, 20).unwrap();
        assert!(m.mi[0][0] >= 0.0);
        assert!(m.mi[0][0] < 0.05, "{}", m.mi[0][0]);
    }

    #[test]
    fn modularity_hand_values() {
        // remaining after dropping the max: {1, 1} -> variance 0
        let (s, per) = modularity_from_mi(&[vec![2.0, 1.0, 1.0]], false);
        assert_eq!((s, per[0]), (1.0, 1.0));
        // remaining {0, 1} -> variance 0.25
        let (s, _) = modularity_from_mi(&[vec![3.0, 0.0, 1.0]], false);
        assert_eq!(s, 0.75);
    }

    #[test]
    fn modularity_is_permutation_invariant_over_dims() {
        let mi = vec![vec![0.9, 0.1, 0.3], vec![0.2, 0.2, 0.8], vec![0.0, 0.5, 0.5]];
        let mut rev = mi.clone();
        rev.reverse();
        assert_eq!(modularity_from_mi(&mi, true).0, modularity_from_mi(&rev, true).0);
    }

    #[test]
    fn mig_of_duplicated_dimension_is_zero() {
        let m = MiMatrix {
            factors: vec!["V".into()],
            mi: vec![vec![0.8], vec![0.8], vec![0.1]],
            dim_entropy: vec![1.0; 3],
            factor_entropy: vec![1.0],
            skipped: vec![],
        };
        assert_eq!(mig(&m, false).unwrap().mig, 0.0);
        let single = MiMatrix {
            mi: vec![vec![0.8]],
            ..m
        };
        assert!(mig(&single, false).is_err());
    }
}
