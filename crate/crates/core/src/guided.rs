//! Decision-tree guided traversal: fit a tree on labelled latents, take the
//! shortest root path to a leaf of the target class, and edit the seed
//! vector node by node until it lands in that leaf.
//!
//! The path is enforced: at every node whose test the current vector fails,
//! the tested dimension is set to a value on the required side. Nodes whose
//! test already holds are logged but leave the vector unchanged.

use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::dataset::{DimStats, LatentDataset, Seed};
use crate::error::{Error, Result};
use crate::geometry::Labeler;
use crate::learners::{Branch, DecisionTree, TreeParams, TreePath};

pub const INTERPRETATION: &str = "enforce_target_path";

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditConfig {
    /// Offset from the threshold in units of the dimension's std.
    pub delta: f64,
    /// Minimum offset, used for (near-)constant dimensions.
    pub epsilon: f64,
}

impl Default for EditConfig {
    fn default() -> Self {
        EditConfig {
            delta: 0.5,
            epsilon: 1e-6,
        }
    }
}

/// `threshold -/+ max(delta std, epsilon)` for the yes/no branch, clamped to
/// `[min - std, max + std]` unless clamping would put the value on or across
/// the threshold.
pub fn edit_value_for_branch(threshold: f64, branch: Branch, stats: &DimStats, cfg: &EditConfig) -> Result<f64> {
    if !stats.std.is_finite() || !threshold.is_finite() {
        return Err(Error::Numerical("threshold and std must be finite".into()));
    }
    let offset = (cfg.delta * stats.std).max(cfg.epsilon);
    let raw = match branch {
        Branch::Yes => threshold - offset,
        Branch::No => threshold + offset,
    };
    let clamped = raw.clamp(stats.min - stats.std, stats.max + stats.std);
    let strict = match branch {
        Branch::Yes => clamped < threshold,
        Branch::No => clamped > threshold,
    };
    Ok(if strict { clamped } else { raw })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditStep {
    pub node: usize,
    pub dim: usize,
    pub old: f64,
    pub new: f64,
    pub threshold: f64,
    pub branch: Branch,
    pub edited: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedEdit {
    pub seed: Vec<f64>,
    pub from_class: usize,
    pub to_class: usize,
    pub seed_prediction: usize,
    pub target_leaf: usize,
    pub steps: Vec<EditStep>,
    /// Vector after each step.
    pub intermediates: Vec<Vec<f64>>,
    pub result: Vec<f64>,
    pub final_prediction: usize,
    pub warnings: Vec<String>,
}

impl GuidedEdit {
    /// Re-applies the logged edits to the seed.
    pub fn replay(&self) -> Vec<f64> {
        let mut z = self.seed.clone();
        for s in &self.steps {
            z[s.dim] = s.new;
        }
        z
    }

    pub fn edited_dims(&self) -> Vec<usize> {
        self.steps.iter().filter(|s| s.edited).map(|s| s.dim).collect()
    }

    /// Header object followed by one line per path node.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let header = json!({
            "interpretation": INTERPRETATION,
            "from_class": self.from_class,
            "to_class": self.to_class,
            "seed_prediction": self.seed_prediction,
            "target_leaf": self.target_leaf,
            "path_length": self.steps.len(),
            "final_prediction": self.final_prediction,
            "warnings": self.warnings,
        });
        out.push_str(&header.to_string());
        out.push('\n');
        for s in &self.steps {
            let line = json!({
                "node": s.node,
                "dim": s.dim,
                "old": s.old,
                "new": s.new,
                "threshold": s.threshold,
                "branch": s.branch,
                "edited": s.edited,
            });
            out.push_str(&line.to_string());
            out.push('\n');
        }
        out
    }

    pub fn save_jsonl(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(self.to_jsonl().as_bytes()).map_err(|e| Error::io(path, e))
    }
}

/// A fitted tree plus the per-dimension statistics edits are scaled by.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuidedTraversal {
    pub tree: DecisionTree,
    pub stats: Vec<DimStats>,
    pub edit: EditConfig,
}

impl GuidedTraversal {
    /// Fits on the labelled rows (`None` labels are dropped).
    pub fn fit(ds: &LatentDataset, labels: &[Option<usize>], params: &TreeParams, seed: Seed) -> Result<Self> {
        if labels.len() != ds.len() {
            return Err(Error::InvalidArgument("one label per sample required".into()));
        }
        let keep: Vec<usize> = (0..ds.len()).filter(|&i| labels[i].is_some()).collect();
        if keep.is_empty() {
            return Err(Error::Data("no labelled samples".into()));
        }
        let sub = ds.select(&keep);
        let y: Vec<usize> = keep.iter().map(|&i| labels[i].expect("filtered")).collect();
        let tree = DecisionTree::fit(&sub.vectors(), &y, params, seed)?;
        Ok(GuidedTraversal {
            tree,
            stats: sub.dim_stats(),
            edit: EditConfig::default(),
        })
    }

    fn cell_center_distance(&self, path: &TreePath, z: &[f64]) -> f64 {
        path.cell_bounds(z.len())
            .iter()
            .zip(&self.stats)
            .zip(z)
            .map(|(((lo, hi), s), x)| {
                let a = lo.max(s.min);
                let b = hi.min(s.max);
                let c = if a <= b {
                    0.5 * (a + b)
                } else if lo.is_finite() {
                    *lo
                } else {
                    *hi
                };
                (c - x) * (c - x)
            })
            .sum::<f64>()
    }

    /// Among the shallowest `to_class` leaves, the one whose (observed-range
    /// clamped) cell center is nearest to `z`; leftmost on ties.
    pub fn target_path(&self, z: &[f64], to_class: usize) -> Result<TreePath> {
        let leaves = self.tree.shortest_leaves(to_class);
        if leaves.is_empty() {
            return Err(Error::Data(format!("class {to_class} is not the majority of any leaf")));
        }
        let mut best: Option<(TreePath, f64)> = None;
        for leaf in leaves {
            let path = self.tree.path_to(leaf);
            let d = self.cell_center_distance(&path, z);
            if best.as_ref().is_none_or(|(_, b)| d < *b) {
                best = Some((path, d));
            }
        }
        Ok(best.expect("non-empty").0)
    }

    pub fn traverse(&self, z: &[f64], from_class: usize, to_class: usize) -> Result<GuidedEdit> {
        if z.len() != self.stats.len() {
            return Err(Error::InvalidArgument(format!(
                "seed has {} components, model expects {}",
                z.len(),
                self.stats.len()
            )));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("seed vector is not finite".into()));
        }
        let mut warnings = Vec::new();
        let seed_prediction = self.tree.predict(z);
        if seed_prediction != from_class {
            warnings.push(format!(
                "seed is predicted as class {seed_prediction}, not the source class {from_class}"
            ));
        }
        let path = self.target_path(z, to_class)?;
        let bounds = path.cell_bounds(z.len());
        let mut cur = z.to_vec();
        let mut steps = Vec::with_capacity(path.len());
        let mut intermediates = Vec::with_capacity(path.len());
        for s in &path.steps {
            if !s.threshold.is_finite() {
                return Err(Error::Numerical(format!("node {} has a non-finite threshold", s.node)));
            }
            let old = cur[s.dim];
            let edited = !s.branch.holds(old, s.threshold);
            if edited {
                let (lo, hi) = bounds[s.dim];
                let mut v = edit_value_for_branch(s.threshold, s.branch, &self.stats[s.dim], &self.edit)?;
                if !(v > lo && v <= hi) {
                    v = 0.5 * (lo + hi);
                }
                cur[s.dim] = v;
            }
            steps.push(EditStep {
                node: s.node,
                dim: s.dim,
                old,
                new: cur[s.dim],
                threshold: s.threshold,
                branch: s.branch,
                edited,
            });
            intermediates.push(cur.clone());
        }
        let final_prediction = self.tree.predict(&cur);
        if self.tree.leaf_of(&cur) != path.leaf || final_prediction != to_class {
            return Err(Error::Numerical(format!(
                "edited vector missed target leaf {} (landed in {})",
                path.leaf,
                self.tree.leaf_of(&cur)
            )));
        }
        Ok(GuidedEdit {
            seed: z.to_vec(),
            from_class,
            to_class,
            seed_prediction,
            target_leaf: path.leaf,
            steps,
            intermediates,
            result: cur,
            final_prediction,
            warnings,
        })
    }
}

/// Fits a tree and runs one traversal.
pub fn guided_traverse(
    ds: &LatentDataset,
    labels: &[Option<usize>],
    seed_vector: &[f64],
    from_class: usize,
    to_class: usize,
    params: &TreeParams,
    seed: Seed,
) -> Result<GuidedEdit> {
    GuidedTraversal::fit(ds, labels, params, seed)?.traverse(seed_vector, from_class, to_class)
}

/// What an independent reader must see in an edited vector.
pub struct FlipTarget<'a> {
    pub labeler: &'a dyn Labeler,
    pub factor: String,
    pub value: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlipResult {
    pub ratio: f64,
    pub runs: usize,
    /// Runs whose result the labeler reads as the target value.
    pub flipped: usize,
    /// Runs that returned an error (counted as not flipped).
    pub failures: usize,
    /// Successful runs whose result the tree predicts as the target class.
    pub postcondition_held: usize,
    pub edits: Vec<Option<GuidedEdit>>,
}

/// Traverses every seed in parallel; ratio = flipped / runs.
pub fn flip_ratio(
    traversal: &GuidedTraversal,
    seeds: &[Vec<f64>],
    from_class: usize,
    to_class: usize,
    target: &FlipTarget<'_>,
) -> Result<FlipResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("no seed vectors".into()));
    }
    let edits: Vec<Option<GuidedEdit>> = seeds
        .par_iter()
        .map(|z| traversal.traverse(z, from_class, to_class).ok())
        .collect();
    let flipped = edits
        .iter()
        .flatten()
        .filter(|e| target.labeler.label_factor(&e.result, &target.factor).as_deref() == Some(&target.value))
        .count();
    let postcondition_held = edits
        .iter()
        .flatten()
        .filter(|e| traversal.tree.predict(&e.result) == to_class)
        .count();
    Ok(FlipResult {
        ratio: flipped as f64 / seeds.len() as f64,
        runs: seeds.len(),
        flipped,
        failures: edits.iter().filter(|e| e.is_none()).count(),
        postcondition_held,
        edits,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{FactorSchema, Sample};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn stats(min: f64, max: f64, std: f64) -> DimStats {
        DimStats {
            min,
            max,
            mean: 0.5 * (min + max),
            std,
        }
    }

    #[test]
    fn edit_value_examples() {
        let cfg = EditConfig::default();
        assert_eq!(edit_value_for_branch(0.0, Branch::Yes, &stats(-3.0, 3.0, 1.0), &cfg).unwrap(), -0.5);
        assert_eq!(edit_value_for_branch(0.0, Branch::No, &stats(-3.0, 3.0, 1.0), &cfg).unwrap(), 0.5);
        assert_eq!(edit_value_for_branch(0.0, Branch::Yes, &stats(0.0, 0.0, 0.0), &cfg).unwrap(), -1e-6);
        // clamped to max + std
        assert_eq!(edit_value_for_branch(5.0, Branch::No, &stats(0.0, 1.0, 2.0), &cfg).unwrap(), 6.0);
        assert!(edit_value_for_branch(0.0, Branch::No, &stats(0.0, 1.0, f64::NAN), &cfg).is_err());
    }

    proptest! {
        #[test]
        fn edit_value_satisfies_branch(t in -5f64..5.0, lo in -5f64..0.0, w in 0f64..6.0, std in 0f64..3.0, yes in proptest::bool::ANY) {
            let b = if yes { Branch::Yes } else { Branch::No };
            let v = edit_value_for_branch(t, b, &stats(lo, lo + w, std), &EditConfig::default()).unwrap();
            prop_assert!(b.holds(v, t));
        }
    }

    fn two_blobs(n: usize, dim: usize, seed: u64) -> (LatentDataset, Vec<Option<usize>>) {
        use rand_distr::{Distribution, Normal};
        let mut rng = Seed(seed).rng();
        let noise = Normal::new(0.0, 0.1).unwrap();
        let samples: Vec<Sample> = (0..n)
            .map(|i| {
                let c = i % 2;
                let v = (0..dim)
                    .map(|d| noise.sample(&mut rng) + if d == 0 { c as f64 } else { 0.0 })
                    .collect();
                Sample::new(i as u64, v)
            })
            .collect();
        let labels = (0..n).map(|i| Some(i % 2)).collect();
        let ds = LatentDataset::new(&FactorSchema::new(vec![]).unwrap(), dim, samples).unwrap();
        (ds, labels)
    }

    #[test]
    fn stump_single_edit() {
        let (ds, y) = two_blobs(40, 3, 1);
        let gt = GuidedTraversal::fit(&ds, &y, &TreeParams::default(), Seed(0)).unwrap();
        assert_eq!(gt.tree.depth(), 1);
        let e = gt.traverse(&ds.samples()[0].vector, 0, 1).unwrap();
        assert_eq!(e.steps.len(), 1);
        assert_eq!(e.edited_dims(), vec![0]);
        assert_eq!(e.final_prediction, 1);
        assert_eq!(e.replay(), e.result);
        assert_eq!(&e.result[1..], &ds.samples()[0].vector[1..]);
        assert!(e.warnings.is_empty());
    }

    #[test]
    fn round_trip_returns_to_source() {
        let (ds, y) = two_blobs(60, 4, 2);
        let gt = GuidedTraversal::fit(&ds, &y, &TreeParams::default(), Seed(0)).unwrap();
        for s in ds.samples().iter().step_by(7) {
            let from = gt.tree.predict(&s.vector);
            let there = gt.traverse(&s.vector, from, 1 - from).unwrap();
            let back = gt.traverse(&there.result, 1 - from, from).unwrap();
            assert_eq!(back.final_prediction, from);
        }
    }

    #[test]
    fn absent_target_class() {
        let (ds, y) = two_blobs(20, 2, 3);
        let gt = GuidedTraversal::fit(&ds, &y, &TreeParams::default(), Seed(0)).unwrap();
        assert!(matches!(gt.traverse(&[0.0, 0.0], 0, 5), Err(Error::Data(_))));
    }

    #[test]
    fn mismatched_seed_warns_and_proceeds() {
        let (ds, y) = two_blobs(20, 2, 3);
        let gt = GuidedTraversal::fit(&ds, &y, &TreeParams::default(), Seed(0)).unwrap();
        let e = gt.traverse(&[1.0, 0.0], 0, 1).unwrap();
        assert_eq!(e.warnings.len(), 1);
        assert!(e.steps.iter().all(|s| !s.edited));
    }

    #[test]
    fn jsonl_log_shape() {
        let (ds, y) = two_blobs(40, 3, 1);
        let gt = GuidedTraversal::fit(&ds, &y, &TreeParams::default(), Seed(0)).unwrap();
        let e = gt.traverse(&ds.samples()[0].vector, 0, 1).unwrap();
        let text = e.to_jsonl();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 1 + e.steps.len());
        assert!(lines[0].contains(INTERPRETATION));
        let rec: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
        assert_eq!(rec["branch"], "no");
    }

    proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(24))]
        #[test]
        fn deep_tree_postcondition_and_locality(seed in 0u64..500, pick in 0usize..200) {
            use rand::Rng;
            let mut rng = Seed(seed).rng();
            let dim = 5;
            let samples: Vec<Sample> = (0..200)
                .map(|i| Sample::new(i, (0..dim).map(|_| rng.random::<f64>()).collect()))
                .collect();
            let ds = LatentDataset::new(&FactorSchema::new(vec![]).unwrap(), dim, samples).unwrap();
            let y: Vec<Option<usize>> = ds.samples().iter().map(|s| Some(usize::from(s.vector[0] + s.vector[2] > 1.0))).collect();
            let gt = GuidedTraversal::fit(&ds, &y, &TreeParams::default(), Seed(seed)).unwrap();
            let z = &ds.samples()[pick].vector;
            let from = gt.tree.predict(z);
            let e = gt.traverse(z, from, 1 - from).unwrap();
            prop_assert_eq!(gt.tree.predict(&e.result), 1 - from);
            prop_assert_eq!(e.replay(), e.result.clone());
            let on_path: Vec<usize> = e.steps.iter().map(|s| s.dim).collect();
            for d in 0..dim {
                if !on_path.contains(&d) {
                    prop_assert_eq!(e.result[d].to_bits(), z[d].to_bits());
                }
            }
            prop_assert!(e.intermediates.last().map(|v| v == &e.result).unwrap_or(true));
        }
    }
}
