//! CART classification tree with Gini splits and root-to-leaf path extraction.
//!
//! Every internal node tests `x[dim] <= threshold`; the left child is the
//! "yes" branch. Nodes are stored in depth-first pre-order with the left
//! subtree first, so leaf node ids increase from left to right.

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::dataset::Seed;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreeParams {
    /// `None` grows until leaves are pure or unsplittable.
    pub max_depth: Option<usize>,
    pub min_samples_leaf: usize,
    /// Candidate dimensions drawn per split; `None` considers every dimension.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: None,
            min_samples_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum NodeKind {
    Split {
        dim: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub kind: NodeKind,
    pub parent: Option<usize>,
    pub depth: usize,
    pub class_counts: Vec<usize>,
    pub n_samples: usize,
    pub impurity: f64,
    /// Most frequent class; ties go to the lowest class index.
    pub majority: usize,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        matches!(self.kind, NodeKind::Leaf)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Branch {
    /// `x[dim] <= threshold`
    Yes,
    /// `x[dim] > threshold`
    No,
}

impl Branch {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Branch::Yes => value <= threshold,
            Branch::No => value > threshold,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathStep {
    pub node: usize,
    pub dim: usize,
    pub threshold: f64,
    pub branch: Branch,
}

/// Root-to-leaf sequence of tests; following every `branch` lands in `leaf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TreePath {
    pub steps: Vec<PathStep>,
    pub leaf: usize,
}

impl TreePath {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// Axis-aligned cell of the leaf as per-dimension `(lo, hi]` bounds.
    pub fn cell_bounds(&self, dim: usize) -> Vec<(f64, f64)> {
        let mut bounds = vec![(f64::NEG_INFINITY, f64::INFINITY); dim];
        for s in &self.steps {
            let b = &mut bounds[s.dim];
            match s.branch {
                Branch::Yes => b.1 = b.1.min(s.threshold),
                Branch::No => b.0 = b.0.max(s.threshold),
            }
        }
        bounds
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_classes: usize,
    n_features: usize,
    params: TreeParams,
}

fn gini(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &k) in counts.iter().enumerate() {
        if k > counts[best] {
            best = c;
        }
    }
    best
}

struct Split {
    dim: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a, X> {
    x: &'a [X],
    y: &'a [usize],
    params: &'a TreeParams,
    n_classes: usize,
    n_features: usize,
    rng: rand_chacha::ChaCha8Rng,
    nodes: Vec<Node>,
}

impl<X: AsRef<[f64]>> Builder<'_, X> {
    fn build(&mut self, idx: &mut [usize], parent: Option<usize>, depth: usize) -> usize {
        let mut counts = vec![0usize; self.n_classes];
        for &i in idx.iter() {
            counts[self.y[i]] += 1;
        }
        let n = idx.len();
        let id = self.nodes.len();
        self.nodes.push(Node {
            kind: NodeKind::Leaf,
            parent,
            depth,
            impurity: gini(&counts, n),
            majority: majority(&counts),
            class_counts: counts.clone(),
            n_samples: n,
        });

        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let depth_capped = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || depth_capped || n < 2 * self.params.min_samples_leaf.max(1) {
            return id;
        }
        let Some(split) = self.best_split(idx, &counts) else {
            return id;
        };

        // partition in place: rows going left first, order otherwise preserved
        let (mut left, mut right): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[i].as_ref()[split.dim] <= split.threshold);
        let n_left = left.len();
        left.append(&mut right);
        idx.copy_from_slice(&left);
        let (l, r) = idx.split_at_mut(n_left);
        let left_id = self.build(l, Some(id), depth + 1);
        let right_id = self.build(r, Some(id), depth + 1);
        self.nodes[id].kind = NodeKind::Split {
            dim: split.dim,
            threshold: split.threshold,
            left: left_id,
            right: right_id,
        };
        id
    }

    fn best_split(&mut self, idx: &[usize], counts: &[usize]) -> Option<Split> {
        let dims: Vec<usize> = match self.params.max_features {
            Some(k) if k < self.n_features => {
                let mut d = index::sample(&mut self.rng, self.n_features, k.max(1)).into_vec();
                d.sort_unstable();
                d
            }
            _ => (0..self.n_features).collect(),
        };
        let mut best = self.search(idx, counts, &dims);
        if best.is_none() && dims.len() < self.n_features {
            let rest: Vec<usize> = (0..self.n_features).filter(|d| !dims.contains(d)).collect();
            best = self.search(idx, counts, &rest);
        }
        best
    }

    /// Exhaustive threshold sweep over `dims` (ascending). Maximizes
    /// `sum_l/n_l + sum_r/n_r` of squared class counts, which is equivalent
    /// to minimizing the weighted child Gini impurity. Strict improvement
    /// keeps the lowest dimension and lowest threshold on ties.
    fn search(&self, idx: &[usize], counts: &[usize], dims: &[usize]) -> Option<Split> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        let total_sq: u64 = counts.iter().map(|&c| (c * c) as u64).sum();
        let mut best: Option<Split> = None;
        let mut pairs: Vec<(f64, usize)> = Vec::with_capacity(n);
        let mut left = vec![0usize; self.n_classes];
        for &d in dims {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.x[i].as_ref()[d], self.y[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|c| *c = 0);
            let mut sq_left: u64 = 0;
            let mut sq_right: u64 = total_sq;
            for i in 0..n - 1 {
                let c = pairs[i].1;
                let right_c = counts[c] - left[c];
                sq_left += 2 * left[c] as u64 + 1;
                sq_right -= 2 * right_c as u64 - 1;
                left[c] += 1;
                if pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let n_l = i + 1;
                let n_r = n - n_l;
                if n_l < min_leaf || n_r < min_leaf {
                    continue;
                }
                let score = sq_left as f64 / n_l as f64 + sq_right as f64 / n_r as f64;
                if best.as_ref().is_none_or(|b| score > b.score) {
                    let (a, b) = (pairs[i].0, pairs[i + 1].0);
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b || threshold < a {
                        threshold = a;
                    }
                    best = Some(Split {
                        dim: d,
                        threshold,
                        score,
                    });
                }
            }
        }
        best
    }
}

impl DecisionTree {
    /// Greedy CART fit with Gini impurity. Requires at least two samples and
    /// at least two distinct classes.
    pub fn fit<X: AsRef<[f64]>>(x: &[X], y: &[usize], params: &TreeParams, seed: Seed) -> Result<Self> {
        let distinct = {
            let mut v = y.to_vec();
            v.sort_unstable();
            v.dedup();
            v.len()
        };
        if x.len() < 2 {
            return Err(Error::Data(format!("tree needs at least 2 samples, got {}", x.len())));
        }
        if distinct < 2 {
            return Err(Error::DegenerateLabels("tree needs at least 2 classes".into()));
        }
        Self::fit_unchecked(x, y, params, seed)
    }

    /// Fit without the class-count precondition; a single-class input yields
    /// a single leaf. Used for bootstrap replicates inside forests.
    pub(crate) fn fit_unchecked<X: AsRef<[f64]>>(
        x: &[X],
        y: &[usize],
        params: &TreeParams,
        seed: Seed,
    ) -> Result<Self> {
        if x.is_empty() || x.len() != y.len() {
            return Err(Error::Data(format!(
                "tree input has {} rows and {} labels",
                x.len(),
                y.len()
            )));
        }
        let n_features = x[0].as_ref().len();
        if n_features == 0 || x.iter().any(|r| r.as_ref().len() != n_features) {
            return Err(Error::Data("tree input rows must share a positive length".into()));
        }
        if x.iter().any(|r| r.as_ref().iter().any(|v| !v.is_finite())) {
            return Err(Error::Data("tree input contains non-finite values".into()));
        }
        let n_classes = y.iter().copied().max().unwrap_or(0) + 1;
        let mut b = Builder {
            x,
            y,
            params,
            n_classes,
            n_features,
            rng: seed.rng(),
            nodes: Vec::new(),
        };
        let mut idx: Vec<usize> = (0..x.len()).collect();
        b.build(&mut idx, None, 0);
        Ok(DecisionTree {
            nodes: b.nodes,
            n_classes,
            n_features,
            params: params.clone(),
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn depth(&self) -> usize {
        self.nodes.iter().map(|n| n.depth).max().unwrap_or(0)
    }

    /// Leaf node id reached by `z`.
    pub fn leaf_of(&self, z: &[f64]) -> usize {
        let mut i = 0;
        while let NodeKind::Split {
            dim,
            threshold,
            left,
            right,
        } = self.nodes[i].kind
        {
            i = if z[dim] <= threshold { left } else { right };
        }
        i
    }

    pub fn predict(&self, z: &[f64]) -> usize {
        self.nodes[self.leaf_of(z)].majority
    }

    /// Leaf ids in left-to-right order.
    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.is_leaf())
            .map(|(i, _)| i)
    }

    /// Path from the root to `leaf`.
    pub fn path_to(&self, leaf: usize) -> TreePath {
        let mut steps = Vec::new();
        let mut child = leaf;
        while let Some(p) = self.nodes[child].parent {
            if let NodeKind::Split {
                dim,
                threshold,
                left,
                ..
            } = self.nodes[p].kind
            {
                steps.push(PathStep {
                    node: p,
                    dim,
                    threshold,
                    branch: if left == child { Branch::Yes } else { Branch::No },
                });
            }
            child = p;
        }
        steps.reverse();
        TreePath { steps, leaf }
    }

    fn has_majority_leaf(&self, class: usize) -> bool {
        self.leaves().any(|l| self.nodes[l].majority == class)
    }

    /// All leaves with majority `class` at the minimum depth, left to right.
    pub fn shortest_leaves(&self, class: usize) -> Vec<usize> {
        let leaves: Vec<usize> = self
            .leaves()
            .filter(|&l| self.nodes[l].majority == class)
            .collect();
        let Some(min_depth) = leaves.iter().map(|&l| self.nodes[l].depth).min() else {
            return Vec::new();
        };
        leaves
            .into_iter()
            .filter(|&l| self.nodes[l].depth == min_depth)
            .collect()
    }

    /// Shortest root path to a leaf whose majority is `to_class`; ties go to
    /// the leftmost leaf.
    pub fn shortest_cross_path(&self, from_class: usize, to_class: usize) -> Result<TreePath> {
        if !self.has_majority_leaf(from_class) {
            return Err(Error::Data(format!("class {from_class} is not the majority of any leaf")));
        }
        let leaves = self.shortest_leaves(to_class);
        let leaf = *leaves.first().ok_or_else(|| {
            Error::Data(format!("class {to_class} is not the majority of any leaf"))
        })?;
        Ok(self.path_to(leaf))
    }

    /// Weighted Gini decrease of every split, attributed to its dimension and
    /// scaled by the root sample count.
    pub fn impurity_decrease(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_features];
        let root_n = self.nodes[0].n_samples as f64;
        for node in &self.nodes {
            if let NodeKind::Split { dim, left, right, .. } = node.kind {
                let (l, r) = (&self.nodes[left], &self.nodes[right]);
                let dec = node.n_samples as f64 * node.impurity
                    - l.n_samples as f64 * l.impurity
                    - r.n_samples as f64 * r.impurity;
                out[dim] += dec.max(0.0) / root_n;
            }
        }
        out
    }
}
