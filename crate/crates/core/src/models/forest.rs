//! Bootstrap-aggregated CART trees with Gini splits.
//!
//! Splits test `value <= threshold`, with thresholds at midpoints between
//! consecutive distinct values present at the node. Candidate features at a
//! node are drawn without replacement from the features that are not
//! constant there; ties in impurity decrease go to the lowest feature id,
//! then the lowest threshold.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_data, ModelError};
use crate::seed;
use crate::vectorize::{CombinedVector, Dims};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    /// `⌈√d⌉` candidates per node.
    #[default]
    Sqrt,
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        match self {
            MaxFeatures::Sqrt => (d as f64).sqrt().ceil().max(1.0) as usize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_features: MaxFeatures,
    pub min_leaf: usize,
    pub max_depth: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Bootstrap-weighted class counts, indexed by label value.
    Leaf { counts: [f64; 2] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomForest {
    pub trees: Vec<Tree>,
}

pub fn gini(counts: [f64; 2]) -> f64 {
    let total = counts[0] + counts[1];
    if total <= 0.0 {
        return 0.0;
    }
    let p = counts[0] / total;
    let q = counts[1] / total;
    1.0 - p * p - q * q
}

fn feature_value(x: &CombinedVector, dims: Dims, feature: usize) -> f64 {
    if feature >= dims.sparse {
        x.dense[feature - dims.sparse]
    } else {
        x.sparse
            .binary_search_by_key(&feature, |&(j, _)| j)
            .map(|k| x.sparse[k].1)
            .unwrap_or(0.0)
    }
}

impl Tree {
    fn leaf_counts(&self, x: &CombinedVector, dims: Dims) -> [f64; 2] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { counts } => return *counts,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if feature_value(x, dims, *feature) <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// 1 for a fake vote; ties vote real.
    pub fn vote(&self, x: &CombinedVector, dims: Dims) -> u8 {
        let c = self.leaf_counts(x, dims);
        (c[1] > c[0]) as u8
    }

    /// Children in range, each non-root node referenced exactly once, and
    /// every node reachable from the root.
    pub fn is_valid_binary_tree(&self) -> bool {
        let n = self.nodes.len();
        if n == 0 {
            return false;
        }
        let mut parents = vec![0usize; n];
        for node in &self.nodes {
            if let Node::Split { left, right, .. } = node {
                for &c in [left, right] {
                    if c >= n || c == 0 {
                        return false;
                    }
                    parents[c] += 1;
                }
            }
        }
        if parents[1..].iter().any(|&p| p != 1) {
            return false;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        while let Some(i) = stack.pop() {
            if std::mem::replace(&mut seen[i], true) {
                return false;
            }
            if let Node::Split { left, right, .. } = &self.nodes[i] {
                stack.push(*left);
                stack.push(*right);
            }
        }
        seen.into_iter().all(|s| s)
    }
}

impl RandomForest {
    pub fn vote_fraction(&self, x: &CombinedVector, dims: Dims) -> f64 {
        let fake: usize = self.trees.iter().map(|t| t.vote(x, dims) as usize).sum();
        fake as f64 / self.trees.len() as f64
    }
}

/// Row-major nonzeros (dense block offset by `dims.sparse`) plus a
/// column-major index for fast per-node value gathering.
struct Matrix {
    rows: Vec<Vec<(usize, f64)>>,
    columns: Vec<Vec<(usize, f64)>>,
    labels: Vec<usize>,
}

impl Matrix {
    fn new(data: &[CombinedVector], dims: Dims) -> Self {
        let rows: Vec<Vec<(usize, f64)>> = data
            .iter()
            .map(|x| x.iter_features(dims.sparse).filter(|&(_, v)| v != 0.0).collect())
            .collect();
        let mut columns = vec![Vec::new(); dims.total()];
        for (i, row) in rows.iter().enumerate() {
            for &(j, v) in row {
                columns[j].push((i, v));
            }
        }
        Matrix {
            rows,
            columns,
            labels: data.iter().map(|x| x.label.as_u8() as usize).collect(),
        }
    }
}

struct Builder<'a> {
    m: &'a Matrix,
    weights: Vec<f64>,
    node_of: Vec<usize>,
    params: &'a ForestParams,
    n_candidates: usize,
    // scratch, indexed by feature
    present: Vec<usize>,
    min_v: Vec<f64>,
    max_v: Vec<f64>,
    stamp: Vec<usize>,
}

struct Split {
    feature: usize,
    threshold: f64,
    decrease: f64,
}

impl Builder<'_> {
    fn class_counts(&self, samples: &[usize]) -> [f64; 2] {
        let mut c = [0.0; 2];
        for &i in samples {
            c[self.m.labels[i]] += self.weights[i];
        }
        c
    }

    /// Features that take more than one value among `samples`, ascending.
    fn varying_features(&mut self, samples: &[usize], node: usize) -> Vec<usize> {
        let mut touched = Vec::new();
        for &i in samples {
            for &(j, v) in &self.m.rows[i] {
                if self.stamp[j] != node + 1 {
                    self.stamp[j] = node + 1;
                    self.present[j] = 0;
                    self.min_v[j] = v;
                    self.max_v[j] = v;
                    touched.push(j);
                }
                self.present[j] += 1;
                self.min_v[j] = self.min_v[j].min(v);
                self.max_v[j] = self.max_v[j].max(v);
            }
        }
        let mut out: Vec<usize> = touched
            .into_iter()
            .filter(|&j| self.present[j] < samples.len() || self.min_v[j] < self.max_v[j])
            .collect();
        out.sort_unstable();
        out
    }

    fn best_split_on(&self, feature: usize, node: usize, counts: [f64; 2], best: &mut Option<Split>) {
        let total = counts[0] + counts[1];
        let parent = gini(counts);
        let mut nonzero: Vec<(f64, usize, f64)> = self.m.columns[feature]
            .iter()
            .filter(|&&(i, _)| self.node_of[i] == node && self.weights[i] > 0.0)
            .map(|&(i, v)| (v, self.m.labels[i], self.weights[i]))
            .collect();
        let mut zero = counts;
        for &(_, y, w) in &nonzero {
            zero[y] -= w;
        }
        if zero[0] + zero[1] > 0.5 {
            nonzero.push((0.0, 0, zero[0]));
            nonzero.push((0.0, 1, zero[1]));
        }
        nonzero.sort_by(|a, b| a.0.total_cmp(&b.0));

        let min_leaf = self.params.min_leaf as f64;
        let mut left = [0.0; 2];
        let mut k = 0;
        while k < nonzero.len() {
            let value = nonzero[k].0;
            while k < nonzero.len() && nonzero[k].0 == value {
                left[nonzero[k].1] += nonzero[k].2;
                k += 1;
            }
            if k == nonzero.len() {
                break;
            }
            let wl = left[0] + left[1];
            let wr = total - wl;
            if wl < min_leaf || wr < min_leaf {
                continue;
            }
            let right = [counts[0] - left[0], counts[1] - left[1]];
            let decrease = parent - (wl / total) * gini(left) - (wr / total) * gini(right);
            if best.as_ref().is_none_or(|b| decrease > b.decrease) {
                *best = Some(Split {
                    feature,
                    threshold: (value + nonzero[k].0) / 2.0,
                    decrease,
                });
            }
        }
    }

    fn build(mut self, rng: &mut impl Rng) -> Tree {
        let root: Vec<usize> = (0..self.weights.len()).filter(|&i| self.weights[i] > 0.0).collect();
        for &i in &root {
            self.node_of[i] = 0;
        }
        let mut nodes = vec![Node::Leaf { counts: [0.0; 2] }];
        // (node id, samples, depth)
        let mut stack = vec![(0usize, root, 0usize)];
        while let Some((id, samples, depth)) = stack.pop() {
            let counts = self.class_counts(&samples);
            let total = counts[0] + counts[1];
            let stop = counts[0] == 0.0
                || counts[1] == 0.0
                || total < 2.0 * self.params.min_leaf as f64
                || self.params.max_depth.is_some_and(|d| depth >= d);
            let split = if stop {
                None
            } else {
                let varying = self.varying_features(&samples, id);
                let take = self.n_candidates.min(varying.len());
                let mut candidates: Vec<usize> =
                    sample(rng, varying.len(), take).into_iter().map(|k| varying[k]).collect();
                candidates.sort_unstable();
                let mut best = None;
                for f in candidates {
                    self.best_split_on(f, id, counts, &mut best);
                }
                best
            };
            let Some(split) = split else {
                nodes[id] = Node::Leaf { counts };
                continue;
            };
            let (left_id, right_id) = (nodes.len(), nodes.len() + 1);
            nodes.push(Node::Leaf { counts: [0.0; 2] });
            nodes.push(Node::Leaf { counts: [0.0; 2] });
            let (mut l, mut r) = (Vec::new(), Vec::new());
            for i in samples {
                let v = self.m.rows[i]
                    .binary_search_by_key(&split.feature, |&(j, _)| j)
                    .map(|k| self.m.rows[i][k].1)
                    .unwrap_or(0.0);
                if v <= split.threshold {
                    self.node_of[i] = left_id;
                    l.push(i);
                } else {
                    self.node_of[i] = right_id;
                    r.push(i);
                }
            }
            nodes[id] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left: left_id,
                right: right_id,
            };
            stack.push((right_id, r, depth + 1));
            stack.push((left_id, l, depth + 1));
        }
        Tree { nodes }
    }
}

/// Trains `n_trees` trees on bootstrap samples; tree `t` uses seed
/// `seed + t`. Trees train in parallel without affecting the result.
pub fn train_random_forest(
    data: &[CombinedVector],
    dims: Dims,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest, ModelError> {
    if params.n_trees < 1 {
        return Err(ModelError::InvalidHyperparameter("n_trees must be at least 1".into()));
    }
    if data.is_empty() {
        return Err(ModelError::EmptyData);
    }
    check_data(data, dims)?;
    let matrix = Matrix::new(data, dims);
    let d = dims.total();
    let n = data.len();
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = seed::rng(seed.wrapping_add(t as u64));
            let mut weights = vec![0.0; n];
            for _ in 0..n {
                weights[rng.random_range(0..n)] += 1.0;
            }
            Builder {
                m: &matrix,
                weights,
                node_of: vec![usize::MAX; n],
                params,
                n_candidates: params.max_features.count(d),
                present: vec![0; d],
                min_v: vec![0.0; d],
                max_v: vec![0.0; d],
                stamp: vec![0; d],
            }
            .build(&mut rng)
        })
        .collect();
    Ok(RandomForest { trees })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Label;

    #[test]
    fn gini_endpoints() {
        assert_eq!(gini([50.0, 50.0]), 0.5);
        assert_eq!(gini([100.0, 0.0]), 0.0);
    }

    fn pure_signal(n: usize) -> (Vec<CombinedVector>, Dims) {
        let dims = Dims { sparse: 4, dense: 2 };
        let data = (0..n)
            .map(|i| {
                let fake = i % 3 == 0;
                let mut sparse = vec![];
                if i % 2 == 0 {
                    sparse.push((0, 0.5));
                }
                if fake {
                    sparse.push((2, 1.0));
                }
                CombinedVector {
                    sparse,
                    dense: vec![(i % 5) as f64, if fake { 1.0 } else { 0.0 }],
                    label: Label::from_bool(fake),
                }
            })
            .collect();
        (data, dims)
    }

    #[test]
    fn memorizes_pure_signal() {
        let (data, dims) = pure_signal(60);
        let params = ForestParams {
            n_trees: 20,
            max_features: MaxFeatures::Sqrt,
            min_leaf: 1,
            max_depth: None,
        };
        let forest = train_random_forest(&data, dims, &params, 11).unwrap();
        for x in &data {
            let score = forest.vote_fraction(x, dims);
            assert_eq!(Label::from_bool(score > 0.5), x.label);
            assert!((0.0..=1.0).contains(&score));
        }
        assert!(forest.trees.iter().all(Tree::is_valid_binary_tree));
    }

    #[test]
    fn min_leaf_n_collapses_to_majority_leaf() {
        let (data, dims) = pure_signal(30);
        let params = ForestParams {
            n_trees: 1,
            max_features: MaxFeatures::Sqrt,
            min_leaf: 30,
            max_depth: None,
        };
        let forest = train_random_forest(&data, dims, &params, 5).unwrap();
        let tree = &forest.trees[0];
        assert_eq!(tree.nodes.len(), 1);
        let Node::Leaf { counts } = tree.nodes[0] else {
            panic!("expected a leaf")
        };
        assert_eq!(counts[0] + counts[1], 30.0);
        let majority = if counts[1] > counts[0] { 1 } else { 0 };
        for x in &data {
            assert_eq!(tree.vote(x, dims), majority);
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let (data, dims) = pure_signal(40);
        let params = ForestParams {
            n_trees: 8,
            max_features: MaxFeatures::Sqrt,
            min_leaf: 1,
            max_depth: Some(3),
        };
        let a = train_random_forest(&data, dims, &params, 3).unwrap();
        let b = train_random_forest(&data, dims, &params, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_tree_shapes_are_detected() {
        let leaf = Node::Leaf { counts: [1.0, 0.0] };
        let cyclic = Tree {
            nodes: vec![Node::Split {
                feature: 0,
                threshold: 0.0,
                left: 0,
                right: 0,
            }],
        };
        assert!(!cyclic.is_valid_binary_tree());
        let dangling = Tree {
            nodes: vec![
                Node::Split {
                    feature: 0,
                    threshold: 0.0,
                    left: 1,
                    right: 5,
                },
                leaf.clone(),
            ],
        };
        assert!(!dangling.is_valid_binary_tree());
        assert!(Tree { nodes: vec![leaf] }.is_valid_binary_tree());
    }
}
