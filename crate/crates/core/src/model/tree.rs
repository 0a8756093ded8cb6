//! Regression trees grown by weighted squared-error reduction, with optional
//! per-feature monotone constraints.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A node of a binary regression tree. Rows with `x[split_feature] <
/// threshold` go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Split {
        split_feature: usize,
        threshold: f64,
        cover: usize,
        /// Weighted squared-error reduction achieved by this split.
        #[serde(default)]
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        leaf_value: f64,
        cover: usize,
    },
}

impl TreeNode {
    pub fn leaf(value: f64, cover: usize) -> Self {
        TreeNode::Leaf {
            leaf_value: value,
            cover,
        }
    }

    pub fn split(feature: usize, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Split {
            split_feature: feature,
            threshold,
            cover: left.cover() + right.cover(),
            gain: 0.0,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn cover(&self) -> usize {
        match self {
            TreeNode::Split { cover, .. } | TreeNode::Leaf { cover, .. } => *cover,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }

    /// Number of edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn n_nodes(&self) -> usize {
        2 * self.n_leaves() - 1
    }

    /// Cover-weighted mean of the leaf values below this node.
    pub fn mean_value(&self) -> f64 {
        match self {
            TreeNode::Leaf { leaf_value, .. } => *leaf_value,
            TreeNode::Split { left, right, .. } => {
                let (cl, cr) = (left.cover() as f64, right.cover() as f64);
                if cl + cr == 0.0 {
                    0.5 * (left.mean_value() + right.mean_value())
                } else {
                    (cl * left.mean_value() + cr * right.mean_value()) / (cl + cr)
                }
            }
        }
    }

    fn predict(&self, row: &[f64]) -> f64 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { leaf_value, .. } => return *leaf_value,
                TreeNode::Split {
                    split_feature,
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    node = if row[*split_feature] < *threshold {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    /// Visit every node with its depth (root = 0), pre-order.
    pub fn walk<'a>(&'a self, depth: usize, f: &mut impl FnMut(&'a TreeNode, usize)) {
        f(self, depth);
        if let TreeNode::Split { left, right, .. } = self {
            left.walk(depth + 1, f);
            right.walk(depth + 1, f);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub root: TreeNode,
    /// Depth limit the tree was grown under.
    pub max_depth: usize,
    pub feature_count: usize,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.root.predict(row)
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }

    /// Check structural invariants: feature indices in range, depth within
    /// the limit and parent cover equal to the sum of child covers.
    pub fn validate(&self) -> Result<()> {
        let mut problem = None;
        self.root.walk(0, &mut |node, _| {
            if let TreeNode::Split {
                split_feature,
                cover,
                left,
                right,
                ..
            } = node
            {
                if *split_feature >= self.feature_count {
                    problem.get_or_insert(format!("split feature {split_feature} out of range"));
                }
                if *cover != left.cover() + right.cover() {
                    problem.get_or_insert(format!(
                        "cover {cover} != {} + {}",
                        left.cover(),
                        right.cover()
                    ));
                }
            }
        });
        if self.depth() > self.max_depth {
            problem.get_or_insert(format!(
                "depth {} exceeds limit {}",
                self.depth(),
                self.max_depth
            ));
        }
        match problem {
            Some(p) => Err(Error::InvalidArgument(p)),
            None => Ok(()),
        }
    }

    /// Features appearing in at least one split, ascending.
    pub fn used_features(&self) -> Vec<usize> {
        let mut used = Vec::new();
        self.root.walk(0, &mut |node, _| {
            if let TreeNode::Split { split_feature, .. } = node {
                used.push(*split_feature);
            }
        });
        used.sort_unstable();
        used.dedup();
        used
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            max_depth: 5,
            min_samples_leaf: 1,
        }
    }
}

/// Inputs for growing one tree. `columns` is column-major; `rows` and
/// `features` restrict the fit to a subsample of rows and columns.
pub(crate) struct TreeProblem<'a> {
    pub columns: &'a [Vec<f64>],
    pub targets: &'a [f64],
    pub weights: &'a [f64],
    pub rows: &'a [usize],
    pub features: &'a [usize],
    pub config: TreeConfig,
    pub constraints: &'a [i8],
    pub bounds: (f64, f64),
}

/// Fit a regression tree on all rows and features.
///
/// Leaves predict the weighted target mean clipped to `value_bounds`.
/// A split on a feature with constraint `+1` (`-1`) is admissible only if
/// the left child value does not exceed (fall below) the right child value;
/// the children then inherit bounds cut at the midpoint of the two values.
pub fn fit_tree(
    columns: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    config: &TreeConfig,
    constraints: &[i8],
    value_bounds: (f64, f64),
) -> Result<DecisionTree> {
    let n = targets.len();
    if n == 0 {
        return Err(Error::Empty("targets"));
    }
    if weights.len() != n || columns.iter().any(|c| c.len() != n) {
        return Err(Error::Shape(
            "features, targets and weights must have equal lengths".into(),
        ));
    }
    if !constraints.is_empty() && constraints.len() != columns.len() {
        return Err(Error::Shape(format!(
            "{} constraints for {} features",
            constraints.len(),
            columns.len()
        )));
    }
    if targets.iter().chain(weights).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("targets and weights must be finite".into()));
    }
    if config.max_depth == 0 {
        return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
    }
    let rows: Vec<usize> = (0..n).collect();
    let features: Vec<usize> = (0..columns.len()).collect();
    Ok(grow(&TreeProblem {
        columns,
        targets,
        weights,
        rows: &rows,
        features: &features,
        config: *config,
        constraints,
        bounds: value_bounds,
    }))
}

pub(crate) fn grow(problem: &TreeProblem<'_>) -> DecisionTree {
    let sorted: Vec<Vec<usize>> = problem
        .features
        .iter()
        .map(|&f| {
            let col = &problem.columns[f];
            let mut idx = problem.rows.to_vec();
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let total_rows = problem.columns.first().map_or(problem.targets.len(), Vec::len);
    let mut grower = Grower {
        problem,
        goes_left: vec![false; total_rows],
    };
    let root = if problem.features.is_empty() {
        grower.leaf(problem.rows, problem.bounds)
    } else {
        grower.build(sorted, 0, problem.bounds)
    };
    DecisionTree {
        root,
        max_depth: problem.config.max_depth,
        feature_count: problem.columns.len(),
    }
}

struct Grower<'a, 'p> {
    problem: &'a TreeProblem<'p>,
    goes_left: Vec<bool>,
}

#[derive(Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
    left_value: f64,
    right_value: f64,
}

fn clip(v: f64, (lo, hi): (f64, f64)) -> f64 {
    v.max(lo).min(hi)
}

/// `sum w (y - v)^2` minus the constant `sum w y^2`.
fn partial_loss(v: f64, sum_wy: f64, sum_w: f64) -> f64 {
    v * v * sum_w - 2.0 * v * sum_wy
}

impl Grower<'_, '_> {
    fn node_sums(&self, rows: &[usize]) -> (f64, f64, f64) {
        let p = self.problem;
        let (mut w, mut wy, mut wyy) = (0.0, 0.0, 0.0);
        for &i in rows {
            w += p.weights[i];
            wy += p.weights[i] * p.targets[i];
            wyy += p.weights[i] * p.targets[i] * p.targets[i];
        }
        (w, wy, wyy)
    }

    fn node_value(sum_w: f64, sum_wy: f64, bounds: (f64, f64)) -> f64 {
        if sum_w > 0.0 {
            clip(sum_wy / sum_w, bounds)
        } else {
            clip(0.0, bounds)
        }
    }

    fn leaf(&self, rows: &[usize], bounds: (f64, f64)) -> TreeNode {
        let (w, wy, _) = self.node_sums(rows);
        TreeNode::leaf(Self::node_value(w, wy, bounds), rows.len())
    }

    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize, bounds: (f64, f64)) -> TreeNode {
        let p = self.problem;
        let rows = &sorted[0];
        let n = rows.len();
        let (sum_w, sum_wy, sum_wyy) = self.node_sums(rows);
        let value = Self::node_value(sum_w, sum_wy, bounds);
        let min_leaf = p.config.min_samples_leaf.max(1);
        if depth >= p.config.max_depth || n < 2 * min_leaf {
            return TreeNode::leaf(value, n);
        }
        let parent_loss = partial_loss(value, sum_wy, sum_w);
        let min_gain = 1e-12 * sum_wyy;

        let scan = |k: usize| self.best_split_for(k, &sorted[k], sum_w, sum_wy, parent_loss, bounds, min_leaf);
        let per_feature: Vec<Option<Candidate>> = if n >= 4096 && p.features.len() > 1 {
            (0..p.features.len()).into_par_iter().map(scan).collect()
        } else {
            (0..p.features.len()).map(scan).collect()
        };
        // features are scanned in ascending index order, so a strict `>`
        // keeps the lowest feature (then lowest threshold) among equal gains
        let mut best: Option<Candidate> = None;
        for cand in per_feature.into_iter().flatten() {
            if cand.gain > min_gain && best.map_or(true, |b| cand.gain > b.gain) {
                best = Some(cand);
            }
        }
        let Some(best) = best else {
            return TreeNode::leaf(value, n);
        };

        let col = &p.columns[best.feature];
        for &i in rows {
            self.goes_left[i] = col[i] < best.threshold;
        }
        let (left_sorted, right_sorted): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .into_iter()
            .map(|list| list.into_iter().partition(|&i| self.goes_left[i]))
            .unzip();

        let (left_bounds, right_bounds) = match p.constraints.get(best.feature).copied() {
            Some(c) if c != 0 => {
                let mid = 0.5 * (best.left_value + best.right_value);
                let (lo, hi) = bounds;
                if c > 0 {
                    ((lo, hi.min(mid)), (lo.max(mid), hi))
                } else {
                    ((lo.max(mid), hi), (lo, hi.min(mid)))
                }
            }
            _ => (bounds, bounds),
        };
        let left = self.build(left_sorted, depth + 1, left_bounds);
        let right = self.build(right_sorted, depth + 1, right_bounds);
        TreeNode::Split {
            split_feature: best.feature,
            threshold: best.threshold,
            cover: n,
            gain: best.gain,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn best_split_for(
        &self,
        k: usize,
        order: &[usize],
        sum_w: f64,
        sum_wy: f64,
        parent_loss: f64,
        bounds: (f64, f64),
        min_leaf: usize,
    ) -> Option<Candidate> {
        let p = self.problem;
        let feature = p.features[k];
        let col = &p.columns[feature];
        let direction = p.constraints.get(feature).copied().unwrap_or(0);
        let n = order.len();
        let (mut lw, mut lwy) = (0.0, 0.0);
        let mut best: Option<Candidate> = None;
        for pos in 0..n - 1 {
            let i = order[pos];
            lw += p.weights[i];
            lwy += p.weights[i] * p.targets[i];
            let left_count = pos + 1;
            if left_count < min_leaf {
                continue;
            }
            if n - left_count < min_leaf {
                break;
            }
            let (a, b) = (col[i], col[order[pos + 1]]);
            if a >= b {
                continue;
            }
            let (rw, rwy) = (sum_w - lw, sum_wy - lwy);
            if lw <= 0.0 || rw <= 0.0 {
                continue;
            }
            let lv = clip(lwy / lw, bounds);
            let rv = clip(rwy / rw, bounds);
            if (direction > 0 && lv > rv) || (direction < 0 && lv < rv) {
                continue;
            }
            let gain = parent_loss - partial_loss(lv, lwy, lw) - partial_loss(rv, rwy, rw);
            if best.map_or(true, |c| gain > c.gain) {
                let mut threshold = 0.5 * (a + b);
                if threshold <= a {
                    threshold = b;
                }
                best = Some(Candidate {
                    feature,
                    threshold,
                    gain,
                    left_value: lv,
                    right_value: rv,
                });
            }
        }
        best
    }
}
