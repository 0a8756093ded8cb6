//! Global surrogate trees: a shallow regression tree fitted to a model's
//! scores, with fidelity, gain importance and parent/child interactions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{mean, Dataset};
use crate::error::{Error, Result};
use crate::model::{fit_tree, DecisionTree, ScoreFn, TreeConfig, TreeNode};
use crate::rng;

/// Targets with magnitude below this are left out of MAPE.
pub const MAPE_ZERO_GUARD: f64 = 1e-6;

/// How closely surrogate predictions track the explained scores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub r2: f64,
    pub rmse: f64,
    /// Mean absolute percentage error as a fraction; `None` when every
    /// target is excluded by the zero guard.
    pub mape: Option<f64>,
    pub mape_excluded: usize,
    /// Targets had zero variance, so `r2` is reported as 1 by convention.
    pub degenerate: bool,
}

pub fn fidelity(targets: &[f64], predictions: &[f64]) -> Result<Fidelity> {
    if targets.is_empty() {
        return Err(Error::Empty("targets"));
    }
    if targets.len() != predictions.len() {
        return Err(Error::Shape(format!(
            "{} targets but {} predictions",
            targets.len(),
            predictions.len()
        )));
    }
    let n = targets.len() as f64;
    let y_bar = mean(targets);
    let sse: f64 = targets
        .iter()
        .zip(predictions)
        .map(|(y, p)| (y - p) * (y - p))
        .sum();
    let sst: f64 = targets.iter().map(|y| (y - y_bar) * (y - y_bar)).sum();
    let degenerate = sst == 0.0;
    let r2 = if degenerate { 1.0 } else { 1.0 - sse / sst };

    let mut ape_sum = 0.0;
    let mut kept = 0usize;
    for (y, p) in targets.iter().zip(predictions) {
        if y.abs() >= MAPE_ZERO_GUARD {
            ape_sum += ((y - p) / y).abs();
            kept += 1;
        }
    }
    Ok(Fidelity {
        r2,
        rmse: (sse / n).sqrt(),
        mape: (kept > 0).then(|| ape_sum / kept as f64),
        mape_excluded: targets.len() - kept,
        degenerate,
    })
}

/// A split on `child` directly below a split on `parent`, where the parent
/// sits at `depth` (root = 0).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interaction {
    pub parent: usize,
    pub child: usize,
    pub depth: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateReport {
    pub feature_names: Vec<String>,
    pub tree: DecisionTree,
    pub fidelity: Fidelity,
    /// Total squared-error reduction credited to each feature.
    pub importance: Vec<f64>,
    pub interactions: Vec<Interaction>,
}

impl SurrogateReport {
    /// Feature indices sorted by decreasing importance, ties by index.
    pub fn importance_order(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.importance.len()).collect();
        order.sort_by(|&a, &b| self.importance[b].total_cmp(&self.importance[a]).then(a.cmp(&b)));
        order
    }

    pub fn to_dot(&self) -> String {
        export_dot(&self.tree, &self.feature_names)
    }
}

fn fit_on_rows(data: &Dataset, targets: &[f64], rows: &[usize], depth: usize) -> Result<DecisionTree> {
    let columns: Vec<Vec<f64>> = data
        .columns()
        .iter()
        .map(|c| rows.iter().map(|&i| c[i]).collect())
        .collect();
    let y: Vec<f64> = rows.iter().map(|&i| targets[i]).collect();
    let w = vec![1.0; rows.len()];
    fit_tree(
        &columns,
        &y,
        &w,
        &TreeConfig {
            max_depth: depth,
            min_samples_leaf: 1,
        },
        &[],
        (f64::NEG_INFINITY, f64::INFINITY),
    )
}

/// Fit a depth-limited regression tree to `score` over every row of `data`
/// and measure fidelity on the same rows.
pub fn extract_surrogate<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    depth: usize,
) -> Result<SurrogateReport> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("data"));
    }
    let targets = score.score_matrix(&data.to_matrix());
    let rows: Vec<usize> = (0..data.n_rows()).collect();
    let tree = fit_on_rows(data, &targets, &rows, depth)?;
    let predictions: Vec<f64> = (0..data.n_rows()).map(|i| tree.predict(&data.row(i))).collect();
    Ok(SurrogateReport {
        feature_names: data.feature_names().to_vec(),
        fidelity: fidelity(&targets, &predictions)?,
        importance: importance(&tree),
        interactions: interactions(&tree),
        tree,
    })
}

pub fn importance(tree: &DecisionTree) -> Vec<f64> {
    let mut total = vec![0.0; tree.feature_count];
    tree.root.walk(0, &mut |node, _| {
        if let TreeNode::Split {
            split_feature, gain, ..
        } = node
        {
            total[*split_feature] += gain;
        }
    });
    total
}

/// Distinct parent/child split pairs on different features, in pre-order.
pub fn interactions(tree: &DecisionTree) -> Vec<Interaction> {
    let mut out = Vec::new();
    tree.root.walk(0, &mut |node, depth| {
        if let TreeNode::Split {
            split_feature,
            left,
            right,
            ..
        } = node
        {
            for child in [left, right] {
                if let TreeNode::Split {
                    split_feature: c, ..
                } = child.as_ref()
                {
                    let pair = Interaction {
                        parent: *split_feature,
                        child: *c,
                        depth,
                    };
                    if pair.parent != pair.child && !out.contains(&pair) {
                        out.push(pair);
                    }
                }
            }
        }
    });
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    fn of(values: &[f64]) -> Self {
        let m = mean(values);
        let var = values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64;
        Self {
            mean: m,
            std: var.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvStability {
    pub folds: usize,
    pub r2: MeanStd,
    pub rmse: MeanStd,
    /// Over the folds that had at least one target above the zero guard.
    pub mape: Option<MeanStd>,
    pub per_fold: Vec<Fidelity>,
}

/// Fit on all but one fold, score fidelity on the held-out fold, and report
/// the mean and population standard deviation of each metric.
pub fn cv_stability<S: ScoreFn + ?Sized>(
    score: &S,
    data: &Dataset,
    depth: usize,
    folds: usize,
    seed: u64,
) -> Result<CvStability> {
    if folds < 2 {
        return Err(Error::InvalidArgument("folds must be at least 2".into()));
    }
    let n = data.n_rows();
    if n < folds {
        return Err(Error::InvalidArgument(format!(
            "{n} rows cannot fill {folds} folds"
        )));
    }
    let targets = score.score_matrix(&data.to_matrix());
    let order = rng::permutation(n, &mut rng::seeded(seed));
    let fold_rows = |k: usize| -> (Vec<usize>, Vec<usize>) {
        let (lo, hi) = (k * n / folds, (k + 1) * n / folds);
        let mut held: Vec<usize> = order[lo..hi].to_vec();
        let mut rest: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
        held.sort_unstable();
        rest.sort_unstable();
        (held, rest)
    };
    let per_fold = (0..folds)
        .into_par_iter()
        .map(|k| {
            let (held, rest) = fold_rows(k);
            let tree = fit_on_rows(data, &targets, &rest, depth)?;
            let y: Vec<f64> = held.iter().map(|&i| targets[i]).collect();
            let p: Vec<f64> = held.iter().map(|&i| tree.predict(&data.row(i))).collect();
            fidelity(&y, &p)
        })
        .collect::<Result<Vec<_>>>()?;

    let r2: Vec<f64> = per_fold.iter().map(|f| f.r2).collect();
    let rmse: Vec<f64> = per_fold.iter().map(|f| f.rmse).collect();
    let mape: Vec<f64> = per_fold.iter().filter_map(|f| f.mape).collect();
    Ok(CvStability {
        folds,
        r2: MeanStd::of(&r2),
        rmse: MeanStd::of(&rmse),
        mape: (!mape.is_empty()).then(|| MeanStd::of(&mape)),
        per_fold,
    })
}

fn escape(label: &str) -> String {
    label.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Render a tree as a Graphviz digraph. Internal nodes read
/// `name < threshold`; the edge labelled `yes` leads to the left child.
pub fn export_dot(tree: &DecisionTree, feature_names: &[String]) -> String {
    fn emit(node: &TreeNode, names: &[String], next: &mut usize, out: &mut String) -> usize {
        let id = *next;
        *next += 1;
        match node {
            TreeNode::Leaf { leaf_value, cover } => {
                out.push_str(&format!(
                    "  n{id} [label=\"{leaf_value}\\ncover = {cover}\", shape=ellipse];\n"
                ));
            }
            TreeNode::Split {
                split_feature,
                threshold,
                left,
                right,
                ..
            } => {
                let name = names
                    .get(*split_feature)
                    .cloned()
                    .unwrap_or_else(|| format!("x{split_feature}"));
                out.push_str(&format!(
                    "  n{id} [label=\"{} < {threshold}\"];\n",
                    escape(&name)
                ));
                let l = emit(left, names, next, out);
                out.push_str(&format!("  n{id} -> n{l} [label=\"yes\"];\n"));
                let r = emit(right, names, next, out);
                out.push_str(&format!("  n{id} -> n{r} [label=\"no\"];\n"));
            }
        }
        id
    }
    let mut out = String::from("digraph surrogate {\n  node [shape=box];\n");
    let mut next = 0;
    emit(&tree.root, feature_names, &mut next, &mut out);
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(columns: Vec<Vec<f64>>) -> Dataset {
        let names = (0..columns.len()).map(|j| format!("f{j}")).collect();
        Dataset::new(columns, names, None).unwrap()
    }

    fn stump(row: &[f64]) -> f64 {
        if row[0] < 1.5 {
            0.2
        } else {
            0.7
        }
    }

    #[test]
    fn representable_stump_is_recovered_exactly() {
        let data = dataset(vec![vec![0.0, 1.0, 2.0, 3.0, 1.0, 2.5], vec![5.0, 4.0, 3.0, 2.0, 1.0, 0.0]]);
        let report = extract_surrogate(&stump, &data, 2).unwrap();
        assert!((report.fidelity.r2 - 1.0).abs() < 1e-12);
        assert!(report.fidelity.rmse < 1e-12);
        assert!(!report.fidelity.degenerate);
        assert_eq!(report.importance[1], 0.0);
        assert!(report.importance[0] > 0.0);
    }

    #[test]
    fn constant_score_is_degenerate() {
        let data = dataset(vec![vec![0.0, 1.0, 2.0]]);
        let report = extract_surrogate(&|_: &[f64]| 0.3, &data, 3).unwrap();
        assert!(report.tree.root.is_leaf());
        assert_eq!(report.fidelity.rmse, 0.0);
        assert_eq!(report.fidelity.r2, 1.0);
        assert!(report.fidelity.degenerate);
    }

    #[test]
    fn r2_matches_direct_formula() {
        let y = [0.1, 0.5, 0.2, 0.9, 0.4];
        let p = [0.2, 0.4, 0.25, 0.7, 0.45];
        let f = fidelity(&y, &p).unwrap();
        let y_bar = y.iter().sum::<f64>() / 5.0;
        let mut sse = 0.0;
        let mut sst = 0.0;
        for i in 0..5 {
            sse += (y[i] - p[i]).powi(2);
            sst += (y[i] - y_bar).powi(2);
        }
        assert!((f.r2 - (1.0 - sse / sst)).abs() < 1e-12);
        assert!((f.rmse - (sse / 5.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn mape_excludes_zero_targets() {
        let f = fidelity(&[0.0, 2.0, 4.0], &[1.0, 1.0, 5.0]).unwrap();
        assert_eq!(f.mape_excluded, 1);
        assert!((f.mape.unwrap() - 0.375).abs() < 1e-15);
        let all_zero = fidelity(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(all_zero.mape, None);
    }

    #[test]
    fn interactions_record_parent_depth() {
        let tree = DecisionTree {
            root: TreeNode::split(
                2,
                0.0,
                TreeNode::split(1, 0.0, TreeNode::leaf(0.0, 1), TreeNode::leaf(1.0, 1)),
                TreeNode::split(
                    2,
                    1.0,
                    TreeNode::leaf(0.0, 1),
                    TreeNode::split(0, 0.0, TreeNode::leaf(0.0, 1), TreeNode::leaf(1.0, 1)),
                ),
            ),
            max_depth: 3,
            feature_count: 3,
        };
        assert_eq!(
            interactions(&tree),
            vec![
                Interaction { parent: 2, child: 1, depth: 0 },
                Interaction { parent: 2, child: 0, depth: 1 },
            ]
        );
    }

    #[test]
    fn importance_sums_split_gains() {
        let data = dataset(vec![(0..40).map(|i| i as f64).collect(), (0..40).map(|i| ((i * 7) % 11) as f64).collect()]);
        let score = |r: &[f64]| r[0] * 0.1 + if r[1] > 5.0 { 1.0 } else { 0.0 };
        let report = extract_surrogate(&score, &data, 3).unwrap();
        let mut total = 0.0;
        report.tree.root.walk(0, &mut |n, _| {
            if let TreeNode::Split { gain, .. } = n {
                total += gain;
            }
        });
        let sum: f64 = report.importance.iter().sum();
        assert!((sum - total).abs() < 1e-9);
    }

    #[test]
    fn cv_on_stump_is_perfect() {
        let x: Vec<f64> = (0..30).map(|i| (i % 4) as f64).collect();
        let data = dataset(vec![x]);
        let cv = cv_stability(&stump, &data, 1, 3, 9).unwrap();
        assert!((cv.r2.mean - 1.0).abs() < 1e-12);
        assert!(cv.r2.std < 1e-12);
        assert!(cv.rmse.mean < 1e-12);
    }

    #[test]
    fn cv_two_folds_on_four_rows_is_finite() {
        let data = dataset(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let cv = cv_stability(&|r: &[f64]| r[0] * r[0], &data, 2, 2, 1).unwrap();
        assert!(cv.r2.mean.is_finite() && cv.r2.std.is_finite());
        assert!(cv.rmse.mean.is_finite() && cv.rmse.std.is_finite());
        assert_eq!(cv.per_fold.len(), 2);
    }

    #[test]
    fn cv_rejects_bad_folds() {
        let data = dataset(vec![vec![0.0, 1.0]]);
        assert!(cv_stability(&stump, &data, 1, 1, 0).is_err());
        assert!(cv_stability(&stump, &data, 1, 3, 0).is_err());
    }

    #[test]
    fn dot_node_and_edge_counts() {
        let names = vec!["a".to_string(), "b \"q\"".to_string()];
        let leaf = DecisionTree {
            root: TreeNode::leaf(0.5, 4),
            max_depth: 1,
            feature_count: 2,
        };
        let text = export_dot(&leaf, &names);
        assert!(text.starts_with("digraph"));
        assert!(text.contains("label=\"0.5\\ncover = 4\""));
        assert_eq!(text.matches("->").count(), 0);

        let tree = DecisionTree {
            root: TreeNode::split(
                1,
                0.25,
                TreeNode::leaf(0.0, 1),
                TreeNode::split(0, 2.0, TreeNode::leaf(1.0, 1), TreeNode::leaf(2.0, 1)),
            ),
            max_depth: 2,
            feature_count: 2,
        };
        let text = export_dot(&tree, &names);
        let nodes = text.lines().filter(|l| l.contains("[label=") && !l.contains("->")).count();
        assert_eq!(nodes, 2 * tree.n_leaves() - 1);
        assert_eq!(text.matches("->").count(), nodes - 1);
        assert!(text.contains("b \\\"q\\\" < 0.25"));
        assert_eq!(text.matches("[label=\"yes\"]").count(), 2);
    }

    #[test]
    fn report_serializes() {
        let data = dataset(vec![vec![0.0, 1.0, 2.0, 3.0]]);
        let report = extract_surrogate(&stump, &data, 1).unwrap();
        let json = serde_json::to_string(&report).unwrap();
        let back: SurrogateReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, report);
    }
}
