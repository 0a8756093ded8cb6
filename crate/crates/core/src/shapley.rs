//! Shapley attributions for tree ensembles.
//!
//! Three estimators share one value function `g_x(S)`, the ensemble margin
//! when only the features in `S` are known:
//!
//! * [`shapley_exact`] enumerates every coalition. Because the ensemble is a
//!   sum of trees and a feature a tree never splits on is a dummy player of
//!   that tree's game, the enumeration runs per tree over the features that
//!   tree uses, with the coalition values of each tree memoized by bitmask.
//! * [`shapley_sampled`] averages marginal contributions over random feature
//!   orderings, re-evaluating only the trees that split on the feature being
//!   added.
//! * [`treeinterpreter_path`] credits each split feature with the change in
//!   cover-weighted node mean along the decision path. It is locally
//!   accurate but not consistent.
//!
//! All attributions live in margin (log-odds) space, where they add up
//! exactly; probabilities are reported alongside.
//!
//! A `NaN` entry in the explained row marks a missing feature: it never
//! joins a coalition and its attribution is zero.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::model::{logistic, DecisionTree, GbmModel, TreeNode};
use crate::rng;

/// Largest feature count accepted by [`shapley_exact`].
pub const MAX_EXACT_FEATURES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapleyMethod {
    Exact,
    Sampled,
    Path,
}

/// How absent features are integrated out of a tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Marginalization {
    /// Cover-weighted average over both branches of a split on an absent
    /// feature (the tree's own training distribution).
    #[default]
    PathDependent,
    /// Average over the reference rows with absent features taken from each
    /// reference row.
    Interventional,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyExplanation {
    pub method: ShapleyMethod,
    pub phi: Vec<f64>,
    /// `g_x(empty set)` in margin space.
    pub base_value: f64,
    /// `g_x(all present features)` in margin space.
    pub prediction: f64,
    pub base_value_proba: f64,
    pub prediction_proba: f64,
    /// `true` where the feature is missing from the explained row.
    pub missing_mask: Vec<bool>,
    /// `prediction - base_value - sum(phi)` before any additivity correction.
    pub residual_before_adjustment: f64,
    /// Magnitude of the correction spread over `phi` (sampled method only).
    pub adjustment: f64,
    /// Mean model margin over the reference rows, when reference data was
    /// supplied. Differs from `base_value` under path-dependent
    /// marginalization because covers come from training subsamples.
    pub reference_mean_margin: Option<f64>,
}

impl ShapleyExplanation {
    /// `|prediction - base_value - sum(phi)|` after any adjustment.
    pub fn additivity_error(&self) -> f64 {
        (self.prediction - self.base_value - self.phi.iter().sum::<f64>()).abs()
    }
}

fn check_covers(node: &TreeNode) -> Result<()> {
    if let TreeNode::Split { left, right, .. } = node {
        if left.cover() + right.cover() == 0 {
            return Err(Error::ZeroCover);
        }
        check_covers(left)?;
        check_covers(right)?;
    }
    Ok(())
}

fn expectation_with(node: &TreeNode, x: &[f64], present: &impl Fn(usize) -> bool) -> f64 {
    match node {
        TreeNode::Leaf { leaf_value, .. } => *leaf_value,
        TreeNode::Split {
            split_feature,
            threshold,
            left,
            right,
            ..
        } => {
            if present(*split_feature) {
                let next = if x[*split_feature] < *threshold { left } else { right };
                expectation_with(next, x, present)
            } else {
                let (cl, cr) = (left.cover() as f64, right.cover() as f64);
                (cl * expectation_with(left, x, present) + cr * expectation_with(right, x, present))
                    / (cl + cr)
            }
        }
    }
}

/// Expected tree output when only the features flagged in `present` are
/// known; splits on other features average their children by cover.
pub fn tree_expectation(tree: &DecisionTree, x: &[f64], present: &[bool]) -> Result<f64> {
    if present.len() != tree.feature_count || x.len() != tree.feature_count {
        return Err(Error::Shape(format!(
            "tree over {} features, row of {} and mask of {}",
            tree.feature_count,
            x.len(),
            present.len()
        )));
    }
    check_covers(&tree.root)?;
    Ok(expectation_with(&tree.root, x, &|f| present[f]))
}

/// Shapley kernel weight `s! (k - s - 1)! / k!`.
pub fn shapley_weight(s: usize, k: usize) -> f64 {
    // 1 / (k * C(k-1, s))
    let mut binom = 1.0;
    for i in 0..s {
        binom = binom * (k - 1 - i) as f64 / (i + 1) as f64;
    }
    1.0 / (k as f64 * binom)
}

/// Reference rows converted once for repeated explanations.
pub struct ReferenceData {
    rows: Matrix,
    mean_margin: f64,
}

impl ReferenceData {
    pub fn new(model: &GbmModel, data: &Dataset) -> Result<Option<Self>> {
        if data.n_cols() != model.feature_count() {
            return Err(Error::Shape(format!(
                "reference has {} features, model expects {}",
                data.n_cols(),
                model.feature_count()
            )));
        }
        if data.n_rows() == 0 {
            return Ok(None);
        }
        let rows = data.to_matrix();
        let mean_margin =
            rows.rows().map(|r| model.predict_margin(r)).sum::<f64>() / rows.n_rows() as f64;
        Ok(Some(Self { rows, mean_margin }))
    }
}

fn prepare_reference(model: &GbmModel, data: Option<&Dataset>) -> Result<Option<ReferenceData>> {
    match data {
        Some(d) => ReferenceData::new(model, d),
        None => Ok(None),
    }
}

struct Prepared<'a> {
    x: &'a [f64],
    missing: Vec<bool>,
    marginalization: Marginalization,
    reference: Option<&'a ReferenceData>,
}

impl<'a> Prepared<'a> {
    fn new(
        model: &GbmModel,
        x: &'a [f64],
        reference: Option<&'a ReferenceData>,
        marginalization: Marginalization,
    ) -> Result<Self> {
        let p = model.feature_count();
        if x.len() != p {
            return Err(Error::Shape(format!("row has {} values, model expects {p}", x.len())));
        }
        for tree in model.active_trees() {
            check_covers(&tree.root)?;
        }
        if marginalization == Marginalization::Interventional && reference.is_none() {
            return Err(Error::InvalidArgument(
                "interventional marginalization needs reference rows".into(),
            ));
        }
        Ok(Self {
            x,
            missing: x.iter().map(|v| v.is_nan()).collect(),
            marginalization,
            reference,
        })
    }

    /// Expected output of one tree given the known features.
    fn tree_value(&self, tree: &DecisionTree, present: &impl Fn(usize) -> bool) -> f64 {
        match self.marginalization {
            Marginalization::PathDependent => expectation_with(&tree.root, self.x, present),
            Marginalization::Interventional => {
                let reference = &self.reference.expect("checked in new").rows;
                let mut z = vec![0.0; self.x.len()];
                let mut total = 0.0;
                for r in reference.rows() {
                    for (f, v) in z.iter_mut().enumerate() {
                        *v = if present(f) { self.x[f] } else { r[f] };
                    }
                    total += tree.predict(&z);
                }
                total / reference.n_rows() as f64
            }
        }
    }

    fn finish(
        &self,
        method: ShapleyMethod,
        phi: Vec<f64>,
        base_value: f64,
        prediction: f64,
    ) -> ShapleyExplanation {
        let residual = prediction - base_value - phi.iter().sum::<f64>();
        ShapleyExplanation {
            method,
            phi,
            base_value,
            prediction,
            base_value_proba: logistic(base_value),
            prediction_proba: logistic(prediction),
            missing_mask: self.missing.clone(),
            residual_before_adjustment: residual,
            adjustment: 0.0,
            reference_mean_margin: self.reference.map(|r| r.mean_margin),
        }
    }
}

/// Exact Shapley values by coalition enumeration.
///
/// `reference` supplies the rows for interventional marginalization and the
/// reported mean margin; it may be `None` for the path-dependent default.
pub fn shapley_exact(
    model: &GbmModel,
    x: &[f64],
    reference: Option<&Dataset>,
    marginalization: Marginalization,
) -> Result<ShapleyExplanation> {
    let reference = prepare_reference(model, reference)?;
    exact_with(model, x, reference.as_ref(), marginalization)
}

fn exact_with(
    model: &GbmModel,
    x: &[f64],
    reference: Option<&ReferenceData>,
    marginalization: Marginalization,
) -> Result<ShapleyExplanation> {
    let p = model.feature_count();
    if p > MAX_EXACT_FEATURES {
        return Err(Error::TooManyFeatures {
            got: p,
            max: MAX_EXACT_FEATURES,
        });
    }
    let prep = Prepared::new(model, x, reference, marginalization)?;
    let mut phi = vec![0.0; p];
    let mut base_sum = 0.0;
    let mut full_sum = 0.0;
    let mut bit_of = vec![usize::MAX; p];
    for tree in model.active_trees() {
        let players: Vec<usize> = tree
            .used_features()
            .into_iter()
            .filter(|&f| !prep.missing[f])
            .collect();
        let k = players.len();
        for f in 0..p {
            bit_of[f] = usize::MAX;
        }
        for (b, &f) in players.iter().enumerate() {
            bit_of[f] = b;
        }
        let values: Vec<f64> = (0..1usize << k)
            .map(|mask| {
                prep.tree_value(tree, &|f| {
                    let b = bit_of[f];
                    b != usize::MAX && mask >> b & 1 == 1
                })
            })
            .collect();
        base_sum += values[0];
        full_sum += values[(1 << k) - 1];
        if k == 0 {
            continue;
        }
        let weights: Vec<f64> = (0..k).map(|s| shapley_weight(s, k)).collect();
        for mask in 0..(1usize << k) {
            let w = weights.get(mask.count_ones() as usize).copied().unwrap_or(0.0);
            for (b, &f) in players.iter().enumerate() {
                if mask >> b & 1 == 0 {
                    phi[f] += model.learning_rate * w * (values[mask | 1 << b] - values[mask]);
                }
            }
        }
    }
    let base = model.base_score + model.learning_rate * base_sum;
    let prediction = model.base_score + model.learning_rate * full_sum;
    Ok(prep.finish(ShapleyMethod::Exact, phi, base, prediction))
}

fn factorial_at_most(n: usize, limit: usize) -> Option<usize> {
    let mut acc: usize = 1;
    for i in 2..=n {
        acc = acc.checked_mul(i)?;
        if acc > limit {
            return None;
        }
    }
    Some(acc)
}

/// Lexicographic successor; `false` once the last permutation is reached.
fn next_permutation(v: &mut [usize]) -> bool {
    let n = v.len();
    if n < 2 {
        return false;
    }
    let mut i = n - 1;
    while i > 0 && v[i - 1] >= v[i] {
        i -= 1;
    }
    if i == 0 {
        return false;
    }
    let mut j = n - 1;
    while v[j] <= v[i - 1] {
        j -= 1;
    }
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Permutation-sampling Shapley estimate.
///
/// When `n_permutations` is at least the number of orderings of the present
/// features, every ordering is enumerated once instead, which reproduces the
/// exact values. The estimate is then made additive by spreading the
/// residual over the features in proportion to `|phi|`.
pub fn shapley_sampled(
    model: &GbmModel,
    x: &[f64],
    reference: Option<&Dataset>,
    marginalization: Marginalization,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyExplanation> {
    let reference = prepare_reference(model, reference)?;
    sampled_with(model, x, reference.as_ref(), marginalization, n_permutations, seed)
}

fn sampled_with(
    model: &GbmModel,
    x: &[f64],
    reference: Option<&ReferenceData>,
    marginalization: Marginalization,
    n_permutations: usize,
    seed: u64,
) -> Result<ShapleyExplanation> {
    if n_permutations == 0 {
        return Err(Error::InvalidArgument("n_permutations must be at least 1".into()));
    }
    let prep = Prepared::new(model, x, reference, marginalization)?;
    let p = model.feature_count();
    let trees = model.active_trees();
    let players: Vec<usize> = (0..p).filter(|&f| !prep.missing[f]).collect();
    let mut trees_using: Vec<Vec<usize>> = vec![Vec::new(); p];
    for (t, tree) in trees.iter().enumerate() {
        for f in tree.used_features() {
            trees_using[f].push(t);
        }
    }

    let none_present = |_: usize| false;
    let empty_values: Vec<f64> = trees.iter().map(|t| prep.tree_value(t, &none_present)).collect();
    let base = model.base_score + model.learning_rate * empty_values.iter().sum::<f64>();

    let mut phi = vec![0.0; p];
    let mut present = vec![false; p];
    let mut current = empty_values.clone();
    let mut walk = |order: &[usize], phi: &mut [f64]| {
        present.iter_mut().for_each(|v| *v = false);
        current.copy_from_slice(&empty_values);
        for &f in order {
            present[f] = true;
            let mut delta = 0.0;
            for &t in &trees_using[f] {
                let v = prep.tree_value(&trees[t], &|g| present[g]);
                delta += v - current[t];
                current[t] = v;
            }
            phi[f] += model.learning_rate * delta;
        }
    };

    let exhaustive = factorial_at_most(players.len(), n_permutations);
    let count = match exhaustive {
        Some(total) => {
            let mut order = players.clone();
            loop {
                walk(&order, &mut phi);
                if !next_permutation(&mut order) {
                    break;
                }
            }
            total
        }
        None => {
            let mut rng = rng::seeded(seed);
            let mut order = players.clone();
            for _ in 0..n_permutations {
                order.shuffle(&mut rng);
                walk(&order, &mut phi);
            }
            n_permutations
        }
    };
    for v in &mut phi {
        *v /= count as f64;
    }

    let all_present = |f: usize| !prep.missing[f];
    let prediction = model.base_score
        + model.learning_rate * trees.iter().map(|t| prep.tree_value(t, &all_present)).sum::<f64>();
    let mut explanation = prep.finish(ShapleyMethod::Sampled, phi, base, prediction);
    let residual = explanation.residual_before_adjustment;
    if residual != 0.0 && !players.is_empty() {
        let total_abs: f64 = explanation.phi.iter().map(|v| v.abs()).sum();
        for &f in &players {
            let share = if total_abs > 0.0 {
                explanation.phi[f].abs() / total_abs
            } else {
                1.0 / players.len() as f64
            };
            explanation.phi[f] += residual * share;
        }
        explanation.adjustment = residual.abs();
    }
    Ok(explanation)
}

/// Decision-path attribution in the style of treeinterpreter.
pub fn treeinterpreter_path(model: &GbmModel, x: &[f64]) -> Result<ShapleyExplanation> {
    let p = model.feature_count();
    if x.len() != p {
        return Err(Error::Shape(format!("row has {} values, model expects {p}", x.len())));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::InvalidArgument(
            "path attribution does not support missing values".into(),
        ));
    }
    let mut phi = vec![0.0; p];
    let mut base_sum = 0.0;
    let mut pred_sum = 0.0;
    for tree in model.active_trees() {
        check_covers(&tree.root)?;
        let mut node = &tree.root;
        let mut mean = node.mean_value();
        base_sum += mean;
        while let TreeNode::Split {
            split_feature,
            threshold,
            left,
            right,
            ..
        } = node
        {
            node = if x[*split_feature] < *threshold { left } else { right };
            let child_mean = node.mean_value();
            phi[*split_feature] += model.learning_rate * (child_mean - mean);
            mean = child_mean;
        }
        pred_sum += mean;
    }
    let base = model.base_score + model.learning_rate * base_sum;
    let prediction = model.base_score + model.learning_rate * pred_sum;
    let residual = prediction - base - phi.iter().sum::<f64>();
    Ok(ShapleyExplanation {
        method: ShapleyMethod::Path,
        phi,
        base_value: base,
        prediction,
        base_value_proba: logistic(base),
        prediction_proba: logistic(prediction),
        missing_mask: vec![false; p],
        residual_before_adjustment: residual,
        adjustment: 0.0,
        reference_mean_margin: None,
    })
}

/// Settings for explaining many rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub method: ShapleyMethod,
    /// Explain at most this many rows (seeded subsample when smaller than
    /// the data).
    pub budget: Option<usize>,
    pub n_permutations: usize,
    pub marginalization: Marginalization,
    pub seed: u64,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        Self {
            method: ShapleyMethod::Exact,
            budget: None,
            n_permutations: 64,
            marginalization: Marginalization::PathDependent,
            seed: crate::DEFAULT_SEED,
        }
    }
}

/// Explain one row with the chosen method.
pub fn explain_row(
    model: &GbmModel,
    x: &[f64],
    reference: Option<&ReferenceData>,
    options: &SummaryOptions,
    row_seed: u64,
) -> Result<ShapleyExplanation> {
    match options.method {
        ShapleyMethod::Exact => exact_with(model, x, reference, options.marginalization),
        ShapleyMethod::Sampled => sampled_with(
            model,
            x,
            reference,
            options.marginalization,
            options.n_permutations,
            row_seed,
        ),
        ShapleyMethod::Path => treeinterpreter_path(model, x),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSummary {
    pub feature: usize,
    pub mean_abs_phi: f64,
    pub phi_values: Vec<f64>,
    pub feature_values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryReport {
    pub method: ShapleyMethod,
    /// Dataset rows that were explained.
    pub rows: Vec<usize>,
    pub features: Vec<FeatureSummary>,
    /// Feature indices by descending mean `|phi|` (ties: lower index first).
    pub ordering: Vec<usize>,
}

pub fn summarize(
    model: &GbmModel,
    data: &Dataset,
    reference: Option<&Dataset>,
    options: &SummaryOptions,
) -> Result<SummaryReport> {
    if data.n_rows() == 0 {
        return Err(Error::Empty("dataset"));
    }
    let reference = prepare_reference(model, reference)?;
    let rows: Vec<usize> = match options.budget {
        Some(b) if b < data.n_rows() => {
            let mut r = rng::sample_without_replacement(
                data.n_rows(),
                b,
                &mut rng::seeded(options.seed),
            );
            r.sort_unstable();
            r
        }
        _ => (0..data.n_rows()).collect(),
    };
    let explanations: Vec<ShapleyExplanation> = rows
        .par_iter()
        .map(|&i| {
            explain_row(
                model,
                &data.row(i),
                reference.as_ref(),
                options,
                rng::derive_seed(options.seed, i as u64),
            )
        })
        .collect::<Result<_>>()?;
    let p = data.n_cols();
    let features: Vec<FeatureSummary> = (0..p)
        .map(|j| {
            let phi_values: Vec<f64> = explanations.iter().map(|e| e.phi[j]).collect();
            FeatureSummary {
                feature: j,
                mean_abs_phi: phi_values.iter().map(|v| v.abs()).sum::<f64>() / rows.len() as f64,
                phi_values,
                feature_values: rows.iter().map(|&i| data.get(i, j)).collect(),
            }
        })
        .collect();
    let mut ordering: Vec<usize> = (0..p).collect();
    ordering.sort_by(|&a, &b| {
        features[b]
            .mean_abs_phi
            .total_cmp(&features[a].mean_abs_phi)
            .then(a.cmp(&b))
    });
    Ok(SummaryReport {
        method: options.method,
        rows,
        features,
        ordering,
    })
}
