//! Binomial-deviance gradient boosting with monotone constraints.

use serde::{Deserialize, Serialize};

use super::metrics::{auc, log_loss};
use super::tree::{grow, DecisionTree, TreeConfig, TreeProblem};
use crate::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::rng;

/// Leaf values (Newton steps in log-odds) are clamped to this magnitude.
pub const MAX_LEAF_STEP: f64 = 4.0;

const MIN_HESSIAN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmConfig {
    pub learning_rate: f64,
    pub subsample: f64,
    pub colsample: f64,
    pub max_depth: usize,
    pub max_rounds: usize,
    pub early_stopping_rounds: usize,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbmConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.08,
            subsample: 0.9,
            colsample: 0.9,
            max_depth: 5,
            max_rounds: 1000,
            early_stopping_rounds: 50,
            min_samples_leaf: 5,
            seed: crate::DEFAULT_SEED,
        }
    }
}

impl GbmConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |v: f64| v > 0.0 && v <= 1.0;
        if !frac(self.learning_rate) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            )));
        }
        if !frac(self.subsample) || !frac(self.colsample) {
            return Err(Error::InvalidArgument(
                "subsample and colsample must be in (0, 1]".into(),
            ));
        }
        if self.max_depth == 0 {
            return Err(Error::InvalidArgument("max_depth must be at least 1".into()));
        }
        Ok(())
    }
}

/// Additive tree ensemble scored as
/// `logistic(base_score + learning_rate * sum(tree outputs))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbmModel {
    pub trees: Vec<DecisionTree>,
    pub learning_rate: f64,
    pub base_score: f64,
    pub constraints: Vec<i8>,
    /// Number of leading trees used for prediction.
    pub best_round: usize,
}

pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

impl GbmModel {
    /// Width of the rows the model scores: the constraint vector's length
    /// for trained models, otherwise the widest tree.
    pub fn feature_count(&self) -> usize {
        if self.constraints.is_empty() {
            self.trees.iter().map(|t| t.feature_count).max().unwrap_or(0)
        } else {
            self.constraints.len()
        }
    }

    /// Trees that take part in prediction.
    pub fn active_trees(&self) -> &[DecisionTree] {
        &self.trees[..self.best_round.min(self.trees.len())]
    }

    pub fn predict_margin(&self, row: &[f64]) -> f64 {
        let sum: f64 = self.active_trees().iter().map(|t| t.predict(row)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_proba(&self, row: &[f64]) -> f64 {
        logistic(self.predict_margin(row))
    }

    pub fn predict(&self, rows: &Matrix) -> Vec<f64> {
        rows.rows().map(|r| self.predict_proba(r)).collect()
    }
}

/// Per-round training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub train_log_loss: f64,
    pub valid_auc: f64,
}

pub fn fit_gbm(
    train: &Dataset,
    valid: &Dataset,
    config: &GbmConfig,
    constraints: &[i8],
) -> Result<GbmModel> {
    fit_gbm_traced(train, valid, config, constraints).map(|(m, _)| m)
}

/// Like [`fit_gbm`], also returning the per-round training log-loss and
/// validation AUC.
pub fn fit_gbm_traced(
    train: &Dataset,
    valid: &Dataset,
    config: &GbmConfig,
    constraints: &[i8],
) -> Result<(GbmModel, Vec<RoundRecord>)> {
    config.validate()?;
    if train.n_rows() == 0 || valid.n_rows() == 0 {
        return Err(Error::Empty("training or validation data"));
    }
    if train.n_cols() != valid.n_cols() {
        return Err(Error::Shape(format!(
            "train has {} features, validation has {}",
            train.n_cols(),
            valid.n_cols()
        )));
    }
    let p = train.n_cols();
    let constraints = if constraints.is_empty() {
        vec![0; p]
    } else if constraints.len() == p {
        constraints.to_vec()
    } else {
        return Err(Error::Shape(format!("{} constraints for {p} features", constraints.len())));
    };
    if constraints.iter().any(|c| !(-1..=1).contains(c)) {
        return Err(Error::InvalidArgument("constraints must be -1, 0 or 1".into()));
    }
    let (y_train, y_valid) = match (train.labels(), valid.labels()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::InvalidArgument("training and validation data need labels".into())),
    };
    let positives = y_train.iter().filter(|&&y| y == 1).count();
    if positives == 0 || positives == y_train.len() {
        return Err(Error::SingleClass);
    }
    let valid_pos = y_valid.iter().filter(|&&y| y == 1).count();
    if valid_pos == 0 || valid_pos == y_valid.len() {
        return Err(Error::SingleClass);
    }

    let n = train.n_rows();
    let base_score = logit(positives as f64 / n as f64);
    let y: Vec<f64> = y_train.iter().map(|&v| f64::from(v)).collect();
    let mut margin = vec![base_score; n];
    let train_matrix = train.to_matrix();
    let valid_matrix = valid.to_matrix();
    let mut valid_margin = vec![base_score; valid.n_rows()];

    let n_sub = ((config.subsample * n as f64).round() as usize).clamp(1, n);
    let n_col = ((config.colsample * p as f64).round() as usize).clamp(1, p.max(1));
    let tree_config = TreeConfig {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
    };
    let mut rng = rng::seeded(config.seed);
    let mut trees = Vec::new();
    let mut history = Vec::new();
    let mut working = vec![0.0; n];
    let mut hessian = vec![0.0; n];
    let (mut best_auc, mut best_round) = (f64::NEG_INFINITY, 0);

    for round in 0..config.max_rounds {
        for i in 0..n {
            let prob = logistic(margin[i]);
            let h = (prob * (1.0 - prob)).max(MIN_HESSIAN);
            hessian[i] = h;
            working[i] = (y[i] - prob) / h;
        }
        let mut rows = if n_sub == n {
            (0..n).collect()
        } else {
            rng::sample_without_replacement(n, n_sub, &mut rng)
        };
        rows.sort_unstable();
        let mut features = if n_col == p {
            (0..p).collect()
        } else {
            rng::sample_without_replacement(p, n_col, &mut rng)
        };
        features.sort_unstable();

        let tree = grow(&TreeProblem {
            columns: train.columns(),
            targets: &working,
            weights: &hessian,
            rows: &rows,
            features: &features,
            config: tree_config,
            constraints: &constraints,
            bounds: (-MAX_LEAF_STEP, MAX_LEAF_STEP),
        });

        for (i, m) in margin.iter_mut().enumerate() {
            *m += config.learning_rate * tree.predict(train_matrix.row(i));
        }
        for (i, m) in valid_margin.iter_mut().enumerate() {
            *m += config.learning_rate * tree.predict(valid_matrix.row(i));
        }
        trees.push(tree);

        let valid_auc = auc(&valid_margin, y_valid)?;
        history.push(RoundRecord {
            round: round + 1,
            train_log_loss: log_loss(&margin, y_train),
            valid_auc,
        });
        if valid_auc > best_auc {
            best_auc = valid_auc;
            best_round = round + 1;
        } else if round + 1 - best_round >= config.early_stopping_rounds {
            break;
        }
    }

    trees.truncate(best_round);
    Ok((
        GbmModel {
            trees,
            learning_rate: config.learning_rate,
            base_score,
            constraints,
            best_round,
        },
        history,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_signal, split, SimConfig};

    fn separable() -> (Dataset, Dataset) {
        let x: Vec<f64> = (0..40).map(|i| i as f64 / 4.0).collect();
        let y: Vec<u8> = x.iter().map(|&v| u8::from(v >= 5.0)).collect();
        let d = Dataset::new(vec![x], vec!["x".into()], Some(y)).unwrap();
        (d.clone(), d)
    }

    #[test]
    fn separable_data_is_learned() {
        let (train, valid) = separable();
        let cfg = GbmConfig {
            subsample: 1.0,
            colsample: 1.0,
            max_rounds: 60,
            early_stopping_rounds: 1000,
            min_samples_leaf: 1,
            ..GbmConfig::default()
        };
        let (model, history) = fit_gbm_traced(&train, &valid, &cfg, &[]).unwrap();
        for w in history.windows(2).take(10) {
            assert!(w[1].train_log_loss < w[0].train_log_loss);
        }
        let preds = model.predict(&train.to_matrix());
        let correct = preds
            .iter()
            .zip(train.labels().unwrap())
            .filter(|(p, &y)| (**p >= 0.5) == (y == 1))
            .count();
        assert_eq!(correct, train.n_rows());
    }

    #[test]
    fn log_loss_non_increasing_without_sampling() {
        let data = simulate_signal(&SimConfig { n_rows: 600, ..SimConfig::default() }).unwrap();
        let (train, valid) = split(&data, 0.3, 1).unwrap();
        let cfg = GbmConfig {
            subsample: 1.0,
            colsample: 1.0,
            max_depth: 3,
            max_rounds: 40,
            early_stopping_rounds: 1000,
            ..GbmConfig::default()
        };
        let (_, history) = fit_gbm_traced(&train, &valid, &cfg, &[]).unwrap();
        for w in history.windows(2) {
            assert!(w[1].train_log_loss <= w[0].train_log_loss + 1e-12, "{w:?}");
        }
    }

    #[test]
    fn zero_trees_and_stump_closed_forms() {
        let empty = GbmModel {
            trees: vec![],
            learning_rate: 0.1,
            base_score: 0.3,
            constraints: vec![0],
            best_round: 0,
        };
        assert_eq!(empty.predict_proba(&[5.0]), logistic(0.3));

        use super::super::tree::TreeNode;
        let stump = GbmModel {
            trees: vec![DecisionTree {
                root: TreeNode::split(0, 0.0, TreeNode::leaf(-1.0, 1), TreeNode::leaf(1.0, 1)),
                max_depth: 1,
                feature_count: 1,
            }],
            learning_rate: 1.0,
            base_score: 0.0,
            constraints: vec![0],
            best_round: 1,
        };
        assert_eq!(stump.predict_proba(&[-1.0]), logistic(-1.0));
        assert_eq!(stump.predict_proba(&[1.0]), logistic(1.0));
    }

    #[test]
    fn training_is_deterministic_and_covers_match_subsample() {
        let data = simulate_signal(&SimConfig { n_rows: 500, ..SimConfig::default() }).unwrap();
        let (train, valid) = split(&data, 0.3, 3).unwrap();
        let cfg = GbmConfig {
            max_rounds: 15,
            max_depth: 3,
            ..GbmConfig::default()
        };
        let a = fit_gbm(&train, &valid, &cfg, &[]).unwrap();
        let b = fit_gbm(&train, &valid, &cfg, &[]).unwrap();
        assert_eq!(a, b);
        let expected_cover = (0.9 * train.n_rows() as f64).round() as usize;
        for t in &a.trees {
            assert_eq!(t.root.cover(), expected_cover);
            t.validate().unwrap();
        }
        assert_eq!(a.trees.len(), a.best_round);
    }

    #[test]
    fn rejects_single_class_and_bad_config() {
        let d = Dataset::new(vec![vec![1.0, 2.0]], vec!["a".into()], Some(vec![1, 1])).unwrap();
        assert!(matches!(
            fit_gbm(&d, &d, &GbmConfig::default(), &[]),
            Err(Error::SingleClass)
        ));
        let (train, valid) = separable();
        let bad = GbmConfig {
            learning_rate: 0.0,
            ..GbmConfig::default()
        };
        assert!(fit_gbm(&train, &valid, &bad, &[]).is_err());
    }

    #[test]
    fn prediction_is_row_order_invariant() {
        let data = simulate_signal(&SimConfig { n_rows: 400, ..SimConfig::default() }).unwrap();
        let (train, valid) = split(&data, 0.3, 3).unwrap();
        let model = fit_gbm(
            &train,
            &valid,
            &GbmConfig { max_rounds: 10, ..GbmConfig::default() },
            &[],
        )
        .unwrap();
        let m = valid.to_matrix();
        let preds = model.predict(&m);
        let perm: Vec<usize> = (0..m.n_rows()).rev().collect();
        let permuted = valid.select_rows(&perm).to_matrix();
        let mut back = vec![0.0; perm.len()];
        for (k, p) in model.predict(&permuted).into_iter().enumerate() {
            back[perm[k]] = p;
        }
        assert_eq!(preds, back);
        assert!(preds.iter().all(|p| (0.0..=1.0).contains(p)));
    }
}
