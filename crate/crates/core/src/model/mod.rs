//! Decision trees, gradient boosting and the scoring interface consumed by
//! every explainer.

mod gbm;
mod metrics;
mod tree;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use gbm::{
    fit_gbm, fit_gbm_traced, logistic, logit, GbmConfig, GbmModel, RoundRecord, MAX_LEAF_STEP,
};
pub use metrics::{auc, log_loss};
pub use tree::{fit_tree, DecisionTree, TreeConfig, TreeNode};

use crate::data::Matrix;
use crate::error::{Error, Result};

/// A deterministic, row-order preserving scoring function.
///
/// Implemented for [`GbmModel`] (probability of the positive class),
/// [`DecisionTree`] (leaf value) and any `Fn(&[f64]) -> f64 + Sync` closure.
pub trait ScoreFn: Sync {
    fn score(&self, row: &[f64]) -> f64;

    fn score_matrix(&self, rows: &Matrix) -> Vec<f64> {
        if rows.n_rows() >= 2048 {
            (0..rows.n_rows())
                .into_par_iter()
                .map(|i| self.score(rows.row(i)))
                .collect()
        } else {
            rows.rows().map(|r| self.score(r)).collect()
        }
    }
}

impl ScoreFn for GbmModel {
    fn score(&self, row: &[f64]) -> f64 {
        self.predict_proba(row)
    }
}

impl ScoreFn for DecisionTree {
    fn score(&self, row: &[f64]) -> f64 {
        self.predict(row)
    }
}

impl<F> ScoreFn for F
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    fn score(&self, row: &[f64]) -> f64 {
        self(row)
    }
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub format_version: u32,
    pub feature_names: Vec<String>,
    pub model: GbmModel,
}

impl ModelDocument {
    pub fn new(feature_names: Vec<String>, model: GbmModel) -> Self {
        Self {
            format_version: MODEL_FORMAT_VERSION,
            feature_names,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion(doc.format_version));
        }
        if doc.feature_names.len() != doc.model.feature_count() {
            return Err(Error::Shape(format!(
                "{} feature names for a model over {} features",
                doc.feature_names.len(),
                doc.model.feature_count()
            )));
        }
        for tree in &doc.model.trees {
            tree.validate()?;
        }
        Ok(doc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{simulate_signal, split, SimConfig};

    #[test]
    fn model_document_round_trip() {
        let data = simulate_signal(&SimConfig { n_rows: 400, ..SimConfig::default() }).unwrap();
        let (train, valid) = split(&data, 0.3, 5).unwrap();
        let model = fit_gbm(
            &train,
            &valid,
            &GbmConfig { max_rounds: 12, ..GbmConfig::default() },
            &[1, 0, 0, -1, 0, 0, 0, 0, 0, 0, 0, 0],
        )
        .unwrap();
        let doc = ModelDocument::new(data.feature_names().to_vec(), model);
        let text = doc.to_json().unwrap();
        assert!(text.contains("\"split_feature\""));
        assert!(text.contains("\"leaf_value\""));
        assert!(text.contains("\"cover\""));
        let back = ModelDocument::from_json(&text).unwrap();
        assert_eq!(doc, back);
    }

    #[test]
    fn model_document_rejects_unknown_version() {
        let doc = ModelDocument {
            format_version: 99,
            feature_names: vec![],
            model: GbmModel {
                trees: vec![],
                learning_rate: 0.1,
                base_score: 0.0,
                constraints: vec![],
                best_round: 0,
            },
        };
        let text = serde_json::to_string(&doc).unwrap();
        assert!(matches!(
            ModelDocument::from_json(&text),
            Err(Error::UnsupportedVersion(99))
        ));
    }

    #[test]
    fn closures_are_score_functions() {
        let f = |r: &[f64]| r[0] * 2.0;
        let m = Matrix::from_rows(&[vec![1.0], vec![3.0]]).unwrap();
        assert_eq!(f.score_matrix(&m), vec![2.0, 6.0]);
    }
}
