//! Explanation toolkit for binary classifiers.
//!
//! The crate trains a small gradient-boosted tree ensemble with optional
//! monotone constraints ([`model`]) and explains any scoring function with
//! global surrogate trees ([`surrogate`]), partial dependence and ICE curves
//! ([`pdice`]), sparse local linear surrogates ([`lime`]) and Shapley
//! attributions ([`shapley`]).
//!
//! Every explainer consumes the [`ScoreFn`] trait, so a trained
//! [`GbmModel`], a single [`DecisionTree`] or a plain closure can be explained
//! the same way.

pub mod data;
pub mod error;
pub mod lime;
pub mod model;
pub mod pdice;
pub mod rng;
pub mod shapley;
pub mod surrogate;

pub use data::{ColumnStats, Dataset, FeatureDistribution, Matrix, SimConfig};
pub use error::{Error, Result};
pub use lime::{LimeConfig, LimeExplanation};
pub use model::{
    auc, fit_gbm, fit_tree, DecisionTree, GbmConfig, GbmModel, ModelDocument, ScoreFn, TreeConfig,
    TreeNode,
};
pub use pdice::PdIceResult;
pub use shapley::{Marginalization, ReferenceData, ShapleyExplanation, ShapleyMethod, SummaryReport};
pub use surrogate::SurrogateReport;

/// Seed used whenever a caller does not supply one.
pub const DEFAULT_SEED: u64 = 12345;
