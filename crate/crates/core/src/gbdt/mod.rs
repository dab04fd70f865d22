//! Second-order gradient-boosted decision trees for the binary hazard label.
//!
//! Training follows the Newton-boosting recipe with logistic loss and exact
//! greedy split search. Every node records its training cover (instance
//! count), which the path-dependent SHAP explainer in [`crate::shap`] needs.

mod metrics;
mod train;
mod tree;
mod tuning;

pub use metrics::{confusion, f1, Confusion};
pub use train::{fit, logistic_loss, train, Fitted, TrainOptions};
pub use tree::{Hyperparameters, Node, NodeKind, Tree, TreeEnsemble};
pub use tuning::{
    cross_validate, finish_search, random_search, select_best, split_train_test, stratified_folds, CvConfig, CvOutcome,
    IntRange, Range, SearchOutcome, SearchSpace, Split, Trial,
};
