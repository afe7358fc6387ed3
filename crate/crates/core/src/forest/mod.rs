//! CART trees, random forests and the layered cascade (deep random forest).
//!
//! Split semantics everywhere: a sample goes left iff `feature <= threshold`.
//! Tree traversal here is the reference against which compiled ACAM plans are
//! checked.

mod cascade;
mod distribution;
mod ensemble;
mod tree;

pub use cascade::{
    predict_cascade, train_cascade, train_cascade_with_eval, CascadeModel, CascadeParams, LayerReport, TrainingReport,
};
pub use distribution::ClassDistribution;
pub use ensemble::{bootstrap_indices, train_forest, ForestParams, RandomForest};
pub use tree::{train_tree, train_tree_on, DecisionTree, FeaturesPerSplit, Flavor, Node, TreeParams};
