//! Compile deep random forests onto analog CAM arrays and simulate them.
//!
//! The pipeline: [`datasets`] ingests and scales data, [`forest`] trains
//! cascades, [`compiler`] turns trees into array plans, [`device`] and
//! [`simulator`] search those plans, and [`cost`] estimates energy and
//! latency per classification.

pub mod compiler;
pub mod cost;
pub mod datasets;
pub mod device;
pub mod error;
pub mod forest;
pub mod rng;
pub mod scalar;
pub mod simulator;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Cascade = forest::CascadeModel<f64>;
pub type Cascade32 = forest::CascadeModel<f32>;
pub type Tree = forest::DecisionTree<f64>;
pub type Forest = forest::RandomForest<f64>;
pub type Features = datasets::FeatureMatrix<f64>;
