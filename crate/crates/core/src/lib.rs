//! Robust instrumental-variable estimation by modal aggregation of
//! per-instrument estimators.
//!
//! Each instrument `z_j` yields its own estimate `f̂_j(t, x)` of the causal
//! response. At a test point the shortest interval holding `V` of those
//! estimates is located and the estimates inside it are averaged. When at
//! least `V` instruments are valid and the invalid ones disagree with each
//! other, the modal interval concentrates on the valid estimates.

pub mod basis;
pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod linalg;
pub mod modal;
pub mod sim;
pub mod theorem;

pub use data::{Dataset, SplitSpec, TestPoint};
pub use error::{Error, Result};
pub use estimators::{
    fit_ensemble, fit_estimator, EffectFunction, EnsembleFitConfig, EstimatorKind, EstimatorSpec, FittedEstimator,
};
pub use modal::{aggregate, shortest_interval, AggregationConfig, EnsemblePredictor, ModalInterval};
pub use sim::TruthOracle;
pub use theorem::{simulate_theorem, SyntheticEstimatorSpec};
