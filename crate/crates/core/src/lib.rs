//! Weak uncertainty inequalities `Var(u) * E(u, u) >= C` on finite metric
//! measure spaces.
//!
//! A space is a weighted graph: vertex masses, edge conductances that define
//! the energy form, and a metric (effective resistance by default). On top of
//! that the crate provides the spatial variance and related functionals,
//! checks of volume growth, Poincaré and Nash hypotheses together with the
//! lower-bound constants they imply, and a sphere-constrained minimizer for
//! the uncertainty product.

pub mod builders;
pub mod error;
pub mod functionals;
pub mod io;
pub mod linalg;
pub mod optimizer;
pub mod report;
pub mod resistance;
pub mod space;
pub mod verifier;

pub use error::{Error, Result};
pub use functionals::ProductVariant;
pub use space::{Ball, Edge, FunctionOnSpace, Metadata, MetricMeasureSpace, MetricSource, SpaceParts};
pub use optimizer::{minimize_product, OptimizerOptions, UncertaintyResult};
pub use report::{run_experiment, validate_config, ExperimentConfig};
pub use verifier::{theorem_lower_bound, HypothesisReport, Theorem};
