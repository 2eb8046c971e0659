//! Centrality-stratified sampling of forum posts for training text classifiers.
//!
//! The pipeline: ingest a forum into a typed graph ([`graph`]), project a
//! population by a selection rule, compute member centrality
//! ([`centrality`]), bin the post distribution it induces and draw
//! proportional or uniform stratified samples ([`strata`]), then vectorize
//! ([`textpipe`]), train ([`classifier`]) and evaluate ([`eval`]).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix it to `f64`.

pub mod centrality;
pub mod classifier;
pub mod error;
pub mod eval;
pub mod graph;
pub mod num;
pub mod pipeline;
pub mod scheme;
pub mod strata;
pub mod synth;
pub mod textpipe;

pub use error::{Error, Result};
pub use num::Scalar;

pub type CentralityVector = centrality::CentralityVector<f64>;
pub type InducedDistribution = strata::InducedDistribution<f64>;
pub type StratifiedSample = strata::StratifiedSample<f64>;
pub type FeatureMatrix = textpipe::FeatureMatrix<f64>;
pub type VectorSpace = textpipe::VectorSpace<f64>;
pub type LinearModel = classifier::LinearModel<f64>;
pub type EvalReport = eval::EvalReport<f64>;
pub type AgreementReport = eval::AgreementReport<f64>;
pub type KappaResult = eval::KappaResult<f64>;
