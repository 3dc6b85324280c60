//! Score-token image quality assessment: label conversion, error analysis,
//! a small dense-network stack, losses, metrics, datasets and the training
//! pipeline.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod gaussian;
pub mod label;
pub mod losses;
pub mod metrics;
pub mod neural;
pub mod pipeline;
pub mod rng;
pub mod scalar;
pub mod types;

pub use error::{Error, Result};
pub use label::GaussianRating;
pub use scalar::Scalar;
pub use types::{
    EvalReport, IntervalScheme, MosSample, Prediction, SchemeKind, SoftLabel, TokenIndex, LEVELS,
};

/// Exact rational used by the closed-form error analysis.
pub type Rational = num_rational::Ratio<i64>;

pub type SoftLabel64 = SoftLabel<f64>;
pub type SoftLabel32 = SoftLabel<f32>;
pub type IntervalScheme64 = IntervalScheme<f64>;
pub type IntervalScheme32 = IntervalScheme<f32>;
pub type GaussianRating64 = GaussianRating<f64>;
pub type GaussianRating32 = GaussianRating<f32>;
pub type DenseNet64 = neural::DenseNet<f64>;
pub type DenseNet32 = neural::DenseNet<f32>;
pub type ScorerModel64 = pipeline::ScorerModel<f64>;
pub type ScorerModel32 = pipeline::ScorerModel<f32>;
