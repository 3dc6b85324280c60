//! Numerical checks of conversion, restoration and approximation errors.

mod deqa;
mod qalign;
mod quad;
mod uat;

use serde::{Deserialize, Serialize};

pub use deqa::{
    deqa_label_error, deqa_label_studies, deqa_midpoint_bound, deqa_sigma_restoration_study,
    h_second_derivative, rating_grid, truncated_first_moment, LabelError, MidpointBound,
    SigmaRestoration, DEFAULT_BOUND_GRID, MIN_BOUND_GRID, MIN_PANELS, QUADRATURE_TOL, SUPPORT,
};
pub use qalign::{
    error_interval, interval_mean_error, interval_second_moment, interval_square_integral,
    qalign_error_analytic, qalign_error_analytic_exact, qalign_error_analytic_in, qalign_error_mc,
    qalign_error_mc_sequential, qalign_error_mc_with, qalign_sq_error, ScoreDistribution, MC_BATCH,
};
pub use quad::simpson;
pub use uat::{uat_capacity_sweep, uat_demo, uat_run, UatConfig, UatResult, UatTarget, EVAL_GRID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StudyMethod {
    #[serde(rename = "qalign")]
    QAlign,
    #[serde(rename = "deqa-raw")]
    DeQARaw,
    #[serde(rename = "deqa-enhanced")]
    DeQAEnhanced,
    Regression,
}

/// Estimate of an expected squared error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStudy {
    pub method: StudyMethod,
    /// Estimated `E[ε²]`, never negative.
    pub estimate: f64,
    pub analytic: Option<f64>,
    /// Standard error of a Monte-Carlo estimate.
    pub std_error: Option<f64>,
    pub samples: usize,
    pub seed: u64,
}
