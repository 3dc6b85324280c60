use qscorer_core::label::{
    deqa_enhance_detailed, deqa_raw_soft_label, deqa_restore, GaussianRating,
};
use qscorer_core::types::{IntervalScheme, LEVELS};
use serde::Serialize;

use crate::args::SoftlabelArgs;
use crate::exit::CliError;
use crate::output::{print_line, OutDir};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct RawReport {
    pub probs: [f64; LEVELS],
    pub mass: f64,
    pub mass_deficit: f64,
    /// `Σ c_i p_i` of the unnormalized label.
    pub weighted_mean: f64,
}

#[derive(Debug, Serialize)]
pub struct EnhancedReport {
    pub probs: [f64; LEVELS],
    pub alpha: f64,
    pub beta: f64,
    /// Symmetric case solved by pure rescaling.
    pub rank_deficient: bool,
    pub negative: bool,
    /// `Σ p - 1`
    pub sum_residual: f64,
    /// `Σ c_i p_i - μ`
    pub mean_residual: f64,
}

#[derive(Debug, Serialize)]
pub struct Restoration {
    pub mu_res: f64,
    pub sigma_res: f64,
}

#[derive(Debug, Serialize)]
pub struct SoftlabelReport {
    pub schema_version: u32,
    pub mu: f64,
    pub sigma: f64,
    pub raw: RawReport,
    pub enhanced: EnhancedReport,
    /// Absent when negative entries make the label leave the simplex.
    pub restoration: Option<Restoration>,
}

pub fn validate(a: &SoftlabelArgs) -> Result<GaussianRating<f64>, CliError> {
    let (Some(mu), Some(sigma)) = (a.mu, a.sigma) else {
        return Err(CliError::Usage("--mu and --sigma are required".into()));
    };
    if !(1.0..=5.0).contains(&mu) {
        return Err(CliError::Usage(format!(
            "--mu must lie in [1, 5], got {mu}"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(CliError::Usage(format!("--sigma must be > 0, got {sigma}")));
    }
    Ok(GaussianRating::new(mu, sigma)?)
}

pub fn soft_label_report(rating: GaussianRating<f64>) -> Result<SoftlabelReport, CliError> {
    let raw = deqa_raw_soft_label(rating, &IntervalScheme::deqa())?;
    let e = deqa_enhance_detailed(&raw, rating.mu)?;
    let enhanced = EnhancedReport {
        probs: e.label.probs,
        alpha: e.alpha,
        beta: e.beta,
        rank_deficient: e.rank_deficient,
        negative: e.label.diagnostics.is_some_and(|d| d.negative),
        sum_residual: e.label.mass() - 1.0,
        mean_residual: e.label.weighted_mean() - rating.mu,
    };
    let restoration = deqa_restore(&e.label.probs)
        .ok()
        .map(|(mu_res, sigma_res)| Restoration { mu_res, sigma_res });
    Ok(SoftlabelReport {
        schema_version: REPORT_SCHEMA_VERSION,
        mu: rating.mu,
        sigma: rating.sigma,
        raw: RawReport {
            probs: raw.probs,
            mass: raw.mass(),
            mass_deficit: 1.0 - raw.mass(),
            weighted_mean: raw.weighted_mean(),
        },
        enhanced,
        restoration,
    })
}

pub fn run(a: &SoftlabelArgs) -> Result<(), CliError> {
    let rating = validate(a)?;
    let out = OutDir::create(&a.out.out_dir)?;
    out.manifest("softlabel", a)?;
    let report = soft_label_report(rating)?;
    out.json("softlabel.json", &report)?;
    print_line(&serde_json::to_string_pretty(&report)?);
    Ok(())
}
