//! Label-approximation and restoration errors of Gaussian soft labels.

use serde::{Deserialize, Serialize};

use super::quad::simpson;
use super::{ErrorStudy, StudyMethod};
use crate::error::{Error, Result};
use crate::gaussian::{gaussian_cdf, normal_pdf};
use crate::label::{deqa_raw_soft_label, deqa_restore, deqa_soft_label, GaussianRating};
use crate::types::IntervalScheme;

/// Integration range of the soft-label scheme.
pub const SUPPORT: (f64, f64) = (0.5, 5.5);
/// Minimum number of points for the `|h″|` maximization grid.
pub const MIN_BOUND_GRID: usize = 1_000;
/// Default `|h″|` grid size.
pub const DEFAULT_BOUND_GRID: usize = 10_000;
/// Minimum Simpson panel count for truncated-mean integrals.
pub const MIN_PANELS: usize = 4_000;
/// Target absolute error of the truncated-mean quadrature.
pub const QUADRATURE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelError {
    /// `|Σ c_i p_i^raw - μ|`
    pub eps2_raw: f64,
    /// `|Σ c_i p_i - μ|` after enhancement
    pub eps2_enhanced: f64,
}

/// Mean error of the raw and enhanced soft labels against the rating mean.
pub fn deqa_label_error(rating: GaussianRating<f64>) -> Result<LabelError> {
    let raw = deqa_raw_soft_label(rating, &IntervalScheme::deqa())?;
    let enhanced = deqa_soft_label(rating)?;
    Ok(LabelError {
        eps2_raw: (raw.weighted_mean() - rating.mu).abs(),
        eps2_enhanced: (enhanced.weighted_mean() - rating.mu).abs(),
    })
}

/// Squared label errors over `ratings`, summarized as two studies
/// (raw, enhanced).
pub fn deqa_label_studies(ratings: &[GaussianRating<f64>]) -> Result<(ErrorStudy, ErrorStudy)> {
    if ratings.is_empty() {
        return Err(Error::Domain(
            "label-error study needs at least one rating".into(),
        ));
    }
    let mut raw = 0.0;
    let mut enh = 0.0;
    for &r in ratings {
        let e = deqa_label_error(r)?;
        raw += e.eps2_raw * e.eps2_raw;
        enh += e.eps2_enhanced * e.eps2_enhanced;
    }
    let n = ratings.len() as f64;
    let study = |method, estimate| ErrorStudy {
        method,
        estimate,
        analytic: None,
        std_error: None,
        samples: ratings.len(),
        seed: 0,
    };
    Ok((
        study(StudyMethod::DeQARaw, raw / n),
        study(StudyMethod::DeQAEnhanced, enh / n),
    ))
}

/// `μ` evenly spaced on `[1, 5]` crossed with `σ` log-spaced on
/// `[sigma_lo, sigma_hi]`.
pub fn rating_grid(
    mus: usize,
    sigmas: usize,
    sigma_lo: f64,
    sigma_hi: f64,
) -> Result<Vec<GaussianRating<f64>>> {
    if mus < 2 || sigmas < 2 || !(sigma_lo > 0.0) || !(sigma_hi > sigma_lo) {
        return Err(Error::Domain(format!(
            "rating grid needs >= 2 points per axis and 0 < sigma_lo < sigma_hi, got {mus}x{sigmas} on [{sigma_lo}, {sigma_hi}]"
        )));
    }
    let mut out = Vec::with_capacity(mus * sigmas);
    for i in 0..mus {
        let mu = 1.0 + 4.0 * i as f64 / (mus - 1) as f64;
        for j in 0..sigmas {
            let t = j as f64 / (sigmas - 1) as f64;
            let sigma = sigma_lo * (sigma_hi / sigma_lo).powf(t);
            out.push(GaussianRating::new(mu, sigma)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MidpointBound {
    pub mu: f64,
    pub sigma: f64,
    /// `Σ c_i p_i^raw`
    pub midpoint_sum: f64,
    /// `∫ s f(s) ds` over the support, by composite Simpson.
    pub truncated_mean: f64,
    /// Same integral in closed form.
    pub truncated_mean_exact: f64,
    /// `|Σ c_i p_i^raw - truncated_mean|`
    pub lhs: f64,
    /// Grid estimate of `max |h″|` for `h(s) = s f(s)`.
    pub m: f64,
    /// `(5/24) M`
    pub bound: f64,
    /// `truncated_mean - μ`
    pub truncation_gap: f64,
    pub panels: usize,
    pub holds: bool,
}

fn density(mu: f64, sigma: f64, s: f64) -> f64 {
    normal_pdf((s - mu) / sigma) / sigma
}

/// `h″(s) = 2 f′(s) + s f″(s)` with `f` the rating density.
pub fn h_second_derivative(mu: f64, sigma: f64, s: f64) -> f64 {
    let u = (s - mu) / sigma;
    let f = density(mu, sigma, s);
    let f1 = -u / sigma * f;
    let f2 = (u * u - 1.0) / (sigma * sigma) * f;
    2.0 * f1 + s * f2
}

/// `∫_lo^hi s f(s) ds = μ [Φ(β) - Φ(α)] - σ [φ(β) - φ(α)]`.
pub fn truncated_first_moment(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    let mass = if a > 0.0 {
        // both bounds in the upper tail: difference of survival functions
        gaussian_cdf(-a) - gaussian_cdf(-b)
    } else {
        gaussian_cdf(b) - gaussian_cdf(a)
    };
    mu * mass - sigma * (normal_pdf(b) - normal_pdf(a))
}

/// Panel count keeping the Simpson error estimate of `∫ s f(s) ds` well
/// under [`QUADRATURE_TOL`].
fn panels_for(sigma: f64) -> usize {
    let (lo, hi) = SUPPORT;
    // |h⁗| ≤ hi·max|f⁗| + 4 max|f‴| with max|He4 φ| ≈ 1.2, max|He3 φ| ≈ 0.56
    let m4 = hi * 1.2 / sigma.powi(5) + 4.0 * 0.56 / sigma.powi(4);
    let target = QUADRATURE_TOL * 1e-2;
    let h = (target * 180.0 / ((hi - lo) * m4)).powf(0.25);
    let n = ((hi - lo) / h).ceil() as usize;
    let n = n.max(MIN_PANELS);
    n + n % 2
}

/// Checks the midpoint-rule bound `|Σ c_i p_i^raw - ∫ s f| ≤ (5/24) M`.
///
/// `M` is maximized over `grid` evenly spaced points, so it is an estimate
/// rather than a certified supremum.
pub fn deqa_midpoint_bound(rating: GaussianRating<f64>, grid: usize) -> Result<MidpointBound> {
    if grid < MIN_BOUND_GRID {
        return Err(Error::Domain(format!(
            "midpoint bound needs a grid of at least {MIN_BOUND_GRID} points, got {grid}"
        )));
    }
    let GaussianRating { mu, sigma } = rating;
    let (lo, hi) = SUPPORT;
    let raw = deqa_raw_soft_label(rating, &IntervalScheme::deqa())?;
    let midpoint_sum = raw.weighted_mean();
    let panels = panels_for(sigma);
    let truncated_mean = simpson(|s| s * density(mu, sigma, s), lo, hi, panels)?;
    let truncated_mean_exact = truncated_first_moment(mu, sigma, lo, hi);
    let step = (hi - lo) / (grid - 1) as f64;
    let m = (0..grid)
        .map(|k| h_second_derivative(mu, sigma, lo + step * k as f64).abs())
        .fold(0.0, f64::max);
    let lhs = (midpoint_sum - truncated_mean).abs();
    let bound = 5.0 / 24.0 * m;
    Ok(MidpointBound {
        mu,
        sigma,
        midpoint_sum,
        truncated_mean,
        truncated_mean_exact,
        lhs,
        m,
        bound,
        truncation_gap: truncated_mean_exact - mu,
        panels,
        holds: lhs <= bound,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmaRestoration {
    pub sigma: f64,
    pub sigma_res: f64,
    pub abs_error: f64,
    pub rel_error: f64,
}

/// Restores `σ` from enhanced labels for each entry of `sigmas`, in order.
pub fn deqa_sigma_restoration_study(mu: f64, sigmas: &[f64]) -> Result<Vec<SigmaRestoration>> {
    sigmas
        .iter()
        .map(|&sigma| {
            let label = deqa_soft_label(GaussianRating::new(mu, sigma)?)?;
            let (_, sigma_res) = deqa_restore(&label.probs)?;
            let abs_error = (sigma_res - sigma).abs();
            Ok(SigmaRestoration {
                sigma,
                sigma_res,
                abs_error,
                rel_error: abs_error / sigma,
            })
        })
        .collect()
}
