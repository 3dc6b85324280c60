//! Conversion between continuous MOS values and the five-level token space.
//!
//! Two schemes are covered:
//!
//! * one-hot quantization over `[1, 5]` restored by the probability-weighted
//!   sum of the integer levels;
//! * Gaussian soft labels over `[0.5, 5.5]`, obtained by integrating
//!   `N(μ, σ²)` over unit intervals, followed by the affine enhancement
//!   `p_i = α p_i^raw + β` that restores unit mass and the exact mean.

use crate::error::{Error, Result};
use crate::gaussian::gaussian_interval_mass;
use crate::scalar::Scalar;
use crate::types::{
    IntervalScheme, SchemeKind, SoftLabel, SoftLabelDiagnostics, TokenIndex, LEVELS,
};

/// Tolerance used when checking that an input vector lies on the simplex.
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A rating distribution `s ~ N(mu, sigma²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianRating<T> {
    pub mu: T,
    pub sigma: T,
}

impl<T: Scalar> GaussianRating<T> {
    pub fn new(mu: T, sigma: T) -> Result<Self> {
        if !mu.is_finite() {
            return Err(Error::Domain(format!(
                "rating mean must be finite, got {mu}"
            )));
        }
        if !(sigma > T::zero()) || !sigma.is_finite() {
            return Err(Error::Domain(format!(
                "rating sigma must be > 0, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }
}

fn check_mos_range<T: Scalar>(mos: T) -> Result<()> {
    if mos >= T::one() && mos <= T::lit(5.0) {
        Ok(())
    } else {
        Err(Error::Domain(format!("MOS must lie in [1, 5], got {mos}")))
    }
}

pub(crate) fn check_simplex<T: Scalar>(probs: &[T; LEVELS]) -> Result<()> {
    let tol = T::lit(SIMPLEX_TOL).max(T::epsilon() * T::lit(16.0));
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < -tol) {
        return Err(Error::Validation(format!(
            "probability vector has an invalid entry {p}"
        )));
    }
    let sum: T = probs.iter().copied().sum();
    if (sum - T::one()).abs() > tol {
        return Err(Error::Validation(format!(
            "probability vector sums to {sum}, expected 1"
        )));
    }
    Ok(())
}

/// Level `i` with `1 + 0.8(i-1) < mos <= 1 + 0.8 i`; `mos = 1` maps to level 1.
pub fn qalign_quantize<T: Scalar>(mos: T) -> Result<TokenIndex> {
    check_mos_range(mos)?;
    IntervalScheme::<T>::qalign()
        .locate(mos)
        .ok_or_else(|| Error::Domain(format!("MOS {mos} outside quantization range")))
}

/// `Σ p_i · i` over a probability vector.
pub fn qalign_restore<T: Scalar>(probs: &[T; LEVELS]) -> Result<T> {
    check_simplex(probs)?;
    Ok(weighted_levels(probs))
}

pub(crate) fn weighted_levels<T: Scalar>(probs: &[T; LEVELS]) -> T {
    probs
        .iter()
        .enumerate()
        .map(|(i, &p)| p * T::from_usize_lossy(i + 1))
        .sum()
}

/// Integrates the rating density over each unit interval of the DeQA scheme.
///
/// The result is not normalized: tail mass outside `[0.5, 5.5]` is lost and
/// reported as `diagnostics.mass_deficit`.
pub fn deqa_raw_soft_label<T: Scalar>(
    rating: GaussianRating<T>,
    scheme: &IntervalScheme<T>,
) -> Result<SoftLabel<T>> {
    if scheme.kind != SchemeKind::DeQA {
        return Err(Error::Validation(
            "soft labels are defined on the DeQA interval scheme".into(),
        ));
    }
    let GaussianRating { mu, sigma } = GaussianRating::new(rating.mu, rating.sigma)?;
    let half = T::lit(0.5);
    let probs = scheme
        .midpoints
        .map(|c| gaussian_interval_mass(mu, sigma, c - half, c + half));
    let mass: T = probs.iter().copied().sum();
    Ok(SoftLabel {
        probs,
        scheme: *scheme,
        enhanced: false,
        diagnostics: Some(SoftLabelDiagnostics {
            mass_deficit: (T::one() - mass).to_f64_lossy(),
            negative: false,
        }),
    })
}

/// Coefficients of the affine enhancement and whether the symmetric fallback
/// was taken.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Enhancement<T> {
    pub label: SoftLabel<T>,
    pub alpha: T,
    pub beta: T,
    pub rank_deficient: bool,
}

/// Solves `α Σp_raw + 5β = 1`, `α Σp_raw c_i + 15β = μ` and applies
/// `p_i = α p_i^raw + β`.
///
/// Subtracting three times the first equation from the second leaves
/// `α Σ p_raw (c_i - 3) = μ - 3`. When the left factor vanishes (raw label
/// centred on 3) the system is rank deficient and the pure rescale
/// `α = 1/Σp_raw, β = 0` is used. Negative outputs are kept as-is and flagged.
pub fn deqa_enhance_detailed<T: Scalar>(raw: &SoftLabel<T>, mu: T) -> Result<Enhancement<T>> {
    if raw.enhanced || raw.scheme.kind != SchemeKind::DeQA {
        return Err(Error::Validation(
            "enhancement expects a raw DeQA soft label".into(),
        ));
    }
    check_mos_range(mu)?;
    let mass = raw.mass();
    if !(mass > T::zero()) {
        return Err(Error::Domain("raw soft label carries no mass".into()));
    }
    let three = T::lit(3.0);
    let five = T::lit(5.0);
    let centred: T = raw
        .probs
        .iter()
        .zip(raw.scheme.midpoints.iter())
        .map(|(&p, &c)| p * (c - three))
        .sum();

    let degenerate_tol = T::lit(64.0) * T::epsilon() * mass;
    let (alpha, beta, rank_deficient) = if centred.abs() <= degenerate_tol {
        (T::one() / mass, T::zero(), true)
    } else {
        let alpha = (mu - three) / centred;
        (alpha, (T::one() - alpha * mass) / five, false)
    };

    let probs = raw.probs.map(|p| alpha * p + beta);
    let sum: T = probs.iter().copied().sum();
    let negative = probs.iter().any(|&p| p < T::zero());
    Ok(Enhancement {
        label: SoftLabel {
            probs,
            scheme: raw.scheme,
            enhanced: true,
            diagnostics: Some(SoftLabelDiagnostics {
                mass_deficit: (T::one() - sum).to_f64_lossy(),
                negative,
            }),
        },
        alpha,
        beta,
        rank_deficient,
    })
}

pub fn deqa_enhance<T: Scalar>(raw: &SoftLabel<T>, mu: T) -> Result<SoftLabel<T>> {
    deqa_enhance_detailed(raw, mu).map(|e| e.label)
}

/// Raw label followed by enhancement towards the rating mean.
pub fn deqa_soft_label<T: Scalar>(rating: GaussianRating<T>) -> Result<SoftLabel<T>> {
    let raw = deqa_raw_soft_label(rating, &IntervalScheme::deqa())?;
    deqa_enhance(&raw, rating.mu)
}

/// Mean and standard deviation of the discrete distribution on `c_i = 1..5`.
pub fn deqa_restore<T: Scalar>(probs: &[T; LEVELS]) -> Result<(T, T)> {
    check_simplex(probs)?;
    Ok(restore_moments(probs))
}

pub(crate) fn restore_moments<T: Scalar>(probs: &[T; LEVELS]) -> (T, T) {
    let mean = weighted_levels(probs);
    let var: T = probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let d = T::from_usize_lossy(i + 1) - mean;
            p * d * d
        })
        .sum();
    (mean, var.max(T::zero()).sqrt())
}
