//! Expected squared conversion error of one-hot quantization with integer
//! restoration, under a perfect classifier.
//!
//! With `S` uniform on a level interval and `ε = S - i`, level `i` has
//! `ε ∈ [0.2 - 0.2 i, 1 - 0.2 i]`. The analytic value is the mean over the
//! five levels of `(1/(b-a)) ∫_a^b ε² dε`, evaluated in exact arithmetic.

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ErrorStudy, StudyMethod};
use crate::error::{Error, Result};
use crate::label::qalign_quantize;
use crate::rng::{self, streams};
use crate::types::LEVELS;

/// Draws per MC batch; each batch owns one RNG stream.
pub const MC_BATCH: usize = 1 << 15;

fn lit<R: Num + FromPrimitive>(num: i64, den: i64) -> R {
    R::from_i64(num).expect("small integer") / R::from_i64(den).expect("small integer")
}

/// Signed error interval `[a, b]` of level `level` (1-based).
pub fn error_interval<R: Num + FromPrimitive + Clone>(level: usize) -> (R, R) {
    debug_assert!((1..=LEVELS).contains(&level));
    let i = level as i64;
    // a = 1 + 4/5 (i-1) - i, b = 1 + 4/5 i - i
    (lit(1 - i, 5), lit(5 - i, 5))
}

/// `∫_a^b ε² dε` for level `level`.
pub fn interval_square_integral<R: Num + FromPrimitive + Clone>(level: usize) -> R {
    let (a, b): (R, R) = error_interval(level);
    (b.clone() * b.clone() * b - a.clone() * a.clone() * a) / lit(3, 1)
}

/// `E[ε²]` restricted to level `level`: the integral divided by the width.
pub fn interval_second_moment<R: Num + FromPrimitive + Clone>(level: usize) -> R {
    let (a, b): (R, R) = error_interval(level);
    interval_square_integral::<R>(level) / (b - a)
}

/// Mean signed error on level `level`.
pub fn interval_mean_error<R: Num + FromPrimitive + Clone>(level: usize) -> R {
    let (a, b): (R, R) = error_interval(level);
    (a + b) / lit(2, 1)
}

/// Expected squared error averaged over the five levels, in any exact or
/// floating field.
pub fn qalign_error_analytic_in<R: Num + FromPrimitive + Clone>() -> R {
    let sum = (1..=LEVELS).fold(R::zero(), |acc, l| acc + interval_second_moment::<R>(l));
    sum / lit(LEVELS as i64, 1)
}

pub fn qalign_error_analytic_exact() -> Ratio<i64> {
    qalign_error_analytic_in::<Ratio<i64>>()
}

pub fn qalign_error_analytic() -> f64 {
    let r = qalign_error_analytic_exact();
    *r.numer() as f64 / *r.denom() as f64
}

/// Squared error of restoring `s` to its integer level.
pub fn qalign_sq_error(s: f64) -> Result<f64> {
    let level = qalign_quantize(s)?.get() as f64;
    Ok((level - s) * (level - s))
}

/// Distribution of the ground-truth score in MC studies.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ScoreDistribution {
    /// Uniform on `[1, 5]`.
    Uniform,
    /// `N(mu, sigma²)` conditioned on `[1, 5]`.
    TruncatedNormal { mu: f64, sigma: f64 },
}

impl ScoreDistribution {
    fn sample(&self, rng: &mut rng::Rng) -> f64 {
        match *self {
            ScoreDistribution::Uniform => rng.random_range(1.0..=5.0),
            ScoreDistribution::TruncatedNormal { mu, sigma } => {
                let n = Normal::new(mu, sigma).expect("validated sigma");
                loop {
                    let s = n.sample(rng);
                    if (1.0..=5.0).contains(&s) {
                        return s;
                    }
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            ScoreDistribution::Uniform => Ok(()),
            ScoreDistribution::TruncatedNormal { mu, sigma } => {
                if !(sigma > 0.0) || !(1.0..=5.0).contains(&mu) {
                    Err(Error::Domain(format!(
                        "truncated normal needs sigma > 0 and mu in [1, 5], got ({mu}, {sigma})"
                    )))
                } else {
                    Ok(())
                }
            }
        }
    }
}

/// `(Σ ε², Σ ε⁴)` over one batch.
fn batch_sums(dist: ScoreDistribution, seed: u64, batch: usize, count: usize) -> (f64, f64) {
    let mut rng = rng::stream(seed, streams::PER_ITEM_BASE + batch as u64);
    let mut s2 = 0.0;
    let mut s4 = 0.0;
    for _ in 0..count {
        let s = dist.sample(&mut rng);
        let e2 = qalign_sq_error(s).expect("sample within [1, 5]");
        s2 += e2;
        s4 += e2 * e2;
    }
    (s2, s4)
}

fn batch_counts(samples: usize) -> Vec<usize> {
    let full = samples / MC_BATCH;
    let rest = samples % MC_BATCH;
    let mut v = vec![MC_BATCH; full];
    if rest > 0 {
        v.push(rest);
    }
    v
}

fn finish(samples: usize, seed: u64, sums: &[(f64, f64)]) -> ErrorStudy {
    // fixed left-to-right reduction, independent of thread scheduling
    let (s2, s4) = sums
        .iter()
        .fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let n = samples as f64;
    let mean = s2 / n;
    let var = if samples > 1 {
        ((s4 / n) - mean * mean).max(0.0) * n / (n - 1.0)
    } else {
        0.0
    };
    ErrorStudy {
        method: StudyMethod::QAlign,
        estimate: mean,
        analytic: Some(qalign_error_analytic()),
        std_error: Some((var / n).sqrt()),
        samples,
        seed,
    }
}

/// Monte-Carlo estimate of `E[(G(l_j) - S)²]` with `S` uniform on `[1, 5]`.
///
/// Batches run in parallel; the result is bit-identical to
/// [`qalign_error_mc_sequential`].
pub fn qalign_error_mc(samples: usize, seed: u64) -> Result<ErrorStudy> {
    qalign_error_mc_with(samples, seed, ScoreDistribution::Uniform)
}

pub fn qalign_error_mc_with(
    samples: usize,
    seed: u64,
    dist: ScoreDistribution,
) -> Result<ErrorStudy> {
    if samples == 0 {
        return Err(Error::Domain(
            "Monte-Carlo study needs at least one sample".into(),
        ));
    }
    dist.validate()?;
    let sums: Vec<(f64, f64)> = batch_counts(samples)
        .into_par_iter()
        .enumerate()
        .map(|(b, count)| batch_sums(dist, seed, b, count))
        .collect();
    Ok(finish(samples, seed, &sums))
}

pub fn qalign_error_mc_sequential(samples: usize, seed: u64) -> Result<ErrorStudy> {
    if samples == 0 {
        return Err(Error::Domain(
            "Monte-Carlo study needs at least one sample".into(),
        ));
    }
    let sums: Vec<(f64, f64)> = batch_counts(samples)
        .into_iter()
        .enumerate()
        .map(|(b, count)| batch_sums(ScoreDistribution::Uniform, seed, b, count))
        .collect();
    Ok(finish(samples, seed, &sums))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn error_intervals() {
        assert_eq!(error_interval::<Ratio<i64>>(1), (q(0, 1), q(4, 5)));
        assert_eq!(error_interval::<Ratio<i64>>(2), (q(-1, 5), q(3, 5)));
        assert_eq!(error_interval::<Ratio<i64>>(3), (q(-2, 5), q(2, 5)));
        assert_eq!(error_interval::<Ratio<i64>>(5), (q(-4, 5), q(0, 1)));
    }

    #[test]
    fn interval_three_contribution() {
        assert_eq!(interval_square_integral::<Ratio<i64>>(3), q(16, 375));
        assert_eq!(interval_second_moment::<Ratio<i64>>(3), q(4, 75));
    }

    #[test]
    fn only_middle_interval_is_unbiased() {
        for level in 1..=5 {
            let m = interval_mean_error::<Ratio<i64>>(level);
            assert_eq!(m == q(0, 1), level == 3);
        }
    }

    #[test]
    fn analytic_exact_value() {
        // Σ (b³ - a³) / (3 (b - a)) / 5 over the five intervals
        assert_eq!(qalign_error_analytic_exact(), q(2, 15));
        assert!((qalign_error_analytic_in::<f64>() - 2.0 / 15.0).abs() < 1e-15);
    }

    #[test]
    fn square_error_zero_on_integer() {
        assert_eq!(qalign_sq_error(3.0).unwrap(), 0.0);
        assert!((qalign_sq_error(1.8).unwrap() - 0.64).abs() < 1e-12);
        assert!(qalign_sq_error(0.5).is_err());
    }

    #[test]
    fn parallel_matches_sequential_bitwise() {
        let n = 3 * MC_BATCH + 17;
        let a = qalign_error_mc(n, 42).unwrap();
        let b = qalign_error_mc_sequential(n, 42).unwrap();
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.samples, n);
    }

    #[test]
    fn single_sample_and_zero_samples() {
        let s = qalign_error_mc(1, 3).unwrap();
        assert!(s.estimate >= 0.0 && s.estimate <= 0.64);
        assert!(qalign_error_mc(0, 3).is_err());
    }

    #[test]
    fn seeds_agree_within_standard_error() {
        let a = qalign_error_mc(200_000, 1).unwrap();
        let b = qalign_error_mc(200_000, 2).unwrap();
        let se = (a.std_error.unwrap().powi(2) + b.std_error.unwrap().powi(2)).sqrt();
        assert!((a.estimate - b.estimate).abs() < 3.0 * se);
        assert_ne!(a.estimate, b.estimate);
    }

    #[test]
    fn truncated_normal_distribution() {
        let d = ScoreDistribution::TruncatedNormal {
            mu: 3.0,
            sigma: 0.3,
        };
        let s = qalign_error_mc_with(50_000, 5, d).unwrap();
        // mass concentrated around the unbiased middle interval
        assert!(s.estimate < qalign_error_analytic());
        let bad = ScoreDistribution::TruncatedNormal {
            mu: 3.0,
            sigma: 0.0,
        };
        assert!(qalign_error_mc_with(10, 5, bad).is_err());
    }
}
