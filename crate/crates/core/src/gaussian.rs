//! Standard normal density and distribution function.
//!
//! Φ is evaluated with Marsaglia's positive-term series
//! `Φ(x) = 1/2 + φ(x) (x + x³/3 + x⁵/15 + …)` in the body and the Laplace
//! continued fraction for the Mills ratio in the tails. Both have no
//! cancellation, giving absolute error near machine epsilon in `f64`.

use crate::scalar::Scalar;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
/// Above this |x| the continued fraction is used.
const TAIL_SWITCH: f64 = 3.0;
const CF_DEPTH: usize = 160;

/// Standard normal density.
pub fn normal_pdf<T: Scalar>(x: T) -> T {
    T::lit(FRAC_1_SQRT_2PI) * (-(x * x) * T::lit(0.5)).exp()
}

/// Standard normal CDF.
pub fn gaussian_cdf<T: Scalar>(x: T) -> T {
    if x.is_nan() {
        return x;
    }
    let ax = x.abs();
    if ax < T::lit(TAIL_SWITCH) {
        let half = T::lit(0.5);
        let s = body_series(x);
        half + normal_pdf(x) * s
    } else {
        let upper = upper_tail(ax);
        if x > T::zero() {
            T::one() - upper
        } else {
            upper
        }
    }
}

/// `1 - Φ(x)` without cancellation for large positive `x`.
pub fn gaussian_sf<T: Scalar>(x: T) -> T {
    gaussian_cdf(-x)
}

/// Probability mass of N(mu, sigma²) on `(lo, hi]`.
pub fn gaussian_interval_mass<T: Scalar>(mu: T, sigma: T, lo: T, hi: T) -> T {
    let a = (lo - mu) / sigma;
    let b = (hi - mu) / sigma;
    // Subtract in the tail that keeps precision.
    if a > T::zero() {
        gaussian_sf(a) - gaussian_sf(b)
    } else {
        gaussian_cdf(b) - gaussian_cdf(a)
    }
}

fn body_series<T: Scalar>(x: T) -> T {
    let x2 = x * x;
    let mut term = x;
    let mut sum = x;
    let eps = T::epsilon() * T::lit(0.25);
    let mut k = 1usize;
    loop {
        term = term * x2 / T::from_usize_lossy(2 * k + 1);
        let next = sum + term;
        if next == sum || term.abs() <= eps * sum.abs() || k > 400 {
            return next;
        }
        sum = next;
        k += 1;
    }
}

/// `1 - Φ(x)` for `x >= TAIL_SWITCH`: `φ(x) / (x + 1/(x + 2/(x + 3/(x + …))))`.
fn upper_tail<T: Scalar>(x: T) -> T {
    let mut t = x;
    for k in (1..=CF_DEPTH).rev() {
        t = x + T::from_usize_lossy(k) / t;
    }
    normal_pdf(x) / t
}
