//! PLCC and SRCC.
//!
//! SRCC is Pearson correlation of average ranks, which stays exact in the
//! presence of ties (the `1 - 6Σd²/(n(n²-1))` shortcut does not).

use std::cmp::Ordering;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Predictions paired with ground-truth scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PairedSeries<T> {
    preds: Vec<T>,
    targets: Vec<T>,
}

impl<T: Scalar> PairedSeries<T> {
    pub fn new(preds: Vec<T>, targets: Vec<T>) -> Result<Self> {
        if preds.len() != targets.len() {
            return Err(Error::Shape {
                context: "paired series",
                expected: targets.len(),
                got: preds.len(),
            });
        }
        if preds.len() < 2 {
            return Err(Error::Degenerate(format!(
                "correlation needs at least 2 pairs, got {}",
                preds.len()
            )));
        }
        if preds.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Validation(
                "paired series contains non-finite values".into(),
            ));
        }
        Ok(Self { preds, targets })
    }

    pub fn preds(&self) -> &[T] {
        &self.preds
    }

    pub fn targets(&self) -> &[T] {
        &self.targets
    }

    pub fn len(&self) -> usize {
        self.preds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.preds.is_empty()
    }
}

fn mean<T: Scalar>(xs: &[T]) -> T {
    xs.iter().copied().sum::<T>() / T::from_usize_lossy(xs.len())
}

fn pearson<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    let ma = mean(a);
    let mb = mean(b);
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        let dx = x - ma;
        let dy = y - mb;
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == T::zero() || sbb == T::zero() {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    let r = sab / (saa * sbb).sqrt();
    Ok(r.max(-T::one()).min(T::one()))
}

/// Pearson linear correlation of predictions against targets.
pub fn plcc<T: Scalar>(series: &PairedSeries<T>) -> Result<T> {
    pearson(&series.preds, &series.targets)
}

/// Spearman rank correlation with mean ranks for ties.
pub fn srcc<T: Scalar>(series: &PairedSeries<T>) -> Result<T> {
    pearson(
        &average_ranks(&series.preds),
        &average_ranks(&series.targets),
    )
}

/// 1-based ranks; tied values share the mean of the ranks they span.
pub fn average_ranks<T: Scalar>(xs: &[T]) -> Vec<T> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&i, &j| xs[i].partial_cmp(&xs[j]).unwrap_or(Ordering::Equal));
    let mut ranks = vec![T::zero(); xs.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && xs[order[end]] == xs[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1..=end
        let r = T::from_usize_lossy(start + 1 + end) / T::lit(2.0);
        for &idx in &order[start..end] {
            ranks[idx] = r;
        }
        start = end;
    }
    ranks
}
