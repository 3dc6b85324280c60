use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Composite Simpson rule with `panels` (even) subintervals.
///
/// Error is bounded by `(b - a) h⁴ max|f⁗| / 180`.
pub fn simpson<T: Scalar, F: Fn(T) -> T>(f: F, a: T, b: T, panels: usize) -> Result<T> {
    if panels == 0 || !panels.is_multiple_of(2) {
        return Err(Error::Domain(format!(
            "Simpson needs an even, positive panel count, got {panels}"
        )));
    }
    let h = (b - a) / T::from_usize_lossy(panels);
    let mut odd = T::zero();
    let mut even = T::zero();
    for k in 1..panels {
        let x = a + h * T::from_usize_lossy(k);
        if k % 2 == 1 {
            odd += f(x);
        } else {
            even += f(x);
        }
    }
    Ok(h / T::lit(3.0) * (f(a) + f(b) + T::lit(4.0) * odd + T::lit(2.0) * even))
}
