//! Domain types shared by every module: rated samples, quantization schemes,
//! soft labels, score-token indices and evaluation reports.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Number of quality levels / score tokens.
pub const LEVELS: usize = 5;

/// Lower and upper end of the normalized MOS range.
pub const MOS_MIN: f64 = 1.0;
pub const MOS_MAX: f64 = 5.0;

/// One rated item. `features` stand in for an image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MosSample {
    pub id: String,
    pub features: Vec<f64>,
    pub mos: f64,
    pub std: Option<f64>,
}

impl MosSample {
    pub fn new(
        id: impl Into<String>,
        features: Vec<f64>,
        mos: f64,
        std: Option<f64>,
    ) -> Result<Self> {
        if let Some(s) = std {
            if !(s >= 0.0) {
                return Err(Error::Domain(format!("rating std must be >= 0, got {s}")));
            }
        }
        if !mos.is_finite() {
            return Err(Error::Domain(format!("mos must be finite, got {mos}")));
        }
        Ok(Self {
            id: id.into(),
            features,
            mos,
            std,
        })
    }

    /// Returns the rating std, or `fallback` when the sample carries none.
    ///
    /// A missing std with no fallback is a configuration error; there is no
    /// implicit default.
    pub fn sigma_or(&self, fallback: Option<f64>) -> Result<f64> {
        self.std.or(fallback).ok_or_else(|| {
            Error::Config(format!(
                "sample {:?} has no rating std and no fallback sigma was configured",
                self.id
            ))
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    /// `[1, 5]` split into five intervals of width 4/5.
    QAlign,
    /// `[0.5, 5.5]` split into unit intervals centred on 1..5.
    DeQA,
}

/// A fixed five-interval partition of the score axis.
///
/// Intervals are half-open `(lower, upper]`, except the first, which is also
/// closed at the bottom so the global minimum is assigned to level 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalScheme<T> {
    pub kind: SchemeKind,
    pub boundaries: [T; LEVELS + 1],
    pub midpoints: [T; LEVELS],
}

const QALIGN_BOUNDARIES: [f64; 6] = [1.0, 1.8, 2.6, 3.4, 4.2, 5.0];
const DEQA_BOUNDARIES: [f64; 6] = [0.5, 1.5, 2.5, 3.5, 4.5, 5.5];

impl<T: Scalar> IntervalScheme<T> {
    pub fn new(kind: SchemeKind) -> Self {
        let raw = match kind {
            SchemeKind::QAlign => QALIGN_BOUNDARIES,
            SchemeKind::DeQA => DEQA_BOUNDARIES,
        };
        let boundaries = raw.map(T::lit);
        let midpoints = match kind {
            SchemeKind::QAlign => [1.4, 2.2, 3.0, 3.8, 4.6].map(T::lit),
            SchemeKind::DeQA => [1.0, 2.0, 3.0, 4.0, 5.0].map(T::lit),
        };
        Self {
            kind,
            boundaries,
            midpoints,
        }
    }

    pub fn qalign() -> Self {
        Self::new(SchemeKind::QAlign)
    }

    pub fn deqa() -> Self {
        Self::new(SchemeKind::DeQA)
    }

    /// Discrete score attached to each level, `G(l_i) = i`.
    pub fn levels(&self) -> [T; LEVELS] {
        [1.0, 2.0, 3.0, 4.0, 5.0].map(T::lit)
    }

    /// `(lower, upper)` of level `token`.
    pub fn interval(&self, token: TokenIndex) -> (T, T) {
        let i = token.zero_based();
        (self.boundaries[i], self.boundaries[i + 1])
    }

    pub fn width(&self, token: TokenIndex) -> T {
        let (lo, hi) = self.interval(token);
        hi - lo
    }

    /// Level whose interval contains `s`, or `None` outside the scheme range.
    pub fn locate(&self, s: T) -> Option<TokenIndex> {
        if s == self.boundaries[0] {
            return Some(TokenIndex::MIN);
        }
        (0..LEVELS)
            .find(|&i| self.boundaries[i] < s && s <= self.boundaries[i + 1])
            .map(TokenIndex::from_zero_based)
    }
}

/// Convenience constructor matching the operation name used across the crate.
pub fn make_scheme<T: Scalar>(kind: SchemeKind) -> IntervalScheme<T> {
    IntervalScheme::new(kind)
}

/// Identity of one of the five score tokens `<s1>..<s5>` (1-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct TokenIndex(u8);

impl TokenIndex {
    pub const MIN: TokenIndex = TokenIndex(1);
    pub const MAX: TokenIndex = TokenIndex(LEVELS as u8);

    pub fn new(index: usize) -> Result<Self> {
        if (1..=LEVELS).contains(&index) {
            Ok(Self(index as u8))
        } else {
            Err(Error::Domain(format!(
                "token index must be in 1..=5, got {index}"
            )))
        }
    }

    pub(crate) fn from_zero_based(i: usize) -> Self {
        debug_assert!(i < LEVELS);
        Self(i as u8 + 1)
    }

    pub fn get(self) -> usize {
        self.0 as usize
    }

    pub fn zero_based(self) -> usize {
        self.0 as usize - 1
    }

    pub fn all() -> impl Iterator<Item = TokenIndex> {
        (0..LEVELS).map(Self::from_zero_based)
    }
}

impl TryFrom<u8> for TokenIndex {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::new(v as usize)
    }
}

impl From<TokenIndex> for u8 {
    fn from(t: TokenIndex) -> u8 {
        t.0
    }
}

impl fmt::Display for TokenIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<s{}>", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoftLabelDiagnostics {
    /// `1 - Σ p_raw` for raw labels; `1 - Σ p` residual for enhanced ones.
    pub mass_deficit: f64,
    /// Some enhanced probability came out negative.
    pub negative: bool,
}

/// Probability vector over the five levels of a scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLabel<T> {
    pub probs: [T; LEVELS],
    pub scheme: IntervalScheme<T>,
    pub enhanced: bool,
    pub diagnostics: Option<SoftLabelDiagnostics>,
}

impl<T: Scalar> SoftLabel<T> {
    pub fn mass(&self) -> T {
        self.probs.iter().copied().sum()
    }

    /// `Σ p_i c_i` over the scheme midpoints.
    pub fn weighted_mean(&self) -> T {
        self.probs
            .iter()
            .zip(self.scheme.midpoints.iter())
            .map(|(&p, &c)| p * c)
            .sum()
    }
}

/// One row of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub y_hat: f64,
    pub token: TokenIndex,
    pub token_probs: [f64; LEVELS],
    pub mos: f64,
}

/// Mean loss components over one epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochLosses {
    pub epoch: usize,
    pub total: f64,
    pub ce: f64,
    pub score: f64,
    pub kl: f64,
    pub fidelity: f64,
    pub norm_in_norm: f64,
    pub ranking: f64,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Predictions plus correlation metrics for one evaluated model.
///
/// `plcc`/`srcc` are `None` and `degenerate` is set when the predictions are
/// constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub head: String,
    pub prompt_template: String,
    pub predictions: Vec<Prediction>,
    pub plcc: Option<f64>,
    pub srcc: Option<f64>,
    pub degenerate: bool,
    pub token_accuracy: f64,
    pub loss_trace: Vec<EpochLosses>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error_stats: Option<serde_json::Value>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qalign_boundaries_exact() {
        let s = IntervalScheme::<f64>::qalign();
        assert_eq!(s.boundaries, [1.0, 1.8, 2.6, 3.4, 4.2, 5.0]);
        for t in TokenIndex::all() {
            assert!((s.width(t) - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn deqa_midpoints_and_interval_three() {
        let s = make_scheme::<f64>(SchemeKind::DeQA);
        assert_eq!(s.midpoints, [1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(s.interval(TokenIndex::new(3).unwrap()), (2.5, 3.5));
        for t in TokenIndex::all() {
            let (lo, hi) = s.interval(t);
            let c = s.midpoints[t.zero_based()];
            assert!(lo < c && c < hi);
            assert_eq!(s.width(t), 1.0);
        }
        // (2.5, 3.5]: lower end belongs to level 2
        assert_eq!(s.locate(2.5).unwrap().get(), 2);
        assert_eq!(s.locate(3.5).unwrap().get(), 3);
    }

    #[test]
    fn construction_is_idempotent() {
        assert_eq!(
            IntervalScheme::<f64>::qalign(),
            IntervalScheme::<f64>::qalign()
        );
        assert_eq!(IntervalScheme::<f32>::deqa(), IntervalScheme::<f32>::deqa());
    }

    #[test]
    fn bottom_boundary_closed() {
        assert_eq!(
            IntervalScheme::<f64>::qalign().locate(1.0),
            Some(TokenIndex::MIN)
        );
        assert_eq!(
            IntervalScheme::<f64>::deqa().locate(0.5),
            Some(TokenIndex::MIN)
        );
        assert_eq!(IntervalScheme::<f64>::qalign().locate(0.999), None);
        assert_eq!(IntervalScheme::<f64>::qalign().locate(5.0001), None);
    }

    #[test]
    fn token_index_range() {
        assert!(TokenIndex::new(0).is_err());
        assert!(TokenIndex::new(6).is_err());
        assert_eq!(TokenIndex::new(5).unwrap(), TokenIndex::MAX);
        assert_eq!(TokenIndex::new(2).unwrap().to_string(), "<s2>");
        let json = serde_json::to_string(&TokenIndex::new(4).unwrap()).unwrap();
        assert_eq!(json, "4");
        assert!(serde_json::from_str::<TokenIndex>("9").is_err());
    }

    #[test]
    fn sample_std_validation_and_fallback() {
        assert!(MosSample::new("a", vec![], 3.0, Some(-0.1)).is_err());
        let s = MosSample::new("a", vec![], 3.0, None).unwrap();
        assert!(matches!(s.sigma_or(None), Err(Error::Config(_))));
        assert_eq!(s.sigma_or(Some(0.4)).unwrap(), 0.4);
    }
}
