//! Training losses with gradients with respect to their inputs.
//!
//! Every function returns a [`LossValue`] whose `grad` has one entry per
//! differentiable input, in argument order.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{gaussian_cdf, normal_pdf};
use crate::scalar::Scalar;
use crate::types::{SoftLabel, TokenIndex, LEVELS};

/// Floor applied to probabilities inside logarithms.
pub const PROB_CLAMP: f64 = 1e-12;
/// Exponent of the norm used by [`norm_in_norm`].
pub const NORM_IN_NORM_Q: i32 = 2;
/// Weight of the norm-in-norm term when it is enabled.
pub const NORM_IN_NORM_WEIGHT: f64 = 0.5;
pub const DEFAULT_RANKING_MARGIN: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<T> {
    pub value: T,
    pub grad: Vec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossKind {
    CrossEntropy,
    Mse,
    Kl,
    Fidelity,
    NormInNorm,
    Ranking,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::CrossEntropy,
        LossKind::Mse,
        LossKind::Kl,
        LossKind::Fidelity,
        LossKind::NormInNorm,
        LossKind::Ranking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "ce",
            LossKind::Mse => "mse",
            LossKind::Kl => "kl",
            LossKind::Fidelity => "fidelity",
            LossKind::NormInNorm => "norm-in-norm",
            LossKind::Ranking => "ranking",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Validation(format!("unknown loss {s:?}")))
    }
}

/// Numerically stable softmax.
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn softmax5<T: Scalar>(logits: &[T; LEVELS]) -> [T; LEVELS] {
    let v = softmax(logits);
    [v[0], v[1], v[2], v[3], v[4]]
}

fn log_sum_exp<T: Scalar>(logits: &[T]) -> T {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    max + logits.iter().map(|&z| (z - max).exp()).sum::<T>().ln()
}

/// `-log softmax(logits)[target]`; gradient `softmax - onehot`.
pub fn cross_entropy<T: Scalar>(logits: &[T], target: TokenIndex) -> LossValue<T> {
    let t = target.zero_based();
    debug_assert!(t < logits.len());
    let value = log_sum_exp(logits) - logits[t];
    let mut grad = softmax(logits);
    grad[t] -= T::one();
    LossValue { value, grad }
}

/// `(pred - mos)²`.
pub fn mse_score<T: Scalar>(pred: T, mos: T) -> LossValue<T> {
    let d = pred - mos;
    LossValue {
        value: d * d,
        grad: vec![T::lit(2.0) * d],
    }
}

/// `Σ_{p_i > 0} p_i log(p_i / q_i)` with both sides floored at [`PROB_CLAMP`].
///
/// Gradient is with respect to `pred_probs`.
pub fn kl_divergence<T: Scalar>(target: &[T; LEVELS], pred_probs: &[T; LEVELS]) -> LossValue<T> {
    let eps = T::lit(PROB_CLAMP);
    let mut value = T::zero();
    let mut grad = vec![T::zero(); LEVELS];
    for i in 0..LEVELS {
        let p = target[i];
        if p > T::zero() {
            let pc = p.max(eps);
            let qc = pred_probs[i].max(eps);
            value += p * (pc / qc).ln();
            if pred_probs[i] > eps {
                grad[i] = -p / qc;
            }
        }
    }
    LossValue { value, grad }
}

/// KL loss against an enhanced soft label.
pub fn kl_loss<T: Scalar>(target: &SoftLabel<T>, pred_probs: &[T; LEVELS]) -> LossValue<T> {
    kl_divergence(&target.probs, pred_probs)
}

/// KL of `softmax(logits)` against `target`, with the gradient taken with
/// respect to the logits.
pub fn kl_from_logits<T: Scalar>(target: &[T; LEVELS], logits: &[T; LEVELS]) -> LossValue<T> {
    let q = softmax5(logits);
    let LossValue { value, .. } = kl_divergence(target, &q);
    let positive_mass: T = target.iter().copied().filter(|&p| p > T::zero()).sum();
    let grad = (0..LEVELS)
        .map(|j| {
            let pj = if target[j] > T::zero() {
                target[j]
            } else {
                T::zero()
            };
            q[j] * positive_mass - pj
        })
        .collect();
    LossValue { value, grad }
}

/// Probability that `x` is preferred over `y` under independent Gaussian scores.
pub fn fidelity_prob<T: Scalar>(mu_x: T, sigma_x: T, mu_y: T, sigma_y: T) -> Result<T> {
    let s2 = sigma_x * sigma_x + sigma_y * sigma_y;
    if !(s2 > T::zero()) {
        return Err(Error::Domain(
            "fidelity probability needs a positive combined variance".into(),
        ));
    }
    Ok(gaussian_cdf((mu_x - mu_y) / s2.sqrt()))
}

/// `1 - sqrt(p q) - sqrt((1-p)(1-q))`; gradient with respect to `q = p_pred`.
pub fn fidelity_loss<T: Scalar>(p: T, p_pred: T) -> LossValue<T> {
    let one = T::one();
    let half = T::lit(0.5);
    let value = one - (p * p_pred).sqrt() - ((one - p) * (one - p_pred)).sqrt();
    let eps = T::lit(PROB_CLAMP);
    let q = p_pred.max(eps).min(one - eps);
    let grad = -half * (p / q).sqrt() + half * ((one - p) / (one - q)).sqrt();
    LossValue {
        value: value.max(T::zero()),
        grad: vec![grad],
    }
}

/// Predicted Gaussian score of one item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreBelief<T> {
    pub mu: T,
    pub sigma: T,
}

/// Fidelity loss for a pair, differentiated through the predicted preference
/// probability. Gradient order: `[mu_x, sigma_x, mu_y, sigma_y]` of `pred_*`.
pub fn fidelity_pair<T: Scalar>(
    truth_x: ScoreBelief<T>,
    truth_y: ScoreBelief<T>,
    pred_x: ScoreBelief<T>,
    pred_y: ScoreBelief<T>,
) -> Result<LossValue<T>> {
    let p = fidelity_prob(truth_x.mu, truth_x.sigma, truth_y.mu, truth_y.sigma)?;
    let q = fidelity_prob(pred_x.mu, pred_x.sigma, pred_y.mu, pred_y.sigma)?;
    let LossValue { value, grad } = fidelity_loss(p, q);
    let dl_dq = grad[0];
    let s2 = pred_x.sigma * pred_x.sigma + pred_y.sigma * pred_y.sigma;
    let s = s2.sqrt();
    let d = pred_x.mu - pred_y.mu;
    let dens = normal_pdf(d / s);
    let dq_dmu = dens / s;
    let dq_ds_common = -dens * d / (s2 * s);
    Ok(LossValue {
        value,
        grad: vec![
            dl_dq * dq_dmu,
            dl_dq * dq_ds_common * pred_x.sigma,
            -dl_dq * dq_dmu,
            dl_dq * dq_ds_common * pred_y.sigma,
        ],
    })
}

fn centred_normalized<T: Scalar>(xs: &[T]) -> Result<(Vec<T>, Vec<T>, T)> {
    let n = T::from_usize_lossy(xs.len());
    let mean = xs.iter().copied().sum::<T>() / n;
    let centred: Vec<T> = xs.iter().map(|&x| x - mean).collect();
    let norm = centred
        .iter()
        .map(|&c| c.abs().powi(NORM_IN_NORM_Q))
        .sum::<T>()
        .powf(T::one() / T::from_i32(NORM_IN_NORM_Q).unwrap());
    if !(norm > T::zero()) {
        return Err(Error::Degenerate(
            "norm-in-norm of a constant vector".into(),
        ));
    }
    let q = centred.iter().map(|&c| c / norm).collect();
    Ok((q, centred, norm))
}

/// Centre-and-normalize both sides (q = 2) and sum absolute differences.
/// Gradient is with respect to `preds`.
pub fn norm_in_norm<T: Scalar>(targets: &[T], preds: &[T]) -> Result<LossValue<T>> {
    crate::error::check_len("norm-in-norm", targets.len(), preds.len())?;
    if targets.len() < 2 {
        return Err(Error::Degenerate(
            "norm-in-norm needs at least 2 items".into(),
        ));
    }
    let (qt, _, _) = centred_normalized(targets)?;
    let (qp, centred, norm) = centred_normalized(preds)?;
    let value = qt.iter().zip(&qp).map(|(&a, &b)| (a - b).abs()).sum();

    // dL/dQ̂_i = -sign(Q_i - Q̂_i); Q̂ = P y / ‖P y‖ with P the centring projector.
    let g: Vec<T> = qt
        .iter()
        .zip(&qp)
        .map(|(&a, &b)| {
            if a > b {
                -T::one()
            } else if a < b {
                T::one()
            } else {
                T::zero()
            }
        })
        .collect();
    let n = T::from_usize_lossy(g.len());
    let g_mean = g.iter().copied().sum::<T>() / n;
    let c_dot_g: T = centred.iter().zip(&g).map(|(&c, &gi)| c * gi).sum();
    let norm3 = norm * norm * norm;
    let grad = g
        .iter()
        .zip(&centred)
        .map(|(&gi, &c)| (gi - g_mean) / norm - c * c_dot_g / norm3)
        .collect();
    Ok(LossValue { value, grad })
}

/// `max(0, score_lo - score_hi + margin)`; gradient `[d/d hi, d/d lo]`.
pub fn ranking_loss<T: Scalar>(score_hi: T, score_lo: T, margin: T) -> LossValue<T> {
    let v = score_lo - score_hi + margin;
    if v > T::zero() {
        LossValue {
            value: v,
            grad: vec![-T::one(), T::one()],
        }
    } else {
        LossValue {
            value: T::zero(),
            grad: vec![T::zero(), T::zero()],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd<F: Fn(f64) -> f64>(f: F, x: f64) -> f64 {
        let h = 1e-6;
        (f(x + h) - f(x - h)) / (2.0 * h)
    }

    #[test]
    fn ce_uniform_is_ln5() {
        let l = cross_entropy(&[0.3f64; 5], TokenIndex::new(2).unwrap());
        assert!((l.value - 5f64.ln()).abs() < 1e-12);
        let s: f64 = l.grad.iter().sum();
        assert!(s.abs() < 1e-15);
    }

    #[test]
    fn ce_saturates() {
        let l = cross_entropy(&[0.0, 0.0, 30.0, 0.0, 0.0f64], TokenIndex::new(3).unwrap());
        assert!(l.value < 1e-12);
    }

    #[test]
    fn ce_matches_naive_softmax() {
        let logits = [0.2, -1.3, 2.1, 0.7, -0.4f64];
        for t in TokenIndex::all() {
            let z: f64 = logits.iter().map(|v: &f64| v.exp()).sum();
            let want = -(logits[t.zero_based()].exp() / z).ln();
            assert!((cross_entropy(&logits, t).value - want).abs() < 1e-14);
        }
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_score(3.0f64, 3.0).value, 0.0);
        assert_eq!(mse_score(4.0f64, 3.0).value, 1.0);
        let l = mse_score(2.5f64, 3.7);
        assert!((l.value - 1.44).abs() < 1e-12);
        assert!((l.grad[0] + 2.4).abs() < 1e-12);
    }

    #[test]
    fn kl_examples() {
        let p = [0.1, 0.2, 0.4, 0.2, 0.1f64];
        assert_eq!(kl_divergence(&p, &p).value, 0.0);
        let one_hot = [1.0, 0.0, 0.0, 0.0, 0.0f64];
        let l = kl_divergence(&one_hot, &[0.2; 5]);
        assert!((l.value - 5f64.ln()).abs() < 1e-14);
        let q = [0.3, 0.1, 0.2, 0.25, 0.15];
        assert!(kl_divergence(&p, &q).value >= 0.0);
        // zero predicted mass is clamped, not infinite
        assert!(kl_divergence(&p, &[0.0, 0.25, 0.25, 0.25, 0.25])
            .value
            .is_finite());
    }

    #[test]
    fn kl_logit_gradient_matches_fd() {
        let target = [0.05, 0.15, 0.5, 0.2, 0.1f64];
        let logits = [0.1, -0.4, 0.9, 0.3, -1.0f64];
        let g = kl_from_logits(&target, &logits).grad;
        for j in 0..5 {
            let num = fd(
                |v| {
                    let mut z = logits;
                    z[j] = v;
                    kl_from_logits(&target, &z).value
                },
                logits[j],
            );
            assert!((num - g[j]).abs() < 1e-8, "j={j}");
        }
    }

    #[test]
    fn fidelity_prob_examples() {
        assert_eq!(fidelity_prob(3.0f64, 0.5, 3.0, 0.5).unwrap(), 0.5);
        let s = (0.3f64 * 0.3 + 0.4 * 0.4).sqrt();
        let p = fidelity_prob(2.0 + s, 0.3, 2.0, 0.4).unwrap();
        assert!((p - 0.841_344_746_068_542_9).abs() < 1e-12);
        let a = fidelity_prob(3.1f64, 0.2, 2.4, 0.7).unwrap();
        let b = fidelity_prob(2.4f64, 0.7, 3.1, 0.2).unwrap();
        assert!((a + b - 1.0).abs() < 1e-15);
        assert!(matches!(
            fidelity_prob(1.0f64, 0.0, 2.0, 0.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn fidelity_loss_examples() {
        assert!(fidelity_loss(0.5f64, 0.5).value.abs() < 1e-15);
        assert_eq!(fidelity_loss(1.0f64, 0.0).value, 1.0);
        let want = 1.0 - 0.48f64.sqrt() - 0.08f64.sqrt();
        assert!((fidelity_loss(0.8f64, 0.6).value - want).abs() < 1e-15);
        assert!((want - 0.0244).abs() < 1e-4);
        for i in 0..=20 {
            let p = i as f64 / 20.0;
            assert!(fidelity_loss(p, p).value.abs() < 1e-15, "p={p}");
        }
    }

    #[test]
    fn fidelity_pair_gradient_matches_fd() {
        let tx = ScoreBelief {
            mu: 3.4,
            sigma: 0.4,
        };
        let ty = ScoreBelief {
            mu: 2.9,
            sigma: 0.6,
        };
        let params = [3.0, 0.5, 3.2, 0.3f64];
        let eval = |p: [f64; 4]| {
            fidelity_pair(
                tx,
                ty,
                ScoreBelief {
                    mu: p[0],
                    sigma: p[1],
                },
                ScoreBelief {
                    mu: p[2],
                    sigma: p[3],
                },
            )
            .unwrap()
        };
        let g = eval(params).grad;
        for k in 0..4 {
            let num = fd(
                |v| {
                    let mut p = params;
                    p[k] = v;
                    eval(p).value
                },
                params[k],
            );
            assert!((num - g[k]).abs() < 1e-8, "k={k}: {num} vs {}", g[k]);
        }
    }

    #[test]
    fn norm_in_norm_examples() {
        let t = [1.0, 2.0, 3.0f64];
        let (q, _, _) = centred_normalized(&t).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!((q[0] + r).abs() < 1e-15 && q[1].abs() < 1e-15 && (q[2] - r).abs() < 1e-15);

        let targets = [1.2, 3.4, 2.2, 4.8, 3.9f64];
        let preds: Vec<f64> = targets.iter().map(|x| 0.7 * x - 2.0).collect();
        assert!(norm_in_norm(&targets, &preds).unwrap().value < 1e-14);

        let flipped: Vec<f64> = targets.iter().map(|x| -x).collect();
        let (qt, _, _) = centred_normalized(&targets).unwrap();
        let want: f64 = 2.0 * qt.iter().map(|v| v.abs()).sum::<f64>();
        assert!((norm_in_norm(&targets, &flipped).unwrap().value - want).abs() < 1e-14);
    }

    #[test]
    fn norm_in_norm_errors() {
        assert!(matches!(
            norm_in_norm(&[1.0, 2.0f64], &[3.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(matches!(
            norm_in_norm(&[2.0, 2.0f64], &[1.0, 3.0]),
            Err(Error::Degenerate(_))
        ));
        assert!(norm_in_norm(&[1.0, 2.0f64], &[1.0]).is_err());
    }

    #[test]
    fn norm_in_norm_gradient_matches_fd() {
        let targets = [1.2, 3.4, 2.2, 4.8, 3.9f64];
        let preds = [2.0, 2.9, 2.1, 4.0, 4.4f64];
        let g = norm_in_norm(&targets, &preds).unwrap().grad;
        for k in 0..preds.len() {
            let num = fd(
                |v| {
                    let mut p = preds;
                    p[k] = v;
                    norm_in_norm(&targets, &p).unwrap().value
                },
                preds[k],
            );
            assert!((num - g[k]).abs() < 1e-7, "k={k}");
        }
    }

    #[test]
    fn ranking_examples() {
        assert_eq!(ranking_loss(4.0f64, 3.0, 0.1).value, 0.0);
        assert!((ranking_loss(3.0f64, 3.0, 0.1).value - 0.1).abs() < 1e-15);
        let l = ranking_loss(2.5f64, 3.0, 0.0);
        assert_eq!(l.value, 0.5);
        assert_eq!(l.grad, vec![-1.0, 1.0]);
    }

    #[test]
    fn loss_kind_names_round_trip() {
        for k in LossKind::ALL {
            assert_eq!(k.name().parse::<LossKind>().unwrap(), k);
        }
        assert!("hinge".parse::<LossKind>().is_err());
    }
}
