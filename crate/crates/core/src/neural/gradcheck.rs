//! Central finite-difference verification of analytic gradients.

use serde::Serialize;

use super::dense::{sigmoid, softplus, DenseNet};
use super::hyper::HyperHead;
use crate::error::{check_len, Error, Result};
use crate::losses::{
    cross_entropy, fidelity_pair, kl_from_logits, mse_score, norm_in_norm, ranking_loss, LossKind,
    ScoreBelief,
};
use crate::scalar::Scalar;
use crate::types::{TokenIndex, LEVELS};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared on an absolute scale.
pub const REL_ERROR_FLOOR: f64 = 1e-5;
/// Predicted sigma used by the fidelity objective on single-output networks.
pub const FIXED_PRED_SIGMA: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let diff = (analytic - numeric).abs();
    if diff == 0.0 {
        return 0.0;
    }
    diff / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` with central differences of `f` around `params`.
pub fn finite_difference_check<T, F>(
    params: &[T],
    analytic: &[T],
    mut f: F,
) -> Result<GradCheckReport>
where
    T: Scalar,
    F: FnMut(&[T]) -> Result<T>,
{
    check_len("analytic gradient", params.len(), analytic.len())?;
    let h = T::lit(FD_STEP);
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: params.len(),
    };
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let fp = f(&work)?;
        work[i] = orig - h;
        let fm = f(&work)?;
        work[i] = orig;
        let numeric = ((fp - fm) / (h + h)).to_f64_lossy();
        let a = analytic[i].to_f64_lossy();
        let err = relative_error(a, numeric);
        if err > report.max_rel_error || i == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = a;
            report.numeric = numeric;
        }
    }
    Ok(report)
}

/// A batch loss over network outputs.
#[derive(Debug, Clone, PartialEq)]
pub enum Objective<T> {
    /// Mean squared error of `output[0]`.
    Mse {
        targets: Vec<T>,
    },
    /// Mean cross-entropy, outputs are 5 logits.
    CrossEntropy {
        targets: Vec<TokenIndex>,
    },
    /// Mean KL of softmax(outputs) against soft targets.
    Kl {
        targets: Vec<[T; LEVELS]>,
    },
    /// Mean fidelity over all pairs; `output[0]` is the mean and
    /// `softplus(output[1])` the sigma when a second output exists.
    Fidelity {
        truths: Vec<ScoreBelief<T>>,
    },
    NormInNorm {
        targets: Vec<T>,
    },
    /// Mean hinge over all pairs with a strictly higher target.
    Ranking {
        targets: Vec<T>,
        margin: T,
    },
}

impl<T: Scalar> Objective<T> {
    pub fn kind(&self) -> LossKind {
        match self {
            Objective::Mse { .. } => LossKind::Mse,
            Objective::CrossEntropy { .. } => LossKind::CrossEntropy,
            Objective::Kl { .. } => LossKind::Kl,
            Objective::Fidelity { .. } => LossKind::Fidelity,
            Objective::NormInNorm { .. } => LossKind::NormInNorm,
            Objective::Ranking { .. } => LossKind::Ranking,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Objective::Mse { targets } | Objective::NormInNorm { targets } => targets.len(),
            Objective::Ranking { targets, .. } => targets.len(),
            Objective::CrossEntropy { targets } => targets.len(),
            Objective::Kl { targets } => targets.len(),
            Objective::Fidelity { truths } => truths.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Loss value and `dL/d output` for each sample.
    pub fn evaluate(&self, outputs: &[Vec<T>]) -> Result<(T, Vec<Vec<T>>)> {
        check_len("objective batch", self.len(), outputs.len())?;
        let n = outputs.len();
        if n == 0 {
            return Err(Error::Degenerate("empty batch".into()));
        }
        let inv_n = T::one() / T::from_usize_lossy(n);
        let mut grads: Vec<Vec<T>> = outputs.iter().map(|o| vec![T::zero(); o.len()]).collect();
        let mut total = T::zero();
        match self {
            Objective::Mse { targets } => {
                for k in 0..n {
                    let l = mse_score(outputs[k][0], targets[k]);
                    total += l.value * inv_n;
                    grads[k][0] = l.grad[0] * inv_n;
                }
            }
            Objective::CrossEntropy { targets } => {
                for k in 0..n {
                    let l = cross_entropy(&outputs[k], targets[k]);
                    total += l.value * inv_n;
                    for (g, d) in grads[k].iter_mut().zip(l.grad) {
                        *g = d * inv_n;
                    }
                }
            }
            Objective::Kl { targets } => {
                for k in 0..n {
                    check_len("kl logits", LEVELS, outputs[k].len())?;
                    let logits: [T; LEVELS] = std::array::from_fn(|i| outputs[k][i]);
                    let l = kl_from_logits(&targets[k], &logits);
                    total += l.value * inv_n;
                    for (g, d) in grads[k].iter_mut().zip(l.grad) {
                        *g = d * inv_n;
                    }
                }
            }
            Objective::Fidelity { truths } => {
                let belief = |o: &[T]| -> ScoreBelief<T> {
                    let sigma = if o.len() >= 2 {
                        softplus(o[1])
                    } else {
                        T::lit(FIXED_PRED_SIGMA)
                    };
                    ScoreBelief { mu: o[0], sigma }
                };
                let pairs = n * (n - 1) / 2;
                if pairs == 0 {
                    return Err(Error::Degenerate("fidelity needs at least 2 items".into()));
                }
                let w = T::one() / T::from_usize_lossy(pairs);
                for i in 0..n {
                    for j in i + 1..n {
                        let l = fidelity_pair(
                            truths[i],
                            truths[j],
                            belief(&outputs[i]),
                            belief(&outputs[j]),
                        )?;
                        total += l.value * w;
                        grads[i][0] += l.grad[0] * w;
                        grads[j][0] += l.grad[2] * w;
                        if outputs[i].len() >= 2 {
                            grads[i][1] += l.grad[1] * w * sigmoid(outputs[i][1]);
                        }
                        if outputs[j].len() >= 2 {
                            grads[j][1] += l.grad[3] * w * sigmoid(outputs[j][1]);
                        }
                    }
                }
            }
            Objective::NormInNorm { targets } => {
                let preds: Vec<T> = outputs.iter().map(|o| o[0]).collect();
                let l = norm_in_norm(targets, &preds)?;
                total = l.value;
                for (g, d) in grads.iter_mut().zip(l.grad) {
                    g[0] = d;
                }
            }
            Objective::Ranking { targets, margin } => {
                let pairs: Vec<(usize, usize)> = (0..n)
                    .flat_map(|i| (0..n).map(move |j| (i, j)))
                    .filter(|&(i, j)| targets[i] > targets[j])
                    .collect();
                if pairs.is_empty() {
                    return Err(Error::Degenerate(
                        "ranking needs a pair with distinct targets".into(),
                    ));
                }
                let w = T::one() / T::from_usize_lossy(pairs.len());
                for (hi, lo) in pairs {
                    let l = ranking_loss(outputs[hi][0], outputs[lo][0], *margin);
                    total += l.value * w;
                    grads[hi][0] += l.grad[0] * w;
                    grads[lo][0] += l.grad[1] * w;
                }
            }
        }
        Ok((total, grads))
    }
}

/// Checks every parameter of `net` under `objective` evaluated on `inputs`.
pub fn grad_check<T: Scalar>(
    net: &DenseNet<T>,
    objective: &Objective<T>,
    inputs: &[Vec<T>],
) -> Result<GradCheckReport> {
    let mut outputs = Vec::with_capacity(inputs.len());
    let mut caches = Vec::with_capacity(inputs.len());
    for x in inputs {
        let (y, c) = net.forward(x)?;
        outputs.push(y);
        caches.push(c);
    }
    let (_, upstream) = objective.evaluate(&outputs)?;
    let mut analytic = vec![T::zero(); net.param_count()];
    for (c, u) in caches.iter().zip(&upstream) {
        let g = net.backward(c, u)?;
        for (a, b) in analytic.iter_mut().zip(g.params) {
            *a += b;
        }
    }
    let dims = net.layer_dims();
    let acts = net.activations();
    finite_difference_check(&net.params_flat(), &analytic, |p| {
        let probe = DenseNet::from_flat(&dims, &acts, p)?;
        let outs = inputs
            .iter()
            .map(|x| probe.infer(x))
            .collect::<Result<Vec<_>>>()?;
        Ok(objective.evaluate(&outs)?.0)
    })
}

/// Checks the hyper head over mapper parameters and both inputs
/// (`semantic` and `z`), laid out as `[params, semantic_0, z_0, semantic_1, ..]`.
pub fn grad_check_hyper<T: Scalar>(
    head: &HyperHead<T>,
    objective: &Objective<T>,
    inputs: &[(Vec<T>, Vec<T>)],
) -> Result<GradCheckReport> {
    let mut outputs = Vec::new();
    let mut caches = Vec::new();
    for (s, z) in inputs {
        let (y, c) = head.forward(s, z)?;
        outputs.push(vec![y]);
        caches.push(c);
    }
    let (_, upstream) = objective.evaluate(&outputs)?;
    let np = head.param_count();
    let mut analytic = vec![T::zero(); np];
    let mut point = head.mapper.params_flat();
    for ((c, u), (s, z)) in caches.iter().zip(&upstream).zip(inputs) {
        let g = head.backward(c, u[0])?;
        for (a, b) in analytic.iter_mut().zip(&g.params) {
            *a += *b;
        }
        analytic.extend(g.semantic);
        analytic.extend(g.z);
        point.extend_from_slice(s);
        point.extend_from_slice(z);
    }
    let (sd, zd) = (head.semantic_dim(), head.z_dim());
    finite_difference_check(&point, &analytic, |p| {
        let mut probe = head.clone();
        probe.mapper.set_params_flat(&p[..np])?;
        let mut outs = Vec::with_capacity(inputs.len());
        let mut off = np;
        for _ in inputs {
            let s = &p[off..off + sd];
            let z = &p[off + sd..off + sd + zd];
            off += sd + zd;
            outs.push(vec![probe.forward(s, z)?.0]);
        }
        Ok(objective.evaluate(&outs)?.0)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::dense::Activation;
    use crate::rng;

    #[test]
    fn relative_error_definition() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 1.1).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 1e-4).abs() < 1e-15);
    }

    #[test]
    fn mlp_mse_passes() {
        let mut net = DenseNet::<f64>::mlp(&[8, 4, 1], Activation::Relu).unwrap();
        net.init_random(&mut rng::seeded(2));
        let inputs: Vec<Vec<f64>> = (0..3)
            .map(|k| {
                (0..8)
                    .map(|i| ((i * 7 + k * 3) as f64 * 0.37).sin())
                    .collect()
            })
            .collect();
        let obj = Objective::Mse {
            targets: vec![3.0, 1.5, 4.2],
        };
        let r = grad_check(&net, &obj, &inputs).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn zero_everything_gives_zero_gradients() {
        let net = DenseNet::<f64>::mlp(&[8, 4, 1], Activation::Relu).unwrap();
        let obj = Objective::Mse { targets: vec![0.0] };
        let r = grad_check(&net, &obj, &[vec![0.0; 8]]).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.analytic, 0.0);
        assert_eq!(r.numeric, 0.0);
    }

    #[test]
    fn ce_head_passes() {
        let mut net = DenseNet::<f64>::new(&[8, 5], &[Activation::Identity]).unwrap();
        net.init_random(&mut rng::seeded(4));
        let x: Vec<f64> = (0..8).map(|i| (i as f64 * 0.9).cos()).collect();
        let obj = Objective::CrossEntropy {
            targets: vec![TokenIndex::new(2).unwrap()],
        };
        let r = grad_check(&net, &obj, &[x]).unwrap();
        assert!(r.max_rel_error < 1e-5, "{r:?}");
    }

    #[test]
    fn evaluate_checks_batch_size() {
        let obj = Objective::Mse {
            targets: vec![1.0f64, 2.0],
        };
        assert!(obj.evaluate(&[vec![1.0]]).is_err());
        let rank = Objective::Ranking {
            targets: vec![2.0f64, 2.0],
            margin: 0.1,
        };
        assert!(matches!(
            rank.evaluate(&[vec![1.0], vec![1.0]]),
            Err(Error::Degenerate(_))
        ));
    }
}
