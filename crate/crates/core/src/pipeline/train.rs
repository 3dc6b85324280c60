use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::{FidelityVariant, LossWeights, TrainConfig};
use super::model::{token_target, ForwardTrace, ScorerModel, TokenChoice, Upstream};
use crate::error::{Error, Result};
use crate::label::{deqa_soft_label, GaussianRating};
use crate::losses::{
    cross_entropy, fidelity_pair, kl_from_logits, mse_score, norm_in_norm, ranking_loss,
    ScoreBelief,
};
use crate::neural::{finite_difference_check, sigmoid, softplus, GradCheckReport, Optimizer};
use crate::rng::{self, streams, Rng};
use crate::scalar::Scalar;
use crate::types::{EpochLosses, MosSample, LEVELS};

/// Predicted token spread below this is treated as constant (zero gradient).
pub const SIGMA_FLOOR: f64 = 1e-3;

/// Unweighted loss components of one batch; `total` is the weighted sum.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub ce: f64,
    pub score: f64,
    pub kl: f64,
    pub fidelity: f64,
    pub norm_in_norm: f64,
    pub ranking: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchObjective<T> {
    pub loss: T,
    pub components: LossComponents,
    pub grad: Vec<T>,
}

/// Loss settings shared by training and gradient checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossSetup {
    pub weights: LossWeights,
    pub ranking_margin: f64,
    pub fidelity_variant: FidelityVariant,
    pub teacher_forcing: bool,
    pub fallback_sigma: Option<f64>,
}

impl From<&TrainConfig> for LossSetup {
    fn from(c: &TrainConfig) -> Self {
        Self {
            weights: c.weights,
            ranking_margin: c.ranking_margin,
            fidelity_variant: c.fidelity_variant,
            teacher_forcing: c.teacher_forcing,
            fallback_sigma: c.fallback_sigma,
        }
    }
}

/// Standard deviation of the token distribution and its gradient with
/// respect to the logits.
fn token_spread<T: Scalar>(p: &[T; LEVELS]) -> (T, [T; LEVELS]) {
    let c = |i: usize| T::from_usize_lossy(i + 1);
    let m: T = (0..LEVELS).map(|i| p[i] * c(i)).sum();
    let m2: T = (0..LEVELS).map(|i| p[i] * c(i) * c(i)).sum();
    let var = (m2 - m * m).max(T::zero());
    let s = var.sqrt();
    let floor = T::lit(SIGMA_FLOOR);
    if s <= floor {
        return (floor, [T::zero(); LEVELS]);
    }
    // d var / d l_j = p_j (c_j² - m2) - 2 m p_j (c_j - m)
    let g = std::array::from_fn(|j| {
        let dv = p[j] * (c(j) * c(j) - m2) - T::lit(2.0) * m * p[j] * (c(j) - m);
        dv / (T::lit(2.0) * s)
    });
    (s, g)
}

fn is_degenerate(e: &Error) -> bool {
    matches!(e, Error::Degenerate(_))
}

/// Weighted loss over one batch and its gradient in the flat parameter
/// layout of `model`.
pub fn batch_objective<T: Scalar>(
    model: &ScorerModel<T>,
    batch: &[&MosSample],
    setup: &LossSetup,
) -> Result<BatchObjective<T>> {
    let n = batch.len();
    if n == 0 {
        return Err(Error::Degenerate("empty batch".into()));
    }
    let w = &setup.weights;
    let inv_n = T::one() / T::from_usize_lossy(n);
    let mos: Vec<T> = batch.iter().map(|s| T::lit(s.mos)).collect();
    let targets = batch
        .iter()
        .map(|s| token_target(s.mos))
        .collect::<Result<Vec<_>>>()?;

    let traces: Vec<ForwardTrace<T>> = batch
        .iter()
        .zip(&targets)
        .map(|(s, &t)| {
            let x: Vec<T> = s.features.iter().map(|&v| T::lit(v)).collect();
            let choice = if setup.teacher_forcing {
                TokenChoice::Forced(t)
            } else {
                TokenChoice::Argmax
            };
            model.forward_trace(&x, choice)
        })
        .collect::<Result<_>>()?;
    let y: Vec<T> = traces.iter().map(|t| t.output.y_hat).collect();
    let mut up = vec![Upstream::<T>::default(); n];
    let mut comp = LossComponents::default();
    let mut total = T::zero();

    if w.ce > 0.0 {
        let wt = T::lit(w.ce) * inv_n;
        let mut sum = T::zero();
        for k in 0..n {
            let l = cross_entropy(&traces[k].output.logits, targets[k]);
            sum += l.value * inv_n;
            for j in 0..LEVELS {
                up[k].logits[j] += wt * l.grad[j];
            }
        }
        comp.ce = sum.to_f64_lossy();
        total += T::lit(w.ce) * sum;
    }

    if w.score > 0.0 {
        let wt = T::lit(w.score) * inv_n;
        let mut sum = T::zero();
        for k in 0..n {
            let l = mse_score(y[k], mos[k]);
            sum += l.value * inv_n;
            up[k].y += wt * l.grad[0];
        }
        comp.score = sum.to_f64_lossy();
        total += T::lit(w.score) * sum;
    }

    let sigmas = || -> Result<Vec<f64>> {
        batch
            .iter()
            .map(|s| s.sigma_or(setup.fallback_sigma))
            .collect()
    };

    if w.kl > 0.0 {
        let sig = sigmas()?;
        let wt = T::lit(w.kl) * inv_n;
        let mut sum = T::zero();
        for k in 0..n {
            let label = deqa_soft_label(GaussianRating::new(mos[k], T::lit(sig[k]))?)?;
            let l = kl_from_logits(&label.probs, &traces[k].output.logits);
            sum += l.value * inv_n;
            for j in 0..LEVELS {
                up[k].logits[j] += wt * l.grad[j];
            }
        }
        comp.kl = sum.to_f64_lossy();
        total += T::lit(w.kl) * sum;
    }

    if w.fidelity > 0.0 && n >= 2 {
        let sig = sigmas()?;
        let truths: Vec<ScoreBelief<T>> = (0..n)
            .map(|k| ScoreBelief {
                mu: mos[k],
                sigma: T::lit(sig[k]),
            })
            .collect();
        let mut preds = Vec::with_capacity(n);
        let mut spread_grads = Vec::with_capacity(n);
        for (k, t) in traces.iter().enumerate() {
            match setup.fidelity_variant {
                FidelityVariant::SigmaHead => {
                    let raw = t.output.sigma_raw.ok_or_else(|| {
                        Error::Config("fidelity variant sigma-head needs a sigma output".into())
                    })?;
                    preds.push(ScoreBelief {
                        mu: y[k],
                        sigma: softplus(raw),
                    });
                }
                FidelityVariant::TokenSpread => {
                    let (s, g) = token_spread(&t.output.probs);
                    preds.push(ScoreBelief { mu: y[k], sigma: s });
                    spread_grads.push(g);
                }
            }
        }
        let pairs = n * (n - 1) / 2;
        let wp = T::one() / T::from_usize_lossy(pairs);
        let wt = T::lit(w.fidelity) * wp;
        let mut sum = T::zero();
        let mut dsig = vec![T::zero(); n];
        for i in 0..n {
            for j in i + 1..n {
                let l = fidelity_pair(truths[i], truths[j], preds[i], preds[j])?;
                sum += l.value * wp;
                up[i].y += wt * l.grad[0];
                up[j].y += wt * l.grad[2];
                dsig[i] += wt * l.grad[1];
                dsig[j] += wt * l.grad[3];
            }
        }
        for k in 0..n {
            match setup.fidelity_variant {
                FidelityVariant::SigmaHead => {
                    up[k].sigma_raw +=
                        dsig[k] * sigmoid(traces[k].output.sigma_raw.expect("checked above"));
                }
                FidelityVariant::TokenSpread => {
                    for j in 0..LEVELS {
                        up[k].logits[j] += dsig[k] * spread_grads[k][j];
                    }
                }
            }
        }
        comp.fidelity = sum.to_f64_lossy();
        total += T::lit(w.fidelity) * sum;
    }

    if w.norm_in_norm > 0.0 {
        match norm_in_norm(&mos, &y) {
            Ok(l) => {
                let wt = T::lit(w.norm_in_norm);
                for k in 0..n {
                    up[k].y += wt * l.grad[k];
                }
                comp.norm_in_norm = l.value.to_f64_lossy();
                total += wt * l.value;
            }
            // constant targets or predictions in this batch: no signal
            Err(e) if is_degenerate(&e) => {}
            Err(e) => return Err(e),
        }
    }

    if w.ranking > 0.0 {
        let margin = T::lit(setup.ranking_margin);
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .filter(|&(i, j)| mos[i] > mos[j])
            .collect();
        if !pairs.is_empty() {
            let wp = T::one() / T::from_usize_lossy(pairs.len());
            let wt = T::lit(w.ranking) * wp;
            let mut sum = T::zero();
            for (hi, lo) in pairs {
                let l = ranking_loss(y[hi], y[lo], margin);
                sum += l.value * wp;
                up[hi].y += wt * l.grad[0];
                up[lo].y += wt * l.grad[1];
            }
            comp.ranking = sum.to_f64_lossy();
            total += T::lit(w.ranking) * sum;
        }
    }

    let mut grad = vec![T::zero(); model.param_count()];
    for (t, u) in traces.iter().zip(&up) {
        model.backward(t, u, &mut grad)?;
    }
    comp.total = total.to_f64_lossy();
    Ok(BatchObjective {
        loss: total,
        components: comp,
        grad,
    })
}

/// Model, optimizer and batch-order stream of one training run.
#[derive(Debug, Clone)]
pub struct Trainer<T> {
    pub model: ScorerModel<T>,
    pub config: TrainConfig,
    optimizer: Optimizer<T>,
    order_rng: Rng,
    epoch: usize,
    step: usize,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: ScorerModel<T>, config: TrainConfig) -> Result<Self> {
        config.validate(&model.config)?;
        let optimizer = Optimizer::new(config.optimizer)?;
        let order_rng = rng::stream(config.seed, streams::BATCH_ORDER);
        Ok(Self {
            model,
            config,
            optimizer,
            order_rng,
            epoch: 0,
            step: 0,
        })
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One pass over `data` in seeded mini-batches; returns the mean loss
    /// components over batches.
    pub fn train_epoch(&mut self, data: &[MosSample]) -> Result<EpochLosses> {
        if data.is_empty() {
            return Err(Error::Degenerate("training set is empty".into()));
        }
        let setup = LossSetup::from(&self.config);
        let lr =
            self.config
                .lr_schedule
                .lr_at(self.config.optimizer.lr, self.epoch, self.config.epochs);
        self.optimizer.set_lr(lr);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut self.order_rng);
        let mut acc = LossComponents::default();
        let mut batches = 0usize;
        for (b, chunk) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&MosSample> = chunk.iter().map(|&i| &data[i]).collect();
            let obj = batch_objective(&self.model, &batch, &setup)?;
            if !obj.loss.is_finite() {
                return Err(Error::Training {
                    step: self.step,
                    reason: format!("non-finite loss in epoch {} batch {b}", self.epoch),
                });
            }
            let mut params = self.model.params_flat();
            self.optimizer
                .step(&mut params, &obj.grad)
                .map_err(|e| match e {
                    Error::Training { reason, .. } => Error::Training {
                        step: self.step,
                        reason: format!("{reason} (epoch {} batch {b})", self.epoch),
                    },
                    other => other,
                })?;
            self.model.set_params_flat(&params)?;
            let c = obj.components;
            acc.total += c.total;
            acc.ce += c.ce;
            acc.score += c.score;
            acc.kl += c.kl;
            acc.fidelity += c.fidelity;
            acc.norm_in_norm += c.norm_in_norm;
            acc.ranking += c.ranking;
            batches += 1;
            self.step += 1;
        }
        let nb = batches as f64;
        let out = EpochLosses {
            epoch: self.epoch,
            total: acc.total / nb,
            ce: acc.ce / nb,
            score: acc.score / nb,
            kl: acc.kl / nb,
            fidelity: acc.fidelity / nb,
            norm_in_norm: acc.norm_in_norm / nb,
            ranking: acc.ranking / nb,
        };
        self.epoch += 1;
        Ok(out)
    }
}

/// Trains `model` for `config.epochs` epochs; returns the model and the
/// per-epoch loss trace.
pub fn train<T: Scalar>(
    model: ScorerModel<T>,
    data: &[MosSample],
    config: &TrainConfig,
) -> Result<(ScorerModel<T>, Vec<EpochLosses>)> {
    let mut t = Trainer::new(model, config.clone())?;
    let trace = (0..config.epochs)
        .map(|_| t.train_epoch(data))
        .collect::<Result<Vec<_>>>()?;
    Ok((t.model, trace))
}

/// Central-difference check of [`batch_objective`]'s gradient over every
/// model parameter.
pub fn model_grad_check<T: Scalar>(
    model: &ScorerModel<T>,
    batch: &[&MosSample],
    setup: &LossSetup,
) -> Result<GradCheckReport> {
    let analytic = batch_objective(model, batch, setup)?.grad;
    let mut probe = model.clone();
    finite_difference_check(&model.params_flat(), &analytic, |p| {
        probe.set_params_flat(p)?;
        Ok(batch_objective(&probe, batch, setup)?.loss)
    })
}
