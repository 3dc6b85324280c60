use serde::{Deserialize, Serialize};

use super::config::{HeadKind, ModelConfig, TrainConfig, PROMPT_TEMPLATE};
use super::model::{model_forward, token_target, ScorerModel};
use super::train::Trainer;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::metrics::{plcc, srcc, PairedSeries};
use crate::scalar::Scalar;
use crate::types::{EpochLosses, EvalReport, Prediction, REPORT_SCHEMA_VERSION};

/// `(plcc, srcc)`, or `None` when either side is constant or too short.
pub fn correlations(preds: &[f64], targets: &[f64]) -> Result<Option<(f64, f64)>> {
    let constant = |v: &[f64]| v.windows(2).all(|w| w[0] == w[1]);
    if preds.len() < 2 || constant(preds) || constant(targets) {
        return Ok(None);
    }
    let s = PairedSeries::new(preds.to_vec(), targets.to_vec())?;
    Ok(Some((plcc(&s)?, srcc(&s)?)))
}

/// Runs inference (argmax tokens) on every sample and scores the result.
pub fn evaluate<T: Scalar>(
    model: &ScorerModel<T>,
    dataset: &Dataset,
    loss_trace: Vec<EpochLosses>,
) -> Result<EvalReport> {
    if dataset.is_empty() {
        return Err(Error::Degenerate("cannot evaluate an empty dataset".into()));
    }
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut hits = 0usize;
    for s in &dataset.samples {
        let out = model_forward(model, &s.features)?;
        if out.token == token_target(s.mos)? {
            hits += 1;
        }
        predictions.push(Prediction {
            id: s.id.clone(),
            y_hat: out.y_hat.to_f64_lossy(),
            token: out.token,
            token_probs: out.probs.map(|p| p.to_f64_lossy()),
            mos: s.mos,
        });
    }
    let preds: Vec<f64> = predictions.iter().map(|p| p.y_hat).collect();
    let corr = correlations(&preds, &dataset.mos())?;
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        head: model.head().name().into(),
        prompt_template: PROMPT_TEMPLATE.into(),
        predictions,
        plcc: corr.map(|c| c.0),
        srcc: corr.map(|c| c.1),
        degenerate: corr.is_none(),
        token_accuracy: hits as f64 / dataset.len() as f64,
        loss_trace,
        error_stats: None,
    })
}

/// Outcome of training and evaluating one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadComparison {
    pub head: HeadKind,
    pub plcc: Option<f64>,
    pub srcc: Option<f64>,
    /// Held-out PLCC after each epoch.
    pub epoch_plcc: Vec<Option<f64>>,
    pub report: EvalReport,
}

impl HeadComparison {
    /// First epoch (1-based) whose held-out PLCC reaches `threshold`.
    pub fn epochs_to_plcc(&self, threshold: f64) -> Option<usize> {
        self.epoch_plcc
            .iter()
            .position(|p| p.is_some_and(|v| v >= threshold))
            .map(|i| i + 1)
    }
}

/// Trains one head on `train` and tracks held-out PLCC on `test` per epoch;
/// returns the trained model with its record.
pub fn train_and_track(
    model_cfg: &ModelConfig,
    train_cfg: &TrainConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(ScorerModel<f64>, HeadComparison)> {
    let model = ScorerModel::<f64>::new(model_cfg.clone(), train_cfg.seed)?;
    let mut t = Trainer::new(model, train_cfg.clone())?;
    let mut trace = Vec::with_capacity(train_cfg.epochs);
    let mut epoch_plcc = Vec::with_capacity(train_cfg.epochs);
    for _ in 0..train_cfg.epochs {
        trace.push(t.train_epoch(&train.samples)?);
        let preds = test
            .samples
            .iter()
            .map(|s| model_forward(&t.model, &s.features).map(|o| o.y_hat))
            .collect::<Result<Vec<f64>>>()?;
        epoch_plcc.push(correlations(&preds, &test.mos())?.map(|c| c.0));
    }
    let report = evaluate(&t.model, test, trace)?;
    let record = HeadComparison {
        head: model_cfg.head,
        plcc: report.plcc,
        srcc: report.srcc,
        epoch_plcc,
        report,
    };
    Ok((t.model, record))
}

/// Trains every head in `heads` with the same seed, epochs, batch size,
/// optimizer and schedule, each with its own primary losses.
pub fn compare_heads(
    train: &Dataset,
    test: &Dataset,
    base_model: &ModelConfig,
    base_train: &TrainConfig,
    heads: &[HeadKind],
) -> Result<Vec<HeadComparison>> {
    heads
        .iter()
        .map(|&head| {
            let mut m = base_model.clone();
            m.head = head;
            if head != HeadKind::QScorer {
                m.regressor = super::config::RegressorKind::Mlp;
                m.single_token = false;
                m.predict_sigma = false;
            }
            let mut t = TrainConfig::for_head(head, base_train.seed);
            t.epochs = base_train.epochs;
            t.batch_size = base_train.batch_size;
            t.optimizer = base_train.optimizer;
            t.lr_schedule = base_train.lr_schedule;
            t.ranking_margin = base_train.ranking_margin;
            t.fallback_sigma = base_train.fallback_sigma;
            t.teacher_forcing = base_train.teacher_forcing;
            train_and_track(&m, &t, train, test).map(|(_, record)| record)
        })
        .collect()
}
