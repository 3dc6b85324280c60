use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::DEFAULT_RANKING_MARGIN;
use crate::neural::{OptimizerConfig, DEFAULT_MAPPER_HIDDEN, DEFAULT_TARGET_HIDDEN};

/// Prompt recorded in reports; the toy encoder stands in for the model that
/// would read it.
pub const PROMPT_TEMPLATE: &str =
    "#User: <img> How would you rate the quality of this image? #Assistant: The quality of this image is <scorex>.";

pub const DEFAULT_HIDDEN_DIM: usize = 64;
pub const DEFAULT_HEAD_HIDDEN: [usize; 2] = [32, 16];
pub const DEFAULT_EPOCHS: usize = 30;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_LR: f64 = 2e-3;
/// Std of the initial score-token embeddings.
pub const EMBEDDING_INIT_STD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadKind {
    /// Score-token embedding fed to a regression MLP.
    #[serde(rename = "qscorer")]
    QScorer,
    /// Probability-weighted sum over the five level tokens.
    #[serde(rename = "qalign")]
    QAlign,
    /// Soft-label (KL) training, mean restoration at inference.
    #[serde(rename = "deqa")]
    DeQA,
    /// Linear regression on the encoder output, no tokens.
    #[serde(rename = "linear")]
    Linear,
}

impl HeadKind {
    pub const ALL: [HeadKind; 4] = [
        HeadKind::QScorer,
        HeadKind::QAlign,
        HeadKind::DeQA,
        HeadKind::Linear,
    ];

    pub fn name(self) -> &'static str {
        match self {
            HeadKind::QScorer => "qscorer",
            HeadKind::QAlign => "qalign",
            HeadKind::DeQA => "deqa",
            HeadKind::Linear => "linear",
        }
    }
}

impl fmt::Display for HeadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadKind::ALL
            .into_iter()
            .find(|h| h.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown head {s:?} (expected qscorer, qalign, deqa or linear)"
                ))
            })
    }
}

/// How the selected token embedding is combined with the encoder state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Fusion {
    /// `z = h + E[token]`: the token state alone.
    Additive,
    /// `z = [h, E[token]]`: token state alongside the visual state.
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegressorKind {
    Mlp,
    Hyper,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub feature_dim: usize,
    pub hidden_dim: usize,
    /// Hidden widths of the encoder between the features and `hidden_dim`.
    pub encoder_hidden: Vec<usize>,
    pub head: HeadKind,
    pub regressor: RegressorKind,
    /// Hidden widths of the regression MLP.
    pub head_hidden: Vec<usize>,
    pub fusion: Fusion,
    /// One shared score token, classifier disabled.
    pub single_token: bool,
    /// Regression head emits a second output for the predicted sigma.
    pub predict_sigma: bool,
    pub mapper_hidden: usize,
    pub target_hidden: Vec<usize>,
}

impl ModelConfig {
    pub fn new(feature_dim: usize, head: HeadKind) -> Self {
        Self {
            feature_dim,
            hidden_dim: DEFAULT_HIDDEN_DIM,
            encoder_hidden: vec![DEFAULT_HIDDEN_DIM],
            head,
            regressor: RegressorKind::Mlp,
            head_hidden: DEFAULT_HEAD_HIDDEN.to_vec(),
            fusion: Fusion::Additive,
            single_token: false,
            predict_sigma: false,
            mapper_hidden: DEFAULT_MAPPER_HIDDEN,
            target_hidden: DEFAULT_TARGET_HIDDEN.to_vec(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let dims_ok = self.feature_dim > 0
            && self.hidden_dim > 0
            && self.encoder_hidden.iter().all(|&d| d > 0)
            && self.head_hidden.iter().all(|&d| d > 0)
            && self.target_hidden.iter().all(|&d| d > 0)
            && self.mapper_hidden > 0;
        if !dims_ok {
            return Err(Error::Config("all layer widths must be positive".into()));
        }
        if self.single_token && self.head != HeadKind::QScorer {
            return Err(Error::Config(
                "the single-token variant applies to the qscorer head only".into(),
            ));
        }
        if self.predict_sigma
            && (self.head != HeadKind::QScorer || self.regressor != RegressorKind::Mlp)
        {
            return Err(Error::Config(
                "a sigma output needs the qscorer head with an MLP regressor".into(),
            ));
        }
        if self.regressor == RegressorKind::Hyper && self.head != HeadKind::QScorer {
            return Err(Error::Config(
                "the hyper-network regressor applies to the qscorer head only".into(),
            ));
        }
        Ok(())
    }

    pub fn fused_dim(&self) -> usize {
        match self.fusion {
            Fusion::Additive => self.hidden_dim,
            Fusion::Concat => 2 * self.hidden_dim,
        }
    }

    pub fn has_classifier(&self) -> bool {
        !self.single_token
    }
}

/// Source of the predicted sigma for the fidelity loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FidelityVariant {
    /// Second regression output, `sigma = softplus(out[1])`.
    SigmaHead,
    /// Standard deviation of the predicted token distribution.
    TokenSpread,
}

/// Per-epoch learning-rate schedule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LrSchedule {
    Constant,
    /// Half-cosine from the base rate down to `min_fraction` of it at the last epoch.
    Cosine {
        min_fraction: f64,
    },
}

impl LrSchedule {
    pub const DEFAULT: LrSchedule = LrSchedule::Cosine { min_fraction: 0.1 };

    /// Learning rate for `epoch` (0-based) of `epochs`.
    pub fn lr_at(self, base: f64, epoch: usize, epochs: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine { min_fraction } => {
                if epochs <= 1 {
                    return base;
                }
                let t = epoch.min(epochs - 1) as f64 / (epochs - 1) as f64;
                base * (min_fraction
                    + (1.0 - min_fraction) * 0.5 * (1.0 + (std::f64::consts::PI * t).cos()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub ce: f64,
    /// Weight of the score MSE (λ_score).
    pub score: f64,
    pub kl: f64,
    pub fidelity: f64,
    pub norm_in_norm: f64,
    pub ranking: f64,
}

impl LossWeights {
    pub const NONE: LossWeights = LossWeights {
        ce: 0.0,
        score: 0.0,
        kl: 0.0,
        fidelity: 0.0,
        norm_in_norm: 0.0,
        ranking: 0.0,
    };

    /// Primary losses of each head.
    pub fn for_head(head: HeadKind) -> Self {
        match head {
            HeadKind::QScorer => LossWeights {
                ce: 1.0,
                score: 1.0,
                ..Self::NONE
            },
            HeadKind::QAlign => LossWeights {
                ce: 1.0,
                ..Self::NONE
            },
            HeadKind::DeQA => LossWeights {
                kl: 1.0,
                ..Self::NONE
            },
            HeadKind::Linear => LossWeights {
                score: 1.0,
                ..Self::NONE
            },
        }
    }

    fn all(&self) -> [(&'static str, f64); 6] {
        [
            ("ce", self.ce),
            ("score", self.score),
            ("kl", self.kl),
            ("fidelity", self.fidelity),
            ("norm_in_norm", self.norm_in_norm),
            ("ranking", self.ranking),
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub lr_schedule: LrSchedule,
    pub weights: LossWeights,
    pub ranking_margin: f64,
    pub fidelity_variant: FidelityVariant,
    pub teacher_forcing: bool,
    /// Sigma for samples without an annotated std.
    pub fallback_sigma: Option<f64>,
    pub seed: u64,
}

impl TrainConfig {
    pub fn for_head(head: HeadKind, seed: u64) -> Self {
        Self {
            epochs: DEFAULT_EPOCHS,
            batch_size: DEFAULT_BATCH_SIZE,
            optimizer: OptimizerConfig::adamw(DEFAULT_LR),
            lr_schedule: LrSchedule::DEFAULT,
            weights: LossWeights::for_head(head),
            ranking_margin: DEFAULT_RANKING_MARGIN,
            fidelity_variant: FidelityVariant::TokenSpread,
            teacher_forcing: true,
            fallback_sigma: None,
            seed,
        }
    }

    /// Checks the loss setup against the model it will train.
    pub fn validate(&self, model: &ModelConfig) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be >= 1".into()));
        }
        for (name, w) in self.weights.all() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(Error::Config(format!(
                    "loss weight {name} must be a finite value >= 0, got {w}"
                )));
            }
        }
        if self.weights.all().iter().all(|&(_, w)| w == 0.0) {
            return Err(Error::Config("at least one loss must be enabled".into()));
        }
        if model.head == HeadKind::QScorer && !(self.weights.score > 0.0) {
            return Err(Error::Config(
                "the qscorer head needs a score loss weight > 0".into(),
            ));
        }
        if !model.has_classifier() && (self.weights.ce > 0.0 || self.weights.kl > 0.0) {
            return Err(Error::Config(
                "CE and KL need the token classifier (disabled by single_token)".into(),
            ));
        }
        if self.weights.fidelity > 0.0 {
            match self.fidelity_variant {
                FidelityVariant::SigmaHead if !model.predict_sigma => {
                    return Err(Error::Config(
                        "fidelity variant sigma-head needs predict_sigma".into(),
                    ))
                }
                FidelityVariant::TokenSpread if !model.has_classifier() => {
                    return Err(Error::Config(
                        "fidelity variant token-spread needs the token classifier".into(),
                    ))
                }
                _ => {}
            }
        }
        if let Some(s) = self.fallback_sigma {
            if !(s > 0.0) {
                return Err(Error::Config(format!(
                    "fallback sigma must be > 0, got {s}"
                )));
            }
        }
        if let LrSchedule::Cosine { min_fraction } = self.lr_schedule {
            if !(0.0..=1.0).contains(&min_fraction) {
                return Err(Error::Config(format!(
                    "cosine min_fraction must be in [0, 1], got {min_fraction}"
                )));
            }
        }
        if !(self.ranking_margin >= 0.0) {
            return Err(Error::Config("ranking margin must be >= 0".into()));
        }
        Ok(())
    }
}
