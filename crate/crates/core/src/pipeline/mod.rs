//! Toy scorer: encoder, score-token selection, token-conditioned regression,
//! and the baseline heads it is compared against.

mod config;
mod eval;
mod model;
mod train;

pub use config::{
    FidelityVariant, Fusion, HeadKind, LossWeights, LrSchedule, ModelConfig, RegressorKind,
    TrainConfig, DEFAULT_BATCH_SIZE, DEFAULT_EPOCHS, DEFAULT_HEAD_HIDDEN, DEFAULT_HIDDEN_DIM,
    DEFAULT_LR, EMBEDDING_INIT_STD, PROMPT_TEMPLATE,
};
pub use eval::{compare_heads, correlations, evaluate, train_and_track, HeadComparison};
pub use model::{
    model_forward, token_for_score, token_target, ForwardTrace, ModelCheckpoint, ModelOutput,
    Regressor, ScorerModel, TokenChoice, Upstream, MODEL_FORMAT, MODEL_FORMAT_VERSION,
};
pub use train::{
    batch_objective, model_grad_check, train, BatchObjective, LossComponents, LossSetup, Trainer,
    SIGMA_FLOOR,
};
