//! Dense networks with hand-written backpropagation.

pub mod checkpoint;
pub mod dense;
pub mod gradcheck;
pub mod hyper;
pub mod optim;

pub use checkpoint::NetCheckpoint;
pub use dense::{sigmoid, softplus, Activation, Dense, DenseNet, ForwardCache, Gradients};
pub use gradcheck::{
    finite_difference_check, grad_check, grad_check_hyper, GradCheckReport, Objective,
};
pub use hyper::{
    hyper_forward, HyperCache, HyperGradients, HyperHead, DEFAULT_MAPPER_HIDDEN,
    DEFAULT_TARGET_HIDDEN,
};
pub use optim::{Optimizer, OptimizerConfig, OptimizerKind};
