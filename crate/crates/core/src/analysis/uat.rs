//! Single-hidden-layer approximation of smooth score functions on `[0, 1]`.
//!
//! The network is `a0 + Σ α_i σ(w_i x + b_i)`. Hidden unit `i` is
//! initialized from its own RNG stream, so networks of different widths
//! trained with the same seed share their first units.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{ErrorStudy, StudyMethod};
use crate::error::{Error, Result};
use crate::neural::{Activation, Dense, DenseNet, Optimizer, OptimizerConfig};
use crate::rng::{self, streams};

/// Evaluation grid size for the sup error.
pub const EVAL_GRID: usize = 10_000;
pub const DEFAULT_TRAIN_POINTS: usize = 512;
pub const DEFAULT_LR: f64 = 0.01;
/// Hidden slope magnitudes are drawn from this range.
const SLOPE_RANGE: (f64, f64) = (0.5, 8.0);
/// Epochs between least-squares refits of the output layer.
const REFIT_EVERY: usize = 10;
/// Singular values below this fraction of the largest are dropped in the
/// output-layer refit.
const LSTSQ_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UatTarget {
    /// `1 + 4x`
    Affine,
    /// `3 + 1.5 sin(2πx)`
    SineWarped,
    /// `3`
    Constant,
}

impl UatTarget {
    pub const ALL: [UatTarget; 3] = [
        UatTarget::Affine,
        UatTarget::SineWarped,
        UatTarget::Constant,
    ];

    pub fn eval(self, x: f64) -> f64 {
        match self {
            UatTarget::Affine => 1.0 + 4.0 * x,
            UatTarget::SineWarped => 3.0 + 1.5 * (2.0 * std::f64::consts::PI * x).sin(),
            UatTarget::Constant => 3.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            UatTarget::Affine => "affine",
            UatTarget::SineWarped => "sine-warped",
            UatTarget::Constant => "constant",
        }
    }
}

impl fmt::Display for UatTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for UatTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        UatTarget::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                Error::Domain(format!(
                    "unknown UAT target '{s}' (expected affine, sine-warped or constant)"
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UatConfig {
    pub target: UatTarget,
    pub hidden_units: usize,
    pub epochs: usize,
    pub seed: u64,
    pub train_points: usize,
    pub lr: f64,
}

impl UatConfig {
    pub fn new(target: UatTarget, hidden_units: usize, epochs: usize, seed: u64) -> Self {
        Self {
            target,
            hidden_units,
            epochs,
            seed,
            train_points: DEFAULT_TRAIN_POINTS,
            lr: DEFAULT_LR,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UatResult {
    pub target: UatTarget,
    pub hidden_units: usize,
    pub epochs: usize,
    pub seed: u64,
    pub sup_error: f64,
    pub mse: f64,
}

impl UatResult {
    pub fn to_study(&self) -> ErrorStudy {
        ErrorStudy {
            method: StudyMethod::Regression,
            estimate: self.mse,
            analytic: None,
            std_error: None,
            samples: EVAL_GRID,
            seed: self.seed,
        }
    }
}

fn initial_net(hidden: usize, seed: u64) -> Result<DenseNet<f64>> {
    let mut first = Dense::zeros(1, hidden, Activation::Sigmoid);
    for i in 0..hidden {
        let mut r = rng::stream(seed, streams::PER_ITEM_BASE + i as u64);
        let centre: f64 = r.random_range(0.0..1.0);
        let slope: f64 = r.random_range(SLOPE_RANGE.0..SLOPE_RANGE.1);
        let w = if r.random_bool(0.5) { slope } else { -slope };
        first.weights[i] = w;
        first.bias[i] = -w * centre;
    }
    DenseNet::from_layers(vec![first, Dense::zeros(hidden, 1, Activation::Identity)])
}

/// Stratified sample points: one uniform draw per cell of `[0, 1]`.
fn train_points(n: usize, seed: u64) -> Vec<f64> {
    let mut r = rng::stream(seed, streams::UAT_SAMPLES);
    (0..n)
        .map(|k| (k as f64 + r.random::<f64>()) / n as f64)
        .collect()
}

fn hidden_features(net: &DenseNet<f64>, x: f64) -> Vec<f64> {
    let l = &net.layers()[0];
    (0..l.out_dim)
        .map(|i| crate::neural::sigmoid(l.weights[i] * x + l.bias[i]))
        .collect()
}

/// Least-squares fit of the output layer with hidden units frozen.
fn refit_output(net: &mut DenseNet<f64>, xs: &[f64], ys: &[f64]) -> Result<()> {
    let h = net.layers()[0].out_dim;
    let mut design = DMatrix::<f64>::zeros(xs.len(), h + 1);
    for (r, &x) in xs.iter().enumerate() {
        for (c, v) in hidden_features(net, x).into_iter().enumerate() {
            design[(r, c)] = v;
        }
        design[(r, h)] = 1.0;
    }
    let rhs = DVector::from_column_slice(ys);
    let svd = design.svd(true, true);
    let cutoff = LSTSQ_RCOND * svd.singular_values.max();
    let sol = svd
        .solve(&rhs, cutoff)
        .map_err(|e| Error::Degenerate(format!("output refit failed: {e}")))?;
    let out = net.layer_mut(1);
    out.weights.copy_from_slice(&sol.as_slice()[..h]);
    out.bias[0] = sol[h];
    Ok(())
}

/// Sup and mean squared error on an evenly spaced grid over `[0, 1]`.
fn grid_errors(net: &DenseNet<f64>, target: UatTarget) -> Result<(f64, f64)> {
    let mut sup = 0.0f64;
    let mut sq = 0.0;
    for k in 0..EVAL_GRID {
        let x = k as f64 / (EVAL_GRID - 1) as f64;
        let e = (net.infer(&[x])?[0] - target.eval(x)).abs();
        sup = sup.max(e);
        sq += e * e;
    }
    Ok((sup, sq / EVAL_GRID as f64))
}

/// Trains the network with full-batch Adam on the squared error, refitting
/// the output layer by least squares every few epochs and at the end.
pub fn uat_run(config: &UatConfig) -> Result<UatResult> {
    if config.hidden_units == 0 || config.train_points < 2 {
        return Err(Error::Domain(format!(
            "UAT demo needs hidden_units >= 1 and train_points >= 2, got {} and {}",
            config.hidden_units, config.train_points
        )));
    }
    let xs = train_points(config.train_points, config.seed);
    let ys: Vec<f64> = xs.iter().map(|&x| config.target.eval(x)).collect();
    let mut net = initial_net(config.hidden_units, config.seed)?;
    refit_output(&mut net, &xs, &ys)?;

    let mut opt_cfg = OptimizerConfig::adamw(config.lr);
    opt_cfg.weight_decay = 0.0;
    let mut opt = Optimizer::new(opt_cfg)?;
    let n = xs.len() as f64;
    for epoch in 0..config.epochs {
        let mut grad = vec![0.0; net.param_count()];
        for (&x, &y) in xs.iter().zip(&ys) {
            let (out, cache) = net.forward(&[x])?;
            let g = net.backward(&cache, &[2.0 * (out[0] - y) / n])?;
            for (a, b) in grad.iter_mut().zip(&g.params) {
                *a += b;
            }
        }
        let mut params = net.params_flat();
        opt.step(&mut params, &grad)?;
        net.set_params_flat(&params)?;
        if (epoch + 1) % REFIT_EVERY == 0 {
            refit_output(&mut net, &xs, &ys)?;
        }
    }
    refit_output(&mut net, &xs, &ys)?;

    let (sup_error, mse) = grid_errors(&net, config.target)?;
    Ok(UatResult {
        target: config.target,
        hidden_units: config.hidden_units,
        epochs: config.epochs,
        seed: config.seed,
        sup_error,
        mse,
    })
}

pub fn uat_demo(target: &str, hidden_units: usize, epochs: usize, seed: u64) -> Result<UatResult> {
    uat_run(&UatConfig::new(target.parse()?, hidden_units, epochs, seed))
}

/// One run per width, all with the same seed.
pub fn uat_capacity_sweep(
    target: UatTarget,
    widths: &[usize],
    epochs: usize,
    seed: u64,
) -> Result<Vec<UatResult>> {
    widths
        .iter()
        .map(|&w| uat_run(&UatConfig::new(target, w, epochs, seed)))
        .collect()
}
