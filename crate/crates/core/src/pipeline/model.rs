use std::path::Path;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::{Fusion, HeadKind, ModelConfig, RegressorKind, EMBEDDING_INIT_STD};
use crate::error::{check_len, Error, Result};
use crate::label::qalign_quantize;
use crate::losses::softmax5;
use crate::neural::{Activation, DenseNet, ForwardCache, HyperCache, HyperHead};
use crate::rng::{self, streams};
use crate::scalar::Scalar;
use crate::types::{TokenIndex, LEVELS, MOS_MAX, MOS_MIN};

pub const MODEL_FORMAT: &str = "qscorer-model";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Regressor<T> {
    Mlp(DenseNet<T>),
    Hyper(HyperHead<T>),
}

/// Encoder, token classifier, score-token embeddings and a head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScorerModel<T> {
    pub config: ModelConfig,
    pub encoder: DenseNet<T>,
    /// `hidden_dim → 5` logits; unused by the single-token variant.
    pub classifier: DenseNet<T>,
    /// One row per token (one row in the single-token variant).
    pub embeddings: Vec<Vec<T>>,
    /// Regression MLP / hyper head (qscorer) or linear map (linear head).
    pub regressor: Option<Regressor<T>>,
}

/// Which embedding a forward pass selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenChoice {
    Argmax,
    Forced(TokenIndex),
}

/// Inference-mode result of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelOutput<T> {
    pub logits: [T; LEVELS],
    pub probs: [T; LEVELS],
    /// Token reported for the item.
    pub token: TokenIndex,
    pub z: Vec<T>,
    pub y_hat: T,
    /// Raw sigma output (before softplus) when the head predicts one.
    pub sigma_raw: Option<T>,
}

#[derive(Debug, Clone)]
enum RegCache<T> {
    None,
    Dense(ForwardCache<T>),
    Hyper(HyperCache<T>),
}

/// Forward pass plus everything needed for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardTrace<T> {
    pub output: ModelOutput<T>,
    enc: ForwardCache<T>,
    cls: Option<ForwardCache<T>>,
    h: Vec<T>,
    /// Row of `embeddings` used for `z`.
    row: usize,
    reg: RegCache<T>,
}

/// Upstream gradients of one sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Upstream<T> {
    pub y: T,
    pub sigma_raw: T,
    pub logits: [T; LEVELS],
}

impl<T: Scalar> Default for Upstream<T> {
    fn default() -> Self {
        Self {
            y: T::zero(),
            sigma_raw: T::zero(),
            logits: [T::zero(); LEVELS],
        }
    }
}

/// Token whose interval contains the (clamped) score.
pub fn token_for_score<T: Scalar>(y: T) -> TokenIndex {
    let c = y.to_f64_lossy().clamp(MOS_MIN, MOS_MAX);
    qalign_quantize(c).expect("clamped score lies in [1, 5]")
}

/// Training target token for a MOS.
pub fn token_target(mos: f64) -> Result<TokenIndex> {
    qalign_quantize(mos)
}

fn levels_mean<T: Scalar>(p: &[T; LEVELS]) -> T {
    p.iter()
        .enumerate()
        .map(|(i, &q)| q * T::from_usize_lossy(i + 1))
        .sum()
}

impl<T: Scalar> ScorerModel<T> {
    /// All parameters zero.
    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let mut enc_dims = vec![config.feature_dim];
        enc_dims.extend(&config.encoder_hidden);
        enc_dims.push(config.hidden_dim);
        let encoder = DenseNet::mlp(&enc_dims, Activation::Relu)?;
        let classifier = DenseNet::new(&[config.hidden_dim, LEVELS], &[Activation::Identity])?;
        let rows = if config.single_token { 1 } else { LEVELS };
        let embeddings = vec![vec![T::zero(); config.hidden_dim]; rows];
        let regressor = match config.head {
            HeadKind::QScorer => Some(match config.regressor {
                RegressorKind::Mlp => {
                    let mut dims = vec![config.fused_dim()];
                    dims.extend(&config.head_hidden);
                    dims.push(if config.predict_sigma { 2 } else { 1 });
                    Regressor::Mlp(DenseNet::mlp(&dims, Activation::Relu)?)
                }
                RegressorKind::Hyper => Regressor::Hyper(HyperHead::new(
                    config.hidden_dim,
                    config.mapper_hidden,
                    config.fused_dim(),
                    &config.target_hidden,
                )?),
            }),
            HeadKind::Linear => Some(Regressor::Mlp(DenseNet::new(
                &[config.hidden_dim, 1],
                &[Activation::Identity],
            )?)),
            HeadKind::QAlign | HeadKind::DeQA => None,
        };
        Ok(Self {
            config,
            encoder,
            classifier,
            embeddings,
            regressor,
        })
    }

    /// Seeded random initialization.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        let mut m = Self::zeros(config)?;
        let mut r = rng::stream(seed, streams::MODEL_INIT);
        m.encoder.init_random(&mut r);
        m.classifier.init_random(&mut r);
        for row in &mut m.embeddings {
            for v in row.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v = T::lit(z * EMBEDDING_INIT_STD);
            }
        }
        match &mut m.regressor {
            Some(Regressor::Mlp(net)) => net.init_random(&mut r),
            Some(Regressor::Hyper(head)) => head.init_random(&mut r),
            None => {}
        }
        Ok(m)
    }

    pub fn head(&self) -> HeadKind {
        self.config.head
    }

    fn regressor_params(&self) -> Vec<T> {
        match &self.regressor {
            Some(Regressor::Mlp(n)) => n.params_flat(),
            Some(Regressor::Hyper(h)) => h.mapper.params_flat(),
            None => Vec::new(),
        }
    }

    fn regressor_param_count(&self) -> usize {
        match &self.regressor {
            Some(Regressor::Mlp(n)) => n.param_count(),
            Some(Regressor::Hyper(h)) => h.param_count(),
            None => 0,
        }
    }

    /// Sizes of the parameter blocks: encoder, classifier, embeddings,
    /// regressor.
    fn blocks(&self) -> [usize; 4] {
        [
            self.encoder.param_count(),
            self.classifier.param_count(),
            self.embeddings.len() * self.config.hidden_dim,
            self.regressor_param_count(),
        ]
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().sum()
    }

    pub fn params_flat(&self) -> Vec<T> {
        let mut v = Vec::with_capacity(self.param_count());
        v.extend(self.encoder.params_flat());
        v.extend(self.classifier.params_flat());
        for row in &self.embeddings {
            v.extend_from_slice(row);
        }
        v.extend(self.regressor_params());
        v
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        check_len("model parameters", self.param_count(), params.len())?;
        let [ne, nc, nm, _] = self.blocks();
        let (enc, rest) = params.split_at(ne);
        let (cls, rest) = rest.split_at(nc);
        let (emb, reg) = rest.split_at(nm);
        self.encoder.set_params_flat(enc)?;
        self.classifier.set_params_flat(cls)?;
        for (row, chunk) in self
            .embeddings
            .iter_mut()
            .zip(emb.chunks(self.config.hidden_dim))
        {
            row.copy_from_slice(chunk);
        }
        match &mut self.regressor {
            Some(Regressor::Mlp(n)) => n.set_params_flat(reg)?,
            Some(Regressor::Hyper(h)) => h.mapper.set_params_flat(reg)?,
            None => {}
        }
        Ok(())
    }

    /// Offsets of the parameter blocks in the flat layout.
    fn offsets(&self) -> [usize; 4] {
        let b = self.blocks();
        [0, b[0], b[0] + b[1], b[0] + b[1] + b[2]]
    }

    fn fuse(&self, h: &[T], row: usize) -> Vec<T> {
        let e = &self.embeddings[row];
        match self.config.fusion {
            Fusion::Additive => h.iter().zip(e).map(|(&a, &b)| a + b).collect(),
            Fusion::Concat => h.iter().chain(e).copied().collect(),
        }
    }

    pub fn forward_trace(&self, features: &[T], choice: TokenChoice) -> Result<ForwardTrace<T>> {
        check_len("model features", self.config.feature_dim, features.len())?;
        let (h, enc) = self.encoder.forward(features)?;
        let (logits, cls) = if self.config.has_classifier() {
            let (l, c) = self.classifier.forward(&h)?;
            ([l[0], l[1], l[2], l[3], l[4]], Some(c))
        } else {
            ([T::zero(); LEVELS], None)
        };
        let probs = softmax5(&logits);
        let argmax = (0..LEVELS)
            .max_by(|&a, &b| {
                logits[a]
                    .partial_cmp(&logits[b])
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.cmp(&a))
            })
            .expect("five logits");
        let selected = match choice {
            TokenChoice::Forced(t) => t.zero_based(),
            TokenChoice::Argmax => argmax,
        };
        let row = if self.config.single_token {
            0
        } else {
            selected
        };
        let z = self.fuse(&h, row);

        let (y_hat, sigma_raw, reg) = match (&self.config.head, &self.regressor) {
            (HeadKind::QScorer, Some(Regressor::Mlp(net))) => {
                let (out, c) = net.forward(&z)?;
                (out[0], out.get(1).copied(), RegCache::Dense(c))
            }
            (HeadKind::QScorer, Some(Regressor::Hyper(head))) => {
                let (y, c) = head.forward(&h, &z)?;
                (y, None, RegCache::Hyper(c))
            }
            (HeadKind::Linear, Some(Regressor::Mlp(net))) => {
                let (out, c) = net.forward(&h)?;
                (out[0], None, RegCache::Dense(c))
            }
            (HeadKind::QAlign | HeadKind::DeQA, _) => (levels_mean(&probs), None, RegCache::None),
            _ => {
                return Err(Error::Validation(
                    "model head and regressor disagree".into(),
                ))
            }
        };

        let token = match self.config.head {
            HeadKind::QScorer if !self.config.single_token => TokenIndex::new(selected + 1)?,
            HeadKind::QAlign | HeadKind::DeQA => TokenIndex::new(argmax + 1)?,
            _ => token_for_score(y_hat),
        };
        Ok(ForwardTrace {
            output: ModelOutput {
                logits,
                probs,
                token,
                z,
                y_hat,
                sigma_raw,
            },
            enc,
            cls,
            h,
            row,
            reg,
        })
    }

    /// Inference: argmax token selection.
    pub fn forward(&self, features: &[T]) -> Result<ModelOutput<T>> {
        self.forward_trace(features, TokenChoice::Argmax)
            .map(|t| t.output)
    }

    /// Adds the parameter gradient of one sample to `grad` (flat layout).
    pub fn backward(
        &self,
        trace: &ForwardTrace<T>,
        up: &Upstream<T>,
        grad: &mut [T],
    ) -> Result<()> {
        check_len("model gradient", self.param_count(), grad.len())?;
        let [o_enc, o_cls, o_emb, o_reg] = self.offsets();
        let hd = self.config.hidden_dim;
        let mut dh = vec![T::zero(); hd];
        let mut dlogits = up.logits;

        let mut dz: Option<Vec<T>> = None;
        match (&self.regressor, &trace.reg) {
            (Some(Regressor::Mlp(net)), RegCache::Dense(c)) => {
                let mut upstream = vec![up.y];
                if net.output_dim() == 2 {
                    upstream.push(up.sigma_raw);
                }
                let g = net.backward(c, &upstream)?;
                add(&mut grad[o_reg..], &g.params);
                if self.config.head == HeadKind::Linear {
                    add(&mut dh, &g.input);
                } else {
                    dz = Some(g.input);
                }
            }
            (Some(Regressor::Hyper(head)), RegCache::Hyper(c)) => {
                let g = head.backward(c, up.y)?;
                add(&mut grad[o_reg..], &g.params);
                add(&mut dh, &g.semantic);
                dz = Some(g.z);
            }
            (None, RegCache::None) => {
                // y = Σ c_i p_i, so dy/dl_j = p_j (c_j - y)
                let p = &trace.output.probs;
                let y = trace.output.y_hat;
                for j in 0..LEVELS {
                    dlogits[j] += up.y * p[j] * (T::from_usize_lossy(j + 1) - y);
                }
            }
            _ => {
                return Err(Error::Validation(
                    "forward trace does not match the model".into(),
                ))
            }
        }

        if let Some(dz) = dz {
            let emb = o_emb + trace.row * hd;
            match self.config.fusion {
                Fusion::Additive => {
                    add(&mut dh, &dz);
                    add(&mut grad[emb..emb + hd], &dz);
                }
                Fusion::Concat => {
                    add(&mut dh, &dz[..hd]);
                    add(&mut grad[emb..emb + hd], &dz[hd..]);
                }
            }
        }

        if let Some(c) = &trace.cls {
            if dlogits.iter().any(|&g| g != T::zero()) {
                let g = self.classifier.backward(c, &dlogits)?;
                add(&mut grad[o_cls..o_emb], &g.params);
                add(&mut dh, &g.input);
            }
        }

        debug_assert_eq!(trace.h.len(), hd);
        let g = self.encoder.backward(&trace.enc, &dh)?;
        add(&mut grad[o_enc..o_cls], &g.params);
        Ok(())
    }
}

fn add<T: Scalar>(acc: &mut [T], g: &[T]) {
    for (a, &b) in acc.iter_mut().zip(g) {
        *a += b;
    }
}

/// Inference-mode forward pass on `f64` features.
pub fn model_forward<T: Scalar>(
    model: &ScorerModel<T>,
    features: &[f64],
) -> Result<ModelOutput<T>> {
    let x: Vec<T> = features.iter().map(|&v| T::lit(v)).collect();
    model.forward(&x)
}

/// Versioned JSON record of a model: its configuration and flat parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub config: ModelConfig,
    pub params: Vec<f64>,
}

impl ModelCheckpoint {
    pub fn from_model<T: Scalar>(model: &ScorerModel<T>) -> Self {
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_FORMAT_VERSION,
            config: model.config.clone(),
            params: model
                .params_flat()
                .iter()
                .map(|p| p.to_f64_lossy())
                .collect(),
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<ScorerModel<T>> {
        if self.format != MODEL_FORMAT || self.version != MODEL_FORMAT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{} (expected {MODEL_FORMAT} v{MODEL_FORMAT_VERSION})",
                self.format, self.version
            )));
        }
        let mut m = ScorerModel::zeros(self.config.clone())?;
        let params: Vec<T> = self.params.iter().map(|&p| T::lit(p)).collect();
        m.set_params_flat(&params)?;
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}
