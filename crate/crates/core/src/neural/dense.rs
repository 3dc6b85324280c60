use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Relu => {
                if x < T::zero() {
                    T::zero()
                } else {
                    x
                }
            }
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    /// ReLU uses subgradient 0 at the kink.
    #[inline]
    fn derivative_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Identity => T::one(),
        }
    }
}

pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `ln(1 + e^x)`, derivative is [`sigmoid`].
pub fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Affine layer `y = act(W x + b)` with `W` stored row-major (`out × in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense<T> {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Scalar> Dense<T> {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weights: vec![T::zero(); in_dim * out_dim],
            bias: vec![T::zero(); out_dim],
            activation,
        }
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    fn forward_into(&self, input: &[T], out: &mut Vec<T>) {
        out.clear();
        out.extend(
            self.weights
                .chunks_exact(self.in_dim)
                .zip(&self.bias)
                .map(|(row, &b)| {
                    let z = row.iter().zip(input).fold(b, |acc, (&w, &x)| acc + w * x);
                    self.activation.apply(z)
                }),
        );
    }
}

/// Activations recorded by [`DenseNet::forward`]; `values[0]` is the input,
/// `values[k + 1]` the output of layer `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardCache<T> {
    version: u64,
    values: Vec<Vec<T>>,
}

impl<T> ForwardCache<T> {
    pub fn output(&self) -> &[T] {
        self.values.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Gradients from [`DenseNet::backward`]. `params` follows the
/// [`DenseNet::params_flat`] layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients<T> {
    pub params: Vec<T>,
    pub input: Vec<T>,
}

/// Feed-forward stack of dense layers.
///
/// Parameter updates bump an internal version so that caches recorded before
/// the update are rejected by `backward`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseNet<T> {
    layers: Vec<Dense<T>>,
    #[serde(skip)]
    version: u64,
}

impl<T: Scalar> DenseNet<T> {
    /// Zero-initialized network. `dims` has one more entry than `activations`.
    pub fn new(dims: &[usize], activations: &[Activation]) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Validation(format!(
                "layer dims must have >= 2 positive entries, got {dims:?}"
            )));
        }
        check_len("activations", dims.len() - 1, activations.len())?;
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| Dense::zeros(w[0], w[1], a))
            .collect();
        Ok(Self { layers, version: 0 })
    }

    /// `hidden` on every layer except the last, which is linear.
    pub fn mlp(dims: &[usize], hidden: Activation) -> Result<Self> {
        let n = dims.len().saturating_sub(1);
        let acts: Vec<Activation> = (0..n)
            .map(|i| {
                if i + 1 == n {
                    Activation::Identity
                } else {
                    hidden
                }
            })
            .collect();
        Self::new(dims, &acts)
    }

    /// Single linear layer computing the identity map.
    pub fn identity(dim: usize) -> Self {
        let mut layer = Dense::zeros(dim, dim, Activation::Identity);
        for i in 0..dim {
            layer.weights[i * dim + i] = T::one();
        }
        Self {
            layers: vec![layer],
            version: 0,
        }
    }

    pub fn from_layers(layers: Vec<Dense<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Validation("network needs at least one layer".into()));
        }
        for l in &layers {
            check_len("layer weights", l.in_dim * l.out_dim, l.weights.len())?;
            check_len("layer bias", l.out_dim, l.bias.len())?;
        }
        for w in layers.windows(2) {
            check_len("consecutive layer dims", w[0].out_dim, w[1].in_dim)?;
        }
        Ok(Self { layers, version: 0 })
    }

    /// Builds a network of the given shape from a flat parameter vector.
    pub fn from_flat(dims: &[usize], activations: &[Activation], params: &[T]) -> Result<Self> {
        let mut net = Self::new(dims, activations)?;
        net.set_params_flat(params)?;
        Ok(net)
    }

    /// He-scaled normal weights for ReLU layers, `1/fan_in` variance
    /// otherwise; zero biases.
    pub fn init_random(&mut self, rng: &mut Rng) {
        for layer in &mut self.layers {
            let gain = match layer.activation {
                Activation::Relu => 2.0,
                _ => 1.0,
            };
            let std = (gain / layer.in_dim as f64).sqrt();
            for w in &mut layer.weights {
                let z: f64 = StandardNormal.sample(rng);
                *w = T::lit(z * std);
            }
            layer.bias.iter_mut().for_each(|b| *b = T::zero());
        }
        self.version += 1;
    }

    pub fn layers(&self) -> &[Dense<T>] {
        &self.layers
    }

    /// Mutable access to one layer; invalidates outstanding caches.
    pub fn layer_mut(&mut self, i: usize) -> &mut Dense<T> {
        self.version += 1;
        &mut self.layers[i]
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn activations(&self) -> Vec<Activation> {
        self.layers.iter().map(|l| l.activation).collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Dense::param_count).sum()
    }

    /// Number of parameters of an MLP with the given dims.
    pub fn param_count_for(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Layer-by-layer `weights ++ bias`.
    pub fn params_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_params_flat(&mut self, params: &[T]) -> Result<()> {
        check_len("flat parameters", self.param_count(), params.len())?;
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
        self.version += 1;
        Ok(())
    }

    pub fn forward(&self, input: &[T]) -> Result<(Vec<T>, ForwardCache<T>)> {
        check_len("network input", self.input_dim(), input.len())?;
        let mut values = Vec::with_capacity(self.layers.len() + 1);
        values.push(input.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.out_dim);
            layer.forward_into(values.last().unwrap(), &mut out);
            values.push(out);
        }
        let output = values.last().unwrap().clone();
        Ok((
            output,
            ForwardCache {
                version: self.version,
                values,
            },
        ))
    }

    /// Forward pass without recording activations.
    pub fn infer(&self, input: &[T]) -> Result<Vec<T>> {
        check_len("network input", self.input_dim(), input.len())?;
        let mut cur = input.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Reverse-mode gradients of `upstream · output` with respect to every
    /// parameter and the input.
    pub fn backward(&self, cache: &ForwardCache<T>, upstream: &[T]) -> Result<Gradients<T>> {
        if cache.version != self.version || cache.values.len() != self.layers.len() + 1 {
            return Err(Error::StaleCache {
                cached: cache.version,
                current: self.version,
            });
        }
        check_len("upstream gradient", self.output_dim(), upstream.len())?;
        let mut params = vec![T::zero(); self.param_count()];
        let mut offset = params.len();
        let mut delta: Vec<T> = upstream.to_vec();
        for (k, layer) in self.layers.iter().enumerate().rev() {
            let input = &cache.values[k];
            let output = &cache.values[k + 1];
            for (d, &y) in delta.iter_mut().zip(output) {
                *d *= layer.activation.derivative_from_output(y);
            }
            offset -= layer.param_count();
            let (gw, gb) =
                params[offset..offset + layer.param_count()].split_at_mut(layer.weights.len());
            for (o, &d) in delta.iter().enumerate() {
                gb[o] = d;
                if d != T::zero() {
                    for (g, &x) in gw[o * layer.in_dim..(o + 1) * layer.in_dim]
                        .iter_mut()
                        .zip(input)
                    {
                        *g = d * x;
                    }
                }
            }
            let mut prev = vec![T::zero(); layer.in_dim];
            for (row, &d) in layer.weights.chunks_exact(layer.in_dim).zip(&delta) {
                if d != T::zero() {
                    for (p, &w) in prev.iter_mut().zip(row) {
                        *p += w * d;
                    }
                }
            }
            delta = prev;
        }
        Ok(Gradients {
            params,
            input: delta,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    // Independent forward oracle: nested loops over explicit (i, j) indices.
    fn oracle_forward(net: &DenseNet<f64>, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in net.layers() {
            let mut out = vec![0.0; l.out_dim];
            for o in 0..l.out_dim {
                let mut z = l.bias[o];
                for i in 0..l.in_dim {
                    z += l.weights[o * l.in_dim + i] * cur[i];
                }
                out[o] = match l.activation {
                    Activation::Relu => {
                        if z > 0.0 {
                            z
                        } else {
                            0.0
                        }
                    }
                    Activation::Sigmoid => 1.0 / (1.0 + (-z).exp()),
                    Activation::Identity => z,
                };
            }
            cur = out;
        }
        cur
    }

    #[test]
    fn identity_net_is_identity() {
        let net = DenseNet::<f64>::identity(4);
        let v = vec![1.5, -2.0, 0.0, 3.25];
        assert_eq!(net.forward(&v).unwrap().0, v);
    }

    #[test]
    fn zero_weights_give_bias() {
        let mut net = DenseNet::<f64>::new(&[3, 2], &[Activation::Identity]).unwrap();
        net.layer_mut(0).bias = vec![0.7, -1.2];
        assert_eq!(net.forward(&[9.0, -4.0, 2.0]).unwrap().0, vec![0.7, -1.2]);
    }

    #[test]
    fn random_net_matches_oracle() {
        let mut net = DenseNet::<f64>::new(
            &[5, 7, 4, 3],
            &[Activation::Relu, Activation::Sigmoid, Activation::Identity],
        )
        .unwrap();
        net.init_random(&mut rng::seeded(11));
        let x = [0.3, -1.1, 0.8, 2.0, -0.4];
        let (y, _) = net.forward(&x).unwrap();
        let want = oracle_forward(&net, &x);
        for (a, b) in y.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
        assert_eq!(net.infer(&x).unwrap(), y);
    }

    #[test]
    fn linear_mse_gradient_closed_form() {
        let mut net = DenseNet::<f64>::new(&[3, 1], &[Activation::Identity]).unwrap();
        net.set_params_flat(&[0.5, -0.25, 1.0, 0.1]).unwrap();
        let x = [2.0, 1.0, -1.0];
        let target = 3.0;
        let (y, cache) = net.forward(&x).unwrap();
        let g = net.backward(&cache, &[2.0 * (y[0] - target)]).unwrap();
        let r = 2.0 * (y[0] - target);
        assert_eq!(g.params, vec![r * 2.0, r * 1.0, -r, r]);
    }

    #[test]
    fn relu_kink_uses_zero_subgradient() {
        let mut net =
            DenseNet::<f64>::new(&[1, 1, 1], &[Activation::Relu, Activation::Identity]).unwrap();
        // hidden pre-activation is exactly 0
        net.set_params_flat(&[1.0, -2.0, 1.0, 0.0]).unwrap();
        let (_, cache) = net.forward(&[2.0]).unwrap();
        let g = net.backward(&cache, &[1.0]).unwrap();
        assert_eq!(g.params[0], 0.0);
        assert_eq!(g.params[1], 0.0);
        assert_eq!(g.input, vec![0.0]);
    }

    #[test]
    fn stale_cache_rejected() {
        let mut net = DenseNet::<f64>::mlp(&[2, 3, 1], Activation::Relu).unwrap();
        net.init_random(&mut rng::seeded(1));
        let (_, cache) = net.forward(&[1.0, 2.0]).unwrap();
        let p = net.params_flat();
        net.set_params_flat(&p).unwrap();
        assert!(matches!(
            net.backward(&cache, &[1.0]),
            Err(Error::StaleCache { .. })
        ));
    }

    #[test]
    fn shape_errors() {
        let net = DenseNet::<f64>::mlp(&[2, 3, 1], Activation::Relu).unwrap();
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { .. })));
        assert!(DenseNet::<f64>::new(&[2, 3], &[]).is_err());
        assert!(DenseNet::<f64>::new(&[2], &[]).is_err());
        assert!(DenseNet::<f64>::new(&[2, 0], &[Activation::Relu]).is_err());
        let (_, cache) = net.forward(&[1.0, 1.0]).unwrap();
        assert!(net.backward(&cache, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn flat_round_trip_and_counts() {
        let mut net = DenseNet::<f64>::mlp(&[4, 3, 2], Activation::Sigmoid).unwrap();
        assert_eq!(
            net.param_count(),
            DenseNet::<f64>::param_count_for(&[4, 3, 2])
        );
        assert_eq!(net.param_count(), 4 * 3 + 3 + 3 * 2 + 2);
        net.init_random(&mut rng::seeded(3));
        let p = net.params_flat();
        let rebuilt = DenseNet::from_flat(&net.layer_dims(), &net.activations(), &p).unwrap();
        assert_eq!(rebuilt.layers(), net.layers());
        assert_eq!(
            net.layers().last().unwrap().activation,
            Activation::Identity
        );
    }

    #[test]
    fn softplus_and_sigmoid_are_stable() {
        assert!((softplus(0.0f64) - 2f64.ln()).abs() < 1e-15);
        assert!((softplus(800.0f64) - 800.0).abs() < 1e-12);
        assert!(softplus(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64).is_finite());
    }
}
