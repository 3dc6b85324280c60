//! Hyper-network head: a mapper network turns a semantic embedding into the
//! full parameter vector of a small target network, which then scores `z`.

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet, ForwardCache};
use crate::error::{check_len, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;

/// Default hidden widths of the generated target network.
pub const DEFAULT_TARGET_HIDDEN: [usize; 2] = [16, 8];
/// Default hidden width of the mapper.
pub const DEFAULT_MAPPER_HIDDEN: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperHead<T> {
    pub mapper: DenseNet<T>,
    /// `[z_dim, hidden.., 1]`
    pub target_dims: Vec<usize>,
}

#[derive(Debug, Clone)]
pub struct HyperCache<T> {
    mapper: ForwardCache<T>,
    target_net: DenseNet<T>,
    target: ForwardCache<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HyperGradients<T> {
    /// Mapper parameters, flat layout.
    pub params: Vec<T>,
    pub semantic: Vec<T>,
    pub z: Vec<T>,
}

impl<T: Scalar> HyperHead<T> {
    pub fn new(
        semantic_dim: usize,
        mapper_hidden: usize,
        z_dim: usize,
        target_hidden: &[usize],
    ) -> Result<Self> {
        let mut target_dims = Vec::with_capacity(target_hidden.len() + 2);
        target_dims.push(z_dim);
        target_dims.extend_from_slice(target_hidden);
        target_dims.push(1);
        let n_target = DenseNet::<T>::param_count_for(&target_dims);
        let mapper = DenseNet::mlp(&[semantic_dim, mapper_hidden, n_target], Activation::Relu)?;
        Ok(Self {
            mapper,
            target_dims,
        })
    }

    fn target_activations(&self) -> Vec<Activation> {
        let n = self.target_dims.len() - 1;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    Activation::Identity
                } else {
                    Activation::Relu
                }
            })
            .collect()
    }

    pub fn target_param_count(&self) -> usize {
        DenseNet::<T>::param_count_for(&self.target_dims)
    }

    pub fn semantic_dim(&self) -> usize {
        self.mapper.input_dim()
    }

    pub fn z_dim(&self) -> usize {
        self.target_dims[0]
    }

    /// Random mapper whose output bias is a He-initialized target network and
    /// whose output weights are small, so the generated networks start close
    /// to an ordinary randomly initialized MLP.
    pub fn init_random(&mut self, rng: &mut Rng) {
        self.mapper.init_random(rng);
        let mut base = DenseNet::<T>::new(&self.target_dims, &self.target_activations())
            .expect("target dims validated at construction");
        base.init_random(rng);
        let base_params = base.params_flat();
        let last = self.mapper.layers().len() - 1;
        let layer = self.mapper.layer_mut(last);
        let std = 0.05 / (layer.in_dim as f64).sqrt();
        for w in &mut layer.weights {
            let z: f64 = StandardNormal.sample(rng);
            *w = T::lit(z * std);
        }
        layer.bias.copy_from_slice(&base_params);
    }

    pub fn param_count(&self) -> usize {
        self.mapper.param_count()
    }

    pub fn forward(&self, semantic: &[T], z: &[T]) -> Result<(T, HyperCache<T>)> {
        check_len(
            "hyper head semantic input",
            self.semantic_dim(),
            semantic.len(),
        )?;
        check_len("hyper head z input", self.z_dim(), z.len())?;
        let (theta, mapper_cache) = self.mapper.forward(semantic)?;
        let target_net =
            DenseNet::from_flat(&self.target_dims, &self.target_activations(), &theta)?;
        let (y, target_cache) = target_net.forward(z)?;
        Ok((
            y[0],
            HyperCache {
                mapper: mapper_cache,
                target_net,
                target: target_cache,
            },
        ))
    }

    pub fn backward(&self, cache: &HyperCache<T>, upstream: T) -> Result<HyperGradients<T>> {
        let tg = cache.target_net.backward(&cache.target, &[upstream])?;
        // d(target params)/d(mapper output) is the identity.
        let mg = self.mapper.backward(&cache.mapper, &tg.params)?;
        Ok(HyperGradients {
            params: mg.params,
            semantic: mg.input,
            z: tg.input,
        })
    }
}

/// Evaluates the hyper head: generated parameters `mapper(semantic)` applied
/// to `z`.
pub fn hyper_forward<T: Scalar>(head: &HyperHead<T>, semantic: &[T], z: &[T]) -> Result<T> {
    head.forward(semantic, z).map(|(y, _)| y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Error;
    use crate::rng;

    #[test]
    fn mapper_output_matches_target_param_count() {
        let head = HyperHead::<f64>::new(6, 5, 4, &[3, 2]).unwrap();
        assert_eq!(head.mapper.output_dim(), head.target_param_count());
        assert_eq!(head.target_param_count(), 4 * 3 + 3 + 3 * 2 + 2 + 2 + 1);
    }

    #[test]
    fn zero_mapper_gives_zero_score() {
        let head = HyperHead::<f64>::new(3, 4, 2, &[3]).unwrap();
        assert_eq!(
            hyper_forward(&head, &[1.0, 2.0, 3.0], &[0.5, -0.5]).unwrap(),
            0.0
        );
        assert_eq!(
            hyper_forward(&head, &[1.0, 2.0, 3.0], &[9.0, 4.0]).unwrap(),
            0.0
        );
    }

    #[test]
    fn score_depends_on_z() {
        let mut head = HyperHead::<f64>::new(3, 4, 2, &[3]).unwrap();
        head.init_random(&mut rng::seeded(5));
        let s = [0.2, -0.1, 0.4];
        let a = hyper_forward(&head, &s, &[0.5, -0.5]).unwrap();
        let b = hyper_forward(&head, &s, &[-1.0, 2.0]).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn shape_checks() {
        let head = HyperHead::<f64>::new(3, 4, 2, &[3]).unwrap();
        assert!(matches!(
            head.forward(&[1.0], &[1.0, 1.0]),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            head.forward(&[1.0, 1.0, 1.0], &[1.0]),
            Err(Error::Shape { .. })
        ));
    }
}
