//! Versioned JSON checkpoints for dense networks.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::dense::{Activation, DenseNet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_FORMAT: &str = "qscorer-dense";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Layer dims, activations and the flat parameter vector (per layer:
/// row-major `out × in` weights followed by the bias).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetCheckpoint {
    pub format: String,
    pub version: u32,
    pub layer_dims: Vec<usize>,
    pub activations: Vec<Activation>,
    pub params: Vec<f64>,
}

impl NetCheckpoint {
    pub fn from_net<T: Scalar>(net: &DenseNet<T>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            layer_dims: net.layer_dims(),
            activations: net.activations(),
            params: net
                .params_flat()
                .into_iter()
                .map(Scalar::to_f64_lossy)
                .collect(),
        }
    }

    pub fn to_net<T: Scalar>(&self) -> Result<DenseNet<T>> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::Validation(format!(
                "unsupported checkpoint {} v{}",
                self.format, self.version
            )));
        }
        let params: Vec<T> = self.params.iter().map(|&p| T::lit(p)).collect();
        DenseNet::from_flat(&self.layer_dims, &self.activations, &params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_vec_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_slice(&fs::read(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut net = DenseNet::<f64>::mlp(&[4, 6, 3, 1], Activation::Relu).unwrap();
        net.init_random(&mut rng::seeded(9));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.json");
        NetCheckpoint::from_net(&net).save(&path).unwrap();
        let back: DenseNet<f64> = NetCheckpoint::load(&path).unwrap().to_net().unwrap();
        let a: Vec<u64> = net.params_flat().iter().map(|p| p.to_bits()).collect();
        let b: Vec<u64> = back.params_flat().iter().map(|p| p.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(back.activations(), net.activations());
    }

    #[test]
    fn rejects_unknown_version() {
        let net = DenseNet::<f64>::identity(2);
        let mut ck = NetCheckpoint::from_net(&net);
        ck.version = 99;
        assert!(ck.to_net::<f64>().is_err());
    }
}
