use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::io::write_json;
use crate::numerics::{checkpoint, Activation, Matrix, Mlp, MlpInit, Rng};
use crate::{Error, Result};

/// State encoder φ. Hidden layers use ReLU; the representation layer is linear.
#[derive(Debug, Clone)]
pub struct EncoderModel {
    net: Mlp,
    frozen: bool,
}

impl EncoderModel {
    pub fn new(state_dim: usize, hidden: &[usize], repr_dim: usize, rng: &mut Rng) -> Result<Self> {
        let mut dims = vec![state_dim];
        dims.extend_from_slice(hidden);
        dims.push(repr_dim);
        let net = Mlp::new(&dims, Activation::Relu, Activation::Identity, MlpInit::GlorotUniform, rng)?;
        Ok(Self { net, frozen: false })
    }

    pub fn from_net(net: Mlp, frozen: bool) -> Self {
        Self { net, frozen }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    /// Mutable access for training; refused once frozen.
    pub fn net_mut(&mut self) -> Result<&mut Mlp> {
        if self.frozen {
            return Err(Error::ContractViolation("encoder is frozen".into()));
        }
        Ok(&mut self.net)
    }

    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self
    }

    /// Unfrozen copy, used when the encoder is co-trained downstream.
    pub fn thawed(&self) -> Self {
        Self {
            net: self.net.clone(),
            frozen: false,
        }
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn state_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn repr_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn encode_batch(&self, states: &Matrix) -> Result<Matrix> {
        self.net.predict_batch(states)
    }

    /// SHA-256 of the checkpoint bytes: a fingerprint of every parameter.
    pub fn param_hash(&self) -> String {
        hex::encode(Sha256::digest(checkpoint::to_bytes(&self.net)))
    }

    /// Write the checkpoint and a `<path>.json` manifest next to it.
    pub fn save(&self, path: &Path, manifest: &EncoderManifest) -> Result<()> {
        checkpoint::save(&self.net, path)?;
        write_json(&EncoderManifest::sidecar_path(path), manifest)
    }

    /// Load a checkpoint as a frozen encoder.
    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_net(checkpoint::load(path)?, true))
    }
}

/// Representation `z = φ(s)` of one state.
pub fn encode(encoder: &EncoderModel, state: &[f64]) -> Result<Vec<f64>> {
    encoder.net.predict(state)
}

/// Action predictor f: two ReLU layers, then a tanh output layer.
#[derive(Debug, Clone)]
pub struct PredictorModel {
    net: Mlp,
}

impl PredictorModel {
    pub fn new(repr_dim: usize, hidden: usize, action_dim: usize, rng: &mut Rng) -> Result<Self> {
        let net = Mlp::new(
            &[repr_dim, hidden, hidden, action_dim],
            Activation::Relu,
            Activation::Tanh,
            MlpInit::GlorotUniform,
            rng,
        )?;
        Ok(Self { net })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn predict_batch(&self, z: &Matrix) -> Result<Matrix> {
        self.net.predict_batch(z)
    }
}

/// Sidecar metadata describing how an encoder checkpoint was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderManifest {
    pub schema_version: u32,
    pub repr_dim: usize,
    pub state_dim: usize,
    pub pretrain_steps: u64,
    pub seed: u64,
    /// Last entry of the loss trace; absent when no step was taken.
    pub final_loss: Option<f64>,
    pub dataset_hash: String,
}

impl EncoderManifest {
    pub fn sidecar_path(checkpoint: &Path) -> PathBuf {
        let mut name = checkpoint.as_os_str().to_owned();
        name.push(".json");
        PathBuf::from(name)
    }

    pub fn load(checkpoint: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(Self::sidecar_path(checkpoint))?;
        Ok(serde_json::from_str(&text)?)
    }
}
