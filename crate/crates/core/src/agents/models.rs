use crate::bpr::EncoderModel;
use crate::environments::Controller;
use crate::numerics::{Activation, Matrix, Mlp, MlpInit, Rng};
use crate::{Error, Result};

/// Maps raw states to network inputs: optional encoder, then a fixed affine
/// standardization.
#[derive(Debug, Clone)]
pub struct Featurizer {
    encoder: Option<EncoderModel>,
    shift: Vec<f64>,
    scale: Vec<f64>,
}

impl Featurizer {
    /// Fit the standardization on `states` (after encoding, when an encoder is given).
    pub fn fit(states: &Matrix, encoder: Option<EncoderModel>, standardize: bool) -> Result<Self> {
        let inputs = match &encoder {
            Some(e) => e.encode_batch(states)?,
            None => states.clone(),
        };
        let d = inputs.cols();
        let (mut shift, mut scale) = (vec![0.0; d], vec![1.0; d]);
        if standardize && inputs.rows() > 0 {
            let n = inputs.rows() as f64;
            for j in 0..d {
                let mean = (0..inputs.rows()).map(|r| inputs.get(r, j)).sum::<f64>() / n;
                let var = (0..inputs.rows()).map(|r| (inputs.get(r, j) - mean).powi(2)).sum::<f64>() / n;
                shift[j] = mean;
                scale[j] = 1.0 / (var.sqrt() + 1e-3);
            }
        }
        Ok(Self { encoder, shift, scale })
    }

    pub fn identity(dim: usize, encoder: Option<EncoderModel>) -> Self {
        Self {
            encoder,
            shift: vec![0.0; dim],
            scale: vec![1.0; dim],
        }
    }

    pub fn encoder(&self) -> Option<&EncoderModel> {
        self.encoder.as_ref()
    }

    pub fn output_dim(&self) -> usize {
        self.shift.len()
    }

    /// Affine part only, for inputs that are already encoded.
    pub fn standardize(&self, inputs: &Matrix) -> Matrix {
        let mut out = inputs.clone();
        for r in 0..out.rows() {
            for ((v, s), k) in out.row_mut(r).iter_mut().zip(&self.shift).zip(&self.scale) {
                *v = (*v - s) * k;
            }
        }
        out
    }

    pub fn apply(&self, states: &Matrix) -> Result<Matrix> {
        match &self.encoder {
            Some(e) => Ok(self.standardize(&e.encode_batch(states)?)),
            None => Ok(self.standardize(states)),
        }
    }
}

pub(crate) fn hidden_dims(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims
}

/// Deterministic policy `π(x) = max_action · tanh(net(x))`.
#[derive(Debug, Clone)]
pub struct PolicyModel {
    pub net: Mlp,
    pub featurizer: Featurizer,
    pub max_action: f64,
}

impl PolicyModel {
    pub fn new(featurizer: Featurizer, hidden: &[usize], action_dim: usize, rng: &mut Rng) -> Result<Self> {
        let dims = hidden_dims(featurizer.output_dim(), hidden, action_dim);
        let net = Mlp::new(&dims, Activation::Relu, Activation::Tanh, MlpInit::GlorotUniform, rng)?;
        Ok(Self {
            net,
            featurizer,
            max_action: 1.0,
        })
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim()
    }

    pub fn actions(&self, states: &Matrix) -> Result<Matrix> {
        let mut a = self.net.predict_batch(&self.featurizer.apply(states)?)?;
        if self.max_action != 1.0 {
            a.as_mut_slice().iter_mut().for_each(|v| *v *= self.max_action);
        }
        Ok(a)
    }
}

impl Controller for PolicyModel {
    fn act(&self, state: &[f64], _rng: &mut Rng) -> Vec<f64> {
        let x = Matrix::from_vec(1, state.len(), state.to_vec()).expect("state row");
        self.actions(&x).expect("policy input matches its featurizer").into_vec()
    }

    fn act_batch(&self, states: &Matrix, _rngs: &mut [Rng]) -> Matrix {
        self.actions(states).expect("policy input matches its featurizer")
    }
}

/// State-action value network on `[x, a]`; its second-to-last layer is the
/// feature layer probed for effective dimension.
#[derive(Debug, Clone)]
pub struct QModel {
    pub net: Mlp,
    pub featurizer: Featurizer,
}

impl QModel {
    pub fn new(featurizer: Featurizer, hidden: &[usize], action_dim: usize, rng: &mut Rng) -> Result<Self> {
        let dims = hidden_dims(featurizer.output_dim() + action_dim, hidden, 1);
        let net = Mlp::new(&dims, Activation::Relu, Activation::Identity, MlpInit::GlorotUniform, rng)?;
        Ok(Self { net, featurizer })
    }

    pub fn feature_width(&self) -> usize {
        self.net.shapes()[self.net.n_layers() - 1].inputs
    }

    /// Q values for raw states and actions.
    pub fn q_values(&self, states: &Matrix, actions: &Matrix) -> Result<Vec<f64>> {
        let x = concat_cols(&self.featurizer.apply(states)?, actions)?;
        Ok(self.net.predict_batch(&x)?.into_vec())
    }

    /// Penultimate activations Ψ for raw states and actions (one row per pair).
    pub fn extract_features(&self, states: &Matrix, actions: &Matrix) -> Result<Matrix> {
        let x = self.featurizer.apply(states)?;
        features_from_inputs(&self.net, &x, actions)
    }
}

/// Penultimate activations of a critic for already-featurized inputs.
pub fn features_from_inputs(critic: &Mlp, x: &Matrix, actions: &Matrix) -> Result<Matrix> {
    if x.rows() == 0 {
        return Err(Error::rejected("feature extraction needs a non-empty batch"));
    }
    if critic.n_layers() < 2 {
        return Err(Error::rejected("critic has no hidden layer to probe"));
    }
    critic.predict_prefix(&concat_cols(x, actions)?, critic.n_layers() - 1)
}

/// `[a | b]` row-wise.
pub fn concat_cols(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.rows() != b.rows() {
        return Err(Error::rejected(format!("row count {} != {}", a.rows(), b.rows())));
    }
    let (ca, cb) = (a.cols(), b.cols());
    let mut out = Matrix::zeros(a.rows(), ca + cb);
    for r in 0..a.rows() {
        let row = out.row_mut(r);
        row[..ca].copy_from_slice(a.row(r));
        row[ca..].copy_from_slice(b.row(r));
    }
    Ok(out)
}

/// Columns `start..start + len` of `m`.
pub(crate) fn take_cols(m: &Matrix, start: usize, len: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), len);
    for r in 0..m.rows() {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng;

    #[test]
    fn last_layer_reproduces_q_from_features() {
        let mut r = rng(0);
        let states = Matrix::from_rows(&[vec![0.3, -0.1], vec![1.0, 2.0], vec![-0.5, 0.5]]).unwrap();
        let actions = Matrix::from_rows(&[vec![0.1], vec![-0.9], vec![0.5]]).unwrap();
        let f = Featurizer::fit(&states, None, true).unwrap();
        let q = QModel::new(f, &[8, 6], 1, &mut r).unwrap();
        let psi = q.extract_features(&states, &actions).unwrap();
        assert_eq!(psi.cols(), q.feature_width());
        let values = q.q_values(&states, &actions).unwrap();
        let last = q.net.layer(q.net.n_layers() - 1);
        for i in 0..3 {
            let v: f64 = last.bias[0] + psi.row(i).iter().zip(last.weight).map(|(p, w)| p * w).sum::<f64>();
            assert!((v - values[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn standardization_centres_inputs() {
        let states = Matrix::from_rows(&[vec![1.0, 10.0], vec![3.0, 10.0]]).unwrap();
        let f = Featurizer::fit(&states, None, true).unwrap();
        let x = f.apply(&states).unwrap();
        assert!((x.get(0, 0) + x.get(1, 0)).abs() < 1e-12);
        assert_eq!(x.get(0, 1), 0.0);
    }
}
