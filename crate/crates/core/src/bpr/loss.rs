use crate::numerics::{l2_normalize_with_grad, Matrix, Mlp};
use crate::{Error, Result};

/// Denominator floor used when normalizing predictions.
pub const DEFAULT_EPS_STABILITY: f64 = 1e-8;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖ȳ − ā‖² = 2 − 2 cos(y, a)` and its gradient with respect to `y`.
/// The normalized action is treated as a constant target.
pub fn bpr_loss(prediction: &[f64], action: &[f64], min_action_norm: f64) -> Result<(f64, Vec<f64>)> {
    if prediction.len() != action.len() {
        return Err(Error::rejected(format!(
            "prediction length {} != action length {}",
            prediction.len(),
            action.len()
        )));
    }
    let a_norm = norm(action);
    if a_norm < min_action_norm || a_norm == 0.0 {
        return Err(Error::ContractViolation(format!(
            "action norm {a_norm} below the minimum {min_action_norm}; such samples must be filtered"
        )));
    }
    let (y_bar, jac) = l2_normalize_with_grad(prediction, DEFAULT_EPS_STABILITY);
    let diff: Vec<f64> = y_bar.iter().zip(action).map(|(y, a)| y - a / a_norm).collect();
    let loss = diff.iter().map(|d| d * d).sum();
    let outer: Vec<f64> = diff.iter().map(|d| 2.0 * d).collect();
    Ok((loss, jac.apply(&outer)))
}

/// Squared error `‖p − a‖²` without normalization.
pub fn unnormalized_bc_loss(prediction: &[f64], action: &[f64]) -> f64 {
    prediction.iter().zip(action).map(|(p, a)| (p - a) * (p - a)).sum()
}

/// Mean BPR loss of a predictor over a batch of representations.
pub struct BprBatch {
    pub loss: f64,
    /// Predictor parameter gradient of the mean loss.
    pub predictor_grad: Vec<f64>,
    /// Gradient of the mean loss with respect to each representation row.
    pub z_grad: Matrix,
}

/// Forward and backward through the predictor for rows `z` with targets
/// `unit_actions` (already unit norm).
pub fn bpr_batch(predictor: &Mlp, z: &Matrix, unit_actions: &Matrix) -> Result<BprBatch> {
    let n = z.rows();
    if n == 0 || unit_actions.rows() != n || unit_actions.cols() != predictor.output_dim() {
        return Err(Error::rejected("bpr batch shape mismatch"));
    }
    let cache = predictor.forward_batch(z)?;
    let y = cache.output();
    let mut grad = Matrix::zeros(n, y.cols());
    let mut total = 0.0;
    let scale = 1.0 / n as f64;
    for r in 0..n {
        let (y_bar, jac) = l2_normalize_with_grad(y.row(r), DEFAULT_EPS_STABILITY);
        let diff: Vec<f64> = y_bar.iter().zip(unit_actions.row(r)).map(|(p, a)| p - a).collect();
        total += diff.iter().map(|d| d * d).sum::<f64>();
        let outer: Vec<f64> = diff.iter().map(|d| 2.0 * d * scale).collect();
        grad.row_mut(r).copy_from_slice(&jac.apply(&outer));
    }
    let g = predictor.backward_batch(&cache, &grad)?;
    Ok(BprBatch {
        loss: total * scale,
        predictor_grad: g.params,
        z_grad: g.input,
    })
}
