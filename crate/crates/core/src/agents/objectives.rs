//! Loss functions with analytic gradients. Training loops call exactly these,
//! so the gradient checks exercise the code that trains.

use crate::numerics::{Matrix, Mlp};
use crate::{Error, Result};

use super::models::{concat_cols, take_cols};

/// A scalar loss, its gradient with respect to the network parameters, and
/// its gradient with respect to the (featurized) state input.
#[derive(Debug, Clone)]
pub struct Objective {
    pub loss: f64,
    pub grad: Vec<f64>,
    pub input_grad: Matrix,
}

fn check_rows(what: &str, a: usize, b: usize) -> Result<()> {
    if a != b || a == 0 {
        return Err(Error::rejected(format!("{what}: batch sizes {a} and {b} differ or are empty")));
    }
    Ok(())
}

/// Behavior cloning: `mean_i ‖π(x_i) − a_i‖²`.
pub fn bc_objective(actor: &Mlp, x: &Matrix, actions: &Matrix) -> Result<Objective> {
    check_rows("bc", x.rows(), actions.rows())?;
    let cache = actor.forward_batch(x)?;
    let pi = cache.output();
    let n = x.rows() as f64;
    let mut loss = 0.0;
    let mut g = Matrix::zeros(pi.rows(), pi.cols());
    for (gv, (p, a)) in g.as_mut_slice().iter_mut().zip(pi.as_slice().iter().zip(actions.as_slice())) {
        loss += (p - a) * (p - a);
        *gv = 2.0 * (p - a) / n;
    }
    let grads = actor.backward_batch(&cache, &g)?;
    Ok(Objective {
        loss: loss / n,
        grad: grads.params,
        input_grad: grads.input,
    })
}

/// `λ = α / mean|Q|`, treated as a constant by the actor gradient.
pub fn td3bc_lambda(alpha: f64, q: &[f64]) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    let mean_abs = q.iter().map(|v| v.abs()).sum::<f64>() / q.len().max(1) as f64;
    alpha / mean_abs.max(1e-8)
}

/// Actor loss `−λ·mean_i Q(xc_i, π(x_i)) + bc_weight·mean_i ‖π(x_i) − a_i‖²`
/// with `λ` fixed. Only the actor receives gradients.
pub fn actor_objective(
    actor: &Mlp,
    critic: &Mlp,
    x: &Matrix,
    xc: &Matrix,
    actions: &Matrix,
    lambda: f64,
    bc_weight: f64,
) -> Result<Objective> {
    check_rows("actor", x.rows(), actions.rows())?;
    check_rows("actor", x.rows(), xc.rows())?;
    let cache = actor.forward_batch(x)?;
    let pi = cache.output();
    let n = x.rows() as f64;
    let ad = pi.cols();
    let q_cache = critic.forward_batch(&concat_cols(xc, pi)?)?;
    let q = q_cache.output();
    let q_mean = q.as_slice().iter().sum::<f64>() / n;
    let dq = Matrix::from_vec(q.rows(), 1, vec![-lambda / n; q.rows()])?;
    let critic_grads = critic.backward_batch(&q_cache, &dq)?;
    let mut g = take_cols(&critic_grads.input, xc.cols(), ad);
    let mut bc = 0.0;
    for (gv, (p, a)) in g.as_mut_slice().iter_mut().zip(pi.as_slice().iter().zip(actions.as_slice())) {
        bc += (p - a) * (p - a);
        *gv += bc_weight * 2.0 * (p - a) / n;
    }
    let grads = actor.backward_batch(&cache, &g)?;
    Ok(Objective {
        loss: -lambda * q_mean + bc_weight * bc / n,
        grad: grads.params,
        input_grad: grads.input,
    })
}

/// TD3+BC actor loss with a fixed `λ`.
pub fn td3bc_actor_objective(
    actor: &Mlp,
    critic: &Mlp,
    x: &Matrix,
    xc: &Matrix,
    actions: &Matrix,
    lambda: f64,
) -> Result<Objective> {
    actor_objective(actor, critic, x, xc, actions, lambda, 1.0)
}

/// Regression of a critic onto fixed targets: `mean_i (Q(xc_i, a_i) − y_i)²`.
pub fn td_critic_objective(critic: &Mlp, xc: &Matrix, actions: &Matrix, targets: &[f64]) -> Result<Objective> {
    cql_critic_objective(critic, xc, actions, targets, None, 0.0)
}

/// Conservative critic loss
/// `mean_i (Q_i − y_i)² + α·mean_i (logsumexp_j Q(xc_i, c_ij) − Q(xc_i, a_i))`.
///
/// `candidates` holds `k` action rows per sample, grouped by sample
/// (row `i·k + j`); with `None` or `α = 0` only the regression term remains.
pub fn cql_critic_objective(
    critic: &Mlp,
    xc: &Matrix,
    actions: &Matrix,
    targets: &[f64],
    candidates: Option<(&Matrix, usize)>,
    alpha: f64,
) -> Result<Objective> {
    let n = xc.rows();
    check_rows("critic", n, actions.rows())?;
    check_rows("critic", n, targets.len())?;
    let nf = n as f64;
    let dc = xc.cols();
    let cache = critic.forward_batch(&concat_cols(xc, actions)?)?;
    let q = cache.output().as_slice();
    let mut loss = 0.0;
    let mut g = vec![0.0; n];
    for i in 0..n {
        let d = q[i] - targets[i];
        loss += d * d / nf;
        g[i] = 2.0 * d / nf;
    }
    let penalized = alpha != 0.0 && candidates.is_some();
    if penalized {
        loss -= alpha * q.iter().sum::<f64>() / nf;
        g.iter_mut().for_each(|v| *v -= alpha / nf);
    }
    let grads = critic.backward_batch(&cache, &Matrix::from_vec(n, 1, g)?)?;
    let mut params = grads.params;
    let mut input_grad = take_cols(&grads.input, 0, dc);

    if let (true, Some((cand, k))) = (penalized, candidates) {
        if k == 0 || cand.rows() != n * k || cand.cols() != actions.cols() {
            return Err(Error::rejected("candidate action block has the wrong shape"));
        }
        let mut rep = Matrix::zeros(n * k, dc);
        for i in 0..n {
            for j in 0..k {
                rep.row_mut(i * k + j).copy_from_slice(xc.row(i));
            }
        }
        let c_cache = critic.forward_batch(&concat_cols(&rep, cand)?)?;
        let qc = c_cache.output().as_slice();
        let mut gc = vec![0.0; n * k];
        for i in 0..n {
            let block = &qc[i * k..(i + 1) * k];
            let m = block.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = block.iter().map(|v| (v - m).exp()).sum();
            loss += alpha * (m + sum.ln()) / nf;
            for j in 0..k {
                gc[i * k + j] = alpha * (block[j] - m).exp() / sum / nf;
            }
        }
        let cg = critic.backward_batch(&c_cache, &Matrix::from_vec(n * k, 1, gc)?)?;
        for (p, c) in params.iter_mut().zip(&cg.params) {
            *p += c;
        }
        for i in 0..n {
            for j in 0..k {
                let src = &cg.input.row(i * k + j)[..dc];
                for (d, s) in input_grad.row_mut(i).iter_mut().zip(src) {
                    *d += s;
                }
            }
        }
    }
    Ok(Objective {
        loss,
        grad: params,
        input_grad,
    })
}
