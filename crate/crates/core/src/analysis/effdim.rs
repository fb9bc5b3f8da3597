use rand::seq::index;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::agents::{QModel, TraceRow};
use crate::environments::OfflineDataset;
use crate::numerics::{rng, symmetric_eigenvalues, Matrix};
use crate::{Error, Result};

/// Threshold used when none is given.
pub const DEFAULT_EPSILON: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDimensionReport {
    pub epsilon: f64,
    /// Spectrum of `(1/n) ΨᵀΨ`, descending.
    pub eigenvalues: Vec<f64>,
    pub count: usize,
    pub n: usize,
    pub d: usize,
}

/// Count eigenvalues of the normalized Gram matrix `(1/n) ΨᵀΨ` above `epsilon`.
pub fn effective_dimension(psi: &Matrix, epsilon: f64) -> Result<EffectiveDimensionReport> {
    if psi.rows() == 0 || psi.cols() == 0 {
        return Err(Error::rejected("feature matrix is empty"));
    }
    if !(epsilon > 0.0) {
        return Err(Error::rejected(format!("epsilon {epsilon} must be positive")));
    }
    if !psi.is_finite() {
        return Err(Error::rejected("feature matrix has non-finite entries"));
    }
    let n = psi.rows();
    let eigenvalues = symmetric_eigenvalues(&psi.gram(1.0 / n as f64))?;
    let count = eigenvalues.iter().filter(|&&s| s > epsilon).count();
    Ok(EffectiveDimensionReport {
        epsilon,
        eigenvalues,
        count,
        n,
        d: psi.cols(),
    })
}

/// Fixed batch of dataset state-action pairs re-used at every probe.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeBatch {
    pub states: Matrix,
    pub actions: Matrix,
}

impl ProbeBatch {
    /// Draw `size` pairs (without replacement when the dataset is large enough).
    pub fn sample(dataset: &OfflineDataset, size: usize, seed: u64) -> Result<Self> {
        if dataset.is_empty() || size == 0 {
            return Err(Error::rejected("probe batch needs a non-empty dataset and size"));
        }
        let mut r = rng(seed);
        let picks: Vec<usize> = if size <= dataset.len() {
            index::sample(&mut r, dataset.len(), size).into_vec()
        } else {
            (0..size).map(|_| r.random_range(0..dataset.len())).collect()
        };
        let ts = dataset.transitions();
        let states: Vec<Vec<f64>> = picks.iter().map(|&i| ts[i].state.clone()).collect();
        let actions: Vec<Vec<f64>> = picks.iter().map(|&i| ts[i].action.clone()).collect();
        Ok(Self {
            states: Matrix::from_rows(&states)?,
            actions: Matrix::from_rows(&actions)?,
        })
    }

    pub fn len(&self) -> usize {
        self.states.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.states.rows() == 0
    }

    pub fn probe(&self, critic: &QModel, epsilon: f64) -> Result<EffectiveDimensionReport> {
        effective_dimension(&critic.extract_features(&self.states, &self.actions)?, epsilon)
    }
}

/// `(step, ζ̂)` pairs recorded by a training run's probes.
pub fn effective_dimension_trace(rows: &[TraceRow]) -> Vec<(u64, usize)> {
    rows.iter()
        .filter_map(|r| r.effective_dimension.map(|e| (r.step, e)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scaled_identity_counts_every_direction() {
        let n = 5;
        let mut psi = Matrix::identity(n);
        psi.as_mut_slice().iter_mut().for_each(|v| *v *= (n as f64).sqrt());
        let rep = effective_dimension(&psi, DEFAULT_EPSILON).unwrap();
        assert_eq!(rep.count, n);
        assert!(rep.eigenvalues.iter().all(|s| (s - 1.0).abs() < 1e-12));
    }

    #[test]
    fn rank_one_counts_one() {
        let rows: Vec<Vec<f64>> = (0..10).map(|_| vec![0.6, 0.8, 0.0]).collect();
        let rep = effective_dimension(&Matrix::from_rows(&rows).unwrap(), DEFAULT_EPSILON).unwrap();
        assert_eq!(rep.count, 1);
        assert!((rep.eigenvalues[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn non_finite_rejected() {
        let mut bad = Matrix::zeros(1, 1);
        bad.set(0, 0, f64::INFINITY);
        assert!(effective_dimension(&bad, 0.01).is_err());
        assert!(effective_dimension(&Matrix::zeros(1, 1), 0.0).is_err());
    }
}
