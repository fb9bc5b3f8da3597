//! Deterministic dense numerics: matrices, MLPs with manual backprop, Adam,
//! normalization, a symmetric eigensolver and a small linear solver.
//!
//! Everything is 64-bit. Matrix products go through `matrixmultiply`, which is
//! single-threaded and deterministic.

mod adam;
pub mod checkpoint;
mod eigen;
mod linsolve;
mod matrix;
mod mlp;
mod normalize;

pub use adam::{Adam, AdamConfig};
pub use eigen::{symmetric_eigenvalues, JACOBI_MAX_SWEEPS, JACOBI_OFF_TOL, SYMMETRY_TOL};
pub use linsolve::solve_linear;
pub use matrix::Matrix;
pub use mlp::{
    Activation, BatchCache, Gradients, LayerShape, LayerView, Mlp, MlpInit, VectorCache,
};
pub use normalize::{l2_normalize_with_grad, NormJacobian};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded generator used everywhere randomness is needed.
pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Fail with a divergence error naming the first non-finite entry.
pub fn check_finite(what: &str, values: &[f64]) -> crate::Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(crate::Error::divergence(what, i)),
        None => Ok(()),
    }
}
