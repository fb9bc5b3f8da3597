#![allow(dead_code)]

use bpr_core::environments::{TabularMdp, TabularPolicy};
use bpr_core::numerics::{Matrix, Rng};
use rand::Rng as _;

pub fn uniform_matrix(r: &mut Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    let data = (0..rows * cols).map(|_| r.random_range(-scale..scale)).collect();
    Matrix::from_vec(rows, cols, data).unwrap()
}

pub fn random_simplex(r: &mut Rng, n: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..n).map(|_| -r.random_range(1e-12f64..1.0).ln()).collect();
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

/// Random MDP with `γ ≤ max_gamma`, rewards in `[−1, 1]` and, half the
/// time, an absorbing last state.
pub fn random_mdp(r: &mut Rng, max_gamma: f64) -> TabularMdp {
    let ns = r.random_range(1..7);
    let na = r.random_range(1..5);
    let gamma = r.random_range(0.0..=max_gamma);
    let with_terminal = ns > 1 && r.random_bool(0.5);
    let terminal: Vec<bool> = (0..ns).map(|s| with_terminal && s == ns - 1).collect();
    let mut transition = Vec::with_capacity(ns * na * ns);
    for _ in 0..ns * na {
        transition.extend(random_simplex(r, ns));
    }
    let reward = (0..ns * na).map(|_| r.random_range(-1.0..=1.0)).collect();
    let mut initial = random_simplex(r, ns);
    if with_terminal {
        initial[ns - 1] = 0.0;
        let s: f64 = initial.iter().sum();
        initial.iter_mut().for_each(|p| *p /= s);
    }
    TabularMdp::new(ns, na, transition, reward, initial, gamma, terminal).unwrap()
}

pub fn random_policy(r: &mut Rng, ns: usize, na: usize) -> TabularPolicy {
    let rows: Vec<Vec<f64>> = (0..ns).map(|_| random_simplex(r, na)).collect();
    TabularPolicy::from_rows(&rows).unwrap()
}

pub fn to_nalgebra(m: &Matrix) -> nalgebra::DMatrix<f64> {
    nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice())
}

pub fn from_nalgebra(m: &nalgebra::DMatrix<f64>) -> Matrix {
    let mut out = Matrix::zeros(m.nrows(), m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.set(i, j, m[(i, j)]);
        }
    }
    out
}
