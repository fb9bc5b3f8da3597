mod common;

use bpr_core::analysis::{effective_dimension, ProbeBatch, DEFAULT_EPSILON};
use bpr_core::environments::{generate_pointmass_dataset, PointMassBehavior, PointMassConfig};
use bpr_core::numerics::{rng, Matrix};
use common::{from_nalgebra, to_nalgebra, uniform_matrix};
use proptest::prelude::*;
use rand::Rng as _;
use rand_distr::StandardNormal;

/// Count of squared singular values of `Ψ/√n` above `eps`.
fn svd_count(psi: &Matrix, eps: f64) -> usize {
    let n = psi.rows() as f64;
    let svd = to_nalgebra(psi).svd(false, false);
    svd.singular_values.iter().filter(|s| *s * *s / n > eps).count()
}

/// Low-rank feature matrix with column scales spread over a few decades so
/// the spectrum straddles the threshold.
fn feature_matrix(seed: u64) -> Matrix {
    let mut r = rng(seed);
    let n = r.random_range(1..=256);
    let d = r.random_range(1..=16);
    let k = r.random_range(1..=d);
    let a = uniform_matrix(&mut r, n, k, 1.0);
    let mut b = uniform_matrix(&mut r, k, d, 1.0);
    for j in 0..d {
        let scale = 10f64.powf(r.random_range(-2.0..1.0));
        for i in 0..k {
            b.set(i, j, b.get(i, j) * scale);
        }
    }
    a.matmul(&b).unwrap()
}

#[test]
fn count_equals_svd_oracle_on_200_matrices() {
    for seed in 0..200 {
        let psi = feature_matrix(seed);
        let ours = effective_dimension(&psi, DEFAULT_EPSILON).unwrap().count;
        assert_eq!(ours, svd_count(&psi, DEFAULT_EPSILON), "seed {seed}, shape {}x{}", psi.rows(), psi.cols());
        assert!(ours <= psi.rows().min(psi.cols()));
    }
}

/// Fixed random-feature model `ψ(x) = tanh(Wx + b)` with decaying column
/// weights; `x ~ N(0, I)`.
struct RandomFeatures {
    w: Matrix,
    b: Vec<f64>,
    decay: Vec<f64>,
}

impl RandomFeatures {
    fn new(seed: u64, input: usize, d: usize) -> Self {
        let mut r = rng(seed);
        Self {
            w: uniform_matrix(&mut r, input, d, 1.5),
            b: (0..d).map(|_| r.random_range(-0.5..0.5)).collect(),
            decay: (0..d).map(|j| 0.7f64.powi(j as i32)).collect(),
        }
    }

    fn sample(&self, n: usize, seed: u64) -> Matrix {
        let mut r = rng(seed);
        let data = (0..n * self.w.rows()).map(|_| r.sample::<f64, _>(StandardNormal)).collect();
        let x = Matrix::from_vec(n, self.w.rows(), data).unwrap();
        let mut psi = x.matmul(&self.w).unwrap();
        for i in 0..n {
            for j in 0..psi.cols() {
                psi.set(i, j, (psi.get(i, j) + self.b[j]).tanh() * self.decay[j]);
            }
        }
        psi
    }
}

#[test]
fn doubling_n_changes_the_count_by_at_most_one() {
    let model = RandomFeatures::new(5, 6, 16);
    let mut stable = 0;
    for t in 0..50u64 {
        let small = model.sample(128, 2 * t);
        let large = model.sample(256, 2 * t + 1);
        let a = effective_dimension(&small, DEFAULT_EPSILON).unwrap().count as i64;
        let b = effective_dimension(&large, DEFAULT_EPSILON).unwrap().count as i64;
        if (a - b).abs() <= 1 {
            stable += 1;
        }
    }
    assert!(stable >= 48, "{stable}/50 trials within one");
}

#[test]
fn probe_batch_is_fixed_by_its_seed() {
    let d = generate_pointmass_dataset(&PointMassConfig::default(), &PointMassBehavior::medium(), 600, 3).unwrap();
    let a = ProbeBatch::sample(&d, 512, 11).unwrap();
    assert_eq!(a, ProbeBatch::sample(&d, 512, 11).unwrap());
    assert_ne!(a, ProbeBatch::sample(&d, 512, 12).unwrap());
    assert_eq!(a.len(), 512);
}

fn near_threshold(ev: &[f64]) -> bool {
    ev.iter().any(|v| (v - DEFAULT_EPSILON).abs() < 1e-9)
}

proptest! {
    #[test]
    fn row_permutation_does_not_change_the_count(seed in any::<u64>(), shuffle in any::<u64>()) {
        let psi = feature_matrix(seed);
        let rep = effective_dimension(&psi, DEFAULT_EPSILON).unwrap();
        prop_assume!(!near_threshold(&rep.eigenvalues));
        let mut rows: Vec<Vec<f64>> = (0..psi.rows()).map(|i| psi.row(i).to_vec()).collect();
        use rand::seq::SliceRandom;
        rows.shuffle(&mut rng(shuffle));
        let permuted = Matrix::from_rows(&rows).unwrap();
        prop_assert_eq!(effective_dimension(&permuted, DEFAULT_EPSILON).unwrap().count, rep.count);
    }

    #[test]
    fn column_rotation_does_not_change_the_count(seed in any::<u64>(), rot in any::<u64>()) {
        let psi = feature_matrix(seed);
        let rep = effective_dimension(&psi, DEFAULT_EPSILON).unwrap();
        prop_assume!(!near_threshold(&rep.eigenvalues));
        let d = psi.cols();
        let mut r = rng(rot);
        let g = nalgebra::DMatrix::from_fn(d, d, |_, _| r.sample::<f64, _>(StandardNormal));
        let q = from_nalgebra(&g.qr().q());
        let rotated = psi.matmul(&q).unwrap();
        prop_assert_eq!(effective_dimension(&rotated, DEFAULT_EPSILON).unwrap().count, rep.count);
    }
}
