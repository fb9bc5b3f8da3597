mod common;

use bpr_core::numerics::{checkpoint, l2_normalize_with_grad, rng, symmetric_eigenvalues, Activation, Matrix, Mlp, MlpInit};
use common::{to_nalgebra, uniform_matrix};
use proptest::prelude::*;
use rand::Rng as _;

fn symmetric(seed: u64, d: usize) -> Matrix {
    let mut r = rng(seed);
    let b = uniform_matrix(&mut r, d, d, 1.0);
    let mut a = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            a.set(i, j, 0.5 * (b.get(i, j) + b.get(j, i)));
        }
    }
    a
}

#[test]
fn jacobi_matches_reference_eigensolver_on_random_8x8() {
    for seed in 0..50 {
        let a = symmetric(seed, 8);
        let ours = symmetric_eigenvalues(&a).unwrap();
        let mut oracle: Vec<f64> = nalgebra::SymmetricEigen::new(to_nalgebra(&a)).eigenvalues.iter().copied().collect();
        oracle.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.iter().zip(&oracle) {
            assert!((x - y).abs() < 1e-8, "seed {seed}: {ours:?} vs {oracle:?}");
        }
    }
}

/// Loss `Σ c ⊙ f(x)` over a batch, so the output gradient is `c` per row.
fn weighted_output(net: &Mlp, x: &Matrix, c: &Matrix) -> f64 {
    let y = net.predict_batch(x).unwrap();
    y.as_slice().iter().zip(c.as_slice()).map(|(a, b)| a * b).sum()
}

#[test]
fn mlp_backward_matches_central_differences() {
    let acts = [Activation::Relu, Activation::Tanh, Activation::Identity];
    let h = 1e-5;
    for seed in 0..120u64 {
        let mut r = rng(1000 + seed);
        let depth = r.random_range(1..4);
        let mut dims = vec![r.random_range(1..6)];
        for _ in 0..depth {
            dims.push(r.random_range(1..7));
        }
        let hidden = acts[r.random_range(0..3)];
        let out = acts[r.random_range(0..3)];
        let mut net = Mlp::new(&dims, hidden, out, MlpInit::GlorotUniform, &mut r).unwrap();
        net.params_mut().iter_mut().for_each(|p| *p += r.random_range(-0.3..0.3));
        let n = r.random_range(1..5);
        let x = uniform_matrix(&mut r, n, dims[0], 1.0);
        let c = uniform_matrix(&mut r, n, *dims.last().unwrap(), 1.0);
        let cache = net.forward_batch(&x).unwrap();
        let g = net.backward_batch(&cache, &c).unwrap();

        let mut probe = net.clone();
        let (mut diff, mut gn, mut fn_) = (0.0, 0.0, 0.0);
        for i in 0..net.param_count() {
            let base = probe.params()[i];
            probe.params_mut()[i] = base + h;
            let up = weighted_output(&probe, &x, &c);
            probe.params_mut()[i] = base - h;
            let down = weighted_output(&probe, &x, &c);
            probe.params_mut()[i] = base;
            let fd = (up - down) / (2.0 * h);
            diff += (g.params[i] - fd).powi(2);
            gn += g.params[i].powi(2);
            fn_ += fd * fd;
        }
        let rel = diff.sqrt() / gn.sqrt().max(fn_.sqrt()).max(1e-6);
        assert!(rel < 1e-4, "seed {seed} dims {dims:?}: relative error {rel}");

        // Input gradient through the same route.
        let mut xp = x.clone();
        for k in 0..x.as_slice().len() {
            let base = xp.as_slice()[k];
            xp.as_mut_slice()[k] = base + h;
            let up = weighted_output(&net, &xp, &c);
            xp.as_mut_slice()[k] = base - h;
            let down = weighted_output(&net, &xp, &c);
            xp.as_mut_slice()[k] = base;
            let fd = (up - down) / (2.0 * h);
            let an = g.input.as_slice()[k];
            assert!((an - fd).abs() <= 1e-4 * an.abs().max(fd.abs()).max(1e-2), "seed {seed} input {k}: {an} vs {fd}");
        }
    }
}

#[test]
fn forward_and_backward_are_bit_reproducible() {
    let build = || {
        let mut r = rng(77);
        let net = Mlp::new(&[3, 8, 8, 2], Activation::Relu, Activation::Tanh, MlpInit::GlorotUniform, &mut r).unwrap();
        let x = uniform_matrix(&mut r, 5, 3, 1.0);
        let cache = net.forward_batch(&x).unwrap();
        let g = net.backward_batch(&cache, cache.output()).unwrap();
        (checkpoint::to_bytes(&net), cache.output().clone(), g.params)
    };
    let (a, b) = (build(), build());
    assert_eq!(a.0, b.0);
    assert_eq!(a.1.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.1.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    assert_eq!(a.2.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.2.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
}

proptest! {
    #[test]
    fn normalized_vectors_have_unit_norm(v in prop::collection::vec(-1e3f64..1e3, 1..12)) {
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-8);
        let (u, _) = l2_normalize_with_grad(&v, 1e-8);
        let n = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        prop_assert!((n - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvalues_preserve_trace_and_frobenius(seed in any::<u64>(), d in 1usize..17) {
        let a = symmetric(seed, d);
        let ev = symmetric_eigenvalues(&a).unwrap();
        prop_assert!((ev.iter().sum::<f64>() - a.trace()).abs() < 1e-8);
        let f2 = a.frobenius_norm().powi(2);
        prop_assert!((ev.iter().map(|v| v * v).sum::<f64>() - f2).abs() < 1e-8);
        prop_assert!(ev.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn checkpoints_round_trip_bit_exact(seed in any::<u64>()) {
        let mut r = rng(seed);
        let dims = [r.random_range(1..6), r.random_range(1..6), r.random_range(1..6)];
        let net = Mlp::new(&dims, Activation::Relu, Activation::Identity, MlpInit::GlorotUniform, &mut r).unwrap();
        let bytes = checkpoint::to_bytes(&net);
        let back = checkpoint::read_checkpoint(bytes.as_slice()).unwrap();
        prop_assert_eq!(checkpoint::to_bytes(&back), bytes);
    }
}
