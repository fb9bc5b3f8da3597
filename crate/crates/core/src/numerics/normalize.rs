use super::Matrix;

/// Jacobian of `v ↦ v / max(‖v‖, eps)`, kept implicit.
#[derive(Debug, Clone)]
pub struct NormJacobian {
    v: Vec<f64>,
    norm: f64,
    floored: bool,
    denom: f64,
}

impl NormJacobian {
    /// `Jᵀ g`. The Jacobian is symmetric, so this is also `J g`.
    pub fn apply(&self, g: &[f64]) -> Vec<f64> {
        if self.floored {
            return g.iter().map(|x| x / self.denom).collect();
        }
        let dot: f64 = self.v.iter().zip(g).map(|(a, b)| a * b).sum();
        let n3 = self.norm * self.norm * self.norm;
        g.iter()
            .zip(&self.v)
            .map(|(gi, vi)| gi / self.norm - vi * dot / n3)
            .collect()
    }

    /// Dense form `I/‖v‖ − v vᵀ/‖v‖³` (or `I/eps` below the floor).
    pub fn to_matrix(&self) -> Matrix {
        let n = self.v.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            for (j, x) in self.apply(&e).into_iter().enumerate() {
                m.set(j, i, x);
            }
        }
        m
    }

    pub fn norm(&self) -> f64 {
        self.norm
    }

    /// Whether the denominator floor was active.
    pub fn floored(&self) -> bool {
        self.floored
    }
}

/// `v / max(‖v‖₂, eps_stability)` together with its Jacobian.
pub fn l2_normalize_with_grad(v: &[f64], eps_stability: f64) -> (Vec<f64>, NormJacobian) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let floored = norm <= eps_stability;
    let denom = if floored { eps_stability } else { norm };
    let out = v.iter().map(|x| x / denom).collect();
    (
        out,
        NormJacobian {
            v: v.to_vec(),
            norm,
            floored,
            denom,
        },
    )
}
