//! Brute-force selection sampler: draw the joint `(U₀, U₁)` t vector and keep
//! the draws with `U₀ + τ > 0`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

#[derive(Debug, Clone)]
pub struct SelectionModel {
    pub xi: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub tau: DVector<f64>,
    pub gamma_bar: DMatrix<f64>,
    pub nu: Option<f64>,
}

pub struct Draws {
    pub y: DMatrix<f64>,
    pub acceptance: f64,
}

impl SelectionModel {
    /// Draws `n` accepted vectors; panics if fewer than one in `10⁶` proposals is accepted.
    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Draws {
        let (d, m) = self.delta.shape();
        let w = self.omega.diagonal().map(f64::sqrt);
        let mut joint = DMatrix::zeros(m + d, m + d);
        joint.view_mut((0, 0), (m, m)).copy_from(&self.gamma_bar);
        joint.view_mut((m, 0), (d, m)).copy_from(&self.delta);
        joint.view_mut((0, m), (m, d)).copy_from(&self.delta.transpose());
        for i in 0..d {
            for j in 0..d {
                joint[(m + i, m + j)] = self.omega[(i, j)] / (w[i] * w[j]);
            }
        }
        let l = joint.cholesky().expect("joint scale must be positive definite").unpack();
        let chi = self.nu.map(|nu| ChiSquared::new(nu).expect("positive dof"));
        let mut y = DMatrix::zeros(n, d);
        let (mut kept, mut tried) = (0usize, 0usize);
        while kept < n {
            tried += 1;
            assert!(tried < 1_000_000 * (kept + 1), "acceptance too low for brute force");
            let z = DVector::from_fn(m + d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = chi.as_ref().map_or(1.0, |c| (c.sample(rng) / self.nu.unwrap()).sqrt());
            let u = &l * z / s;
            if (0..m).all(|k| u[k] + self.tau[k] > 0.0) {
                for i in 0..d {
                    y[(kept, i)] = self.xi[i] + w[i] * u[m + i];
                }
                kept += 1;
            }
        }
        Draws { y, acceptance: n as f64 / tried as f64 }
    }
}
