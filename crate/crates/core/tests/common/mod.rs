#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use sut_core::{Dof, SutParams};
use sut_oracle::selection::SelectionModel;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// Random correlation matrix from a Wishart-like draw with a ridge.
pub fn random_correlation(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let b = DMatrix::from_fn(k, k + 2, |_, _| normal(rng));
    let s = &b * b.transpose() + DMatrix::identity(k, k) * 0.5;
    let w = s.diagonal().map(f64::sqrt);
    DMatrix::from_fn(k, k, |i, j| if i == j { 1.0 } else { s[(i, j)] / (w[i] * w[j]) })
}

/// Valid SUT parameters: `(Γ̄, Δ, Ω̄)` are blocks of one random correlation
/// matrix of size `m + d`, so the joint scale is positive definite.
pub fn random_params(d: usize, m: usize, nu: Dof, with_tau: bool, rng: &mut ChaCha8Rng) -> SutParams {
    let r = random_correlation(m + d, rng);
    let w = DVector::from_fn(d, |_, _| 0.5 + 1.5 * rng.random::<f64>());
    let obar = r.view((m, m), (d, d)).into_owned();
    let omega = DMatrix::from_fn(d, d, |i, j| w[i] * w[j] * obar[(i, j)]);
    let tau = if with_tau {
        DVector::from_fn(m, |_, _| 0.5 * normal(rng))
    } else {
        DVector::zeros(m)
    };
    SutParams::new(
        DVector::from_fn(d, |_, _| normal(rng)),
        omega,
        r.view((m, 0), (d, m)).into_owned(),
        tau,
        r.view((0, 0), (m, m)).into_owned(),
        nu,
    )
    .expect("valid by construction")
}

pub fn symmetric_params(d: usize, m: usize, nu: Dof, rng: &mut ChaCha8Rng) -> SutParams {
    let mut p = random_params(d, m, nu, false, rng);
    p.delta.fill(0.0);
    p
}

pub fn nu_opt(nu: Dof) -> Option<f64> {
    match nu {
        Dof::Finite(v) => Some(v),
        Dof::Infinite => None,
    }
}

pub fn selection_model(p: &SutParams) -> SelectionModel {
    SelectionModel {
        xi: p.xi.clone(),
        omega: p.omega.clone(),
        delta: p.delta.clone(),
        tau: p.tau.clone(),
        gamma_bar: p.gamma_bar.clone(),
        nu: nu_opt(p.nu),
    }
}

pub fn random_point(p: &SutParams, spread: f64, rng: &mut ChaCha8Rng) -> DVector<f64> {
    let w = p.omega_scale();
    DVector::from_fn(p.d(), |i, _| p.xi[i] + spread * w[i] * normal(rng))
}

pub fn random_unit(d: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(d, |_, _| normal(rng)).normalize()
}
