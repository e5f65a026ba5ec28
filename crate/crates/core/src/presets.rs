//! Parameter presets for the bivariate contour panels and the Mardia sweep.
//!
//! With `Ω = I` and `Γ̄ = I` the loading `ωΔΓ̄⁻¹` is `Δ` itself. Its columns
//! are `c·u_k` for unit directions `u_k`, where `c` is `fraction` times the
//! largest value keeping `I − c²Σ_k u_k u_kᵀ` positive definite.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::params::SutParams;

/// Fraction of the positive-definiteness boundary used by the presets.
pub const BOUNDARY_FRACTION: f64 = 0.8;

pub const FIG1_DIRECTIONS: [[f64; 2]; 3] = [[-1.0, 2.0], [1.0, 2.0], [1.0, -6.0]];
pub const FIG2_DIRECTION: [f64; 2] = [1.0, 1.0];
pub const PRESET_NU: f64 = 5.0;

/// Bivariate law whose latent loadings point along `directions`.
pub fn directional(directions: &[[f64; 2]], fraction: f64, nu: Dof) -> Result<SutParams> {
    if !(0.0..1.0).contains(&fraction) {
        return Err(SutError::Constraint(format!("boundary fraction {fraction} outside [0, 1)")));
    }
    let m = directions.len();
    let u = DMatrix::from_fn(2, m, |i, k| {
        let v = directions[k];
        v[i] / v[0].hypot(v[1])
    });
    let top = SymmetricEigen::new(&u * u.transpose()).eigenvalues.max();
    let c = if top > 0.0 { fraction / top.sqrt() } else { 0.0 };
    SutParams::new(
        DVector::zeros(2),
        DMatrix::identity(2, 2),
        u * c,
        DVector::zeros(m),
        DMatrix::identity(m, m),
        nu,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Fig1Panel {
    pub sun: bool,
    pub m: usize,
}

impl Fig1Panel {
    pub fn all() -> Vec<Fig1Panel> {
        [true, false]
            .into_iter()
            .flat_map(|sun| (1..=3).map(move |m| Fig1Panel { sun, m }))
            .collect()
    }

    pub fn name(&self) -> String {
        format!("fig1-{}-m{}", if self.sun { "sun" } else { "sut" }, self.m)
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::all().into_iter().find(|p| p.name() == name)
    }

    /// Latent loadings use the first `m` caption directions.
    pub fn params(&self) -> Result<SutParams> {
        let nu = if self.sun { Dof::Infinite } else { Dof::Finite(PRESET_NU) };
        directional(&FIG1_DIRECTIONS[..self.m], BOUNDARY_FRACTION, nu)
    }

    pub fn leading_direction(&self) -> DVector<f64> {
        DVector::from_row_slice(&FIG1_DIRECTIONS[0])
    }
}

/// Sweep member with `m` copies of the `(1,1)` direction, `ν = 5`, `τ = 0`.
pub fn fig2(m: usize) -> Result<SutParams> {
    if m == 0 {
        return Err(SutError::Constraint("latent dimension must be positive".into()));
    }
    directional(&vec![FIG2_DIRECTION; m], BOUNDARY_FRACTION, Dof::Finite(PRESET_NU))
}
