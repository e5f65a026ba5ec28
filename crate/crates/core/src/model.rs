//! Validated parameters together with the factorisations shared by the
//! density, sampling and moment routines.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;
use crate::linalg::{symmetrize, SymPd};
use crate::params::SutParams;

/// Matrices derived from the latent block (`m ≥ 1`).
#[derive(Debug, Clone)]
pub struct LatentBlock {
    /// `Γ̄`.
    pub gamma: SymPd,
    /// `Λ = ΔᵀΩ̄⁻¹` (m x d).
    pub lambda: DMatrix<f64>,
    /// `Υ = Γ̄ − ΔᵀΩ̄⁻¹Δ`, the latent scale given the observed vector.
    pub upsilon: SymPd,
    /// `ΔΓ̄⁻¹` (d x m).
    pub delta_ginv: DMatrix<f64>,
    /// `Ω̄ − ΔΓ̄⁻¹Δᵀ`, the scale of the symmetric part of the convolution.
    pub w_scale: SymPd,
}

/// A validated SUT law with cached factorisations.
#[derive(Debug, Clone)]
pub struct Sut {
    params: SutParams,
    omega: SymPd,
    scale: DVector<f64>,
    omega_bar: SymPd,
    latent: Option<LatentBlock>,
}

impl Sut {
    pub fn new(params: SutParams) -> Result<Self> {
        params.check()?;
        let omega = SymPd::new(symmetrize(&params.omega))?;
        let scale = params.omega_scale();
        let omega_bar = SymPd::new(params.omega_bar())?;
        let latent = if params.m() == 0 {
            None
        } else {
            let gamma = SymPd::new(symmetrize(&params.gamma_bar))?;
            let lambda = omega_bar.chol().solve_mat(&params.delta).transpose();
            let upsilon = SymPd::new(symmetrize(&(gamma.matrix() - &lambda * &params.delta)))?;
            let delta_ginv = gamma.chol().solve_mat(&params.delta.transpose()).transpose();
            let w_scale = SymPd::new(symmetrize(&(omega_bar.matrix() - &delta_ginv * params.delta.transpose())))?;
            Some(LatentBlock {
                gamma,
                lambda,
                upsilon,
                delta_ginv,
                w_scale,
            })
        };
        Ok(Self {
            params,
            omega,
            scale,
            omega_bar,
            latent,
        })
    }

    pub fn params(&self) -> &SutParams {
        &self.params
    }

    pub fn d(&self) -> usize {
        self.params.d()
    }

    pub fn m(&self) -> usize {
        self.params.m()
    }

    pub fn omega(&self) -> &SymPd {
        &self.omega
    }

    /// `ω` as a vector.
    pub fn scale(&self) -> &DVector<f64> {
        &self.scale
    }

    pub fn omega_bar(&self) -> &SymPd {
        &self.omega_bar
    }

    pub fn latent(&self) -> Option<&LatentBlock> {
        self.latent.as_ref()
    }

    /// `ωΔΓ̄⁻¹`, the loading of the truncated latent vector (d x m).
    pub fn loading(&self) -> DMatrix<f64> {
        match &self.latent {
            Some(l) => DMatrix::from_diagonal(&self.scale) * &l.delta_ginv,
            None => DMatrix::zeros(self.d(), 0),
        }
    }
}

impl TryFrom<SutParams> for Sut {
    type Error = crate::error::SutError;

    fn try_from(p: SutParams) -> Result<Self> {
        Sut::new(p)
    }
}
