//! Density and distribution function of the SUT law.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{symmetrize, SymPd};
use crate::model::Sut;
use crate::params::SutParams;
use crate::qmc::{mvt_cdf, CdfResult, QmcConfig};
use crate::special::t_logpdf_chol;

/// Below this the normalising probability `T_m(τ; Γ̄, ν)` is treated as zero.
pub const DENOMINATOR_FLOOR: f64 = 1e-12;

/// Below this the numerator probability is reported as an underflow.
const LOG_FLOOR: f64 = 1e-300;

/// `Q_y = (y−ξ)ᵀΩ⁻¹(y−ξ)` and `α = (ν+Q_y)/(ν+d)` (1 when `ν = ∞`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QuadraticData {
    pub q: f64,
    pub alpha: f64,
}

impl QuadraticData {
    pub fn new(q: f64, d: usize, nu: Dof) -> Self {
        let alpha = match nu {
            Dof::Finite(v) => (v + q) / (v + d as f64),
            Dof::Infinite => 1.0,
        };
        Self { q, alpha }
    }
}

/// A density value with its QMC error (3σ) and an underflow flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DensityValue {
    pub value: f64,
    pub log_value: f64,
    pub error_estimate: f64,
    /// Set when the numerator probability fell below 1e-300 and the log
    /// density was reported as `-inf`.
    pub underflow: bool,
}

/// Density evaluator with the normalising probability computed once.
#[derive(Debug, Clone)]
pub struct SutDensity {
    sut: Sut,
    cfg: QmcConfig,
    denom: CdfResult,
}

impl SutDensity {
    pub fn new(params: &SutParams, cfg: &QmcConfig) -> Result<Self> {
        Self::from_model(Sut::new(params.clone())?, cfg)
    }

    pub fn from_model(sut: Sut, cfg: &QmcConfig) -> Result<Self> {
        let denom = match sut.latent() {
            None => CdfResult::exact(1.0),
            Some(l) => mvt_cdf(&sut.params().tau, &l.gamma, sut.params().nu, cfg)?,
        };
        if denom.value < DENOMINATOR_FLOOR {
            return Err(SutError::DenominatorUnderflow { prob: denom.value });
        }
        Ok(Self { sut, cfg: *cfg, denom })
    }

    pub fn model(&self) -> &Sut {
        &self.sut
    }

    /// `T_m(τ; Γ̄, ν)`.
    pub fn normalizer(&self) -> CdfResult {
        self.denom
    }

    fn check_point(&self, y: &DVector<f64>) -> Result<()> {
        if y.len() != self.sut.d() {
            return Err(SutError::DimensionMismatch(format!(
                "point has {} entries, distribution has d = {}",
                y.len(),
                self.sut.d()
            )));
        }
        if y.iter().any(|v| v.is_nan()) {
            return Err(SutError::NonFiniteInput("NaN evaluation point".into()));
        }
        Ok(())
    }

    pub fn quadratic(&self, y: &DVector<f64>) -> QuadraticData {
        let p = self.sut.params();
        let q = self.sut.omega().chol().mahalanobis(&(y - &p.xi));
        QuadraticData::new(q, p.d(), p.nu)
    }

    /// Argument of the numerator probability: `α^{-1/2}{τ + ΔᵀΩ̄⁻¹ω⁻¹(y−ξ)}`.
    pub fn latent_argument(&self, y: &DVector<f64>) -> DVector<f64> {
        let p = self.sut.params();
        let l = self.sut.latent().expect("latent block present");
        let z = (y - &p.xi).component_div(self.sut.scale());
        let alpha = self.quadratic(y).alpha;
        (&p.tau + &l.lambda * z) / alpha.sqrt()
    }

    pub fn pdf(&self, y: &DVector<f64>) -> Result<DensityValue> {
        self.check_point(y)?;
        if y.iter().any(|v| v.is_infinite()) {
            return Ok(DensityValue {
                value: 0.0,
                log_value: f64::NEG_INFINITY,
                error_estimate: 0.0,
                underflow: false,
            });
        }
        let p = self.sut.params();
        let log_t = t_logpdf_chol(y, &p.xi, self.sut.omega().chol(), p.nu);
        let Some(l) = self.sut.latent() else {
            return Ok(DensityValue {
                value: log_t.exp(),
                log_value: log_t,
                error_estimate: 0.0,
                underflow: false,
            });
        };
        let arg = self.latent_argument(y);
        let num = mvt_cdf(&arg, &l.upsilon, p.nu.plus(p.d() as f64), &self.cfg)?;
        if num.value < LOG_FLOOR {
            return Ok(DensityValue {
                value: 0.0,
                log_value: f64::NEG_INFINITY,
                error_estimate: log_t.exp() * num.error_estimate / self.denom.value,
                underflow: true,
            });
        }
        let log_value = log_t + num.value.ln() - self.denom.value.ln();
        let value = log_value.exp();
        let rel = ((num.error_estimate / num.value).powi(2) + (self.denom.error_estimate / self.denom.value).powi(2)).sqrt();
        Ok(DensityValue {
            value,
            log_value,
            error_estimate: value * rel,
            underflow: false,
        })
    }

    pub fn logpdf(&self, y: &DVector<f64>) -> Result<f64> {
        Ok(self.pdf(y)?.log_value)
    }

    /// Density at each row of `points`, evaluated in parallel.
    pub fn pdf_many(&self, points: &[DVector<f64>]) -> Result<Vec<DensityValue>> {
        points.par_iter().map(|y| self.pdf(y)).collect()
    }

    /// `F(y) = T_{d+m}((τ, y−ξ); Ω*, ν) / T_m(τ; Γ̄, ν)`.
    pub fn cdf(&self, y: &DVector<f64>) -> Result<CdfResult> {
        self.check_point(y)?;
        let p = self.sut.params();
        let (d, m) = (p.d(), p.m());
        if m == 0 {
            return mvt_cdf(&(y - &p.xi), self.sut.omega(), p.nu, &self.cfg);
        }
        let wd = DMatrix::from_diagonal(self.sut.scale()) * &p.delta;
        let mut big = DMatrix::zeros(m + d, m + d);
        big.view_mut((0, 0), (m, m)).copy_from(&p.gamma_bar);
        big.view_mut((m, m), (d, d)).copy_from(&p.omega);
        big.view_mut((m, 0), (d, m)).copy_from(&(-&wd));
        big.view_mut((0, m), (m, d)).copy_from(&(-wd.transpose()));
        let big = SymPd::new(symmetrize(&big))?;
        let mut upper = DVector::zeros(m + d);
        upper.rows_mut(0, m).copy_from(&p.tau);
        upper.rows_mut(m, d).copy_from(&(y - &p.xi));
        let num = mvt_cdf(&upper, &big, p.nu, &self.cfg)?;
        let value = (num.value / self.denom.value).clamp(0.0, 1.0);
        let err = if num.value > 0.0 {
            value
                * ((num.error_estimate / num.value).powi(2) + (self.denom.error_estimate / self.denom.value).powi(2))
                    .sqrt()
        } else {
            num.error_estimate / self.denom.value
        };
        Ok(CdfResult {
            value,
            error_estimate: err,
            points_used: num.points_used + self.denom.points_used,
        })
    }
}

/// Density of `SUT(params)` at `y`.
pub fn pdf(params: &SutParams, y: &DVector<f64>, cfg: &QmcConfig) -> Result<DensityValue> {
    SutDensity::new(params, cfg)?.pdf(y)
}

pub fn logpdf(params: &SutParams, y: &DVector<f64>, cfg: &QmcConfig) -> Result<f64> {
    SutDensity::new(params, cfg)?.logpdf(y)
}

pub fn cdf(params: &SutParams, y: &DVector<f64>, cfg: &QmcConfig) -> Result<CdfResult> {
    SutDensity::new(params, cfg)?.cdf(y)
}
