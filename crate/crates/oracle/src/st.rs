//! Skew-t references in the classical `(ξ, ω, α, ν)` form,
//! with `δ = α/√(1+α²)` in one dimension. `nu = None` is the skew-normal.

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

use crate::t::mvt_logpdf;

fn std_cdf(x: f64, nu: Option<f64>) -> f64 {
    match nu {
        Some(nu) => StudentsT::new(0.0, 1.0, nu).expect("valid dof").cdf(x),
        None => Normal::new(0.0, 1.0).expect("unit normal").cdf(x),
    }
}

/// `b_ν = √ν Γ((ν−1)/2) / (√π Γ(ν/2))`, `√(2/π)` for the skew-normal.
pub fn b_nu(nu: Option<f64>) -> f64 {
    match nu {
        Some(nu) => (0.5 * nu.ln() + ln_gamma((nu - 1.0) / 2.0) - 0.5 * PI.ln() - ln_gamma(nu / 2.0)).exp(),
        None => (2.0 / PI).sqrt(),
    }
}

/// Univariate skew-t.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SkewT {
    pub xi: f64,
    pub omega: f64,
    pub delta: f64,
    pub nu: Option<f64>,
}

impl SkewT {
    pub fn new(xi: f64, omega: f64, delta: f64, nu: Option<f64>) -> Self {
        assert!(omega > 0.0 && delta.abs() < 1.0);
        Self { xi, omega, delta, nu }
    }

    pub fn alpha(&self) -> f64 {
        self.delta / (1.0 - self.delta * self.delta).sqrt()
    }

    pub fn pdf(&self, y: f64) -> f64 {
        let z = (y - self.xi) / self.omega;
        let a = self.alpha();
        let (base, arg, nu1) = match self.nu {
            Some(nu) => {
                let lt = ln_gamma((nu + 1.0) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * (nu * PI).ln()
                    - 0.5 * (nu + 1.0) * (1.0 + z * z / nu).ln();
                (lt.exp(), a * z * ((nu + 1.0) / (nu + z * z)).sqrt(), Some(nu + 1.0))
            }
            None => ((-0.5 * z * z).exp() / (2.0 * PI).sqrt(), a * z, None),
        };
        2.0 * base * std_cdf(arg, nu1) / self.omega
    }

    fn need(&self, k: f64) {
        if let Some(nu) = self.nu {
            assert!(nu > k, "moment of order {k} needs nu > {k}");
        }
    }

    fn mu_z(&self) -> f64 {
        b_nu(self.nu) * self.delta
    }

    fn ez2(&self) -> f64 {
        self.nu.map_or(1.0, |nu| nu / (nu - 2.0))
    }

    fn ez3(&self) -> f64 {
        let d = self.delta;
        let r = self.nu.map_or(1.0, |nu| nu / (nu - 3.0));
        b_nu(self.nu) * d * (3.0 - d * d) * r
    }

    fn ez4(&self) -> f64 {
        self.nu.map_or(3.0, |nu| 3.0 * nu * nu / ((nu - 2.0) * (nu - 4.0)))
    }

    pub fn mean(&self) -> f64 {
        self.need(1.0);
        self.xi + self.omega * self.mu_z()
    }

    pub fn var(&self) -> f64 {
        self.need(2.0);
        self.omega * self.omega * (self.ez2() - self.mu_z().powi(2))
    }

    pub fn skewness(&self) -> f64 {
        self.need(3.0);
        let m = self.mu_z();
        let s2 = self.ez2() - m * m;
        (self.ez3() - 3.0 * m * self.ez2() + 2.0 * m.powi(3)) / s2.powf(1.5)
    }

    /// Excess kurtosis.
    pub fn kurtosis(&self) -> f64 {
        self.need(4.0);
        let m = self.mu_z();
        let s2 = self.ez2() - m * m;
        (self.ez4() - 4.0 * m * self.ez3() + 6.0 * m * m * self.ez2() - 3.0 * m.powi(4)) / (s2 * s2) - 3.0
    }
}

/// Multivariate skew-t with `Ω = ωΩ̄ω` and skewness vector `δ` (`δᵀΩ̄⁻¹δ < 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct MvSkewT {
    pub xi: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub delta: DVector<f64>,
    pub nu: Option<f64>,
}

impl MvSkewT {
    pub fn new(xi: DVector<f64>, omega: DMatrix<f64>, delta: DVector<f64>, nu: Option<f64>) -> Self {
        Self { xi, omega, delta, nu }
    }

    fn scale(&self) -> DVector<f64> {
        self.omega.diagonal().map(f64::sqrt)
    }

    fn corr(&self) -> DMatrix<f64> {
        let w = self.scale();
        DMatrix::from_fn(w.len(), w.len(), |i, j| self.omega[(i, j)] / (w[i] * w[j]))
    }

    /// `α = Ω̄⁻¹δ / √(1 − δᵀΩ̄⁻¹δ)`.
    pub fn alpha(&self) -> DVector<f64> {
        let c = self.corr().cholesky().expect("correlation must be positive definite");
        let s = c.solve(&self.delta);
        let q = self.delta.dot(&s);
        assert!(q < 1.0, "delta outside the admissible region");
        s / (1.0 - q).sqrt()
    }

    pub fn pdf(&self, y: &DVector<f64>) -> f64 {
        let d = y.len() as f64;
        let z = (y - &self.xi).component_div(&self.scale());
        let a = self.alpha().dot(&z);
        let chol = self.omega.clone().cholesky().expect("scale must be positive definite");
        let r = y - &self.xi;
        let q = r.dot(&chol.solve(&r));
        let (arg, nu1) = match self.nu {
            Some(nu) => (a * ((nu + d) / (nu + q)).sqrt(), Some(nu + d)),
            None => (a, None),
        };
        2.0 * mvt_logpdf(y, &self.xi, &self.omega, self.nu).exp() * std_cdf(arg, nu1)
    }

    pub fn mean(&self) -> DVector<f64> {
        &self.xi + self.scale().component_mul(&self.delta) * b_nu(self.nu)
    }

    pub fn cov(&self) -> DMatrix<f64> {
        let w = DMatrix::from_diagonal(&self.scale());
        let m = &w * &self.delta * b_nu(self.nu);
        let r = self.nu.map_or(1.0, |nu| nu / (nu - 2.0));
        &self.omega * r - &m * m.transpose()
    }
}
