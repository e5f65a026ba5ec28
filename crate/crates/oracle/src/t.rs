//! Multivariate t and normal references.

use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;
use std::f64::consts::PI;

/// `log t_d(y; ξ, Ω, ν)`; `nu = None` is the normal density.
pub fn mvt_logpdf(y: &DVector<f64>, xi: &DVector<f64>, omega: &DMatrix<f64>, nu: Option<f64>) -> f64 {
    let d = y.len() as f64;
    let chol = omega.clone().cholesky().expect("scale must be positive definite");
    let r = y - xi;
    let q = r.dot(&chol.solve(&r));
    let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    match nu {
        Some(nu) => {
            ln_gamma((nu + d) / 2.0) - ln_gamma(nu / 2.0) - 0.5 * d * (nu * PI).ln() - 0.5 * log_det
                - 0.5 * (nu + d) * (1.0 + q / nu).ln()
        }
        None => -0.5 * d * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * q,
    }
}

pub fn mvt_pdf(y: &DVector<f64>, xi: &DVector<f64>, omega: &DMatrix<f64>, nu: Option<f64>) -> f64 {
    mvt_logpdf(y, xi, omega, nu).exp()
}

/// Covariance `ν/(ν−2) Ω`.
pub fn t_covariance(omega: &DMatrix<f64>, nu: Option<f64>) -> DMatrix<f64> {
    match nu {
        Some(nu) => omega * (nu / (nu - 2.0)),
        None => omega.clone(),
    }
}

/// Mardia kurtosis excess `2d(d+2)/(ν−4)` of the multivariate t.
pub fn t_mardia_gamma2(d: usize, nu: Option<f64>) -> f64 {
    let d = d as f64;
    match nu {
        Some(nu) => 2.0 * d * (d + 2.0) / (nu - 4.0),
        None => 0.0,
    }
}
