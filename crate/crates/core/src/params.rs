//! Parameter containers for `SUT_{d,m}(ξ, Ω, Δ, τ, Γ̄, ν)`, their validation,
//! the common sub-models, the identifiable families and the `(H, Ψ)`
//! reparameterisation.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{asymmetry, cholesky, symmetrize, SymPd, SYM_TOL};

/// Tolerance on the unit diagonal of `Γ̄`.
pub const UNIT_DIAG_TOL: f64 = 1e-10;

/// Latent equicorrelation above which the kind-1 family is flagged as
/// practically a skew-t.
pub const ST_LIMIT_RHO: f64 = 0.95;

/// One violated invariant reported by [`SutParams::validate`].
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyLocation,
    Shape {
        field: &'static str,
        expected: (usize, usize),
        found: (usize, usize),
    },
    NonFinite {
        field: &'static str,
    },
    NotSymmetric {
        field: &'static str,
        asymmetry: f64,
    },
    NotPositiveDefinite {
        field: &'static str,
    },
    GammaDiagonal {
        index: usize,
        value: f64,
    },
    /// `Γ̄ − ΔᵀΩ̄⁻¹Δ` is not positive definite; carries its smallest eigenvalue.
    ExtendedNotPd {
        min_eigenvalue: f64,
    },
    Dof {
        nu: f64,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyLocation => write!(f, "xi must have at least one entry"),
            Violation::Shape {
                field,
                expected,
                found,
            } => write!(
                f,
                "{field} has shape {}x{}, expected {}x{}",
                found.0, found.1, expected.0, expected.1
            ),
            Violation::NonFinite { field } => write!(f, "{field} contains non-finite entries"),
            Violation::NotSymmetric { field, asymmetry } => {
                write!(f, "{field} is not symmetric (asymmetry {asymmetry:e})")
            }
            Violation::NotPositiveDefinite { field } => write!(f, "{field} is not positive definite"),
            Violation::GammaDiagonal { index, value } => {
                write!(f, "gamma_bar[{index}][{index}] = {value}, expected 1")
            }
            Violation::ExtendedNotPd { min_eigenvalue } => write!(
                f,
                "extended matrix [[gamma_bar, delta^T], [delta, omega_bar]] is not positive definite \
                 (gamma_bar - delta^T omega_bar^-1 delta has eigenvalue {min_eigenvalue:.6})"
            ),
            Violation::Dof { nu } => write!(f, "nu = {nu} must be positive or \"inf\""),
        }
    }
}

/// Parameters of the unified skew-t distribution. `m = tau.len()` may be zero,
/// which encodes the symmetric t (or normal) law.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct SutParams {
    pub xi: DVector<f64>,
    pub omega: DMatrix<f64>,
    pub delta: DMatrix<f64>,
    pub tau: DVector<f64>,
    pub gamma_bar: DMatrix<f64>,
    pub nu: Dof,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    xi: Vec<f64>,
    omega: Vec<Vec<f64>>,
    delta: Vec<Vec<f64>>,
    tau: Vec<f64>,
    gamma_bar: Vec<Vec<f64>>,
    nu: Dof,
}

fn rows_to_matrix(field: &str, rows: &[Vec<f64>], ncols_if_empty: usize) -> std::result::Result<DMatrix<f64>, String> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, ncols_if_empty));
    }
    let c = rows[0].len();
    if rows.iter().any(|r| r.len() != c) {
        return Err(format!("{field}: rows have different lengths"));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

fn matrix_to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}

impl TryFrom<RawParams> for SutParams {
    type Error = String;

    fn try_from(raw: RawParams) -> std::result::Result<Self, String> {
        let d = raw.xi.len();
        let m = raw.tau.len();
        let mut delta = rows_to_matrix("delta", &raw.delta, m)?;
        // `"delta": []` is accepted for the symmetric m = 0 case.
        if m == 0 && delta.nrows() == 0 {
            delta = DMatrix::zeros(d, 0);
        }
        Ok(Self {
            xi: DVector::from_vec(raw.xi),
            omega: rows_to_matrix("omega", &raw.omega, d)?,
            delta,
            tau: DVector::from_vec(raw.tau),
            gamma_bar: rows_to_matrix("gamma_bar", &raw.gamma_bar, 0)?,
            nu: raw.nu,
        })
    }
}

impl From<SutParams> for RawParams {
    fn from(p: SutParams) -> Self {
        Self {
            xi: p.xi.iter().copied().collect(),
            omega: matrix_to_rows(&p.omega),
            delta: matrix_to_rows(&p.delta),
            tau: p.tau.iter().copied().collect(),
            gamma_bar: matrix_to_rows(&p.gamma_bar),
            nu: p.nu,
        }
    }
}

fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return f64::INFINITY;
    }
    symmetrize(a).symmetric_eigenvalues().min()
}

impl SutParams {
    /// Builds and validates a parameter set.
    pub fn new(
        xi: DVector<f64>,
        omega: DMatrix<f64>,
        delta: DMatrix<f64>,
        tau: DVector<f64>,
        gamma_bar: DMatrix<f64>,
        nu: Dof,
    ) -> Result<Self> {
        let p = Self {
            xi,
            omega,
            delta,
            tau,
            gamma_bar,
            nu,
        };
        p.check()?;
        Ok(p)
    }

    /// Parses the JSON form and validates it.
    pub fn from_json(text: &str) -> Result<Self> {
        let p: Self = serde_json::from_str(text).map_err(|e| SutError::Parse(e.to_string()))?;
        p.check()?;
        Ok(p)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("parameters serialise")
    }

    pub fn d(&self) -> usize {
        self.xi.len()
    }

    pub fn m(&self) -> usize {
        self.tau.len()
    }

    /// `ω = diag(Ω)^{1/2}`.
    pub fn omega_scale(&self) -> DVector<f64> {
        self.omega.diagonal().map(f64::sqrt)
    }

    /// `Ω̄ = ω⁻¹Ωω⁻¹`.
    pub fn omega_bar(&self) -> DMatrix<f64> {
        let w = self.omega_scale();
        DMatrix::from_fn(self.d(), self.d(), |i, j| {
            if i == j {
                1.0
            } else {
                self.omega[(i, j)] / (w[i] * w[j])
            }
        })
    }

    /// True when the law is elliptical: no latent block, or `Δ = 0` and `τ = 0`.
    pub fn is_symmetric(&self) -> bool {
        self.m() == 0 || (self.delta.iter().all(|v| *v == 0.0) && self.tau.iter().all(|v| *v == 0.0))
    }

    /// Returns every violated invariant.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        let d = self.d();
        let m = self.m();
        if d == 0 {
            out.push(Violation::EmptyLocation);
        }
        if !self.nu.is_valid() {
            out.push(Violation::Dof { nu: self.nu.value() });
        }
        let mut shapes_ok = true;
        for (field, a, exp) in [
            ("omega", &self.omega, (d, d)),
            ("delta", &self.delta, (d, m)),
            ("gamma_bar", &self.gamma_bar, (m, m)),
        ] {
            if a.shape() != exp {
                shapes_ok = false;
                out.push(Violation::Shape {
                    field,
                    expected: exp,
                    found: a.shape(),
                });
            }
        }
        let mut finite = true;
        for (field, ok) in [
            ("xi", self.xi.iter().all(|v| v.is_finite())),
            ("omega", self.omega.iter().all(|v| v.is_finite())),
            ("delta", self.delta.iter().all(|v| v.is_finite())),
            ("tau", self.tau.iter().all(|v| v.is_finite())),
            ("gamma_bar", self.gamma_bar.iter().all(|v| v.is_finite())),
        ] {
            if !ok {
                finite = false;
                out.push(Violation::NonFinite { field });
            }
        }
        if !(shapes_ok && finite) || d == 0 {
            return out;
        }

        let mut omega_ok = true;
        let asym = asymmetry(&self.omega);
        if asym > SYM_TOL {
            omega_ok = false;
            out.push(Violation::NotSymmetric {
                field: "omega",
                asymmetry: asym,
            });
        } else if cholesky(&symmetrize(&self.omega)).is_err() {
            omega_ok = false;
            out.push(Violation::NotPositiveDefinite { field: "omega" });
        }

        let mut gamma_ok = true;
        if m > 0 {
            let asym = asymmetry(&self.gamma_bar);
            if asym > SYM_TOL {
                gamma_ok = false;
                out.push(Violation::NotSymmetric {
                    field: "gamma_bar",
                    asymmetry: asym,
                });
            }
            for i in 0..m {
                let g = self.gamma_bar[(i, i)];
                if (g - 1.0).abs() > UNIT_DIAG_TOL {
                    gamma_ok = false;
                    out.push(Violation::GammaDiagonal { index: i, value: g });
                }
            }
            if gamma_ok && cholesky(&symmetrize(&self.gamma_bar)).is_err() {
                gamma_ok = false;
                out.push(Violation::NotPositiveDefinite { field: "gamma_bar" });
            }
        }

        if m > 0 && omega_ok && gamma_ok {
            let ob = self.omega_bar();
            let chol = cholesky(&symmetrize(&ob)).expect("omega checked");
            let schur = symmetrize(&(&self.gamma_bar - self.delta.transpose() * chol.solve_mat(&self.delta)));
            if cholesky(&schur).is_err() {
                out.push(Violation::ExtendedNotPd {
                    min_eigenvalue: min_sym_eigenvalue(&schur),
                });
            }
        }
        out
    }

    /// [`validate`](Self::validate) as a `Result`.
    pub fn check(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(SutError::InvalidParams(v))
        }
    }

    /// Unified skew-normal: the same parameters with `ν = ∞`.
    pub fn sun(
        xi: DVector<f64>,
        omega: DMatrix<f64>,
        delta: DMatrix<f64>,
        tau: DVector<f64>,
        gamma_bar: DMatrix<f64>,
    ) -> Result<Self> {
        Self::new(xi, omega, delta, tau, gamma_bar, Dof::Infinite)
    }

    /// Extended skew-t: one latent variable with truncation `tau`.
    pub fn est(xi: DVector<f64>, omega: DMatrix<f64>, delta: DVector<f64>, tau: f64, nu: Dof) -> Result<Self> {
        let d = delta.len();
        Self::new(
            xi,
            omega,
            DMatrix::from_column_slice(d, 1, delta.as_slice()),
            DVector::from_element(1, tau),
            DMatrix::identity(1, 1),
            nu,
        )
    }

    /// Skew-t with skewness vector `delta`.
    pub fn st(xi: DVector<f64>, omega: DMatrix<f64>, delta: DVector<f64>, nu: Dof) -> Result<Self> {
        Self::est(xi, omega, delta, 0.0, nu)
    }

    /// Skew-normal with skewness vector `delta`.
    pub fn sn(xi: DVector<f64>, omega: DMatrix<f64>, delta: DVector<f64>) -> Result<Self> {
        Self::st(xi, omega, delta, Dof::Infinite)
    }

    /// Multivariate t, encoded with no latent block.
    pub fn student_t(xi: DVector<f64>, omega: DMatrix<f64>, nu: Dof) -> Result<Self> {
        let d = xi.len();
        Self::new(xi, omega, DMatrix::zeros(d, 0), DVector::zeros(0), DMatrix::zeros(0, 0), nu)
    }

    pub fn normal(xi: DVector<f64>, omega: DMatrix<f64>) -> Result<Self> {
        Self::student_t(xi, omega, Dof::Infinite)
    }

    /// Permutes the latent components: `Δ_p = ΔPᵀ`, `τ_p = Pτ`, `Γ̄_p = PΓ̄Pᵀ`
    /// where row `i` of `P` selects latent component `perm[i]` (zero based).
    pub fn permute_latent(&self, perm: &[usize]) -> Result<Self> {
        check_permutation(perm, self.m())?;
        let m = self.m();
        Ok(Self {
            xi: self.xi.clone(),
            omega: self.omega.clone(),
            delta: DMatrix::from_fn(self.d(), m, |i, j| self.delta[(i, perm[j])]),
            tau: DVector::from_fn(m, |i, _| self.tau[perm[i]]),
            gamma_bar: DMatrix::from_fn(m, m, |i, j| self.gamma_bar[(perm[i], perm[j])]),
            nu: self.nu,
        })
    }

    /// The `(H, Ψ)` form with `ωΔ = HΓ̄` and `Ω = Ψ + HΓ̄Hᵀ`.
    pub fn to_hpsi(&self) -> Result<HPsiParams> {
        let w = DMatrix::from_diagonal(&self.omega_scale());
        let h = if self.m() == 0 {
            DMatrix::zeros(self.d(), 0)
        } else {
            let g = SymPd::new(self.gamma_bar.clone())?;
            // H = ωΔΓ̄⁻¹, computed as (Γ̄⁻¹Δᵀω)ᵀ
            g.chol().solve_mat(&(self.delta.transpose() * &w)).transpose()
        };
        let psi = symmetrize(&(&self.omega - &h * &self.gamma_bar * h.transpose()));
        let min_pivot = min_sym_eigenvalue(&psi);
        if min_pivot < -1e-12 * self.omega.amax() {
            return Err(SutError::PsiNotPsd { min_pivot });
        }
        Ok(HPsiParams {
            xi: self.xi.clone(),
            h,
            psi,
            tau: self.tau.clone(),
            gamma_bar: self.gamma_bar.clone(),
            nu: self.nu,
        })
    }
}

fn check_permutation(perm: &[usize], m: usize) -> Result<()> {
    if perm.len() != m {
        return Err(SutError::InvalidPermutation(format!(
            "length {} for latent dimension {m}",
            perm.len()
        )));
    }
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || seen[p] {
            return Err(SutError::InvalidPermutation(format!("{perm:?} is not a permutation of 0..{m}")));
        }
        seen[p] = true;
    }
    Ok(())
}

/// `a ∘ b`: permuting by `a` and then by `b` equals permuting once by the result.
pub fn compose_permutations(a: &[usize], b: &[usize]) -> Vec<usize> {
    b.iter().map(|&i| a[i]).collect()
}

pub fn invert_permutation(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (i, &p) in perm.iter().enumerate() {
        inv[p] = i;
    }
    inv
}

/// A parameter set together with a latent permutation; both describe the same law.
#[derive(Debug, Clone, PartialEq)]
pub struct PermutedPair {
    pub base: SutParams,
    pub perm: Vec<usize>,
}

impl PermutedPair {
    pub fn new(base: SutParams, perm: Vec<usize>) -> Result<Self> {
        check_permutation(&perm, base.m())?;
        Ok(Self { base, perm })
    }

    pub fn permuted(&self) -> SutParams {
        self.base.permute_latent(&self.perm).expect("permutation checked")
    }

    /// Undoes the permutation on the permuted parameters.
    pub fn restore(&self) -> SutParams {
        self.permuted()
            .permute_latent(&invert_permutation(&self.perm))
            .expect("permutation checked")
    }
}

/// Loading form of the parameters: `Ω = Ψ + HΓ̄Hᵀ`, `ωΔ = HΓ̄`.
#[derive(Debug, Clone, PartialEq)]
pub struct HPsiParams {
    pub xi: DVector<f64>,
    pub h: DMatrix<f64>,
    pub psi: DMatrix<f64>,
    pub tau: DVector<f64>,
    pub gamma_bar: DMatrix<f64>,
    pub nu: Dof,
}

impl HPsiParams {
    pub fn to_params(&self) -> Result<SutParams> {
        let min_pivot = min_sym_eigenvalue(&self.psi);
        if min_pivot < -1e-12 * self.psi.amax().max(f64::MIN_POSITIVE) {
            return Err(SutError::PsiNotPsd { min_pivot });
        }
        let hg = &self.h * &self.gamma_bar;
        let omega = symmetrize(&(&self.psi + &hg * self.h.transpose()));
        let w = omega.diagonal().map(f64::sqrt);
        let delta = DMatrix::from_fn(hg.nrows(), hg.ncols(), |i, j| hg[(i, j)] / w[i]);
        SutParams::new(
            self.xi.clone(),
            omega,
            delta,
            self.tau.clone(),
            self.gamma_bar.clone(),
            self.nu,
        )
    }
}

/// The four identifiable sub-families.
#[derive(Debug, Clone, PartialEq)]
pub enum Family {
    /// `Δ = δ1ᵀ`, `τ = τ1`, `Γ̄ = (1−ρ)I + ρ11ᵀ`.
    Equicorrelated {
        xi: DVector<f64>,
        omega: DMatrix<f64>,
        delta: DVector<f64>,
        tau: f64,
        rho: f64,
        m: usize,
        nu: Dof,
    },
    /// `τ = α1 + βj` with `j = (1, …, m)`, `β ≠ 0`.
    LinearTau {
        xi: DVector<f64>,
        omega: DMatrix<f64>,
        delta: DMatrix<f64>,
        alpha: f64,
        beta: f64,
        gamma_bar: DMatrix<f64>,
        nu: Dof,
    },
    /// `m = d`, `Ω = s²Ω̄`, `Δ = sδ(1+δ²)^{-1/2}Ω̄`, `τ = 0`, `Γ̄ = Ω̄`.
    SharedCorrelation {
        xi: DVector<f64>,
        omega_bar: DMatrix<f64>,
        scale: f64,
        delta: f64,
        nu: Dof,
    },
    /// `m = d`, `Δ = δΩ^{1/2}`, `τ = 0`, `Γ̄ = I`.
    SqrtOmega {
        xi: DVector<f64>,
        omega: DMatrix<f64>,
        delta: f64,
        nu: Dof,
    },
}

impl Family {
    pub fn kind(&self) -> u8 {
        match self {
            Family::Equicorrelated { .. } => 1,
            Family::LinearTau { .. } => 2,
            Family::SharedCorrelation { .. } => 3,
            Family::SqrtOmega { .. } => 4,
        }
    }
}

/// Output of [`identifiable_family`].
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyParams {
    pub params: SutParams,
    /// Set for the equicorrelated family when `ρ > 0.95`: the law is then
    /// practically a skew-t with skewness column `ΣᵢHᵢ`.
    pub st_limit_advisory: bool,
}

/// Builds a member of one of the identifiable families.
pub fn identifiable_family(family: &Family) -> Result<FamilyParams> {
    match family {
        Family::Equicorrelated {
            xi,
            omega,
            delta,
            tau,
            rho,
            m,
            nu,
        } => {
            let m = *m;
            if m == 0 {
                return Err(SutError::Constraint("latent dimension must be at least 1".into()));
            }
            let lower = if m > 1 { -1.0 / (m as f64 - 1.0) } else { f64::NEG_INFINITY };
            if !(*rho > lower && *rho < 1.0) {
                return Err(SutError::Constraint(format!(
                    "rho = {rho} outside ({lower}, 1) for m = {m}"
                )));
            }
            let d = delta.len();
            let gamma_bar = DMatrix::from_fn(m, m, |i, j| if i == j { 1.0 } else { *rho });
            let params = SutParams::new(
                xi.clone(),
                omega.clone(),
                DMatrix::from_fn(d, m, |i, _| delta[i]),
                DVector::from_element(m, *tau),
                gamma_bar,
                *nu,
            )?;
            if *rho > ST_LIMIT_RHO {
                log::warn!("equicorrelation {rho} > {ST_LIMIT_RHO}: the skew-t is a simpler fit");
            }
            Ok(FamilyParams {
                params,
                st_limit_advisory: *rho > ST_LIMIT_RHO,
            })
        }
        Family::LinearTau {
            xi,
            omega,
            delta,
            alpha,
            beta,
            gamma_bar,
            nu,
        } => {
            if *beta == 0.0 || !beta.is_finite() {
                return Err(SutError::Constraint(format!("beta = {beta} must be non-zero")));
            }
            let m = delta.ncols();
            let tau = DVector::from_fn(m, |i, _| alpha + beta * (i + 1) as f64);
            plain(SutParams::new(xi.clone(), omega.clone(), delta.clone(), tau, gamma_bar.clone(), *nu)?)
        }
        Family::SharedCorrelation {
            xi,
            omega_bar,
            scale,
            delta,
            nu,
        } => {
            let d = omega_bar.nrows();
            if !(scale.is_finite() && *scale != 0.0) {
                return Err(SutError::Constraint(format!("scale = {scale} must be non-zero")));
            }
            let c = scale * delta / (1.0 + delta * delta).sqrt();
            plain(SutParams::new(
                xi.clone(),
                omega_bar * (scale * scale),
                omega_bar * c,
                DVector::zeros(d),
                omega_bar.clone(),
                *nu,
            )?)
        }
        Family::SqrtOmega { xi, omega, delta, nu } => {
            let d = omega.nrows();
            let root = sym_sqrt(&SymPd::new(omega.clone())?);
            plain(SutParams::new(
                xi.clone(),
                omega.clone(),
                root * *delta,
                DVector::zeros(d),
                DMatrix::identity(d, d),
                *nu,
            )?)
        }
    }
}

fn plain(params: SutParams) -> Result<FamilyParams> {
    Ok(FamilyParams {
        params,
        st_limit_advisory: false,
    })
}

/// Symmetric square root of a positive-definite matrix.
pub fn sym_sqrt(a: &SymPd) -> DMatrix<f64> {
    let eig = a.matrix().clone().symmetric_eigen();
    let root = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    symmetrize(&(&eig.eigenvectors * DMatrix::from_diagonal(&root) * eig.eigenvectors.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn st1(delta: f64) -> SutParams {
        SutParams::st(
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DVector::from_element(1, delta),
            Dof::Finite(5.0),
        )
        .unwrap()
    }

    #[test]
    fn extended_matrix_violation_reports_schur_value() {
        let p = SutParams {
            xi: DVector::zeros(2),
            omega: DMatrix::identity(2, 2),
            delta: DMatrix::from_column_slice(2, 1, &[0.9, 0.9]),
            tau: DVector::zeros(1),
            gamma_bar: DMatrix::identity(1, 1),
            nu: Dof::Finite(5.0),
        };
        let v = p.validate();
        assert_eq!(v.len(), 1);
        match v[0] {
            Violation::ExtendedNotPd { min_eigenvalue } => assert_relative_eq!(min_eigenvalue, -0.62, epsilon = 1e-12),
            ref other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn every_violation_is_reported() {
        let p = SutParams {
            xi: DVector::zeros(2),
            omega: DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]),
            delta: DMatrix::zeros(2, 2),
            tau: DVector::zeros(2),
            gamma_bar: DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            nu: Dof::Finite(-1.0),
        };
        let v = p.validate();
        assert!(v.contains(&Violation::Dof { nu: -1.0 }));
        assert!(v.contains(&Violation::NotPositiveDefinite { field: "omega" }));
        assert!(v.contains(&Violation::GammaDiagonal { index: 1, value: 2.0 }));
    }

    #[test]
    fn zero_skew_is_valid() {
        let p = SutParams::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.0, 0.5, 1.0, 0.2, 0.0, 0.2, 3.0]),
            DMatrix::zeros(3, 2),
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            Dof::Finite(4.0),
        )
        .unwrap();
        assert!(p.is_symmetric());
    }

    #[test]
    fn shape_errors_do_not_panic() {
        let p = SutParams {
            xi: DVector::zeros(2),
            omega: DMatrix::identity(3, 3),
            delta: DMatrix::zeros(2, 1),
            tau: DVector::zeros(2),
            gamma_bar: DMatrix::identity(1, 1),
            nu: Dof::Infinite,
        };
        assert_eq!(p.validate().len(), 3);
    }

    #[test]
    fn submodels() {
        let p = st1(0.7);
        assert_eq!(p.m(), 1);
        assert_eq!(p.tau[0], 0.0);
        let t = SutParams::student_t(DVector::zeros(2), DMatrix::identity(2, 2), Dof::Finite(5.0)).unwrap();
        assert_eq!(t.m(), 0);
        assert_eq!(t.delta.shape(), (2, 0));
        let sn = SutParams::sn(DVector::zeros(1), DMatrix::identity(1, 1), DVector::from_element(1, 0.7)).unwrap();
        assert_eq!(sn.nu, Dof::Infinite);
        assert!(SutParams::st(DVector::zeros(1), DMatrix::identity(1, 1), DVector::from_element(1, 1.2), Dof::Finite(3.0)).is_err());
    }

    #[test]
    fn json_round_trip_and_strictness() {
        let text = r#"{"xi":[0,1],"omega":[[1,0.3],[0.3,2]],"delta":[[0.5],[0.1]],"tau":[0.2],"gamma_bar":[[1]],"nu":"inf"}"#;
        let p = SutParams::from_json(text).unwrap();
        assert_eq!(p.nu, Dof::Infinite);
        assert_eq!(p.omega[(1, 0)], 0.3);
        assert_eq!(SutParams::from_json(&p.to_json()).unwrap(), p);
        let extra = text.replace("\"nu\"", "\"mu\":1,\"nu\"");
        assert!(matches!(SutParams::from_json(&extra), Err(SutError::Parse(_))));
        let empty = r#"{"xi":[0],"omega":[[1]],"delta":[],"tau":[],"gamma_bar":[],"nu":3}"#;
        assert_eq!(SutParams::from_json(empty).unwrap().m(), 0);
        let bad_diag = text.replace("[[1]]", "[[2]]");
        assert!(matches!(SutParams::from_json(&bad_diag), Err(SutError::InvalidParams(_))));
    }

    fn latent3() -> SutParams {
        SutParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
            DMatrix::from_row_slice(2, 3, &[0.3, -0.2, 0.1, 0.0, 0.4, 0.2]),
            DVector::from_vec(vec![0.1, 0.5, -0.3]),
            DMatrix::from_row_slice(3, 3, &[1.0, 0.2, 0.1, 0.2, 1.0, -0.3, 0.1, -0.3, 1.0]),
            Dof::Finite(6.0),
        )
        .unwrap()
    }

    #[test]
    fn permutations() {
        let p = latent3();
        assert_eq!(p.permute_latent(&[0, 1, 2]).unwrap(), p);
        let q = p.permute_latent(&[2, 0, 1]).unwrap();
        assert_eq!(q.tau.as_slice(), &[-0.3, 0.1, 0.5]);
        assert_eq!(q.delta[(1, 2)], 0.4);
        assert_eq!(q.gamma_bar[(0, 2)], -0.3);
        assert!(q.check().is_ok());
        assert!(p.permute_latent(&[0, 0, 1]).is_err());
        assert!(p.permute_latent(&[0, 1]).is_err());
        let pair = PermutedPair::new(p.clone(), vec![1, 2, 0]).unwrap();
        assert_eq!(pair.restore(), p);
    }

    #[test]
    fn permutation_group_action() {
        let p = latent3();
        let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
        for a in &perms {
            for b in &perms {
                let twice = p.permute_latent(a).unwrap().permute_latent(b).unwrap();
                let once = p.permute_latent(&compose_permutations(a, b)).unwrap();
                assert_eq!(twice, once);
            }
        }
    }

    #[test]
    fn hpsi_simple_cases() {
        let t = SutParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 1.0]),
            DMatrix::zeros(2, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            Dof::Finite(5.0),
        )
        .unwrap();
        let hp = t.to_hpsi().unwrap();
        assert!(hp.h.iter().all(|v| *v == 0.0));
        assert_eq!(hp.psi, t.omega);

        let p = SutParams::st(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 1.0]),
            DVector::from_vec(vec![0.5, -0.2]),
            Dof::Finite(5.0),
        )
        .unwrap();
        let hp = p.to_hpsi().unwrap();
        assert_relative_eq!(hp.h[(0, 0)], 2.0 * 0.5, epsilon = 1e-14);
        assert_relative_eq!(hp.h[(1, 0)], -0.2, epsilon = 1e-14);
    }

    #[test]
    fn families() {
        let xi = DVector::zeros(2);
        let omega = DMatrix::identity(2, 2);
        let delta = DVector::from_vec(vec![0.1, 0.1]);
        let kind1 = |rho: f64, m: usize| Family::Equicorrelated {
            xi: xi.clone(),
            omega: omega.clone(),
            delta: delta.clone(),
            tau: 0.0,
            rho,
            m,
            nu: Dof::Finite(5.0),
        };
        assert!(matches!(identifiable_family(&kind1(-0.6, 3)), Err(SutError::Constraint(_))));
        assert!(identifiable_family(&kind1(-0.4, 3)).is_ok());
        assert!(identifiable_family(&kind1(0.97, 2)).unwrap().st_limit_advisory);
        let st = SutParams::st(xi.clone(), omega.clone(), delta.clone(), Dof::Finite(5.0)).unwrap();
        assert_eq!(identifiable_family(&kind1(0.0, 1)).unwrap().params, st);

        let kind2 = |beta: f64| Family::LinearTau {
            xi: DVector::zeros(1),
            omega: DMatrix::identity(1, 1),
            delta: DMatrix::from_row_slice(1, 3, &[0.2, 0.2, 0.2]),
            alpha: 0.0,
            beta,
            gamma_bar: DMatrix::identity(3, 3),
            nu: Dof::Finite(5.0),
        };
        assert_eq!(identifiable_family(&kind2(1.0)).unwrap().params.tau.as_slice(), &[1.0, 2.0, 3.0]);
        assert!(matches!(identifiable_family(&kind2(0.0)), Err(SutError::Constraint(_))));

        let ob = DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 0.4, 1.0]);
        let k3 = identifiable_family(&Family::SharedCorrelation {
            xi: xi.clone(),
            omega_bar: ob.clone(),
            scale: 2.0,
            delta: 0.3,
            nu: Dof::Finite(5.0),
        })
        .unwrap()
        .params;
        assert_eq!(k3.m(), 2);
        assert_eq!(k3.gamma_bar, ob);

        let k4 = identifiable_family(&Family::SqrtOmega {
            xi,
            omega: DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
            delta: 0.0,
            nu: Dof::Finite(5.0),
        })
        .unwrap()
        .params;
        assert!(k4.is_symmetric());
    }

    #[test]
    fn sqrt_squares_back() {
        let a = SymPd::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.7, 0.7, 1.0])).unwrap();
        let r = sym_sqrt(&a);
        assert!((&r * &r - a.matrix()).amax() < 1e-13);
    }

    fn random_params() -> impl Strategy<Value = SutParams> {
        (1usize..4, 1usize..4, any::<u64>()).prop_map(|(d, m, seed)| {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = d + m;
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let s = &a * a.transpose() + DMatrix::identity(n, n) * 0.5;
            let sd = s.diagonal().map(f64::sqrt);
            let c = DMatrix::from_fn(n, n, |i, j| s[(i, j)] / (sd[i] * sd[j]));
            let scale = DVector::from_fn(d, |_, _| rng.random_range(0.5..3.0));
            let omega = DMatrix::from_fn(d, d, |i, j| c[(m + i, m + j)] * scale[i] * scale[j]);
            SutParams {
                xi: DVector::from_fn(d, |_, _| rng.random_range(-2.0..2.0)),
                omega: symmetrize(&omega),
                delta: c.view((m, 0), (d, m)).into_owned(),
                tau: DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0)),
                gamma_bar: c.view((0, 0), (m, m)).into_owned(),
                nu: Dof::Finite(rng.random_range(1.0..20.0)),
            }
        })
    }

    proptest! {
        #[test]
        fn hpsi_round_trip(p in random_params()) {
            prop_assert!(p.check().is_ok());
            let back = p.to_hpsi().unwrap().to_params().unwrap();
            prop_assert!((&back.omega - &p.omega).amax() <= 1e-10 * p.omega.amax());
            prop_assert!((&back.delta - &p.delta).amax() <= 1e-10);
        }
    }
}
