//! Affine images, marginals, sums, conditionals and changes of the latent
//! dimension. Every operation maps [`SutParams`] to [`SutParams`] and works
//! unchanged for `ν = ∞`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{left_null_space, numerical_rank, symmetrize, SymPd};
use crate::params::SutParams;

/// Tolerance for the structural zeros required by [`reduce_latent`].
pub const STRUCTURE_TOL: f64 = 1e-12;

/// Split of the observed coordinates into the first `d1` and the last `d2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PartitionSpec {
    pub d1: usize,
    pub d2: usize,
}

impl PartitionSpec {
    pub fn new(d1: usize, d2: usize) -> Self {
        Self { d1, d2 }
    }

    /// First block of size `d1` out of `p.d()`.
    pub fn leading(p: &SutParams, d1: usize) -> Result<Self> {
        let spec = Self::new(d1, p.d().saturating_sub(d1));
        spec.check(p)?;
        Ok(spec)
    }

    fn check(&self, p: &SutParams) -> Result<()> {
        if self.d1 + self.d2 != p.d() {
            return Err(SutError::DimensionMismatch(format!(
                "partition {}+{} of a {}-dimensional vector",
                self.d1,
                self.d2,
                p.d()
            )));
        }
        Ok(())
    }

    fn range(&self, which: Block) -> std::ops::Range<usize> {
        match which {
            Block::First => 0..self.d1,
            Block::Second => self.d1..self.d1 + self.d2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Block {
    First,
    Second,
}

/// Parameter blocks induced by a partition.
#[derive(Debug, Clone)]
pub struct Blocks {
    pub xi1: DVector<f64>,
    pub xi2: DVector<f64>,
    pub omega11: DMatrix<f64>,
    pub omega12: DMatrix<f64>,
    pub omega21: DMatrix<f64>,
    pub omega22: DMatrix<f64>,
    pub delta1: DMatrix<f64>,
    pub delta2: DMatrix<f64>,
    pub w1: DVector<f64>,
    pub w2: DVector<f64>,
}

impl Blocks {
    pub fn new(p: &SutParams, spec: PartitionSpec) -> Result<Self> {
        spec.check(p)?;
        let (d1, d2, m) = (spec.d1, spec.d2, p.m());
        let w = p.omega_scale();
        Ok(Self {
            xi1: p.xi.rows(0, d1).into_owned(),
            xi2: p.xi.rows(d1, d2).into_owned(),
            omega11: p.omega.view((0, 0), (d1, d1)).into_owned(),
            omega12: p.omega.view((0, d1), (d1, d2)).into_owned(),
            omega21: p.omega.view((d1, 0), (d2, d1)).into_owned(),
            omega22: p.omega.view((d1, d1), (d2, d2)).into_owned(),
            delta1: p.delta.view((0, 0), (d1, m)).into_owned(),
            delta2: p.delta.view((d1, 0), (d2, m)).into_owned(),
            w1: w.rows(0, d1).into_owned(),
            w2: w.rows(d1, d2).into_owned(),
        })
    }

    /// Reassembles the partitioned `(ξ, Ω, Δ)`.
    pub fn assemble(&self) -> (DVector<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (d1, d2) = (self.xi1.len(), self.xi2.len());
        let d = d1 + d2;
        let m = self.delta1.ncols();
        let mut xi = DVector::zeros(d);
        xi.rows_mut(0, d1).copy_from(&self.xi1);
        xi.rows_mut(d1, d2).copy_from(&self.xi2);
        let mut omega = DMatrix::zeros(d, d);
        omega.view_mut((0, 0), (d1, d1)).copy_from(&self.omega11);
        omega.view_mut((0, d1), (d1, d2)).copy_from(&self.omega12);
        omega.view_mut((d1, 0), (d2, d1)).copy_from(&self.omega21);
        omega.view_mut((d1, d1), (d2, d2)).copy_from(&self.omega22);
        let mut delta = DMatrix::zeros(d, m);
        delta.view_mut((0, 0), (d1, m)).copy_from(&self.delta1);
        delta.view_mut((d1, 0), (d2, m)).copy_from(&self.delta2);
        (xi, omega, delta)
    }
}

fn inv_scale(w: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_diagonal(&w.map(|v| 1.0 / v))
}

/// `AY + b`: `ξ_A = Aξ + b`, `Ω_A = AΩAᵀ`, `Δ_A = ω_A⁻¹AωΔ`; `τ`, `Γ̄`, `ν` unchanged.
pub fn linear(p: &SutParams, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<SutParams> {
    p.check()?;
    let (n, d) = a.shape();
    if d != p.d() || b.len() != n {
        return Err(SutError::DimensionMismatch(format!(
            "{n}x{d} map with offset of length {} for a {}-dimensional vector",
            b.len(),
            p.d()
        )));
    }
    let rank = numerical_rank(a);
    if n == 0 || rank < n {
        return Err(SutError::RankDeficient { rank, required: n });
    }
    let omega = symmetrize(&(a * &p.omega * a.transpose()));
    let wa = omega.diagonal().map(f64::sqrt);
    let delta = inv_scale(&wa) * a * DMatrix::from_diagonal(&p.omega_scale()) * &p.delta;
    SutParams::new(a * &p.xi + b, omega, delta, p.tau.clone(), p.gamma_bar.clone(), p.nu)
}

fn projection(spec: PartitionSpec, which: Block) -> DMatrix<f64> {
    let r = spec.range(which);
    let d = spec.d1 + spec.d2;
    DMatrix::from_fn(r.len(), d, |i, j| if j == r.start + i { 1.0 } else { 0.0 })
}

/// Law of the `which` block: `SUT(ξ_i, Ω_ii, Δ_i, τ, Γ̄, ν)`.
pub fn marginal(p: &SutParams, spec: PartitionSpec, which: Block) -> Result<SutParams> {
    spec.check(p)?;
    if spec.range(which).len() == p.d() {
        p.check()?;
        return Ok(p.clone());
    }
    let a = projection(spec, which);
    let n = a.nrows();
    linear(p, &a, &DVector::zeros(n))
}

/// Law of `Y₁ + Y₂` for a `2d`-dimensional SUT split into equal halves.
pub fn add_marginals(p: &SutParams) -> Result<SutParams> {
    let d2 = p.d();
    if d2 == 0 || d2 % 2 != 0 {
        return Err(SutError::DimensionMismatch(format!(
            "sum of halves needs an even dimension, got {d2}"
        )));
    }
    let d = d2 / 2;
    let a = DMatrix::from_fn(d, d2, |i, j| if j == i || j == i + d { 1.0 } else { 0.0 });
    linear(p, &a, &DVector::zeros(d))
}

/// `(Y₂ | Y₁ = y₁)` with the intermediate quantities of its parameters.
#[derive(Debug, Clone)]
pub struct ConditionalParams {
    pub params: SutParams,
    /// `α = (ν + Q_{y₁})/(ν + d₁)`, 1 when `ν = ∞`.
    pub alpha: f64,
    pub q_y1: f64,
    pub xi_21: DVector<f64>,
    /// `Ω₂₂ − Ω₂₁Ω₁₁⁻¹Ω₁₂` (before scaling by `α`).
    pub omega_21: DMatrix<f64>,
    pub delta_21: DMatrix<f64>,
    /// `γ⁻¹{τ + Δ₁ᵀΩ̄₁₁⁻¹ω₁⁻¹(y₁ − ξ₁)}` (before scaling by `α^{-1/2}`).
    pub tau_21: DVector<f64>,
    /// `Γ̄ − Δ₁ᵀΩ̄₁₁⁻¹Δ₁`.
    pub gamma_21: DMatrix<f64>,
    pub gamma_bar_21: DMatrix<f64>,
    /// `diag(Γ_{2·1})^{1/2}`.
    pub gamma_scale: DVector<f64>,
}

/// Conditional law of the second block given the first.
pub fn conditional(p: &SutParams, spec: PartitionSpec, y1: &DVector<f64>) -> Result<ConditionalParams> {
    p.check()?;
    let b = Blocks::new(p, spec)?;
    if spec.d1 == 0 || spec.d2 == 0 {
        return Err(SutError::DimensionMismatch("conditioning needs two non-empty blocks".into()));
    }
    if y1.len() != spec.d1 {
        return Err(SutError::DimensionMismatch(format!(
            "conditioning value of length {} for a block of size {}",
            y1.len(),
            spec.d1
        )));
    }
    if y1.iter().any(|v| !v.is_finite()) {
        return Err(SutError::NonFiniteInput("conditioning value".into()));
    }
    let m = p.m();
    let o11 = SymPd::new(symmetrize(&b.omega11))?;
    let r1 = y1 - &b.xi1;
    let q = o11.chol().mahalanobis(&r1);
    let d1 = spec.d1 as f64;
    let alpha = match p.nu {
        Dof::Finite(nu) => (nu + q) / (nu + d1),
        Dof::Infinite => 1.0,
    };
    // Ω₂₁Ω₁₁⁻¹
    let reg = o11.chol().solve_mat(&b.omega12).transpose();
    let xi_21 = &b.xi2 + &reg * &r1;
    let omega_21 = symmetrize(&(&b.omega22 - &reg * &b.omega12));
    let w21 = omega_21.diagonal().map(f64::sqrt);
    let w1m = DMatrix::from_diagonal(&b.w1);
    let w1i = inv_scale(&b.w1);
    let obar11 = SymPd::new(symmetrize(&(&w1i * &b.omega11 * &w1i)))?;
    // Δ₁ᵀΩ̄₁₁⁻¹ (m x d1)
    let lam = obar11.chol().solve_mat(&b.delta1).transpose();
    let gamma_21 = symmetrize(&(&p.gamma_bar - &lam * &b.delta1));
    let gs = gamma_21.diagonal().map(f64::sqrt);
    if gs.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(SutError::NotPositiveDefinite { pivot: 0 });
    }
    let gi = inv_scale(&gs);
    let delta_21 = inv_scale(&w21) * (DMatrix::from_diagonal(&b.w2) * &b.delta2 - &reg * &w1m * &b.delta1) * &gi;
    let tau_21 = &gi * (&p.tau + &lam * (&w1i * &r1));
    let gamma_bar_21 = symmetrize(&(&gi * &gamma_21 * &gi));
    let params = SutParams::new(
        xi_21.clone(),
        &omega_21 * alpha,
        delta_21.clone(),
        &tau_21 / alpha.sqrt(),
        if m == 0 { DMatrix::zeros(0, 0) } else { gamma_bar_21.clone() },
        p.nu.plus(d1),
    )?;
    Ok(ConditionalParams {
        params,
        alpha,
        q_y1: q,
        xi_21,
        omega_21,
        delta_21,
        tau_21,
        gamma_21,
        gamma_bar_21,
        gamma_scale: gs,
    })
}

/// `(Y₂ | Y₁ > 0)`: latent dimension grows to `d₁ + m` with
/// `Δ = (Δ₂, Ω̄₂₁)`, `τ = (τ, ω₁⁻¹ξ₁)` and `Γ̄ = [[Γ̄, Δ₁ᵀ], [Δ₁, Ω̄₁₁]]`.
pub fn condition_positive(p: &SutParams, spec: PartitionSpec) -> Result<SutParams> {
    p.check()?;
    let b = Blocks::new(p, spec)?;
    if spec.d1 == 0 || spec.d2 == 0 {
        return Err(SutError::DimensionMismatch("conditioning needs two non-empty blocks".into()));
    }
    let (d1, d2, m) = (spec.d1, spec.d2, p.m());
    let w1i = inv_scale(&b.w1);
    let obar11 = symmetrize(&(&w1i * &b.omega11 * &w1i));
    let obar21 = inv_scale(&b.w2) * &b.omega21 * &w1i;
    let mut delta = DMatrix::zeros(d2, m + d1);
    delta.view_mut((0, 0), (d2, m)).copy_from(&b.delta2);
    delta.view_mut((0, m), (d2, d1)).copy_from(&obar21);
    let mut tau = DVector::zeros(m + d1);
    tau.rows_mut(0, m).copy_from(&p.tau);
    tau.rows_mut(m, d1).copy_from(&(&w1i * &b.xi1));
    let mut gamma = DMatrix::zeros(m + d1, m + d1);
    gamma.view_mut((0, 0), (m, m)).copy_from(&p.gamma_bar);
    gamma.view_mut((0, m), (m, d1)).copy_from(&b.delta1.transpose());
    gamma.view_mut((m, 0), (d1, m)).copy_from(&b.delta1);
    gamma.view_mut((m, m), (d1, d1)).copy_from(&obar11);
    if SymPd::new(gamma.clone()).is_err() {
        return Err(SutError::ExtendedGammaNotPd);
    }
    SutParams::new(b.xi2, b.omega22, delta, tau, gamma, p.nu)
}

/// Drops the first `m1` latent components when they carry no skewness
/// (`Δ = (0, Δ₂)`, `τ = (0, τ₂)`, `Γ̄ = diag(Γ̄₁₁, Γ̄₂₂)`).
pub fn reduce_latent(p: &SutParams, m1: usize) -> Result<SutParams> {
    p.check()?;
    let m = p.m();
    if m1 > m {
        return Err(SutError::DimensionMismatch(format!("cannot drop {m1} of {m} latent components")));
    }
    let m2 = m - m1;
    let d = p.d();
    let zero_delta = p.delta.view((0, 0), (d, m1)).amax();
    if zero_delta > STRUCTURE_TOL {
        return Err(SutError::StructureNotReducible(format!(
            "leading Delta columns have entries up to {zero_delta:e}"
        )));
    }
    let zero_tau = p.tau.rows(0, m1).amax();
    if zero_tau > STRUCTURE_TOL {
        return Err(SutError::StructureNotReducible(format!("leading tau entries up to {zero_tau:e}")));
    }
    let cross = p.gamma_bar.view((m1, 0), (m2, m1)).amax();
    if cross > STRUCTURE_TOL {
        return Err(SutError::StructureNotReducible(format!(
            "gamma_bar is not block diagonal (cross entries up to {cross:e})"
        )));
    }
    SutParams::new(
        p.xi.clone(),
        p.omega.clone(),
        p.delta.view((0, m1), (d, m2)).into_owned(),
        p.tau.rows(m1, m2).into_owned(),
        p.gamma_bar.view((m1, m1), (m2, m2)).into_owned(),
        p.nu,
    )
}

/// Latent components that [`reduce_latent`] could drop (zero `Δ` column,
/// zero `τ`, uncorrelated with the rest in `Γ̄`).
pub fn redundant_latent(p: &SutParams) -> Vec<usize> {
    (0..p.m())
        .filter(|&k| {
            p.delta.column(k).amax() <= STRUCTURE_TOL
                && p.tau[k].abs() <= STRUCTURE_TOL
                && (0..p.m()).all(|j| j == k || p.gamma_bar[(k, j)].abs() <= STRUCTURE_TOL)
        })
        .collect()
}

/// Canonical transformation `C = diag(1, C₂)` and the law of `CY`.
#[derive(Debug, Clone)]
pub struct CanonicalForm {
    pub c: DMatrix<f64>,
    pub params: SutParams,
}

/// Moves all skewness into the first coordinate. `C₂` has orthonormal rows
/// spanning the left null space of `ω₂Δ₂`, so `CY` has
/// `1 + (d − 1 − rank Δ₂)` coordinates and zero skewness rows after the first.
pub fn canonical(p: &SutParams) -> Result<CanonicalForm> {
    p.check()?;
    let d = p.d();
    if d < 2 {
        return Err(SutError::CanonicalNotExists("needs d >= 2".into()));
    }
    let spec = PartitionSpec::new(1, d - 1);
    let b = Blocks::new(p, spec)?;
    if b.delta2.amax() == 0.0 {
        return Ok(CanonicalForm {
            c: DMatrix::identity(d, d),
            params: p.clone(),
        });
    }
    let scaled = DMatrix::from_diagonal(&b.w2) * &b.delta2;
    let c2 = left_null_space(&scaled);
    if c2.nrows() == 0 {
        return Err(SutError::CanonicalNotExists(format!(
            "Delta_2 has rank {} = d - 1 (d = {d}, m = {}); needs rank <= d - 2",
            numerical_rank(&b.delta2),
            p.m()
        )));
    }
    let k = c2.nrows();
    let mut c = DMatrix::zeros(1 + k, d);
    c[(0, 0)] = 1.0;
    c.view_mut((1, 1), (k, d - 1)).copy_from(&c2);
    let mut params = linear(p, &c, &DVector::zeros(1 + k))?;
    // Exact zeros for the annihilated rows.
    params.delta.view_mut((1, 0), (k, p.m())).fill(0.0);
    Ok(CanonicalForm { c, params })
}
