//! Moments of the SUT law up to order four and Mardia's measures.
//!
//! With `X = Y − ξ = A U* + √V* B W*`, `A = ωΔΓ̄⁻¹`, `B = ω` and
//! `W* ~ T_d(0, Ω̄ − ΔΓ̄⁻¹Δᵀ, ν + m)` independent of `U*`, every moment of `X`
//! expands into truncated-latent moments, the weighted moments `E(V* U*)`,
//! `E(V* U*U*ᵀ)`, `E(V*)`, `E(V*²)`, and the even moments of `W*`.
//!
//! Layouts: `mu3[(i·d + j, k)] = E(X_i X_j X_k)` and
//! `mu4[(i·d + j, k·d + l)] = E(X_i X_j X_k X_l)`, the entries of
//! `E(X ⊗ XXᵀ)` and `E(XXᵀ ⊗ XXᵀ)`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{cholesky, symmetrize, SymPd};
use crate::model::Sut;
use crate::params::{HPsiParams, SutParams};
use crate::qmc::{summarize, QmcConfig};
use crate::special::gamma_inverse_moment;
use crate::truncated::{summarize_matrices, truncated_replicates, LatentLaw, TruncatedMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentKind {
    /// About the origin.
    Raw,
    Central,
}

/// Moments of orders one to four; an order is `None` when `ν` is too small.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSet {
    pub kind: MomentKind,
    pub mu1: Option<DVector<f64>>,
    pub mu2: Option<DMatrix<f64>>,
    pub mu3: Option<DMatrix<f64>>,
    pub mu4: Option<DMatrix<f64>>,
}

impl MomentSet {
    pub fn d(&self) -> usize {
        self.mu1.as_ref().map_or(0, |v| v.len())
    }

    /// Highest order present.
    pub fn order(&self) -> u32 {
        [self.mu1.is_some(), self.mu2.is_some(), self.mu3.is_some(), self.mu4.is_some()]
            .iter()
            .take_while(|&&b| b)
            .count() as u32
    }

    /// `E(∏ X_{idx})` for `idx.len() ≤ order`.
    pub fn entry(&self, idx: &[usize]) -> f64 {
        let d = self.d();
        match idx {
            [] => 1.0,
            [i] => self.mu1.as_ref().expect("order 1")[*i],
            [i, j] => self.mu2.as_ref().expect("order 2")[(*i, *j)],
            [i, j, k] => self.mu3.as_ref().expect("order 3")[(i * d + j, *k)],
            [i, j, k, l] => self.mu4.as_ref().expect("order 4")[(i * d + j, k * d + l)],
            _ => panic!("moment order above four"),
        }
    }

    fn from_fn(kind: MomentKind, d: usize, order: u32, f: impl Fn(&[usize]) -> f64) -> Self {
        let dd = d * d;
        MomentSet {
            kind,
            mu1: (order >= 1).then(|| DVector::from_fn(d, |i, _| f(&[i]))),
            mu2: (order >= 2).then(|| DMatrix::from_fn(d, d, |i, j| f(&[i, j]))),
            mu3: (order >= 3).then(|| DMatrix::from_fn(dd, d, |r, k| f(&[r / d, r % d, k]))),
            mu4: (order >= 4).then(|| DMatrix::from_fn(dd, dd, |r, c| f(&[r / d, r % d, c / d, c % d]))),
        }
    }

    /// Moments of `X + b` from those of `X`.
    pub fn shifted(&self, b: &DVector<f64>, kind: MomentKind) -> MomentSet {
        let order = self.order();
        MomentSet::from_fn(kind, self.d(), order, |idx| {
            let n = idx.len();
            let mut total = 0.0;
            let mut rest = Vec::with_capacity(n);
            for mask in 0..(1u32 << n) {
                let mut coef = 1.0;
                rest.clear();
                for (p, &i) in idx.iter().enumerate() {
                    if mask & (1 << p) != 0 {
                        coef *= b[i];
                    } else {
                        rest.push(i);
                    }
                }
                if coef != 0.0 {
                    total += coef * self.entry(&rest);
                }
            }
            total
        })
    }

    /// Central moments from raw ones.
    pub fn central(&self) -> MomentSet {
        match (self.kind, &self.mu1) {
            (MomentKind::Central, _) | (_, None) => self.clone(),
            (MomentKind::Raw, Some(mu)) => {
                let mut c = self.shifted(&-mu, MomentKind::Central);
                if let Some(v) = c.mu1.as_mut() {
                    v.fill(0.0);
                }
                if let Some(s) = c.mu2.as_mut() {
                    *s = symmetrize(s);
                }
                c
            }
        }
    }

    /// Covariance (the central second moment).
    pub fn covariance(&self) -> Option<DMatrix<f64>> {
        self.central().mu2
    }

    fn scaled(&self, factors: [f64; 4]) -> MomentSet {
        MomentSet {
            kind: self.kind,
            mu1: self.mu1.as_ref().map(|v| v * factors[0]),
            mu2: self.mu2.as_ref().map(|v| v * factors[1]),
            mu3: self.mu3.as_ref().map(|v| v * factors[2]),
            mu4: self.mu4.as_ref().map(|v| v * factors[3]),
        }
    }
}

/// Replicate mean and entrywise standard error.
#[derive(Debug, Clone)]
pub struct MomentEstimate {
    pub value: MomentSet,
    pub se: MomentSet,
}

impl MomentEstimate {
    fn from_replicates(sets: &[MomentSet]) -> Self {
        let kind = sets[0].kind;
        let col = |v: &DVector<f64>| DMatrix::from_column_slice(v.len(), 1, v.as_slice());
        let pair = |items: Vec<Option<DMatrix<f64>>>| -> (Option<DMatrix<f64>>, Option<DMatrix<f64>>) {
            if items.iter().any(Option::is_none) {
                return (None, None);
            }
            let v: Vec<_> = items.into_iter().flatten().collect();
            let (a, b) = summarize_matrices(&v);
            (Some(a), Some(b))
        };
        let (m1, s1) = pair(sets.iter().map(|s| s.mu1.as_ref().map(col)).collect());
        let (m2, s2) = pair(sets.iter().map(|s| s.mu2.clone()).collect());
        let (m3, s3) = pair(sets.iter().map(|s| s.mu3.clone()).collect());
        let (m4, s4) = pair(sets.iter().map(|s| s.mu4.clone()).collect());
        let first = |m: Option<DMatrix<f64>>| m.map(|m| m.column(0).into_owned());
        MomentEstimate {
            value: MomentSet {
                kind,
                mu1: first(m1),
                mu2: m2,
                mu3: m3,
                mu4: m4,
            },
            se: MomentSet {
                kind,
                mu1: first(s1),
                mu2: s2,
                mu3: s3,
                mu4: s4,
            },
        }
    }
}

/// Raw and central moments of `Y` with replicate standard errors.
#[derive(Debug, Clone)]
pub struct MomentReport {
    pub raw: MomentEstimate,
    pub central: MomentEstimate,
    /// Per-randomisation raw moments, for derived statistics.
    pub replicates: Vec<MomentSet>,
}

impl MomentReport {
    /// Summarises per-replicate raw moments (at least two replicates).
    pub fn from_replicates(replicates: Vec<MomentSet>) -> Self {
        let central: Vec<MomentSet> = replicates.iter().map(MomentSet::central).collect();
        MomentReport {
            raw: MomentEstimate::from_replicates(&replicates),
            central: MomentEstimate::from_replicates(&central),
            replicates,
        }
    }

    pub fn order(&self) -> u32 {
        self.raw.value.order()
    }
}

/// Latent inputs to the expansion of `X = A U* + √V* B W*`.
struct LatentInputs {
    mean: DVector<f64>,
    second: DMatrix<f64>,
    mu3: Option<DMatrix<f64>>,
    mu4: Option<DMatrix<f64>>,
    eta: f64,
    weighted_mean: Option<DVector<f64>>,
    weighted_second: Option<DMatrix<f64>>,
    v2: Option<f64>,
}

impl LatentInputs {
    fn empty(order: u32) -> Self {
        LatentInputs {
            mean: DVector::zeros(0),
            second: DMatrix::zeros(0, 0),
            mu3: (order >= 3).then(|| DMatrix::zeros(0, 0)),
            mu4: (order >= 4).then(|| DMatrix::zeros(0, 0)),
            eta: 1.0,
            weighted_mean: (order >= 3).then(|| DVector::zeros(0)),
            weighted_second: (order >= 4).then(|| DMatrix::zeros(0, 0)),
            v2: (order >= 4).then_some(1.0),
        }
    }

    fn from_truncated(t: &TruncatedMoments, m: usize) -> Self {
        LatentInputs {
            mean: t.mean.clone().unwrap_or_else(|| DVector::zeros(m)),
            second: t.second.clone().unwrap_or_else(|| DMatrix::zeros(m, m)),
            mu3: t.mu3.clone(),
            mu4: t.mu4.clone(),
            eta: t.eta_q.unwrap_or(f64::NAN),
            weighted_mean: t.weighted_mean.clone(),
            weighted_second: t.weighted_second.clone(),
            v2: t.mu2_vstar,
        }
    }
}

/// Highest moment order `≤ cap` that exists for `ν`.
pub fn available_order(nu: Dof, cap: u32) -> u32 {
    (0..=cap).rev().find(|&k| nu.exceeds(k as f64)).unwrap_or(0)
}

fn kron_mat(a: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(a)
}

/// Moments of `X = Y − ξ` (kind `Raw`, about `ξ`) from one set of latent inputs.
fn x_moments(sut: &Sut, lat: &LatentInputs, order: u32) -> MomentSet {
    let d = sut.d();
    let m = sut.m();
    let a = sut.loading();
    let nu = sut.params().nu;
    let w_scale = match sut.latent() {
        Some(l) => l.w_scale.matrix().clone(),
        None => sut.omega_bar().matrix().clone(),
    };
    let bsb = {
        let s = sut.scale();
        DMatrix::from_fn(d, d, |i, j| s[i] * w_scale[(i, j)] * s[j])
    };
    let nup = nu.plus(m as f64);
    let (c2, c4) = match nup {
        Dof::Finite(v) => (v / (v - 2.0), v * v / ((v - 2.0) * (v - 4.0))),
        Dof::Infinite => (1.0, 1.0),
    };
    // Second moment of B W*.
    let c = &bsb * c2;
    let mean = &a * &lat.mean;
    let au2 = &a * &lat.second * a.transpose();
    let au3 = lat.mu3.as_ref().filter(|_| order >= 3).map(|u3| kron_mat(&a) * u3 * a.transpose());
    let au4 = lat.mu4.as_ref().filter(|_| order >= 4).map(|u4| {
        let aa = kron_mat(&a);
        &aa * u4 * aa.transpose()
    });
    let wv = lat.weighted_mean.as_ref().map(|v| &a * v);
    let gv = lat.weighted_second.as_ref().map(|g| &a * g * a.transpose());
    let v2 = lat.v2.unwrap_or(f64::NAN);
    let dd = d * d;
    MomentSet {
        kind: MomentKind::Raw,
        mu1: (order >= 1).then_some(mean),
        mu2: (order >= 2).then(|| symmetrize(&(&au2 + &c * lat.eta))),
        mu3: (order >= 3).then(|| {
            let base = au3.expect("third latent moment");
            let wv = wv.expect("weighted mean");
            DMatrix::from_fn(dd, d, |r, k| {
                let (i, j) = (r / d, r % d);
                base[(r, k)] + wv[i] * c[(j, k)] + wv[j] * c[(i, k)] + wv[k] * c[(i, j)]
            })
        }),
        mu4: (order >= 4).then(|| {
            let base = au4.expect("fourth latent moment");
            let g = gv.expect("weighted second moment");
            let pair = |x: &DMatrix<f64>, y: &DMatrix<f64>, i, j, k, l| {
                x[(i, j)] * y[(k, l)] + x[(i, k)] * y[(j, l)] + x[(i, l)] * y[(j, k)]
            };
            let out = DMatrix::from_fn(dd, dd, |r, col| {
                let (i, j, k, l) = (r / d, r % d, col / d, col % d);
                base[(r, col)] + pair(&g, &c, i, j, k, l) + pair(&c, &g, i, j, k, l) + v2 * c4 * pair(&bsb, &bsb, i, j, k, l)
            });
            symmetrize(&out)
        }),
    }
}

fn require(nu: Dof, k: u32) -> Result<()> {
    if nu.exceeds(k as f64) {
        Ok(())
    } else {
        Err(SutError::DofTooSmall {
            nu: nu.value(),
            required: k as f64,
        })
    }
}

/// Per-randomisation moments of `X = Y − ξ` up to `order`.
fn x_replicates(sut: &Sut, order: u32, cfg: &QmcConfig) -> Result<Vec<MomentSet>> {
    match sut.latent() {
        None => {
            let lat = LatentInputs::empty(order);
            let x = x_moments(sut, &lat, order);
            Ok(vec![x; cfg.randomizations.max(1)])
        }
        Some(_) => {
            let law = LatentLaw::of(sut.params())?;
            let reps = truncated_replicates(&law, order, cfg)?;
            Ok(reps
                .iter()
                .map(|t| x_moments(sut, &LatentInputs::from_truncated(t, sut.m()), order))
                .collect())
        }
    }
}

/// Mean and covariance of `Y` with replicate standard errors.
#[derive(Debug, Clone)]
pub struct MeanVar {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub se_mean: DVector<f64>,
    pub se_cov: DMatrix<f64>,
}

/// `E(Y) = ξ + ωΔΓ̄⁻¹E(U*)` and
/// `Var(Y) = ω{ΔΓ̄⁻¹Var(U*)Γ̄⁻¹Δᵀ + η (ν+m)/(ν+m−2) (Ω̄ − ΔΓ̄⁻¹Δᵀ)}ω`.
pub fn mean_var(p: &SutParams, cfg: &QmcConfig) -> Result<MeanVar> {
    require(p.nu, 2)?;
    let report = moments_up_to(p, 2, cfg)?;
    let c = &report.central;
    Ok(MeanVar {
        mean: report.raw.value.mu1.clone().expect("order 2"),
        cov: c.value.mu2.clone().expect("order 2"),
        se_mean: report.raw.se.mu1.clone().expect("order 2"),
        se_cov: c.se.mu2.clone().expect("order 2"),
    })
}

/// `E(Y)` alone (needs `ν > 1`).
pub fn mean(p: &SutParams, cfg: &QmcConfig) -> Result<(DVector<f64>, DVector<f64>)> {
    require(p.nu, 1)?;
    let report = moments_up_to(p, 1, cfg)?;
    Ok((report.raw.value.mu1.clone().expect("order 1"), report.raw.se.mu1.clone().expect("order 1")))
}

/// Moments of `Y` up to `min(cap, highest existing order)`.
pub fn moments_up_to(p: &SutParams, cap: u32, cfg: &QmcConfig) -> Result<MomentReport> {
    let sut = Sut::new(p.clone())?;
    let order = available_order(p.nu, cap.min(4));
    let reps = x_replicates(&sut, order, cfg)?;
    let raw: Vec<MomentSet> = reps.iter().map(|x| x.shifted(&p.xi, MomentKind::Raw)).collect();
    Ok(MomentReport::from_replicates(raw))
}

/// Moments up to order four by the convolution route; needs `ν > 3`, and the
/// fourth order is absent when `ν ≤ 4`.
pub fn moments_34(p: &SutParams, cfg: &QmcConfig) -> Result<MomentReport> {
    require(p.nu, 3)?;
    moments_up_to(p, 4, cfg)
}

/// `E(V^{-k/2})`, `k = 1..4`, for `V ~ Gamma(ν/2, ν/2)`; `None` when `ν ≤ k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaInverseMoments {
    pub m1: Option<f64>,
    pub m2: Option<f64>,
    pub m3: Option<f64>,
    pub m4: Option<f64>,
}

impl GammaInverseMoments {
    pub fn new(nu: Dof) -> Self {
        let f = |k: u32| nu.exceeds(k as f64).then(|| gamma_inverse_moment(nu, k));
        Self {
            m1: f(1),
            m2: f(2),
            m3: f(3),
            m4: f(4),
        }
    }

    pub fn get(&self, k: u32) -> Option<f64> {
        match k {
            1 => self.m1,
            2 => self.m2,
            3 => self.m3,
            4 => self.m4,
            _ => None,
        }
    }
}

/// Moments through `Y = ξ + V^{-1/2} Z₀`: `μ_k(Y − ξ) = E(V^{-k/2}) μ_k(Z₀)` with
/// the SUN moments of `Z₀` from the same engine at `ν = ∞`. Requires `τ = 0`.
pub fn moments_via_mixture(p: &SutParams, cfg: &QmcConfig) -> Result<MomentReport> {
    if p.tau.iter().any(|&t| t != 0.0) {
        return Err(SutError::TauMustBeZero);
    }
    require(p.nu, 1)?;
    let order = available_order(p.nu, 4);
    let mut sun = p.clone();
    sun.nu = Dof::Infinite;
    let sut = Sut::new(sun)?;
    let g = GammaInverseMoments::new(p.nu);
    let f = [1, 2, 3, 4].map(|k| g.get(k).unwrap_or(f64::NAN));
    let reps = x_replicates(&sut, order, cfg)?;
    let raw: Vec<MomentSet> = reps
        .iter()
        .map(|z| z.scaled(f).shifted(&p.xi, MomentKind::Raw))
        .collect();
    Ok(MomentReport::from_replicates(raw))
}

/// Raw sample moments of the rows of `draws`, with standard errors from
/// `batches` contiguous batch means.
pub fn sample_moments(draws: &DMatrix<f64>, batches: usize) -> Result<MomentReport> {
    let (n, d) = draws.shape();
    if batches < 2 || n < batches || d == 0 {
        return Err(SutError::Constraint(format!("{n} draws cannot form {batches} batches")));
    }
    let size = n / batches;
    let sets = (0..batches)
        .map(|b| {
            let rows = draws.rows(b * size, size);
            let mut mu1 = DVector::zeros(d);
            let mut mu2 = DMatrix::zeros(d, d);
            let mut mu3 = DMatrix::zeros(d * d, d);
            let mut mu4 = DMatrix::zeros(d * d, d * d);
            for row in rows.row_iter() {
                let y = row.transpose();
                let yy = y.kronecker(&y);
                mu1 += &y;
                mu2 += &y * y.transpose();
                mu3 += &yy * y.transpose();
                mu4 += &yy * yy.transpose();
            }
            let k = size as f64;
            MomentSet {
                kind: MomentKind::Raw,
                mu1: Some(mu1 / k),
                mu2: Some(mu2 / k),
                mu3: Some(mu3 / k),
                mu4: Some(mu4 / k),
            }
        })
        .collect();
    Ok(MomentReport::from_replicates(sets))
}

/// Mardia's multivariate skewness and kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MardiaMeasures {
    pub beta1: f64,
    pub beta2: f64,
    pub gamma1: f64,
    /// `β₂ − d(d+2)`.
    pub gamma2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MardiaEstimate {
    pub value: MardiaMeasures,
    pub se: MardiaMeasures,
}

/// Mardia measures of a central moment set through `Z = L⁻¹(Y − μ)`, `LLᵀ = Var(Y)`.
pub fn mardia_of(central: &MomentSet) -> Result<MardiaMeasures> {
    let (Some(c2), Some(c3), Some(c4)) = (&central.mu2, &central.mu3, &central.mu4) else {
        return Err(SutError::Constraint("Mardia measures need moments up to order four".into()));
    };
    let d = c2.nrows();
    let l = cholesky(&symmetrize(c2))?;
    let li = l
        .lower()
        .clone()
        .try_inverse()
        .ok_or(SutError::NotPositiveDefinite { pivot: 0 })?;
    let lk = li.kronecker(&li);
    let z3 = &lk * c3 * li.transpose();
    let z4 = &lk * c4 * lk.transpose();
    let beta1 = z3.iter().map(|v| v * v).sum::<f64>();
    let beta2 = z4.trace();
    let df = d as f64;
    Ok(MardiaMeasures {
        beta1,
        beta2,
        gamma1: beta1,
        gamma2: beta2 - df * (df + 2.0),
    })
}

/// Mardia measures of a report, with replicate standard errors.
pub fn mardia_from_report(report: &MomentReport) -> Result<MardiaEstimate> {
    let per: Vec<MardiaMeasures> = report
        .replicates
        .iter()
        .map(|r| mardia_of(&r.central()))
        .collect::<Result<_>>()?;
    let value = mardia_of(&report.central.value)?;
    let se_of = |f: fn(&MardiaMeasures) -> f64| summarize(&per.iter().map(f).collect::<Vec<_>>()).1;
    Ok(MardiaEstimate {
        value,
        se: MardiaMeasures {
            beta1: se_of(|m| m.beta1),
            beta2: se_of(|m| m.beta2),
            gamma1: se_of(|m| m.gamma1),
            gamma2: se_of(|m| m.gamma2),
        },
    })
}

/// Mardia measures from the semi-explicit fourth-order moments; needs `ν > 4`.
pub fn mardia(p: &SutParams, cfg: &QmcConfig) -> Result<MardiaEstimate> {
    require(p.nu, 4)?;
    mardia_from_report(&moments_34(p, cfg)?)
}

/// Loading patterns `h_{L,k}` for the correlation sweep.
#[derive(Debug, Clone, PartialEq)]
pub enum LoadingFamily {
    /// Every `h_{L,k}` equals `magnitude · direction/|direction|`.
    Parallel { direction: DVector<f64>, magnitude: f64 },
    /// `h_{L,k}` of the given length with directions uniform on the sphere.
    Spherical { d: usize, magnitude: f64, seed: u64 },
}

impl LoadingFamily {
    pub fn d(&self) -> usize {
        match self {
            LoadingFamily::Parallel { direction, .. } => direction.len(),
            LoadingFamily::Spherical { d, .. } => *d,
        }
    }

    /// The `d × m` matrix with columns `h_{L,1..m}`. Spherical directions are
    /// drawn in sequence, so the first `m` columns do not depend on `m`.
    pub fn loadings(&self, m: usize) -> DMatrix<f64> {
        match self {
            LoadingFamily::Parallel { direction, magnitude } => {
                let u = direction / direction.norm();
                DMatrix::from_fn(u.len(), m, |i, _| magnitude * u[i])
            }
            LoadingFamily::Spherical { d, magnitude, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut h = DMatrix::zeros(*d, m);
                for k in 0..m {
                    let z = DVector::from_fn(*d, |_, _| rng.sample::<f64, _>(StandardNormal));
                    h.set_column(k, &(z.normalize() * *magnitude));
                }
                h
            }
        }
    }
}

/// Generator of `(H, Ψ)` parameter sets indexed by the latent dimension:
/// `Γ̄ = I`, `τ = 0`, `Ψ = ψ I`, and `H = H_L L⁻¹` with `LLᵀ = Var(U*)`, so
/// that `H Var(U*) Hᵀ = Σ_k h_{L,k} h_{L,k}ᵀ`.
#[derive(Debug, Clone)]
pub struct HPsiGenerator {
    pub family: LoadingFamily,
    pub psi: f64,
    pub nu: Dof,
    pub cfg: QmcConfig,
}

impl HPsiGenerator {
    pub fn hpsi(&self, m: usize) -> Result<HPsiParams> {
        let d = self.family.d();
        let law = LatentLaw::new(DVector::zeros(m), DMatrix::identity(m, m), self.nu)?;
        let reps = truncated_replicates(&law, 2, &self.cfg)?;
        let covs: Vec<DMatrix<f64>> = reps.iter().filter_map(|t| t.cov.clone()).collect();
        if covs.is_empty() {
            return Err(SutError::DofTooSmall {
                nu: self.nu.value(),
                required: 2.0,
            });
        }
        let (cov, _) = summarize_matrices(&covs);
        let l = cholesky(&symmetrize(&cov))?;
        // H = H_L L⁻¹  ⇔  Lᵀ Hᵀ = H_Lᵀ
        let ht = l.solve_upper_mat(&self.family.loadings(m).transpose());
        Ok(HPsiParams {
            xi: DVector::zeros(d),
            h: ht.transpose(),
            psi: DMatrix::identity(d, d) * self.psi,
            tau: DVector::zeros(m),
            gamma_bar: DMatrix::identity(m, m),
            nu: self.nu,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrelationTrend {
    TowardOne,
    TowardZero,
    Undetermined,
}

#[derive(Debug, Clone)]
pub struct CorrelationRow {
    pub m: usize,
    pub correlation: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct CorrelationSweep {
    pub rows: Vec<CorrelationRow>,
    /// Trend of `|ρ_{1,2}|` over the sweep.
    pub trend: CorrelationTrend,
}

/// Correlation matrix of `Y` for each latent dimension in `ms`.
pub fn correlation_vs_latent_dim<F>(generator: F, ms: &[usize], cfg: &QmcConfig) -> Result<CorrelationSweep>
where
    F: Fn(usize) -> Result<HPsiParams>,
{
    let mut rows = Vec::with_capacity(ms.len());
    for &m in ms {
        let params = generator(m)?.to_params()?;
        let mv = mean_var(&params, cfg)?;
        let s = mv.cov.diagonal().map(f64::sqrt);
        let corr = DMatrix::from_fn(s.len(), s.len(), |i, j| mv.cov[(i, j)] / (s[i] * s[j]));
        rows.push(CorrelationRow { m, correlation: corr });
    }
    let trend = match (rows.first(), rows.last()) {
        (Some(a), Some(b)) if a.correlation.nrows() >= 2 => {
            let (first, last) = (a.correlation[(0, 1)].abs(), b.correlation[(0, 1)].abs());
            if last > 0.9 && last >= first {
                CorrelationTrend::TowardOne
            } else if last < 0.1 && last <= first {
                CorrelationTrend::TowardZero
            } else {
                CorrelationTrend::Undetermined
            }
        }
        _ => CorrelationTrend::Undetermined,
    };
    Ok(CorrelationSweep { rows, trend })
}

/// Covariance of `Y` as a validated matrix.
pub fn covariance(p: &SutParams, cfg: &QmcConfig) -> Result<SymPd> {
    SymPd::new(mean_var(p, cfg)?.cov)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::commutation;
    use approx::assert_relative_eq;
    use statrs::function::gamma::ln_gamma;
    use std::f64::consts::PI;

    fn st(delta: f64, nu: f64) -> SutParams {
        SutParams::new(
            DVector::from_element(1, 0.4),
            DMatrix::from_element(1, 1, 2.0),
            DMatrix::from_element(1, 1, delta),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            Dof::Finite(nu),
        )
        .unwrap()
    }

    fn skewed(nu: Dof) -> SutParams {
        SutParams::new(
            DVector::from_vec(vec![0.5, -1.0]),
            DMatrix::from_row_slice(2, 2, &[2.0, 0.4, 0.4, 1.0]),
            DMatrix::from_row_slice(2, 2, &[0.5, 0.2, -0.3, 0.4]),
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 0.3, 1.0]),
            nu,
        )
        .unwrap()
    }

    #[test]
    fn shifting_round_trips() {
        let p = skewed(Dof::Finite(9.0));
        let r = moments_34(&p, &QmcConfig::default()).unwrap();
        let raw = &r.raw.value;
        let back = raw.shifted(&-&p.xi, MomentKind::Raw).shifted(&p.xi, MomentKind::Raw);
        assert!((back.mu4.unwrap() - raw.mu4.clone().unwrap()).amax() < 1e-10);
    }

    #[test]
    fn univariate_skew_t_mean_and_variance() {
        let (delta, nu) = (0.7, 5.0);
        let p = st(delta, nu);
        let mv = mean_var(&p, &QmcConfig::default()).unwrap();
        let w = 2f64.sqrt();
        let b = (nu / PI).sqrt() * (ln_gamma(0.5 * (nu - 1.0)) - ln_gamma(0.5 * nu)).exp();
        let mean = 0.4 + w * delta * b;
        let var = 2.0 * (nu / (nu - 2.0) - (delta * b).powi(2));
        assert!((mv.mean[0] - mean).abs() < 4.0 * mv.se_mean[0] + 1e-6, "{} {}", mv.mean[0], mean);
        assert!((mv.cov[(0, 0)] - var).abs() < 4.0 * mv.se_cov[(0, 0)] + 1e-6, "{} {}", mv.cov[(0, 0)], var);
    }

    #[test]
    fn symmetric_t_moments() {
        let nu = 10.0;
        let p = SutParams::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 2.0]),
            DMatrix::zeros(2, 1),
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            Dof::Finite(nu),
        )
        .unwrap();
        let r = moments_34(&p, &QmcConfig::default()).unwrap();
        assert!(r.central.value.mu3.as_ref().unwrap().amax() < 1e-12);
        let mv = mean_var(&p, &QmcConfig::default()).unwrap();
        let diff = (mv.cov.clone() - &p.omega * (nu / (nu - 2.0))).amax();
        assert!(diff < 4.0 * mv.se_cov.amax() + 1e-9, "{diff}");
        let m = mardia(&p, &QmcConfig::default()).unwrap();
        assert!(m.value.gamma1.abs() < 1e-12);
        assert!((m.value.gamma2 - 8.0 / 3.0).abs() < 3.0 * m.se.gamma2 + 1e-9);
    }

    #[test]
    fn kronecker_symmetries() {
        let p = skewed(Dof::Finite(9.0));
        let r = moments_34(&p, &QmcConfig::default()).unwrap();
        let k = commutation(2);
        let m4 = r.central.value.mu4.clone().unwrap();
        assert!((&k * &m4 * &k - &m4).amax() < 1e-10);
        let m3 = r.raw.value.mu3.clone().unwrap();
        assert!((&k * &m3 - &m3).amax() < 1e-12);
    }

    #[test]
    fn second_moment_matches_mean_var() {
        let p = skewed(Dof::Finite(7.0));
        let cfg = QmcConfig::default();
        let r = moments_34(&p, &cfg).unwrap();
        let mv = mean_var(&p, &cfg).unwrap();
        let raw = &r.raw.value;
        let mu = raw.mu1.clone().unwrap();
        let cov = raw.mu2.clone().unwrap() - &mu * mu.transpose();
        assert!((cov - &mv.cov).amax() < 1e-8 * mv.cov.amax());
    }

    #[test]
    fn mixture_route_agrees() {
        let p = skewed(Dof::Finite(9.0));
        let cfg = QmcConfig::default();
        let a = moments_34(&p, &cfg).unwrap();
        let b = moments_via_mixture(&p, &cfg).unwrap();
        let (va, sa) = (a.raw.value.mu4.clone().unwrap(), a.raw.se.mu4.clone().unwrap());
        let (vb, sb) = (b.raw.value.mu4.clone().unwrap(), b.raw.se.mu4.clone().unwrap());
        for i in 0..va.len() {
            assert!((va[i] - vb[i]).abs() < 4.0 * (sa[i] + sb[i]) + 1e-6 * va[i].abs(), "{i}: {} {}", va[i], vb[i]);
        }
    }

    #[test]
    fn gamma_inverse_moment_values() {
        assert_relative_eq!(GammaInverseMoments::new(Dof::Finite(5.0)).m2.unwrap(), 5.0 / 3.0, max_relative = 1e-12);
        assert_relative_eq!(GammaInverseMoments::new(Dof::Finite(4.0)).m1.unwrap(), 1.2533141373155001, max_relative = 1e-12);
        assert!(GammaInverseMoments::new(Dof::Finite(3.0)).m3.is_none());
    }

    #[test]
    fn insufficient_dof() {
        let p = st(0.3, 3.0);
        assert!(matches!(mardia(&p, &QmcConfig::default()), Err(SutError::DofTooSmall { .. })));
        let r = moments_34(&st(0.3, 3.5), &QmcConfig::default()).unwrap();
        assert_eq!(r.order(), 3);
    }

    #[test]
    fn sun_path_has_unit_weights() {
        let p = skewed(Dof::Infinite);
        let r = moments_34(&p, &QmcConfig::default()).unwrap();
        assert_eq!(r.order(), 4);
        let m = mardia(&p, &QmcConfig::default()).unwrap();
        assert!(m.value.beta1 >= 0.0);
    }
}
