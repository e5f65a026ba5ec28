//! Moments of the truncated latent vector `U* = (U₀ | U₀ + τ > 0)`,
//! `U₀ ~ T_m(0, Γ̄, ν)`, and of its `V* = (ν + Q_{U*})/(ν + m)` weighted
//! versions.
//!
//! `U₀` is written as `G^{-1/2} N` with `G ~ Gamma(ν/2, rate ν/2)` and
//! `N ~ N_m(0, Γ̄)`. The truncation becomes `N > −√G τ`, which is integrated
//! by separation of variables, while `G` is drawn by inversion from the
//! shifted law `Gamma((ν−K)/2, ν/2)` with the likelihood ratio
//! `E(V^{-K/2}) G^{K/2}` as weight. Monomials of order `k` are integrated with
//! `K = k`, which cancels their power of `G` and keeps the estimators' variance
//! finite for any `ν > k`.

use nalgebra::{DMatrix, DVector};

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{symmetrize, SymPd};
use crate::qmc::{lattice_point, mvt_cdf_replicates, over_replicates, summarize, BoxProblem, QmcConfig};
use crate::special::{gamma_inverse_moment, gamma_p_inv, ln_c_const};

/// The latent part `(τ, Γ̄, ν)` of a parameter set.
#[derive(Debug, Clone)]
pub struct LatentLaw {
    pub tau: DVector<f64>,
    pub gamma: SymPd,
    pub nu: Dof,
}

impl LatentLaw {
    pub fn new(tau: DVector<f64>, gamma_bar: DMatrix<f64>, nu: Dof) -> Result<Self> {
        if tau.len() != gamma_bar.nrows() || tau.is_empty() {
            return Err(SutError::DimensionMismatch(format!(
                "tau of length {} against {}x{} gamma_bar",
                tau.len(),
                gamma_bar.nrows(),
                gamma_bar.ncols()
            )));
        }
        if !nu.is_valid() {
            return Err(SutError::NonFiniteInput(format!("nu = {nu}")));
        }
        Ok(Self {
            tau,
            gamma: SymPd::new(symmetrize(&gamma_bar))?,
            nu,
        })
    }

    pub fn of(params: &crate::params::SutParams) -> Result<Self> {
        Self::new(params.tau.clone(), params.gamma_bar.clone(), params.nu)
    }

    pub fn m(&self) -> usize {
        self.tau.len()
    }

    /// Highest moment order `k ≤ cap` with `ν > k`.
    pub fn available_order(&self, cap: u32) -> u32 {
        (0..=cap).rev().find(|&k| self.nu.exceeds(k as f64)).unwrap_or(0)
    }
}

/// Truncated-latent moments; a field is `None` when `ν` is too small for it
/// (or it was not requested).
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedMoments {
    /// Estimate of `T_m(τ; Γ̄, ν)` from the same integration.
    pub prob: f64,
    /// `E(U*)`.
    pub mean: Option<DVector<f64>>,
    /// `E(U* U*ᵀ)`.
    pub second: Option<DMatrix<f64>>,
    /// `Var(U*)`.
    pub cov: Option<DMatrix<f64>>,
    /// `E(U* ⊗ U* U*ᵀ)` (m² x m).
    pub mu3: Option<DMatrix<f64>>,
    /// `E(U* U*ᵀ ⊗ U* U*ᵀ)` (m² x m²).
    pub mu4: Option<DMatrix<f64>>,
    /// `η = E(V*)`.
    pub eta_q: Option<f64>,
    /// `E(Q_{U*})`.
    pub e_q: Option<f64>,
    /// `E(V* U*)`.
    pub weighted_mean: Option<DVector<f64>>,
    /// `E(V* U* U*ᵀ)`.
    pub weighted_second: Option<DMatrix<f64>>,
    /// `E(V*²)`.
    pub mu2_vstar: Option<f64>,
}

/// Replicate-averaged truncated moments with entrywise standard errors.
#[derive(Debug, Clone)]
pub struct TruncatedEstimate {
    pub value: TruncatedMoments,
    pub se: TruncatedMoments,
    pub replicates: Vec<TruncatedMoments>,
}

/// Entrywise mean and standard error of equally shaped matrices.
pub fn summarize_matrices(items: &[DMatrix<f64>]) -> (DMatrix<f64>, DMatrix<f64>) {
    let (r, c) = items[0].shape();
    let mut mean = DMatrix::zeros(r, c);
    let mut se = DMatrix::zeros(r, c);
    let mut buf = vec![0.0; items.len()];
    for i in 0..r {
        for j in 0..c {
            for (b, m) in buf.iter_mut().zip(items) {
                *b = m[(i, j)];
            }
            let (a, s) = summarize(&buf);
            mean[(i, j)] = a;
            se[(i, j)] = s;
        }
    }
    (mean, se)
}

fn summarize_opt_mat(items: Vec<Option<DMatrix<f64>>>) -> (Option<DMatrix<f64>>, Option<DMatrix<f64>>) {
    if items.iter().any(Option::is_none) {
        return (None, None);
    }
    let v: Vec<DMatrix<f64>> = items.into_iter().map(Option::unwrap).collect();
    let (a, b) = summarize_matrices(&v);
    (Some(a), Some(b))
}

fn summarize_opt_vec(items: Vec<Option<DVector<f64>>>) -> (Option<DVector<f64>>, Option<DVector<f64>>) {
    let mats = items.into_iter().map(|o| o.map(|v| DMatrix::from_column_slice(v.len(), 1, v.as_slice()))).collect();
    let (a, b) = summarize_opt_mat(mats);
    (a.map(|m| m.column(0).into_owned()), b.map(|m| m.column(0).into_owned()))
}

fn summarize_opt_f(items: Vec<Option<f64>>) -> (Option<f64>, Option<f64>) {
    if items.iter().any(Option::is_none) {
        return (None, None);
    }
    let v: Vec<f64> = items.into_iter().map(Option::unwrap).collect();
    let (a, b) = summarize(&v);
    (Some(a), Some(b))
}

impl TruncatedEstimate {
    pub fn from_replicates(replicates: Vec<TruncatedMoments>) -> Self {
        let pick = |f: &dyn Fn(&TruncatedMoments) -> Option<DMatrix<f64>>| {
            summarize_opt_mat(replicates.iter().map(f).collect())
        };
        let pickv = |f: &dyn Fn(&TruncatedMoments) -> Option<DVector<f64>>| {
            summarize_opt_vec(replicates.iter().map(f).collect())
        };
        let pickf = |f: &dyn Fn(&TruncatedMoments) -> Option<f64>| summarize_opt_f(replicates.iter().map(f).collect());
        let (prob, prob_se) = summarize(&replicates.iter().map(|r| r.prob).collect::<Vec<_>>());
        let (mean, mean_se) = pickv(&|r| r.mean.clone());
        let (second, second_se) = pick(&|r| r.second.clone());
        let (cov, cov_se) = pick(&|r| r.cov.clone());
        let (mu3, mu3_se) = pick(&|r| r.mu3.clone());
        let (mu4, mu4_se) = pick(&|r| r.mu4.clone());
        let (eta_q, eta_q_se) = pickf(&|r| r.eta_q);
        let (e_q, e_q_se) = pickf(&|r| r.e_q);
        let (wm, wm_se) = pickv(&|r| r.weighted_mean.clone());
        let (ws, ws_se) = pick(&|r| r.weighted_second.clone());
        let (v2, v2_se) = pickf(&|r| r.mu2_vstar);
        Self {
            value: TruncatedMoments {
                prob,
                mean,
                second,
                cov,
                mu3,
                mu4,
                eta_q,
                e_q,
                weighted_mean: wm,
                weighted_second: ws,
                mu2_vstar: v2,
            },
            se: TruncatedMoments {
                prob: prob_se,
                mean: mean_se,
                second: second_se,
                cov: cov_se,
                mu3: mu3_se,
                mu4: mu4_se,
                eta_q: eta_q_se,
                e_q: e_q_se,
                weighted_mean: wm_se,
                weighted_second: ws_se,
                mu2_vstar: v2_se,
            },
            replicates,
        }
    }
}

struct Sums {
    w: f64,
    u: DVector<f64>,
    uu: DMatrix<f64>,
    u3: DMatrix<f64>,
    u4: DMatrix<f64>,
    q: f64,
    qq: f64,
    qu: DVector<f64>,
    quu: DMatrix<f64>,
}

impl Sums {
    fn new(m: usize, orders: &[u32]) -> Self {
        let mm = m * m;
        let has = |j| orders.contains(&j);
        Sums {
            w: 0.0,
            u: DVector::zeros(m),
            uu: DMatrix::zeros(m, m),
            u3: DMatrix::zeros(if has(3) { mm } else { 0 }, if has(3) { m } else { 0 }),
            u4: DMatrix::zeros(if has(4) { mm } else { 0 }, if has(4) { mm } else { 0 }),
            q: 0.0,
            qq: 0.0,
            qu: DVector::zeros(m),
            quu: DMatrix::zeros(m, m),
        }
    }

    fn merge(&mut self, o: Sums) {
        self.w += o.w;
        self.u += o.u;
        self.uu += o.uu;
        if o.u3.nrows() > 0 {
            self.u3 = o.u3;
        }
        if o.u4.nrows() > 0 {
            self.u4 = o.u4;
        }
        self.q += o.q;
        self.qq += o.qq;
        self.qu += o.qu;
        self.quu += o.quu;
    }
}

/// Per-replicate sums of the monomials whose order is listed in `orders`,
/// with the mixing variable drawn from Gamma((ν − k)/2, ν/2) and weighted
/// back to the target law.
fn accumulate(problem: &BoxProblem, cfg: &QmcConfig, nu: Dof, k: u32, orders: &[u32]) -> Vec<Sums> {
    let m = problem.dim();
    let (finite, nu) = match nu {
        Dof::Finite(v) => (true, v),
        Dof::Infinite => (false, f64::INFINITY),
    };
    let kf = k as f64;
    let shape = 0.5 * (nu - kf);
    let m_k = gamma_inverse_moment(Dof::new(nu), k);
    let off = usize::from(finite);
    let dim = m + off;
    let has = |j: u32| orders.contains(&j);
    let need_q = has(2) || has(3) || has(4);
    over_replicates(cfg, dim, |gens, shift| {
        let mut w = vec![0.0; dim];
        let mut y = vec![0.0; m];
        let mut s = Sums::new(m, orders);
        let mut u = DVector::zeros(m);
        let mut uu_vec = DVector::zeros(m * m);
        let mut x = vec![0.0; m];
        for i in 0..cfg.points {
            lattice_point(i, gens, shift, &mut w);
            let (g, gw) = if finite {
                let g = gamma_p_inv(shape, w[0]) / (0.5 * nu);
                (g, if k == 0 { 1.0 } else { m_k * g.powf(0.5 * kf) })
            } else {
                (1.0, 1.0)
            };
            if !(g > 0.0) || !g.is_finite() {
                continue;
            }
            let sg = g.sqrt();
            problem.visit_scaled(&w[off..], sg, &mut y, &mut x, |pw, yv, xv| {
                let wt = pw * gw;
                for j in 0..m {
                    u[j] = xv[j] / sg;
                }
                let q = if need_q { yv.iter().map(|v| v * v).sum::<f64>() / g } else { 0.0 };
                if has(0) {
                    s.w += wt;
                }
                if has(1) {
                    s.u.axpy(wt, &u, 1.0);
                }
                if has(2) {
                    s.uu.ger(wt, &u, &u, 1.0);
                    s.q += wt * q;
                }
                if has(3) || has(4) {
                    for a in 0..m {
                        for b in 0..m {
                            uu_vec[a * m + b] = u[a] * u[b];
                        }
                    }
                }
                if has(3) {
                    s.u3.ger(wt, &uu_vec, &u, 1.0);
                    s.qu.axpy(wt * q, &u, 1.0);
                }
                if has(4) {
                    s.u4.ger(wt, &uu_vec, &uu_vec, 1.0);
                    s.quu.ger(wt * q, &u, &u, 1.0);
                    s.qq += wt * q * q;
                }
            });
        }
        s
    })
}

/// Truncated moments up to order `max_order` (1 to 4), per randomisation.
pub fn truncated_t_moments(latent: &LatentLaw, max_order: u32, cfg: &QmcConfig) -> Result<TruncatedEstimate> {
    Ok(TruncatedEstimate::from_replicates(truncated_replicates(latent, max_order, cfg)?))
}

pub fn truncated_replicates(latent: &LatentLaw, max_order: u32, cfg: &QmcConfig) -> Result<Vec<TruncatedMoments>> {
    let m = latent.m();
    let order = latent.available_order(max_order.min(4));
    let lower = -&latent.tau;
    let upper = DVector::from_element(m, f64::INFINITY);
    let problem = BoxProblem::new(&lower, &upper, latent.gamma.matrix(), Dof::Infinite)?;
    let (finite, nu) = match latent.nu {
        Dof::Finite(v) => (true, v),
        Dof::Infinite => (false, f64::INFINITY),
    };
    // With finite dof, the order-j sums use a mixing density shifted by j so
    // that the monomial's power of G cancels against the weight.
    let reps = if finite {
        let passes: Vec<Vec<Sums>> = (0..=order).map(|j| accumulate(&problem, cfg, latent.nu, j, &[j])).collect();
        let mut it = passes.into_iter();
        let mut base = it.next().unwrap_or_default();
        for pass in it {
            for (b, s) in base.iter_mut().zip(pass) {
                b.merge(s);
            }
        }
        base
    } else {
        let all: Vec<u32> = (0..=order).collect();
        accumulate(&problem, cfg, latent.nu, 0, &all)
    };
    let want3 = order >= 3;
    let want4 = order >= 4;

    let mf = m as f64;
    let out = reps
        .into_iter()
        .map(|s| {
            let n = cfg.points as f64;
            let prob = s.w / n;
            if s.w <= 0.0 {
                return TruncatedMoments {
                    prob,
                    mean: None,
                    second: None,
                    cov: None,
                    mu3: None,
                    mu4: None,
                    eta_q: None,
                    e_q: None,
                    weighted_mean: None,
                    weighted_second: None,
                    mu2_vstar: None,
                };
            }
            let inv = 1.0 / s.w;
            let mean = &s.u * inv;
            let second = symmetrize(&(&s.uu * inv));
            let e_q = s.q * inv;
            let (eta_q, wmean, wsecond, v2) = if finite {
                (
                    (nu + e_q) / (nu + mf),
                    (&mean * nu + &s.qu * inv) / (nu + mf),
                    symmetrize(&((&second * nu + &s.quu * inv) / (nu + mf))),
                    (nu * nu + 2.0 * nu * e_q + s.qq * inv) / ((nu + mf) * (nu + mf)),
                )
            } else {
                (1.0, mean.clone(), second.clone(), 1.0)
            };
            let cov = symmetrize(&(&second - &mean * mean.transpose()));
            TruncatedMoments {
                prob,
                mean: (order >= 1).then(|| mean.clone()),
                second: (order >= 2).then(|| second.clone()),
                cov: (order >= 2).then_some(cov),
                mu3: want3.then(|| &s.u3 * inv),
                mu4: want4.then(|| symmetrize(&(&s.u4 * inv))),
                eta_q: (order >= 2).then_some(eta_q),
                e_q: (order >= 2).then_some(e_q),
                weighted_mean: want3.then_some(wmean),
                weighted_second: want4.then_some(wsecond),
                mu2_vstar: want4.then_some(v2),
            }
        })
        .collect();
    Ok(out)
}

/// Which function `h(u)` of the truncated latent vector to average.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSelector {
    One,
    U,
    UUt,
    UKronUUt,
    UUtKronUUt,
}

impl MomentSelector {
    pub fn order(self) -> u32 {
        match self {
            MomentSelector::One => 0,
            MomentSelector::U => 1,
            MomentSelector::UUt => 2,
            MomentSelector::UKronUUt => 3,
            MomentSelector::UUtKronUUt => 4,
        }
    }
}

/// Value and standard error of a matrix-valued expectation.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixEstimate {
    pub value: DMatrix<f64>,
    pub se: DMatrix<f64>,
}

fn select(t: &TruncatedMoments, h: MomentSelector) -> DMatrix<f64> {
    match h {
        MomentSelector::One => DMatrix::from_element(1, 1, 1.0),
        MomentSelector::U => {
            let v = t.mean.as_ref().expect("order checked");
            DMatrix::from_column_slice(v.len(), 1, v.as_slice())
        }
        MomentSelector::UUt => t.second.clone().expect("order checked"),
        MomentSelector::UKronUUt => t.mu3.clone().expect("order checked"),
        MomentSelector::UUtKronUUt => t.mu4.clone().expect("order checked"),
    }
}

/// `E{V*^{k/2} h(U*)}` through the change of measure to `ν − k` degrees of
/// freedom:
/// `[M_k / T_m(τ;Γ̄,ν)] (ν/(ν+m))^{k/2} c(ν,m)/c(ν−k,m)` with
/// `M_k = (ν/(ν−k))^{m/2} T_m(sτ; Γ̄, ν−k) E{h(s⁻¹ U_k)}`,
/// `s = √((ν−k)/ν)` and `U_k` truncated at `−sτ` under `ν − k` degrees of freedom.
///
/// The `s` scaling of `τ` reduces to the identity at `τ = 0`.
pub fn latent_expectation(k: u32, h: MomentSelector, latent: &LatentLaw, cfg: &QmcConfig) -> Result<MatrixEstimate> {
    let order = h.order();
    let nu = match latent.nu {
        Dof::Infinite => {
            let est = truncated_replicates(latent, order.max(1), cfg)?;
            let vals: Vec<_> = est.iter().map(|t| select(t, h)).collect();
            let (value, se) = summarize_matrices(&vals);
            return Ok(MatrixEstimate { value, se });
        }
        Dof::Finite(v) => v,
    };
    let kf = k as f64;
    if nu <= kf + order as f64 {
        return Err(SutError::DofTooSmall {
            nu,
            required: kf + order as f64,
        });
    }
    let m = latent.m() as f64;
    let s = ((nu - kf) / nu).sqrt();
    let shifted = LatentLaw {
        tau: &latent.tau * s,
        gamma: latent.gamma.clone(),
        nu: Dof::Finite(nu - kf),
    };
    let inner = truncated_replicates(&shifted, order.max(1), cfg)?;
    let num = mvt_cdf_replicates(&shifted.tau, &latent.gamma, shifted.nu, cfg)?;
    let den = mvt_cdf_replicates(&latent.tau, &latent.gamma, latent.nu, cfg)?;
    let log_const = 0.5 * kf * (nu / (nu + m)).ln() + ln_c_const(nu, m) - ln_c_const(nu - kf, m) + 0.5 * m * (nu / (nu - kf)).ln();
    let hscale = (1.0 / s).powi(order as i32);
    let vals: Vec<DMatrix<f64>> = inner
        .iter()
        .zip(num.iter().zip(&den))
        .map(|(t, (a, b))| select(t, h) * (hscale * log_const.exp() * a / b))
        .collect();
    let (value, se) = summarize_matrices(&vals);
    Ok(MatrixEstimate { value, se })
}
