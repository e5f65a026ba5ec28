//! Randomised quasi-Monte-Carlo engine for multivariate t and normal box
//! probabilities, using the separation-of-variables transform on a shifted
//! Richtmyer lattice.
//!
//! Each randomisation uses an independent uniform shift drawn from a ChaCha
//! stream keyed by `(seed, replicate)`, so results do not depend on how the
//! replicates are scheduled across threads.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{cholesky, SymPd};
use crate::special::StdLaw;

/// Lattice size and randomisation settings shared by every QMC integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QmcConfig {
    pub points: usize,
    pub randomizations: usize,
    pub seed: u64,
}

impl Default for QmcConfig {
    fn default() -> Self {
        Self {
            points: 1 << 13,
            randomizations: 8,
            seed: 0x0053_7574_4469_7374,
        }
    }
}

impl QmcConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_points(mut self, points: usize) -> Self {
        self.points = points;
        self
    }

    pub fn total_points(&self) -> usize {
        self.points * self.randomizations
    }
}

/// Probability estimate with a 3σ randomised-QMC error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CdfResult {
    pub value: f64,
    pub error_estimate: f64,
    pub points_used: usize,
}

impl CdfResult {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            error_estimate: 0.0,
            points_used: 0,
        }
    }
}

/// Mean and standard error of replicate estimates.
pub fn summarize(values: &[f64]) -> (f64, f64) {
    let r = values.len() as f64;
    let mean = values.iter().sum::<f64>() / r;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

const PRIMES: [u32; 48] = [
    2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97,
    101, 103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167, 173, 179, 181, 191, 193,
    197, 199, 211, 223,
];

/// Richtmyer lattice generators `frac(sqrt(p_j))`; falls back to a golden-ratio
/// recursion beyond the tabulated primes.
pub(crate) fn lattice_generators(dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|j| match PRIMES.get(j) {
            Some(&p) => (p as f64).sqrt().fract(),
            None => ((j as f64 + 1.0) * 0.618_033_988_749_894_9).fract(),
        })
        .collect()
}

/// Per-replicate uniform shifts, deterministic in `(seed, replicate)`.
pub(crate) fn replicate_shift(seed: u64, replicate: usize, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate as u64 + 1);
    (0..dim).map(|_| rng.random::<f64>()).collect()
}

/// Fills `out` with the tent-transformed `i`-th shifted lattice point.
#[inline]
pub(crate) fn lattice_point(i: usize, gens: &[f64], shift: &[f64], out: &mut [f64]) {
    let fi = (i + 1) as f64;
    for ((o, g), s) in out.iter_mut().zip(gens).zip(shift) {
        let x = (fi * g + s).fract();
        *o = (2.0 * x - 1.0).abs();
    }
}

/// Runs `f` over every randomisation in parallel; the result vector is ordered by replicate.
pub(crate) fn over_replicates<T, F>(cfg: &QmcConfig, dim: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&[f64], &[f64]) -> T + Sync,
{
    let gens = lattice_generators(dim);
    (0..cfg.randomizations)
        .into_par_iter()
        .map(|r| {
            let shift = replicate_shift(cfg.seed, r, dim);
            f(&gens, &shift)
        })
        .collect()
}

/// Probability mass of `(lo, hi)` under the standard univariate law and a
/// sampler mapping `w ∈ [0,1]` into that interval. Intervals on the positive
/// side are reflected so the arithmetic happens in the accurate lower tail.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Interval {
    f_lo: f64,
    mass: f64,
    flipped: bool,
}

impl Interval {
    #[inline]
    pub(crate) fn new(lo: f64, hi: f64, law: &StdLaw) -> Self {
        let flipped = lo > -hi;
        let (lo, hi) = if flipped { (-hi, -lo) } else { (lo, hi) };
        let f_lo = law.cdf(lo);
        let f_hi = law.cdf(hi);
        Self {
            f_lo,
            mass: (f_hi - f_lo).max(0.0),
            flipped,
        }
    }

    #[inline]
    pub(crate) fn mass(&self) -> f64 {
        self.mass
    }

    #[inline]
    pub(crate) fn sample(&self, w: f64, law: &StdLaw) -> f64 {
        let p = (self.f_lo + w * self.mass).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0);
        let z = law.quantile(p);
        if self.flipped {
            -z
        } else {
            z
        }
    }
}

/// Box `lower < X < upper` for `X ~ T_m(0, Σ, ν)` prepared for separation of variables.
pub(crate) struct BoxProblem {
    pub(crate) lower: Vec<f64>,
    pub(crate) upper: Vec<f64>,
    pub(crate) chol: DMatrix<f64>,
    /// `order[k]` = original index of the k-th integration variable.
    pub(crate) order: Vec<usize>,
    pub(crate) nu: Dof,
    /// `laws[k]` has `ν + k` degrees of freedom.
    laws: Vec<StdLaw>,
    /// Interval of the first variable at unit scale; it does not depend on `w`.
    first: Option<Interval>,
}

impl BoxProblem {
    pub(crate) fn new(
        lower: &DVector<f64>,
        upper: &DVector<f64>,
        sigma: &DMatrix<f64>,
        nu: Dof,
    ) -> Result<Self> {
        let m = sigma.nrows();
        if lower.len() != m || upper.len() != m || sigma.ncols() != m {
            return Err(SutError::DimensionMismatch(format!(
                "box of length {}/{} against {}x{} scale",
                lower.len(),
                upper.len(),
                m,
                sigma.ncols()
            )));
        }
        if lower.iter().chain(upper.iter()).any(|v| v.is_nan()) {
            return Err(SutError::NonFiniteInput("NaN integration limit".into()));
        }
        if !nu.is_valid() {
            return Err(SutError::NonFiniteInput(format!("degrees of freedom {nu}")));
        }
        // Most restrictive variables first.
        let sd: Vec<f64> = (0..m).map(|i| sigma[(i, i)].sqrt()).collect();
        let mut order: Vec<usize> = (0..m).collect();
        let laws: Vec<StdLaw> = (0..m).map(|k| StdLaw::new(nu.plus(k as f64))).collect();
        let base = StdLaw::new(nu);
        let marg: Vec<f64> = (0..m)
            .map(|i| Interval::new(lower[i] / sd[i], upper[i] / sd[i], &base).mass())
            .collect();
        order.sort_by(|&a, &b| marg[a].partial_cmp(&marg[b]).unwrap_or(std::cmp::Ordering::Equal));
        let permuted = DMatrix::from_fn(m, m, |i, j| sigma[(order[i], order[j])]);
        let chol = cholesky(&permuted)?.into_lower();
        let lower: Vec<f64> = order.iter().map(|&i| lower[i]).collect();
        let upper: Vec<f64> = order.iter().map(|&i| upper[i]).collect();
        let first = (m > 0).then(|| Interval::new(lower[0] / chol[(0, 0)], upper[0] / chol[(0, 0)], &base));
        Ok(Self {
            lower,
            upper,
            chol,
            order,
            nu,
            laws,
            first,
        })
    }

    pub(crate) fn dim(&self) -> usize {
        self.order.len()
    }

    /// Separation-of-variables weight at `w` (length ≥ dim-1 for probabilities,
    /// ≥ dim when `sample` is requested). When `sample` is given it receives the
    /// point `X` in the original variable order.
    pub(crate) fn weight(&self, w: &[f64], y: &mut [f64], sample: Option<&mut [f64]>) -> f64 {
        self.weight_scaled(w, y, sample, 1.0)
    }

    /// As [`weight`](Self::weight) with both limits multiplied by `s > 0`.
    pub(crate) fn weight_scaled(&self, w: &[f64], y: &mut [f64], sample: Option<&mut [f64]>, s: f64) -> f64 {
        let m = self.dim();
        let want_sample = sample.is_some();
        let mut weight = 1.0;
        let mut ssq = 0.0;
        for k in 0..m {
            let mut c = 0.0;
            for j in 0..k {
                c += self.chol[(k, j)] * y[j];
            }
            let law = &self.laws[k];
            let scale = match self.nu {
                Dof::Finite(v) => ((v + ssq) / (v + k as f64)).sqrt(),
                Dof::Infinite => 1.0,
            };
            let iv = match self.first {
                Some(iv) if k == 0 && s == 1.0 => iv,
                _ => {
                    let denom = self.chol[(k, k)] * scale;
                    Interval::new((self.lower[k] * s - c) / denom, (self.upper[k] * s - c) / denom, law)
                }
            };
            weight *= iv.mass();
            if weight <= 0.0 {
                return 0.0;
            }
            if k + 1 < m || want_sample {
                let z = iv.sample(w[k], law);
                y[k] = z * scale;
                ssq += y[k] * y[k];
            }
        }
        if let Some(out) = sample {
            for k in 0..m {
                let mut x = 0.0;
                for j in 0..=k {
                    x += self.chol[(k, j)] * y[j];
                }
                out[self.order[k]] = x;
            }
        }
        weight
    }
}

impl BoxProblem {
    /// Visits the separation-of-variables point at `w` for a normal box. The
    /// last variable is integrated by a three-node Gauss rule for the standard
    /// normal restricted to its interval, exact for polynomials of degree ≤ 5;
    /// `f` receives `(weight, y, x)` per node, with `y` the standardized
    /// variables and `x` the point in the original order. Returns the total
    /// weight.
    pub(crate) fn visit_scaled<F>(&self, w: &[f64], s: f64, y: &mut [f64], x: &mut [f64], mut f: F) -> f64
    where
        F: FnMut(f64, &[f64], &[f64]),
    {
        debug_assert!(!self.nu.is_finite());
        let m = self.dim();
        let mut weight = 1.0;
        for k in 0..m {
            let mut c = 0.0;
            for j in 0..k {
                c += self.chol[(k, j)] * y[j];
            }
            let denom = self.chol[(k, k)];
            let (lo, hi) = ((self.lower[k] * s - c) / denom, (self.upper[k] * s - c) / denom);
            let iv = Interval::new(lo, hi, &self.laws[k]);
            weight *= iv.mass();
            if weight <= 0.0 {
                return 0.0;
            }
            if k + 1 < m {
                y[k] = iv.sample(w[k], &self.laws[k]);
                continue;
            }
            match gauss_rule_truncated(lo, hi, iv.mass()) {
                Some(rule) => {
                    for (node, nw) in rule {
                        y[k] = node;
                        self.fill_sample(y, x);
                        f(weight * nw, y, x);
                    }
                }
                None => {
                    y[k] = iv.sample(w[k], &self.laws[k]);
                    self.fill_sample(y, x);
                    f(weight, y, x);
                }
            }
        }
        weight
    }

    fn fill_sample(&self, y: &[f64], out: &mut [f64]) {
        for k in 0..self.dim() {
            let mut v = 0.0;
            for j in 0..=k {
                v += self.chol[(k, j)] * y[j];
            }
            out[self.order[k]] = v;
        }
    }
}

/// Three-node Gauss rule for the standard normal restricted to `(a, b)` with
/// mass `mass`; weights sum to one. `None` for intervals too narrow for a
/// stable construction, where a single point suffices.
pub(crate) fn gauss_rule_truncated(a: f64, b: f64, mass: f64) -> Option<[(f64, f64); 3]> {
    if !(b - a > 0.05) || !(mass > 0.0) {
        return None;
    }
    // Work on the side where the interval sits mostly below zero.
    let flip = a > -b;
    let (a, b) = if flip { (-b, -a) } else { (a, b) };
    let ln_mass = mass.ln();
    let ratio = |x: f64| {
        if x.is_finite() {
            (-0.5 * x * x - 0.5 * (2.0 * std::f64::consts::PI).ln() - ln_mass).exp()
        } else {
            0.0
        }
    };
    let (ta, tb) = (ratio(a), ratio(b));
    let pw = |x: f64, t: f64, k: i32| if t == 0.0 { 0.0 } else { x.powi(k) * t };
    let mut r = [0.0; 6];
    r[0] = 1.0;
    r[1] = ta - tb;
    for k in 2..6 {
        r[k] = (k as f64 - 1.0) * r[k - 2] + pw(a, ta, k as i32 - 1) - pw(b, tb, k as i32 - 1);
    }
    let mu = r[1];
    // Central moments.
    let binom = [[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], [1.0, 1.0, 0.0, 0.0, 0.0, 0.0], [1.0, 2.0, 1.0, 0.0, 0.0, 0.0], [1.0, 3.0, 3.0, 1.0, 0.0, 0.0], [1.0, 4.0, 6.0, 4.0, 1.0, 0.0], [1.0, 5.0, 10.0, 10.0, 5.0, 1.0]];
    let mut c = [0.0; 6];
    for k in 0..6 {
        c[k] = (0..=k).map(|j| binom[k][j] * r[j] * (-mu).powi((k - j) as i32)).sum();
    }
    c[0] = 1.0;
    c[1] = 0.0;
    // Chebyshev algorithm for the recurrence coefficients.
    let n = 3;
    let mut alpha = [0.0; 3];
    let mut beta = [0.0; 3];
    let mut prev = [0.0; 6];
    let mut cur = c;
    alpha[0] = cur[1] / cur[0];
    beta[0] = cur[0];
    for k in 1..n {
        let mut next = [0.0; 6];
        for l in k..(2 * n - k) {
            next[l] = cur[l + 1] - alpha[k - 1] * cur[l] - beta[k - 1] * prev[l];
        }
        if !(next[k] > 0.0) || !(cur[k - 1] > 0.0) {
            return None;
        }
        alpha[k] = next[k + 1] / next[k] - cur[k] / cur[k - 1];
        beta[k] = next[k] / cur[k - 1];
        prev = cur;
        cur = next;
    }
    if !(beta[1] > 0.0 && beta[2] > 0.0) || alpha.iter().chain(&beta).any(|v| !v.is_finite()) {
        return None;
    }
    let jac = nalgebra::Matrix3::new(
        alpha[0],
        beta[1].sqrt(),
        0.0,
        beta[1].sqrt(),
        alpha[1],
        beta[2].sqrt(),
        0.0,
        beta[2].sqrt(),
        alpha[2],
    );
    let eig = jac.symmetric_eigen();
    let mut rule = [(0.0, 0.0); 3];
    for i in 0..3 {
        let node = eig.eigenvalues[i] + mu;
        let wt = eig.eigenvectors[(0, i)].powi(2);
        if !(node >= a - 1e-9 * (1.0 + a.abs()) && node <= b + 1e-9 * (1.0 + b.abs())) || !wt.is_finite() {
            return None;
        }
        rule[i] = (if flip { -node } else { node }, wt);
    }
    Some(rule)
}

/// Per-replicate estimates of `P(lower < X < upper)`.
pub fn mvt_box_replicates(
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    sigma: &SymPd,
    nu: Dof,
    cfg: &QmcConfig,
) -> Result<Vec<f64>> {
    let problem = BoxProblem::new(lower, upper, sigma.matrix(), nu)?;
    let m = problem.dim();
    if m == 1 {
        let sd = sigma.matrix()[(0, 0)].sqrt();
        let p = Interval::new(lower[0] / sd, upper[0] / sd, &StdLaw::new(nu)).mass();
        return Ok(vec![p; cfg.randomizations.max(1)]);
    }
    if lower.iter().all(|l| *l == f64::NEG_INFINITY) && upper.iter().all(|u| *u == f64::INFINITY) {
        return Ok(vec![1.0; cfg.randomizations.max(1)]);
    }
    let dim = m - 1;
    Ok(over_replicates(cfg, dim, |gens, shift| {
        let mut w = vec![0.0; dim];
        let mut y = vec![0.0; m];
        let mut acc = 0.0;
        for i in 0..cfg.points {
            lattice_point(i, gens, shift, &mut w);
            acc += problem.weight(&w, &mut y, None);
        }
        acc / cfg.points as f64
    }))
}

fn finish(values: &[f64], cfg: &QmcConfig, exact: bool) -> CdfResult {
    let (mean, se) = summarize(values);
    let err = if exact { 0.0 } else { 3.0 * se };
    let clamped = mean.clamp(0.0, 1.0);
    if (clamped - mean).abs() > err {
        log::warn!("QMC probability {mean:e} clamped to [0,1] beyond its error {err:e}");
    }
    CdfResult {
        value: clamped,
        error_estimate: err,
        points_used: if exact { 0 } else { cfg.total_points() },
    }
}

/// `P(lower < X < upper)` for `X ~ T_m(0, Σ, ν)` (normal when `ν = ∞`).
pub fn mvt_box(
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    sigma: &SymPd,
    nu: Dof,
    cfg: &QmcConfig,
) -> Result<CdfResult> {
    let reps = mvt_box_replicates(lower, upper, sigma, nu, cfg)?;
    Ok(finish(&reps, cfg, sigma.dim() == 1))
}

/// Multivariate t (or normal) distribution function `T_m(upper; Σ, ν)`.
pub fn mvt_cdf(upper: &DVector<f64>, sigma: &SymPd, nu: Dof, cfg: &QmcConfig) -> Result<CdfResult> {
    if upper.iter().any(|v| v.is_nan()) {
        return Err(SutError::NonFiniteInput("NaN upper limit".into()));
    }
    let lower = DVector::from_element(upper.len(), f64::NEG_INFINITY);
    mvt_box(&lower, upper, sigma, nu, cfg)
}

/// Per-replicate values of [`mvt_cdf`], for ratio estimators that need
/// replicate-level error propagation.
pub fn mvt_cdf_replicates(
    upper: &DVector<f64>,
    sigma: &SymPd,
    nu: Dof,
    cfg: &QmcConfig,
) -> Result<Vec<f64>> {
    let lower = DVector::from_element(upper.len(), f64::NEG_INFINITY);
    mvt_box_replicates(&lower, upper, sigma, nu, cfg)
}
