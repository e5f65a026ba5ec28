//! Exact SUT draws by selection, by the convolution representation and, for
//! `τ = 0`, by the gamma scale mixture of a SUN vector.
//!
//! Every sampler takes an explicit generator. [`sample`] splits a request into
//! fixed-size chunks with one ChaCha8 stream per chunk, so a given seed yields
//! the same batch whatever the thread count.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Gamma, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{symmetrize, CholFactor, SymPd};
use crate::model::Sut;
use crate::params::SutParams;
use crate::qmc::{mvt_cdf, QmcConfig};
use crate::truncated::LatentLaw;

/// Smallest truncation probability the rejection samplers accept.
pub const MIN_ACCEPTANCE: f64 = 1e-6;

const CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Selection,
    Convolution,
    SunMixture,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Selection => "selection",
            Method::Convolution => "convolution",
            Method::SunMixture => "sun-mixture",
        })
    }
}

impl FromStr for Method {
    type Err = SutError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "selection" => Ok(Method::Selection),
            "convolution" => Ok(Method::Convolution),
            "sun-mixture" | "mixture" => Ok(Method::SunMixture),
            other => Err(SutError::Parse(format!("unknown sampling method '{other}'"))),
        }
    }
}

/// `n` draws stored row-wise.
#[derive(Debug, Clone)]
pub struct SampleBatch {
    pub draws: DMatrix<f64>,
    pub method: Method,
    pub seed: u64,
    pub n: usize,
    /// Fraction of proposals kept, for the rejection-based methods.
    pub acceptance: Option<f64>,
}

impl SampleBatch {
    pub fn d(&self) -> usize {
        self.draws.ncols()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.draws.column(j).iter().copied().collect()
    }

    /// Draws projected on `dir`.
    pub fn project(&self, dir: &DVector<f64>) -> Vec<f64> {
        (&self.draws * dir).iter().copied().collect()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# method={}, seed={}, n={}", self.method, self.seed, self.n)?;
        let header: Vec<String> = (1..=self.d()).map(|j| format!("y{j}")).collect();
        writeln!(out, "{}", header.join(","))?;
        for row in self.draws.row_iter() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(out, "{}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Draws of `U* = (U₀ | U₀ + τ > 0)` with their quadratic forms `U*ᵀΓ̄⁻¹U*`.
#[derive(Debug, Clone)]
pub struct LatentDraws {
    pub u_star: DMatrix<f64>,
    pub q_ustar: DVector<f64>,
    pub acceptance: f64,
}

/// Mixing variables `V ~ Gamma(ν/2, ν/2)` and SUN cores `Z₀` behind a mixture batch.
#[derive(Debug, Clone)]
pub struct MixtureDraws {
    pub v: DVector<f64>,
    pub z0: DMatrix<f64>,
}

/// Zero-mean multivariate t (or normal) generator `L z √(ν/χ²_ν)`.
#[derive(Debug, Clone)]
struct TGen {
    lower: DMatrix<f64>,
    chi: Option<(f64, ChiSquared<f64>)>,
}

impl TGen {
    fn new(chol: &CholFactor, nu: Dof) -> Result<Self> {
        let chi = match nu {
            Dof::Finite(v) => Some((
                v,
                ChiSquared::new(v).map_err(|e| SutError::NonFiniteInput(format!("nu = {v}: {e}")))?,
            )),
            Dof::Infinite => None,
        };
        Ok(Self {
            lower: chol.lower().clone(),
            chi,
        })
    }

    fn dim(&self) -> usize {
        self.lower.nrows()
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R, z: &mut DVector<f64>, out: &mut DVector<f64>) {
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        out.gemv(1.0, &self.lower, z, 0.0);
        if let Some((nu, chi)) = &self.chi {
            let c: f64 = chi.sample(rng);
            *out *= (nu / c).sqrt();
        }
    }
}

fn check_acceptance(latent: &LatentLaw) -> Result<f64> {
    let cfg = QmcConfig::default();
    let p = mvt_cdf(&latent.tau, &latent.gamma, latent.nu, &cfg)?;
    if p.value + p.error_estimate < MIN_ACCEPTANCE {
        return Err(SutError::AcceptanceTooLow {
            prob: p.value,
            threshold: MIN_ACCEPTANCE,
        });
    }
    Ok(p.value)
}

fn attempt_cap(n: usize, prob: f64) -> usize {
    ((n as f64 / prob.max(MIN_ACCEPTANCE)) * 20.0) as usize + 10_000
}

fn stalled(prob: f64) -> SutError {
    SutError::AcceptanceTooLow {
        prob,
        threshold: MIN_ACCEPTANCE,
    }
}

/// Rejection sampler for the truncated latent vector.
#[derive(Debug, Clone)]
pub struct LatentSampler {
    latent: LatentLaw,
    gen: TGen,
    prob: f64,
}

impl LatentSampler {
    pub fn new(latent: &LatentLaw) -> Result<Self> {
        let prob = check_acceptance(latent)?;
        Ok(Self {
            gen: TGen::new(latent.gamma.chol(), latent.nu)?,
            latent: latent.clone(),
            prob,
        })
    }

    /// `T_m(τ; Γ̄, ν)` as estimated before sampling.
    pub fn truncation_probability(&self) -> f64 {
        self.prob
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<LatentDraws> {
        let m = self.latent.m();
        let mut u_star = DMatrix::zeros(n, m);
        let mut q = DVector::zeros(n);
        let mut z = DVector::zeros(m);
        let mut u = DVector::zeros(m);
        let (mut kept, mut tried) = (0, 0usize);
        let cap = attempt_cap(n, self.prob);
        while kept < n {
            if tried >= cap {
                return Err(stalled(kept as f64 / tried as f64));
            }
            tried += 1;
            self.gen.draw(rng, &mut z, &mut u);
            if u.iter().zip(self.latent.tau.iter()).all(|(a, t)| a + t > 0.0) {
                u_star.row_mut(kept).copy_from(&u.transpose());
                q[kept] = self.latent.gamma.chol().mahalanobis(&u);
                kept += 1;
            }
        }
        Ok(LatentDraws {
            u_star,
            q_ustar: q,
            acceptance: if tried == 0 { 1.0 } else { kept as f64 / tried as f64 },
        })
    }
}

/// Exact draws from `(U₀ | U₀ + τ > 0)`, `U₀ ~ T_m(0, Γ̄, ν)`, by rejection.
pub fn sample_truncated_t<R: Rng + ?Sized>(latent: &LatentLaw, n: usize, rng: &mut R) -> Result<LatentDraws> {
    LatentSampler::new(latent)?.sample(n, rng)
}

/// Prepared factorisations for the three SUT samplers.
#[derive(Debug, Clone)]
pub struct Sampler {
    sut: Sut,
    joint: TGen,
    latent: Option<LatentSampler>,
    w_gen: Option<TGen>,
    scaled_loading: DMatrix<f64>,
    /// Normal-generator twin used by the mixture route (finite `ν`, `τ = 0`).
    sun: Option<Box<Sampler>>,
}

impl Sampler {
    pub fn new(params: &SutParams) -> Result<Self> {
        let sut = Sut::new(params.clone())?;
        let d = sut.d();
        let m = sut.m();
        let p = sut.params();
        let mut joint = DMatrix::zeros(m + d, m + d);
        let cross = DMatrix::from_diagonal(sut.scale()) * &p.delta;
        joint.view_mut((0, 0), (m, m)).copy_from(&p.gamma_bar);
        joint.view_mut((m, m), (d, d)).copy_from(&p.omega);
        joint.view_mut((m, 0), (d, m)).copy_from(&cross);
        joint.view_mut((0, m), (m, d)).copy_from(&cross.transpose());
        let joint = SymPd::new(symmetrize(&joint))?;
        let joint = TGen::new(joint.chol(), p.nu)?;
        let (latent, w_gen) = match sut.latent() {
            Some(block) => {
                let law = LatentLaw::new(p.tau.clone(), p.gamma_bar.clone(), p.nu)?;
                (
                    Some(LatentSampler::new(&law)?),
                    Some(TGen::new(block.w_scale.chol(), p.nu.plus(m as f64))?),
                )
            }
            None => (None, None),
        };
        let sun = if p.nu.is_finite() && p.tau.iter().all(|&t| t == 0.0) {
            let mut q = p.clone();
            q.nu = Dof::Infinite;
            Some(Box::new(Sampler::new(&q)?))
        } else {
            None
        };
        Ok(Self {
            scaled_loading: sut.loading(),
            sut,
            joint,
            latent,
            w_gen,
            sun,
        })
    }

    pub fn model(&self) -> &Sut {
        &self.sut
    }

    /// Truncation probability `T_m(τ; Γ̄, ν)` (1 when `m = 0`).
    pub fn truncation_probability(&self) -> f64 {
        self.latent.as_ref().map_or(1.0, |l| l.prob)
    }

    /// Draws `(U₀, U₁)` jointly and keeps `ξ + U₁` when `U₀ + τ > 0`.
    pub fn selection<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(DMatrix<f64>, f64)> {
        let p = self.sut.params();
        let (d, m) = (self.sut.d(), self.sut.m());
        let mut out = DMatrix::zeros(n, d);
        let mut z = DVector::zeros(m + d);
        let mut x = DVector::zeros(m + d);
        let (mut kept, mut tried) = (0, 0usize);
        let cap = attempt_cap(n, self.truncation_probability());
        while kept < n {
            if tried >= cap {
                return Err(stalled(kept as f64 / tried as f64));
            }
            tried += 1;
            self.joint.draw(rng, &mut z, &mut x);
            if (0..m).all(|i| x[i] + p.tau[i] > 0.0) {
                for j in 0..d {
                    out[(kept, j)] = p.xi[j] + x[m + j];
                }
                kept += 1;
            }
        }
        let rate = if tried == 0 { 1.0 } else { kept as f64 / tried as f64 };
        Ok((out, rate))
    }

    /// `ξ + ω{ΔΓ̄⁻¹U* + √((ν + Q)/(ν + m)) W*}`.
    pub fn convolution<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(DMatrix<f64>, Option<f64>)> {
        let p = self.sut.params();
        let d = self.sut.d();
        let (Some(latent), Some(w_gen)) = (&self.latent, &self.w_gen) else {
            return Ok((self.symmetric(n, rng), None));
        };
        let lat = latent.sample(n, rng)?;
        let m = self.sut.m() as f64;
        let mut z = DVector::zeros(d);
        let mut w = DVector::zeros(d);
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            w_gen.draw(rng, &mut z, &mut w);
            let factor = match p.nu {
                Dof::Finite(nu) => ((nu + lat.q_ustar[i]) / (nu + m)).sqrt(),
                Dof::Infinite => 1.0,
            };
            let u = lat.u_star.row(i).transpose();
            let y = &p.xi + &self.scaled_loading * u + self.sut.scale().component_mul(&w) * factor;
            out.row_mut(i).copy_from(&y.transpose());
        }
        Ok((out, Some(lat.acceptance)))
    }

    /// `ξ + V^{-1/2} Z₀` with `Z₀` a SUN draw; requires `τ = 0`.
    pub fn sun_mixture<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<(DMatrix<f64>, MixtureDraws, f64)> {
        let p = self.sut.params();
        if p.tau.iter().any(|&t| t != 0.0) {
            return Err(SutError::TauMustBeZero);
        }
        let d = self.sut.d();
        let core = self.sun.as_deref().unwrap_or(self);
        let (mut z0, rate) = core.selection(n, rng)?;
        for mut row in z0.row_iter_mut() {
            for j in 0..d {
                row[j] -= p.xi[j];
            }
        }
        let v: DVector<f64> = match p.nu {
            Dof::Finite(nu) => {
                let g = Gamma::new(0.5 * nu, 2.0 / nu).map_err(|e| SutError::NonFiniteInput(format!("nu = {nu}: {e}")))?;
                DVector::from_fn(n, |_, _| g.sample(rng))
            }
            Dof::Infinite => DVector::from_element(n, 1.0),
        };
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            let s = v[i].sqrt().recip();
            for j in 0..d {
                out[(i, j)] = p.xi[j] + s * z0[(i, j)];
            }
        }
        Ok((out, MixtureDraws { v, z0 }, rate))
    }

    fn symmetric<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.sut.params();
        let d = self.sut.d();
        let mut out = DMatrix::zeros(n, d);
        let mut z = DVector::zeros(self.joint.dim());
        let mut x = DVector::zeros(self.joint.dim());
        for i in 0..n {
            self.joint.draw(rng, &mut z, &mut x);
            for j in 0..d {
                out[(i, j)] = p.xi[j] + x[j];
            }
        }
        out
    }

    /// One method's draws from an explicit generator.
    pub fn draw<R: Rng + ?Sized>(&self, method: Method, n: usize, rng: &mut R) -> Result<(DMatrix<f64>, Option<f64>)> {
        match method {
            Method::Selection => self.selection(n, rng).map(|(y, r)| (y, Some(r))),
            Method::Convolution => self.convolution(n, rng),
            Method::SunMixture => self.sun_mixture(n, rng).map(|(y, _, r)| (y, Some(r))),
        }
    }

    /// Seeded batch generated in parallel chunks, one ChaCha8 stream per chunk.
    pub fn sample(&self, method: Method, n: usize, seed: u64) -> Result<SampleBatch> {
        if n == 0 {
            return Err(SutError::Constraint("sample size must be positive".into()));
        }
        let d = self.sut.d();
        let chunks: Vec<usize> = (0..n.div_ceil(CHUNK)).collect();
        let parts = chunks
            .par_iter()
            .map(|&c| {
                let mut rng = chunk_rng(seed, c);
                let len = CHUNK.min(n - c * CHUNK);
                self.draw(method, len, &mut rng)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut draws = DMatrix::zeros(n, d);
        let mut row = 0;
        let mut acc = (0.0, 0.0);
        for (part, rate) in parts {
            let len = part.nrows();
            draws.view_mut((row, 0), (len, d)).copy_from(&part);
            if let Some(r) = rate {
                acc.0 += r * len as f64;
                acc.1 += len as f64;
            }
            row += len;
        }
        Ok(SampleBatch {
            draws,
            method,
            seed,
            n,
            acceptance: (acc.1 > 0.0).then(|| acc.0 / acc.1),
        })
    }
}

/// Generator for chunk `c` of a seeded request.
pub fn chunk_rng(seed: u64, c: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(c as u64);
    rng
}

/// Selection draws: `(U₀, U₁)` from the joint `T_{m+d}`, kept when `U₀ + τ > 0`.
pub fn sample_selection<R: Rng + ?Sized>(p: &SutParams, n: usize, rng: &mut R) -> Result<SampleBatch> {
    let (draws, rate) = Sampler::new(p)?.selection(n, rng)?;
    Ok(batch(draws, Method::Selection, Some(rate)))
}

/// Convolution draws through the truncated latent vector.
pub fn sample_convolution<R: Rng + ?Sized>(p: &SutParams, n: usize, rng: &mut R) -> Result<SampleBatch> {
    let (draws, rate) = Sampler::new(p)?.convolution(n, rng)?;
    Ok(batch(draws, Method::Convolution, rate))
}

/// Gamma scale mixture of SUN draws; `τ` must be zero.
pub fn sample_sun_mixture<R: Rng + ?Sized>(p: &SutParams, n: usize, rng: &mut R) -> Result<(SampleBatch, MixtureDraws)> {
    if p.tau.iter().any(|&t| t != 0.0) {
        return Err(SutError::TauMustBeZero);
    }
    let (draws, mix, rate) = Sampler::new(p)?.sun_mixture(n, rng)?;
    Ok((batch(draws, Method::SunMixture, Some(rate)), mix))
}

/// Seeded, chunk-parallel batch.
pub fn sample(p: &SutParams, method: Method, n: usize, seed: u64) -> Result<SampleBatch> {
    if method == Method::SunMixture && p.tau.iter().any(|&t| t != 0.0) {
        return Err(SutError::TauMustBeZero);
    }
    Sampler::new(p)?.sample(method, n, seed)
}

fn batch(draws: DMatrix<f64>, method: Method, acceptance: Option<f64>) -> SampleBatch {
    let n = draws.nrows();
    SampleBatch {
        draws,
        method,
        seed: 0,
        n,
        acceptance,
    }
}
