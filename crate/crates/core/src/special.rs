//! Univariate and multivariate t / normal densities, distribution functions and
//! quantiles. `Dof::Infinite` routes every function to its normal counterpart.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::DVector;
use statrs::function::{beta, erf, gamma::{gamma_lr, ln_gamma}};

use crate::dof::Dof;
use crate::error::{Result, SutError};
use crate::linalg::{CholFactor, SymPd};

/// `ln c(υ, r)` with `c(υ, r) = Γ((υ+r)/2) / {Γ(υ/2) (π υ)^{r/2}}`.
pub fn ln_c_const(upsilon: f64, r: f64) -> f64 {
    ln_gamma(0.5 * (upsilon + r)) - ln_gamma(0.5 * upsilon) - 0.5 * r * (PI * upsilon).ln()
}

/// Normalising constant of the standard `r`-variate t density with `υ` degrees of freedom.
pub fn c_const(upsilon: f64, r: usize) -> Result<f64> {
    if !(upsilon.is_finite() && upsilon > 0.0) {
        return Err(SutError::NonFiniteInput(format!("c_const upsilon = {upsilon}")));
    }
    Ok(ln_c_const(upsilon, r as f64).exp())
}

/// Log density of `T_d(ξ, Ω, ν)` given the Cholesky factor of `Ω`.
pub fn t_logpdf_chol(x: &DVector<f64>, xi: &DVector<f64>, chol: &CholFactor, nu: Dof) -> f64 {
    let d = x.len() as f64;
    let q = chol.mahalanobis(&(x - xi));
    t_logpdf_from_quad(q, d, chol.log_det(), nu)
}

/// Log density from the Mahalanobis quadratic `q`, dimension `d` and `ln|Ω|`.
pub fn t_logpdf_from_quad(q: f64, d: f64, log_det: f64, nu: Dof) -> f64 {
    match nu {
        Dof::Finite(v) => ln_c_const(v, d) - 0.5 * log_det - 0.5 * (v + d) * (q / v).ln_1p(),
        Dof::Infinite => -0.5 * d * (2.0 * PI).ln() - 0.5 * log_det - 0.5 * q,
    }
}

/// Density of the multivariate t (or normal when `nu` is infinite) at `x`.
pub fn t_pdf(x: &DVector<f64>, xi: &DVector<f64>, omega: &SymPd, nu: Dof) -> Result<f64> {
    if x.len() != omega.dim() || xi.len() != omega.dim() {
        return Err(SutError::DimensionMismatch(format!(
            "t_pdf: x has {} entries, xi {}, omega is {}x{}",
            x.len(),
            xi.len(),
            omega.dim(),
            omega.dim()
        )));
    }
    if x.iter().chain(xi.iter()).any(|v| !v.is_finite()) {
        return Err(SutError::NonFiniteInput("t_pdf argument".into()));
    }
    if !nu.is_valid() {
        return Err(SutError::NonFiniteInput(format!("t_pdf nu = {nu}")));
    }
    Ok(t_logpdf_chol(x, xi, omega.chol(), nu).exp())
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erf::erfc(-x / SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    -SQRT_2 * erf::erfc_inv(2.0 * p)
}

/// Above this many degrees of freedom the univariate t functions use a
/// normal-based expansion instead of the incomplete beta function.
const LARGE_DOF: f64 = 1e5;

/// Standard univariate t (normal when `ν = ∞`) with its dof-dependent
/// constants computed once.
#[derive(Debug, Clone, Copy)]
pub struct StdLaw {
    nu: Dof,
    /// `ln B(1/2, ν/2)`
    ln_beta: f64,
    /// log normalising constant of the density
    ln_c: f64,
}

impl StdLaw {
    pub fn new(nu: Dof) -> Self {
        match nu {
            Dof::Finite(v) => Self {
                nu,
                ln_beta: ln_gamma(0.5) + ln_gamma(0.5 * v) - ln_gamma(0.5 * (v + 1.0)),
                ln_c: ln_c_const(v, 1.0),
            },
            Dof::Infinite => Self {
                nu,
                ln_beta: 0.0,
                ln_c: -0.5 * (2.0 * PI).ln(),
            },
        }
    }

    pub fn dof(&self) -> Dof {
        self.nu
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self.nu {
            Dof::Finite(v) => (self.ln_c - 0.5 * (v + 1.0) * (x * x / v).ln_1p()).exp(),
            Dof::Infinite => norm_pdf(x),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x.is_nan() {
            return f64::NAN;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        match self.nu {
            Dof::Infinite => norm_cdf(x),
            Dof::Finite(v) if v > LARGE_DOF => norm_cdf(large_dof_z(x, v)),
            Dof::Finite(v) => {
                let x2 = x * x;
                // tail = P(T > |x|)
                let tail = if x2 < v {
                    // more accurate branch near the centre
                    0.5 - 0.5 * beta_reg_cached(0.5, 0.5 * v, x2 / (v + x2), self.ln_beta)
                } else {
                    0.5 * beta_reg_cached(0.5 * v, 0.5, v / (v + x2), self.ln_beta)
                };
                if x > 0.0 {
                    1.0 - tail
                } else {
                    tail
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match self.nu {
            Dof::Finite(v) if v <= LARGE_DOF && p > 0.0 && p < 1.0 && p != 0.5 => {
                let lower = p < 0.5;
                let q = if lower { p } else { 1.0 - p };
                match self.polished_lower(q, v) {
                    Some(x) if lower => x,
                    Some(x) => -x,
                    None => quantile_robust(p, self.nu),
                }
            }
            _ => quantile_robust(p, self.nu),
        }
    }

    /// Lower-tail quantile from a closed-form approximation polished by
    /// one Halley step. `None` when the start is too far off for one step.
    fn polished_lower(&self, q: f64, v: f64) -> Option<f64> {
        let start = approx_lower(q, v);
        if !(start.is_finite() && start < 0.0) {
            return None;
        }
        let dens = self.pdf(start);
        if !(dens > 0.0 && dens.is_finite()) {
            return None;
        }
        let u = (self.cdf(start) - q) / dens;
        // f'/f = −(ν+1)x/(ν+x²)
        let slope = -(v + 1.0) * start / (v + start * start);
        let step = u / (1.0 - 0.5 * u * slope);
        let x = start - step;
        (step.abs() <= 1e-5 * start.abs() && x < 0.0).then_some(x)
    }
}

/// Regularized incomplete beta `I_x(a, b)` given `ln B(a, b)`.
fn beta_reg_cached(a: f64, b: f64, x: f64, ln_beta: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let front = (a * x.ln() + b * (-x).ln_1p() - ln_beta).exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - front * beta_cf(b, a, 1.0 - x) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        for aa in [
            m * (b - m) * x / ((qam + m2) * (a + m2)),
            -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2)),
        ] {
            d = 1.0 + aa * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = 1.0 + aa / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            h *= d * c;
        }
        if (d * c - 1.0).abs() <= 1e-16 {
            break;
        }
    }
    h
}

/// Standard univariate t density.
pub fn std_pdf(x: f64, nu: Dof) -> f64 {
    StdLaw::new(nu).pdf(x)
}

/// Lower tail probability of the standard univariate t.
pub fn std_cdf(x: f64, nu: Dof) -> f64 {
    StdLaw::new(nu).cdf(x)
}

/// Normal deviate equivalent to a t deviate with many degrees of freedom
/// (large-ν expansion).
fn large_dof_z(x: f64, v: f64) -> f64 {
    let a = v - 0.5;
    let b = 48.0 * a * a;
    let y = a * (x * x / v).ln_1p();
    let z = (((((-0.4 * y - 3.3) * y - 24.0) * y - 85.5) / (0.8 * y * y + 100.0 + b) + y + 3.0) / b
        + 1.0)
        * y.sqrt();
    if x < 0.0 {
        -z
    } else {
        z
    }
}

/// Quantile of the standard univariate t.
pub fn std_quantile(p: f64, nu: Dof) -> f64 {
    StdLaw::new(nu).quantile(p)
}

/// Quantile by inverse incomplete beta, Newton polish and bisection fallback.
fn quantile_robust(p: f64, nu: Dof) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let v = match nu {
        Dof::Infinite => return norm_quantile(p),
        Dof::Finite(v) => v,
    };
    let lower = p < 0.5;
    let q = if lower { p } else { 1.0 - p };
    if q == 0.5 {
        return 0.0;
    }
    let mut x = if v > LARGE_DOF {
        norm_quantile(q)
    } else {
        let y = beta::inv_beta_reg(0.5 * v, 0.5, 2.0 * q);
        -(v * (1.0 - y) / y).sqrt()
    };
    if !x.is_finite() {
        x = -1e300;
    }
    // Newton polish on the lower tail.
    for _ in 0..3 {
        let f = std_cdf(x, nu) - q;
        let dens = std_pdf(x, nu);
        if dens <= 0.0 || !dens.is_finite() {
            break;
        }
        let step = f / dens;
        let next = x - step;
        if !next.is_finite() || next >= 0.0 {
            break;
        }
        x = next;
        if step.abs() <= 1e-14 * x.abs() {
            break;
        }
    }
    if !((std_cdf(x, nu) - q).abs() <= 1e-10 * q) {
        x = bisect_lower_tail(q, nu);
    }
    if lower {
        x
    } else {
        -x
    }
}

/// Closed-form approximation to the lower-tail t quantile (`q < 1/2`, real `ν`).
fn approx_lower(q: f64, n: f64) -> f64 {
    let p2 = 2.0 * q;
    let t = if n == 1.0 {
        let a = p2 * 0.5 * PI;
        a.cos() / a.sin()
    } else if n == 2.0 {
        (2.0 / (p2 * (2.0 - p2)) - 2.0).sqrt()
    } else {
        let a = 1.0 / (n - 0.5);
        let b = 48.0 / (a * a);
        let mut c = ((20700.0 * a / b - 98.0) * a - 16.0) * a + 96.36;
        let d = ((94.5 / (b + c) - 3.0) / b + 1.0) * (a * PI * 0.5).sqrt() * n;
        let mut y = (d * p2).powf(2.0 / n);
        if y > 0.05 + a {
            let x = norm_quantile(q);
            y = x * x;
            if n < 5.0 {
                c += 0.3 * (n - 4.5) * (x + 0.6);
            }
            c += (((0.05 * d * x - 5.0) * x - 7.0) * x - 2.0) * x + b;
            y = (((((0.4 * y + 6.3) * y + 36.0) * y + 94.5) / c - y - 3.0) / b + 1.0) * x;
            y *= a * y;
            y = if y > 0.002 { y.exp_m1() } else { 0.5 * y * y + y };
        } else {
            y = ((1.0 / (((n + 6.0) / (n * y) - 0.089 * d - 0.822) * (n + 2.0) * 3.0) + 0.5 / (n + 4.0)) * y - 1.0)
                * (n + 1.0)
                / (n + 2.0)
                + 1.0 / y;
        }
        (n * y).sqrt()
    };
    -t
}

/// Solves `F(x) = q` for `q < 1/2` by bisection on `ln(-x)`.
fn bisect_lower_tail(q: f64, nu: Dof) -> f64 {
    let (mut lo, mut hi) = (-40.0_f64, 700.0_f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if std_cdf(-mid.exp(), nu) > q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-15 {
            break;
        }
    }
    -(0.5 * (lo + hi)).exp()
}

/// Quantile of `Gamma(shape a, rate 1)`: solves `P(a, x) = p` by Halley
/// iteration from the Wilson-Hilferty (a > 1) or small-x (a ≤ 1) start.
pub fn gamma_p_inv(a: f64, p: f64) -> f64 {
    if p <= 0.0 {
        return 0.0;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let a1 = a - 1.0;
    let gln = ln_gamma(a);
    let (lna1, afac) = if a > 1.0 {
        let l = a1.ln();
        (l, (a1 * (l - 1.0) - gln).exp())
    } else {
        (0.0, 0.0)
    };
    let mut x = if a > 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        (a * (1.0 - 1.0 / (9.0 * a) - z / (3.0 * a.sqrt())).powi(3)).max(1e-3)
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t {
            (p / t).powf(1.0 / a)
        } else {
            1.0 - (1.0 - (p - t) / (1.0 - t)).ln()
        }
    };
    for _ in 0..20 {
        if x <= 0.0 {
            return 0.0;
        }
        let err = gamma_lr(a, x) - p;
        let dens = if a > 1.0 {
            afac * (-(x - a1) + a1 * (x.ln() - lna1)).exp()
        } else {
            (-x + a1 * x.ln() - gln).exp()
        };
        if dens == 0.0 {
            break;
        }
        let u = err / dens;
        let step = u / (1.0 - 0.5 * (u * (a1 / x - 1.0)).min(1.0));
        x -= step;
        if x <= 0.0 {
            x = 0.5 * (x + step);
        }
        if step.abs() < 1e-13 * x {
            break;
        }
    }
    x
}

/// `E(V^{-k/2})` for `V ~ Gamma(ν/2, rate ν/2)`; infinite when `ν ≤ k`.
pub fn gamma_inverse_moment(nu: Dof, k: u32) -> f64 {
    let kf = k as f64;
    match nu {
        Dof::Infinite => 1.0,
        Dof::Finite(v) if v <= kf => f64::INFINITY,
        Dof::Finite(v) => {
            (0.5 * kf * (0.5 * v).ln() + ln_gamma(0.5 * (v - kf)) - ln_gamma(0.5 * v)).exp()
        }
    }
}
