//! Monte-Carlo summaries of an `n x d` draw matrix with batch-means standard errors.

use nalgebra::{DMatrix, DVector};

/// Number of batches used for standard errors.
pub const BATCHES: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
}

/// Full-sample statistic with the spread of the same statistic over
/// contiguous batches as its standard error.
pub fn batch_means<F>(draws: &DMatrix<f64>, f: F) -> Vec<Estimate>
where
    F: Fn(&DMatrix<f64>) -> Vec<f64>,
{
    let n = draws.nrows();
    assert!(n >= 2 * BATCHES, "need at least {} draws", 2 * BATCHES);
    let full = f(draws);
    let size = n / BATCHES;
    let per: Vec<Vec<f64>> = (0..BATCHES)
        .map(|b| f(&draws.rows(b * size, size).into_owned()))
        .collect();
    let bf = BATCHES as f64;
    full.iter()
        .enumerate()
        .map(|(k, &value)| {
            let mean = per.iter().map(|v| v[k]).sum::<f64>() / bf;
            let var = per.iter().map(|v| (v[k] - mean).powi(2)).sum::<f64>() / (bf - 1.0);
            Estimate { value, se: (var / bf).sqrt() }
        })
        .collect()
}

fn col_means(x: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_fn(x.ncols(), |j, _| x.column(j).mean())
}

fn centered(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mu = col_means(x);
    DMatrix::from_fn(x.nrows(), x.ncols(), |i, j| x[(i, j)] - mu[j])
}

pub fn mean(draws: &DMatrix<f64>) -> Vec<Estimate> {
    let n = draws.nrows() as f64;
    (0..draws.ncols())
        .map(|j| {
            let c = draws.column(j);
            let m = c.mean();
            let v = c.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
            Estimate { value: m, se: (v / n).sqrt() }
        })
        .collect()
}

fn cov_flat(x: &DMatrix<f64>) -> Vec<f64> {
    let c = centered(x);
    let n = x.nrows() as f64;
    let s = c.transpose() * &c / n;
    s.iter().copied().collect()
}

/// Covariance entries in column-major order.
pub fn covariance(draws: &DMatrix<f64>) -> Vec<Estimate> {
    batch_means(draws, cov_flat)
}

fn unflatten(rows: usize, v: &[Estimate]) -> (DMatrix<f64>, DMatrix<f64>) {
    let cols = v.len() / rows;
    (
        DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j].value),
        DMatrix::from_fn(rows, cols, |i, j| v[i * cols + j].se),
    )
}

fn mu3_flat(x: &DMatrix<f64>) -> Vec<f64> {
    let c = centered(x);
    let (n, d) = c.shape();
    let mut out = vec![0.0; d * d * d];
    for r in 0..n {
        let row = c.row(r);
        for i in 0..d {
            for j in 0..d {
                let a = row[i] * row[j];
                for k in 0..d {
                    out[(i * d + j) * d + k] += a * row[k];
                }
            }
        }
    }
    out.iter().map(|v| v / n as f64).collect()
}

fn mu4_flat(x: &DMatrix<f64>) -> Vec<f64> {
    let c = centered(x);
    let (n, d) = c.shape();
    let dd = d * d;
    let mut out = vec![0.0; dd * dd];
    for r in 0..n {
        let row = c.row(r);
        for a in 0..dd {
            let pa = row[a / d] * row[a % d];
            for b in 0..dd {
                out[a * dd + b] += pa * row[b / d] * row[b % d];
            }
        }
    }
    out.iter().map(|v| v / n as f64).collect()
}

/// Third central moments laid out as a `d² x d` matrix, entry `(i·d+j, k)`.
pub fn central_mu3(draws: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = draws.ncols();
    unflatten(d * d, &batch_means(draws, mu3_flat))
}

/// Fourth central moments laid out as a `d² x d²` matrix, entry `(i·d+j, k·d+l)`.
pub fn central_mu4(draws: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let d = draws.ncols();
    unflatten(d * d, &batch_means(draws, mu4_flat))
}

/// Raw moment `E(Y_i Y_j ...)` for the listed coordinates.
pub fn raw_moment(draws: &DMatrix<f64>, idx: &[usize]) -> Estimate {
    batch_means(draws, |x| {
        let n = x.nrows() as f64;
        vec![(0..x.nrows()).map(|r| idx.iter().map(|&i| x[(r, i)]).product::<f64>()).sum::<f64>() / n]
    })[0]
}

fn mardia_pair(x: &DMatrix<f64>) -> Vec<f64> {
    let c = centered(x);
    let (n, d) = c.shape();
    let s = c.transpose() * &c / n as f64;
    let l = s.cholesky().expect("sample covariance must be positive definite");
    let z = l.l().solve_lower_triangular(&c.transpose()).expect("triangular solve");
    let zt = z.transpose();
    let m3 = mu3_flat(&zt);
    let b1: f64 = m3.iter().map(|v| v * v).sum();
    let b2 = (0..n).map(|r| zt.row(r).norm_squared().powi(2)).sum::<f64>() / n as f64;
    let df = d as f64;
    vec![b1, b2 - df * (df + 2.0)]
}

/// Sample Mardia skewness `γ₁` and kurtosis excess `γ₂ = β₂ − d(d+2)`.
pub fn mardia(draws: &DMatrix<f64>) -> (Estimate, Estimate) {
    let v = batch_means(draws, mardia_pair);
    (v[0], v[1])
}

/// Empirical distribution function of column `j` at `x` with binomial error.
pub fn ecdf(draws: &DMatrix<f64>, j: usize, x: f64) -> Estimate {
    let n = draws.nrows() as f64;
    let p = draws.column(j).iter().filter(|&&v| v <= x).count() as f64 / n;
    Estimate { value: p, se: (p * (1.0 - p) / n).sqrt() }
}

/// `draws · dir` for each row.
pub fn project(draws: &DMatrix<f64>, dir: &DVector<f64>) -> Vec<f64> {
    (draws * dir).iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{rngs::StdRng, Rng, SeedableRng};
    use rand_distr::StandardNormal;

    #[test]
    fn normal_draws() {
        let mut rng = StdRng::seed_from_u64(3);
        let x = DMatrix::from_fn(200_000, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        for e in mean(&x) {
            assert!(e.value.abs() < 4.0 * e.se);
        }
        let (g1, g2) = mardia(&x);
        assert!(g1.value < 4.0 * g1.se + 1e-3);
        assert!(g2.value.abs() < 4.0 * g2.se);
        let f = ecdf(&x, 0, 0.0);
        assert!((f.value - 0.5).abs() < 3.0 * f.se);
    }
}
