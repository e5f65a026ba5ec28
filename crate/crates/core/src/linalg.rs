//! Dense linear-algebra helpers: Cholesky with an explicit pivot threshold,
//! covariance/correlation splitting and the Kronecker/commutation toolkit used
//! for third and fourth moments.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SutError};

/// Relative pivot threshold below which a matrix is declared not positive definite.
pub const PD_PIVOT_TOL: f64 = 1e-12;

/// Relative tolerance on symmetry.
pub const SYM_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor `L` with `L Lᵀ = A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFactor {
    lower: DMatrix<f64>,
}

impl CholFactor {
    pub fn lower(&self) -> &DMatrix<f64> {
        &self.lower
    }

    pub fn dim(&self) -> usize {
        self.lower.nrows()
    }

    pub fn into_lower(self) -> DMatrix<f64> {
        self.lower
    }

    /// Solves `L x = b` by forward substitution.
    pub fn solve_lower(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = b.clone();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lower[(i, j)] * x[j];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves `Lᵀ x = b` by back substitution.
    pub fn solve_upper(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.dim();
        let mut x = b.clone();
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lower[(j, i)] * x[j];
            }
            x[i] = s / self.lower[(i, i)];
        }
        x
    }

    /// Solves `A x = b`.
    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        self.solve_upper(&self.solve_lower(b))
    }

    /// Solves `A X = B` column by column.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            let col = self.solve(&b.column(j).into_owned());
            out.set_column(j, &col);
        }
        out
    }

    /// Solves `Lᵀ X = B` column by column.
    pub fn solve_upper_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(b.nrows(), b.ncols());
        for j in 0..b.ncols() {
            out.set_column(j, &self.solve_upper(&b.column(j).into_owned()));
        }
        out
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        let inv = self.solve_mat(&DMatrix::identity(self.dim(), self.dim()));
        symmetrize(&inv)
    }

    /// `xᵀ A⁻¹ x`.
    pub fn mahalanobis(&self, x: &DVector<f64>) -> f64 {
        self.solve_lower(x).norm_squared()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.lower.diagonal().iter().map(|v| v.ln()).sum::<f64>()
    }

    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.lower * self.lower.transpose()
    }
}

/// Cholesky decomposition of a symmetric matrix.
///
/// A pivot `a_kk - sum_j l_kj^2` at or below `1e-12 * max_i a_ii` is reported as
/// [`SutError::NotPositiveDefinite`] with the zero-based pivot index; nothing is
/// regularised.
pub fn cholesky(a: &DMatrix<f64>) -> Result<CholFactor> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(SutError::DimensionMismatch(format!(
            "cholesky of non-square {}x{} matrix",
            n,
            a.ncols()
        )));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(SutError::NonFiniteInput("matrix entry".into()));
    }
    let max_diag = a.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tol = PD_PIVOT_TOL * max_diag.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for j in 0..n {
        let mut pivot = a[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > tol) {
            return Err(SutError::NotPositiveDefinite { pivot: j });
        }
        let ljj = pivot.sqrt();
        l[(j, j)] = ljj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / ljj;
        }
    }
    Ok(CholFactor { lower: l })
}

/// Largest absolute asymmetry relative to the largest entry.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let mut worst = 0.0_f64;
    for i in 0..a.nrows() {
        for j in 0..i {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst / scale
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone, PartialEq)]
pub struct SymPd {
    mat: DMatrix<f64>,
    chol: CholFactor,
}

impl SymPd {
    pub fn new(mat: DMatrix<f64>) -> Result<Self> {
        if mat.nrows() != mat.ncols() || mat.nrows() == 0 {
            return Err(SutError::DimensionMismatch(format!(
                "expected non-empty square matrix, got {}x{}",
                mat.nrows(),
                mat.ncols()
            )));
        }
        let asym = asymmetry(&mat);
        if asym > SYM_TOL {
            return Err(SutError::NotSymmetric { asymmetry: asym });
        }
        let mat = symmetrize(&mat);
        let chol = cholesky(&mat)?;
        Ok(Self { mat, chol })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(DMatrix::identity(d, d)).expect("identity is PD")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.mat
    }

    pub fn chol(&self) -> &CholFactor {
        &self.chol
    }

    pub fn dim(&self) -> usize {
        self.mat.nrows()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }
}

/// Splits `Ω = ω Ω̄ ω` into the correlation matrix `Ω̄` and the scale vector
/// `ω = diag(Ω)^{1/2}`.
pub fn cov_to_cor(omega: &SymPd) -> Result<(SymPd, DVector<f64>)> {
    let m = omega.matrix();
    let scale = m.diagonal().map(f64::sqrt);
    let mut bar = m.clone();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            bar[(i, j)] = if i == j { 1.0 } else { m[(i, j)] / (scale[i] * scale[j]) };
        }
    }
    Ok((SymPd::new(bar)?, scale))
}

pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a.kronecker(b)
}

/// Column-stacking `vec` operator.
pub fn vec(a: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(a.as_slice())
}

/// Inverse of [`vec`] for a `rows x cols` matrix.
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(SutError::DimensionMismatch(format!(
            "cannot reshape length {} into {}x{}",
            v.len(),
            rows,
            cols
        )));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Commutation matrix `K_d` (d² x d²) with `K_d vec(A) = vec(Aᵀ)`.
pub fn commutation(d: usize) -> DMatrix<f64> {
    let mut k = DMatrix::zeros(d * d, d * d);
    for i in 0..d {
        for j in 0..d {
            // vec(A)[i + j d] = A_ij ; vec(Aᵀ)[j + i d] = A_ij
            k[(j + i * d, i + j * d)] = 1.0;
        }
    }
    k
}

/// Numerical rank from a column-pivoted QR with threshold `1e-10 * ‖a‖_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let tol = 1e-10 * a.amax().max(f64::MIN_POSITIVE);
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    (0..r.nrows().min(r.ncols()))
        .filter(|&i| r[(i, i)].abs() > tol)
        .count()
}

/// Orthonormal basis (as rows) of the left null space of `a` (vectors `c` with `cᵀ a = 0`).
///
/// Rows are ordered by the SVD, which makes the choice deterministic.
pub fn left_null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    if a.ncols() == 0 {
        return DMatrix::identity(n, n);
    }
    // Left singular vectors of a with zero singular value, via the full SVD of a aᵀ.
    let gram = a * a.transpose();
    let svd = nalgebra::SVD::new(gram, true, false);
    let u = svd.u.expect("requested U");
    let tol = 1e-10 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&x, &y| {
        svd.singular_values[y]
            .partial_cmp(&svd.singular_values[x])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let rows: Vec<_> = idx
        .into_iter()
        .filter(|&i| svd.singular_values[i] <= tol)
        .map(|i| u.column(i).transpose())
        .collect();
    if rows.is_empty() {
        DMatrix::zeros(0, n)
    } else {
        DMatrix::from_rows(&rows)
    }
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).amax()
}
