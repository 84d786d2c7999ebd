//! Dense matrix primitives and the spectral routines used throughout the crate.
//!
//! [`Matrix`] is a thin wrapper around a column-major `nalgebra::DMatrix<f64>`
//! that guarantees a non-empty shape and finite entries. The spectral routines
//! are power iterations on `M Mᵀ`, plus a one-sided Jacobi SVD that serves both
//! as the dense reference decomposition and as the engine behind
//! [`clip_singular_values`].

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

/// Default relative residual tolerance for power iteration.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Default iteration cap for power iteration.
pub const DEFAULT_MAX_ITER: usize = 10_000;

const JACOBI_MAX_SWEEPS: usize = 80;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("matrix must be at least 1x1, got {rows}x{cols}")]
    EmptyShape { rows: usize, cols: usize },
    #[error("expected {expected} entries for a {rows}x{cols} matrix, got {actual}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("power iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged {
        iterations: usize,
        residual: f64,
        last: SpectralPair,
    },
    #[error("jacobi svd did not converge in {0} sweeps")]
    SvdNotConverged(usize),
}

pub type Result<T> = std::result::Result<T, NumericsError>;

/// Dense real matrix with at least one row and column and finite entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix(DMatrix<f64>);

impl Matrix {
    /// Builds a matrix from column-major data.
    pub fn from_column_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(NumericsError::EmptyShape { rows, cols });
        }
        if data.len() != rows * cols {
            return Err(NumericsError::ShapeMismatch {
                rows,
                cols,
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_vec(rows, cols, data))
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(NumericsError::EmptyShape {
                rows: nrows,
                cols: ncols,
            });
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
            return Err(NumericsError::ShapeMismatch {
                rows: nrows,
                cols: ncols,
                expected: ncols,
                actual: bad.len(),
            });
        }
        Self::from_dmatrix(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }

    /// Builds a matrix whose columns are the given vectors.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self> {
        let ncols = columns.len();
        let nrows = columns.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 {
            return Err(NumericsError::EmptyShape {
                rows: nrows,
                cols: ncols,
            });
        }
        let mut data = Vec::with_capacity(nrows * ncols);
        for c in columns {
            if c.len() != nrows {
                return Err(NumericsError::ShapeMismatch {
                    rows: nrows,
                    cols: ncols,
                    expected: nrows,
                    actual: c.len(),
                });
            }
            data.extend_from_slice(c);
        }
        Self::from_column_major(nrows, ncols, data)
    }

    /// Wraps an nalgebra matrix after validating shape and finiteness.
    pub fn from_dmatrix(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(NumericsError::EmptyShape {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if let Some(idx) = m.iter().position(|x| !x.is_finite()) {
            return Err(NumericsError::NonFinite {
                row: idx % m.nrows(),
                col: idx / m.nrows(),
            });
        }
        Ok(Matrix(m))
    }

    /// Wraps without checking. Callers guarantee the invariants.
    pub(crate) fn wrap(m: DMatrix<f64>) -> Self {
        debug_assert!(m.nrows() > 0 && m.ncols() > 0);
        Matrix(m)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix must be at least 1x1");
        Matrix(DMatrix::zeros(rows, cols))
    }

    pub fn identity(n: usize) -> Self {
        assert!(n > 0, "matrix must be at least 1x1");
        Matrix(DMatrix::identity(n, n))
    }

    /// Square diagonal matrix.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        let n = diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, d) in diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        Self::from_dmatrix(m)
    }

    pub fn rows(&self) -> usize {
        self.0.nrows()
    }

    pub fn cols(&self) -> usize {
        self.0.ncols()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.0[(row, col)]
    }

    /// Column `j` as a contiguous slice.
    pub fn column(&self, j: usize) -> &[f64] {
        let r = self.rows();
        &self.0.as_slice()[j * r..(j + 1) * r]
    }

    /// All entries in column-major order.
    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn inner(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.0
    }

    /// Row-major nested representation, handy for bindings and debugging.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows())
            .map(|i| (0..self.cols()).map(|j| self.0[(i, j)]).collect())
            .collect()
    }

    pub fn transpose(&self) -> Matrix {
        Matrix(self.0.transpose())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Euclidean norm of every column.
    pub fn column_norms(&self) -> Vec<f64> {
        (0..self.cols()).map(|j| norm(self.column(j))).collect()
    }

    /// Returns a copy with column `j` replaced.
    pub fn with_column(&self, j: usize, values: &[f64]) -> Result<Matrix> {
        if values.len() != self.rows() {
            return Err(NumericsError::DimensionMismatch(format!(
                "column of length {} for a matrix with {} rows",
                values.len(),
                self.rows()
            )));
        }
        let mut m = self.0.clone();
        m.column_mut(j).copy_from_slice(values);
        Matrix::from_dmatrix(m)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A singular value together with its unit left singular vector.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub sigma: f64,
    pub vector: Vec<f64>,
}

/// Anything that can apply `M` and `Mᵀ` to a vector.
///
/// Power iteration only needs products, so moment matrices that are too
/// expensive to materialize can implement this directly.
pub trait LinearOperator {
    fn nrows(&self) -> usize;
    fn ncols(&self) -> usize;
    fn apply(&self, x: &DVector<f64>) -> DVector<f64>;
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64>;
}

impl LinearOperator for Matrix {
    fn nrows(&self) -> usize {
        self.rows()
    }
    fn ncols(&self) -> usize {
        self.cols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.0 * x
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        self.0.tr_mul(y)
    }
}

/// `(I - v vᵀ) M` without forming it.
pub struct Deflated<'a, O: LinearOperator + ?Sized> {
    op: &'a O,
    v: DVector<f64>,
}

impl<'a, O: LinearOperator + ?Sized> Deflated<'a, O> {
    pub fn new(op: &'a O, unit_left_vector: &[f64]) -> Self {
        Deflated {
            op,
            v: DVector::from_column_slice(unit_left_vector),
        }
    }
}

impl<O: LinearOperator + ?Sized> LinearOperator for Deflated<'_, O> {
    fn nrows(&self) -> usize {
        self.op.nrows()
    }
    fn ncols(&self) -> usize {
        self.op.ncols()
    }
    fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut y = self.op.apply(x);
        let c = self.v.dot(&y);
        y.axpy(-c, &self.v, 1.0);
        y
    }
    fn apply_transpose(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut p = y.clone();
        let c = self.v.dot(y);
        p.axpy(-c, &self.v, 1.0);
        self.op.apply_transpose(&p)
    }
}

fn unit_or_e1(v: DVector<f64>) -> DVector<f64> {
    let n = v.norm();
    if n > 0.0 && n.is_finite() {
        v / n
    } else {
        let mut e = DVector::zeros(v.len());
        e[0] = 1.0;
        e
    }
}

fn power_iterate<O: LinearOperator + ?Sized>(
    op: &O,
    start: DVector<f64>,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralPair> {
    let mut v = unit_or_e1(start);
    let mut residual = f64::INFINITY;
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let w = op.apply_transpose(&v);
        let s2 = w.norm_squared();
        if s2 == 0.0 {
            return Ok(SpectralPair {
                sigma: 0.0,
                vector: v.as_slice().to_vec(),
            });
        }
        let u = op.apply(&w);
        residual = (&u - &v * s2).norm() / s2;
        sigma = s2.sqrt();
        if residual <= tol {
            return Ok(SpectralPair {
                sigma,
                vector: v.as_slice().to_vec(),
            });
        }
        v = unit_or_e1(u);
    }
    Err(NumericsError::NotConverged {
        iterations: max_iter,
        residual,
        last: SpectralPair {
            sigma,
            vector: v.as_slice().to_vec(),
        },
    })
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(NumericsError::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )))
    }
}

/// Top singular pair of a generic operator, started from `M e₁`.
pub fn top_singular_pair_op<O: LinearOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
) -> Result<SpectralPair> {
    check_tol(tol)?;
    let mut e1 = DVector::zeros(op.ncols());
    e1[0] = 1.0;
    power_iterate(op, op.apply(&e1), tol, max_iter)
}

/// Top two singular values of a generic operator via deflation.
pub fn top_two_singular_values_op<O: LinearOperator + ?Sized>(
    op: &O,
    tol: f64,
    max_iter: usize,
) -> Result<(SpectralPair, f64)> {
    if op.nrows() < 2 {
        return Err(NumericsError::InvalidArgument(
            "top two singular values need at least two rows".into(),
        ));
    }
    let first = top_singular_pair_op(op, tol, max_iter)?;
    let deflated = Deflated::new(op, &first.vector);
    let second = top_singular_pair_op(&deflated, tol, max_iter)?;
    let s2 = second.sigma.min(first.sigma);
    Ok((first, s2))
}

/// Largest singular value and its left singular vector.
///
/// Power iteration on `M Mᵀ` from the normalized first column of `M` (or `e₁`
/// when that column is zero). The stopping rule is the relative residual
/// `‖M Mᵀ v − σ² v‖ / σ² ≤ tol`. If the iteration settles on a value below the
/// largest column norm it has locked onto a non-dominant invariant subspace,
/// so it restarts once from the largest column.
pub fn top_singular_pair(m: &Matrix, tol: f64, max_iter: usize) -> Result<SpectralPair> {
    check_tol(tol)?;
    let first = power_iterate(m, DVector::from_column_slice(m.column(0)), tol, max_iter)?;
    let norms = m.column_norms();
    let (jmax, cmax) = norms
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (j, c)| if c > acc.1 { (j, c) } else { acc });
    if first.sigma >= cmax * (1.0 - 1e-12) {
        return Ok(first);
    }
    power_iterate(m, DVector::from_column_slice(m.column(jmax)), tol, max_iter)
}

/// `(σ₁, v₁)` and `σ₂`, the latter from power iteration on `(I − v₁v₁ᵀ) M`.
pub fn top_two_singular_values(
    m: &Matrix,
    tol: f64,
    max_iter: usize,
) -> Result<(SpectralPair, f64)> {
    if m.rows() < 2 {
        return Err(NumericsError::InvalidArgument(
            "top two singular values need at least two rows".into(),
        ));
    }
    let first = top_singular_pair(m, tol, max_iter)?;
    let v = DVector::from_column_slice(&first.vector);
    let proj = m.inner() - &v * (v.transpose() * m.inner());
    let second = top_singular_pair(&Matrix::wrap(proj), tol, max_iter)?;
    let s2 = second.sigma.min(first.sigma);
    Ok((first, s2))
}

/// Operator norm `‖M‖₂`.
pub fn spectral_norm(m: &Matrix, tol: f64) -> Result<f64> {
    Ok(top_singular_pair(m, tol, DEFAULT_MAX_ITER)?.sigma)
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`, σ sorted descending.
#[derive(Debug, Clone)]
pub struct Svd {
    /// rows × r, orthonormal columns.
    pub u: DMatrix<f64>,
    pub singular_values: Vec<f64>,
    /// cols × r, orthonormal columns.
    pub v: DMatrix<f64>,
}

impl Svd {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * self.v.transpose()
    }
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Rotates column pairs of a working copy until all pairs are orthogonal to
/// working precision; the column norms are then the singular values. Wide
/// matrices are handled through their transpose.
pub fn jacobi_svd(m: &Matrix) -> Result<Svd> {
    if m.rows() < m.cols() {
        let t = jacobi_tall(&m.inner().transpose())?;
        return Ok(Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        });
    }
    jacobi_tall(m.inner())
}

fn jacobi_tall(a: &DMatrix<f64>) -> Result<Svd> {
    let (rows, cols) = a.shape();
    let mut w = a.clone();
    let mut v = DMatrix::<f64>::identity(cols, cols);
    let eps = f64::EPSILON;
    let mut converged = cols < 2;
    for _ in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..cols - 1 {
            for q in p + 1..cols {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cq = w.column(q);
                    (cp.norm_squared(), cq.norm_squared(), cp.dot(&cq))
                };
                if gamma == 0.0 || gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(NumericsError::SvdNotConverged(JACOBI_MAX_SWEEPS));
    }

    let mut order: Vec<usize> = (0..cols).collect();
    let norms: Vec<f64> = (0..cols).map(|j| w.column(j).norm()).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));
    let smax = norms[order[0]];
    let cutoff = smax * eps * rows as f64;

    let mut u = DMatrix::<f64>::zeros(rows, cols);
    let mut vs = DMatrix::<f64>::zeros(cols, cols);
    let mut sv = Vec::with_capacity(cols);
    let mut deficient = Vec::new();
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sv.push(s);
        vs.set_column(k, &v.column(j));
        if s > cutoff && s > 0.0 {
            u.set_column(k, &(w.column(j) / s));
        } else {
            deficient.push(k);
        }
    }
    complete_orthonormal(&mut u, &deficient);
    Ok(Svd {
        u,
        singular_values: sv,
        v: vs,
    })
}

fn rotate_columns(m: &mut DMatrix<f64>, p: usize, q: usize, c: f64, s: f64) {
    for i in 0..m.nrows() {
        let mp = m[(i, p)];
        let mq = m[(i, q)];
        m[(i, p)] = c * mp - s * mq;
        m[(i, q)] = s * mp + c * mq;
    }
}

/// Fills the listed columns with unit vectors orthogonal to all others.
fn complete_orthonormal(u: &mut DMatrix<f64>, slots: &[usize]) {
    let rows = u.nrows();
    let mut basis = 0;
    for &k in slots {
        while basis < rows {
            let mut cand = DVector::<f64>::zeros(rows);
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for j in 0..u.ncols() {
                    if j == k {
                        continue;
                    }
                    let c = u.column(j).dot(&cand);
                    cand.axpy(-c, &u.column(j).clone_owned(), 1.0);
                }
            }
            let n = cand.norm();
            if n > 1e-8 {
                u.set_column(k, &(cand / n));
                break;
            }
        }
    }
}

/// Projection onto the spectral-norm ball of radius `cap`.
///
/// Singular values above `cap` are lowered to `cap`; the rest of the spectrum
/// is untouched. A matrix already inside the ball is returned unchanged.
pub fn clip_singular_values(m: &Matrix, cap: f64) -> Result<Matrix> {
    if !(cap > 0.0 && cap.is_finite()) {
        return Err(NumericsError::InvalidArgument(format!(
            "cap must be positive, got {cap}"
        )));
    }
    let svd = jacobi_svd(m)?;
    if svd.singular_values[0] <= cap {
        return Ok(m.clone());
    }
    let mut out = m.inner().clone();
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cap {
            break;
        }
        let excess = s - cap;
        out -= svd.u.column(k) * svd.v.column(k).transpose() * excess;
    }
    Matrix::from_dmatrix(out)
}
