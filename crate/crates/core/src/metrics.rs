//! Column matching up to sign and permutation, and the `(δ, κ)`-near report.

use serde::Serialize;
use thiserror::Error;

use crate::numerics::{dot, spectral_norm, Matrix, NumericsError, DEFAULT_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Minimum-cost perfect matching of a square cost matrix given row-major.
/// Returns `assign[row] = col`.
///
/// Shortest augmenting paths with vertex potentials, `O(n³)`. Columns are
/// scanned in increasing order and only strictly better reductions replace
/// the current choice, so ties resolve toward lower indices.
pub fn min_cost_assignment(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n, "cost matrix must be n x n");
    // 1-based arrays with a virtual column 0
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if used[j] {
                    continue;
                }
                let cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

fn check_dims(a: &Matrix, astar: &Matrix) -> Result<()> {
    if a.rows() != astar.rows() || a.cols() != astar.cols() {
        return Err(MetricsError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            astar.rows(),
            astar.cols()
        )));
    }
    Ok(())
}

/// `(π, σ)` maximizing `Σ_i |⟨A_{π(i)}, A*_i⟩|`, with
/// `σ_i = sgn⟨A_{π(i)}, A*_i⟩` and `sgn(0) = +1`.
pub fn match_columns(a: &Matrix, astar: &Matrix) -> Result<(Vec<usize>, Vec<f64>)> {
    check_dims(a, astar)?;
    let m = a.cols();
    let mut cost = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            cost[i * m + j] = -dot(a.column(j), astar.column(i)).abs();
        }
    }
    let perm = min_cost_assignment(&cost, m);
    let signs = perm
        .iter()
        .enumerate()
        .map(|(i, &j)| {
            if dot(a.column(j), astar.column(i)) < 0.0 {
                -1.0
            } else {
                1.0
            }
        })
        .collect();
    Ok((perm, signs))
}

/// `A` with columns reordered and flipped so that column `i` is `σ_i A_{π(i)}`.
pub fn align(a: &Matrix, perm: &[usize], signs: &[f64]) -> Result<Matrix> {
    let cols: Vec<Vec<f64>> = perm
        .iter()
        .zip(signs)
        .map(|(&j, &s)| a.column(j).iter().map(|x| s * x).collect())
        .collect();
    Ok(Matrix::from_columns(&cols)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NearnessReport {
    pub permutation: Vec<usize>,
    pub signs: Vec<f64>,
    pub per_col_err: Vec<f64>,
    pub delta: f64,
    pub kappa: f64,
    pub is_near: bool,
}

impl NearnessReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are plain numbers")
    }

    /// Columns whose aligned error is at most `tol`.
    pub fn columns_within(&self, tol: f64) -> usize {
        self.per_col_err.iter().filter(|e| **e <= tol).count()
    }
}

/// Aligns `a` to `astar` and reports column errors, `δ = max` column
/// error, `κ = ‖A_aligned − A*‖ / ‖A*‖` and whether both targets are met.
pub fn nearness(
    a: &Matrix,
    astar: &Matrix,
    delta_target: f64,
    kappa_target: f64,
) -> Result<NearnessReport> {
    let (perm, signs) = match_columns(a, astar)?;
    let aligned = align(a, &perm, &signs)?;
    let per_col_err: Vec<f64> = (0..a.cols())
        .map(|i| {
            aligned
                .column(i)
                .iter()
                .zip(astar.column(i))
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let delta = per_col_err.iter().copied().fold(0.0, f64::max);
    let diff = Matrix::from_dmatrix(aligned.inner() - astar.inner())?;
    let star_norm = spectral_norm(astar, DEFAULT_TOL)?;
    let kappa = if star_norm > 0.0 {
        spectral_norm(&diff, DEFAULT_TOL)? / star_norm
    } else {
        0.0
    };
    Ok(NearnessReport {
        permutation: perm,
        signs,
        per_col_err,
        delta,
        kappa,
        is_near: delta <= delta_target && kappa <= kappa_target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignment_small() {
        let cost = [4.0, 1.0, 3.0, 2.0, 0.0, 5.0, 3.0, 2.0, 2.0];
        assert_eq!(min_cost_assignment(&cost, 3), vec![1, 0, 2]);
        assert_eq!(min_cost_assignment(&[0.0; 4], 2), vec![0, 1]);
        assert!(min_cost_assignment(&[], 0).is_empty());
    }

    #[test]
    fn identity_and_swap() {
        let a = Matrix::identity(3);
        let (p, s) = match_columns(&a, &a).unwrap();
        assert_eq!(p, vec![0, 1, 2]);
        assert_eq!(s, vec![1.0, 1.0, 1.0]);

        let b = Matrix::from_columns(&[
            vec![0.0, 1.0, 0.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 0.0, -1.0],
        ])
        .unwrap();
        let (p, s) = match_columns(&b, &a).unwrap();
        assert_eq!(p, vec![1, 0, 2]);
        assert_eq!(s, vec![1.0, 1.0, -1.0]);
        let r = nearness(&b, &a, 0.0, 0.0).unwrap();
        assert_eq!(r.delta, 0.0);
        assert!(r.is_near);
    }

    #[test]
    fn zero_inner_product_gets_positive_sign() {
        let a = Matrix::from_columns(&[vec![0.0, 1.0]]).unwrap();
        let b = Matrix::from_columns(&[vec![1.0, 0.0]]).unwrap();
        assert_eq!(match_columns(&a, &b).unwrap().1, vec![1.0]);
    }

    #[test]
    fn json_report() {
        let a = Matrix::identity(2);
        let r = nearness(&a, &a, 0.1, 0.1).unwrap();
        let j = r.to_json();
        assert!(j.contains("\"delta\": 0.0"));
        assert!(j.contains("\"is_near\": true"));
    }
}
