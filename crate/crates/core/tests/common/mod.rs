#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use sparsecode::genmodel::{generate_dictionary, perturb_columns};
use sparsecode::numerics::Matrix;

pub fn subsets(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, m, k, &mut Vec::new(), &mut out);
    out
}

/// Average of `f(support, signs)` over every k-subset and every sign
/// pattern, i.e. the exact expectation under Rademacher coefficients.
pub fn rademacher_expectation<F>(
    m: usize,
    k: usize,
    rows: usize,
    cols: usize,
    mut f: F,
) -> DMatrix<f64>
where
    F: FnMut(&[usize], &[f64]) -> DMatrix<f64>,
{
    let mut acc = DMatrix::zeros(rows, cols);
    let mut count = 0usize;
    for s in subsets(m, k) {
        for mask in 0..(1u32 << k) {
            let signs: Vec<f64> = (0..k)
                .map(|b| if mask >> b & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            acc += f(&s, &signs);
            count += 1;
        }
    }
    acc / count as f64
}

pub fn synth(astar: &DMatrix<f64>, support: &[usize], values: &[f64]) -> DVector<f64> {
    let mut y = DVector::zeros(astar.nrows());
    for (&i, &v) in support.iter().zip(values) {
        y.axpy(v, &astar.column(i), 1.0);
    }
    y
}

/// A ground truth and a column-wise perturbation of it.
pub fn pair(n: usize, m: usize, delta: f64, seed: u64) -> (Matrix, Matrix) {
    let astar = generate_dictionary(n, m, seed).unwrap();
    let a = perturb_columns(&astar, delta, seed + 1).unwrap();
    (astar, a)
}

pub fn rel_gap(a: &Matrix, b: &Matrix) -> f64 {
    (a.inner() - b.inner()).norm() / b.inner().norm().max(1e-300)
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Matrix with iid standard normal entries from the seeded stream.
pub fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = sparsecode::rng::stream(seed, sparsecode::rng::StreamKind::Trials, 1 << 40);
    let data: Vec<f64> = (0..rows * cols)
        .map(|_| StandardNormal.sample(&mut rng))
        .collect();
    Matrix::from_column_major(rows, cols, data).unwrap()
}

/// Singular values from nalgebra's SVD, descending.
pub fn reference_singular_values(m: &Matrix) -> Vec<f64> {
    let mut s: Vec<f64> = m
        .inner()
        .clone()
        .svd(false, false)
        .singular_values
        .iter()
        .copied()
        .collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s
}
