//! Generative model: incoherent ground-truth dictionaries and k-sparse codes.
//!
//! Supports are uniform k-subsets of `[m]`, so the inclusion probabilities
//! `q_i`, `q_ij` and `q_ijk` are exact rationals rather than asymptotic
//! statements. Nonzero coefficients are symmetric, independent of the support
//! and normalized to unit second moment.

use nalgebra::DMatrix;
use rand::seq::index;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::numerics::{dot, norm, Matrix, NumericsError};
use crate::rng::{self, Rng, StreamKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error("invalid sparse code: {0}")]
    InvalidCode(String),
    #[error("coherence: {0}")]
    Coherence(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, ModelError>;

/// Law of the nonzero coefficients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CoeffLaw {
    /// Uniform on `{-1, +1}`.
    Rademacher,
    /// Uniform sign times a magnitude uniform on `[low, high]`, where `high`
    /// is chosen so that `E[x² | x ≠ 0] = 1`.
    SignedUniform { low: f64 },
}

impl CoeffLaw {
    /// Lower bound `C` on nonzero magnitudes.
    pub fn min_magnitude(&self) -> f64 {
        match *self {
            CoeffLaw::Rademacher => 1.0,
            CoeffLaw::SignedUniform { low } => low,
        }
    }

    /// Upper bound on nonzero magnitudes.
    pub fn max_magnitude(&self) -> f64 {
        match *self {
            CoeffLaw::Rademacher => 1.0,
            CoeffLaw::SignedUniform { low } => signed_uniform_high(low),
        }
    }
}

/// Solves `(h² + h·low + low²) / 3 = 1` for the positive root.
fn signed_uniform_high(low: f64) -> f64 {
    (-low + (12.0 - 3.0 * low * low).sqrt()) / 2.0
}

/// Description of the sparse generative model `y = A* x* + ξ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub coeff_law: CoeffLaw,
    pub noise_sigma: f64,
}

impl ModelParams {
    pub fn new(
        n: usize,
        m: usize,
        k: usize,
        coeff_law: CoeffLaw,
        noise_sigma: f64,
    ) -> Result<Self> {
        let p = ModelParams {
            n,
            m,
            k,
            coeff_law,
            noise_sigma,
        };
        p.validate()?;
        Ok(p)
    }

    /// Noiseless Rademacher model.
    pub fn rademacher(n: usize, m: usize, k: usize) -> Result<Self> {
        Self::new(n, m, k, CoeffLaw::Rademacher, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(ModelError::InvalidParams("n must be positive".into()));
        }
        if self.k == 0 || self.k > self.m {
            return Err(ModelError::InvalidParams(format!(
                "need 1 <= k <= m, got k={} m={}",
                self.k, self.m
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(ModelError::InvalidParams(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if let CoeffLaw::SignedUniform { low } = self.coeff_law {
            if !(low > 0.0 && low < 1.0) {
                return Err(ModelError::InvalidParams(format!(
                    "signed-uniform lower magnitude must lie in (0, 1), got {low}"
                )));
            }
        }
        Ok(())
    }

    /// The magnitude floor `C`.
    pub fn c_min(&self) -> f64 {
        self.coeff_law.min_magnitude()
    }
}

/// Exact support and moment statistics of the model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupportStats {
    /// `Pr[i ∈ S]`
    pub q_i: f64,
    /// `Pr[i, j ∈ S]`, `i ≠ j`
    pub q_ij: f64,
    /// `Pr[i, j, l ∈ S]`, all distinct
    pub q_ijk: f64,
    /// `E[|x_i| | x_i ≠ 0]`
    pub p_i: f64,
    /// `E[x_i⁴ | x_i ≠ 0]`
    pub c_i: f64,
}

pub fn support_stats(params: &ModelParams) -> SupportStats {
    let (m, k) = (params.m as f64, params.k as f64);
    let q_i = k / m;
    let q_ij = if params.m >= 2 {
        k * (k - 1.0) / (m * (m - 1.0))
    } else {
        0.0
    };
    let q_ijk = if params.m >= 3 {
        k * (k - 1.0) * (k - 2.0) / (m * (m - 1.0) * (m - 2.0))
    } else {
        0.0
    };
    let (p_i, c_i) = match params.coeff_law {
        CoeffLaw::Rademacher => (1.0, 1.0),
        CoeffLaw::SignedUniform { low } => {
            let high = signed_uniform_high(low);
            let p = 0.5 * (low + high);
            let c = (high.powi(5) - low.powi(5)) / (5.0 * (high - low));
            (p, c)
        }
    };
    SupportStats {
        q_i,
        q_ij,
        q_ijk,
        p_i,
        c_i,
    }
}

/// Sparse vector: strictly increasing support with aligned values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseCode {
    pub support: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseCode {
    pub fn new(support: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if support.len() != values.len() {
            return Err(ModelError::InvalidCode(format!(
                "{} indices but {} values",
                support.len(),
                values.len()
            )));
        }
        if support.windows(2).any(|w| w[0] >= w[1]) {
            return Err(ModelError::InvalidCode(
                "support indices must be strictly increasing".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidCode("non-finite value".into()));
        }
        Ok(SparseCode { support, values })
    }

    pub fn empty() -> Self {
        SparseCode::default()
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    /// Value at index `i`, zero when `i` is off the support.
    pub fn value_at(&self, i: usize) -> f64 {
        self.support
            .binary_search(&i)
            .map_or(0.0, |pos| self.values[pos])
    }

    pub fn to_dense(&self, m: usize) -> Vec<f64> {
        let mut x = vec![0.0; m];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            x[i] = v;
        }
        x
    }

    /// Same support, values replaced by their signs.
    pub fn signs(&self) -> SparseCode {
        SparseCode {
            support: self.support.clone(),
            values: self.values.iter().map(|v| v.signum()).collect(),
        }
    }

    /// True when supports agree and every value has the same sign.
    pub fn same_signs(&self, other: &SparseCode) -> bool {
        self.support == other.support
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.signum() == b.signum())
    }

    /// `Σ_i values_i · A_i`
    pub fn synthesize(&self, a: &Matrix) -> Vec<f64> {
        let mut y = vec![0.0; a.rows()];
        for (&i, &v) in self.support.iter().zip(&self.values) {
            for (yr, ar) in y.iter_mut().zip(a.column(i)) {
                *yr += v * ar;
            }
        }
        y
    }
}

fn gaussian_matrix(n: usize, m: usize, rng: &mut Rng) -> DMatrix<f64> {
    DMatrix::from_fn(n, m, |_, _| StandardNormal.sample(rng))
}

/// Ground-truth dictionary with iid Gaussian columns normalized to unit length.
pub fn generate_dictionary(n: usize, m: usize, seed: u64) -> Result<Matrix> {
    if n < 2 || m < 2 {
        return Err(ModelError::InvalidParams(format!(
            "dictionary needs n >= 2 and m >= 2, got {n}x{m}"
        )));
    }
    let mut rng = rng::stream(seed, StreamKind::Dict, 0);
    let mut a = gaussian_matrix(n, m, &mut rng);
    for mut col in a.column_iter_mut() {
        let s = col.norm();
        col /= s;
    }
    Ok(Matrix::from_dmatrix(a)?)
}

/// Dictionary with orthonormal columns (`m ≤ n`), the zero-coherence ensemble.
///
/// Gram-Schmidt with re-orthogonalization applied to Gaussian columns, i.e. a
/// Haar-distributed frame.
pub fn generate_orthonormal_dictionary(n: usize, m: usize, seed: u64) -> Result<Matrix> {
    if n < 2 || m < 2 || m > n {
        return Err(ModelError::InvalidParams(format!(
            "orthonormal dictionary needs 2 <= m <= n, got {n}x{m}"
        )));
    }
    let mut rng = rng::stream(seed, StreamKind::Dict, 1);
    let mut a = gaussian_matrix(n, m, &mut rng);
    for j in 0..m {
        for _ in 0..2 {
            for l in 0..j {
                let c = a.column(l).dot(&a.column(j));
                let prev = a.column(l).clone_owned();
                a.column_mut(j).axpy(-c, &prev, 1.0);
            }
        }
        let s = a.column(j).norm();
        a.column_mut(j).unscale_mut(s);
    }
    Ok(Matrix::from_dmatrix(a)?)
}

/// `√n · max_{i≠j} |⟨A_i, A_j⟩|` for a dictionary with unit columns.
pub fn coherence(a: &Matrix) -> Result<f64> {
    if a.cols() < 2 {
        return Err(ModelError::Coherence(
            "coherence needs at least two columns".into(),
        ));
    }
    for (j, nj) in a.column_norms().iter().enumerate() {
        if (nj - 1.0).abs() > 1e-6 {
            return Err(ModelError::Coherence(format!(
                "column {j} has norm {nj}, expected unit columns"
            )));
        }
    }
    let gram = a.inner().tr_mul(a.inner());
    let mut worst = 0.0f64;
    for j in 0..a.cols() {
        for i in 0..j {
            worst = worst.max(gram[(i, j)].abs());
        }
    }
    Ok((a.rows() as f64).sqrt() * worst)
}

/// Draws a code: uniform k-subset support, iid values from the coefficient law.
pub fn sample_code(params: &ModelParams, rng: &mut Rng) -> SparseCode {
    let mut support = index::sample(rng, params.m, params.k).into_vec();
    support.sort_unstable();
    let values = (0..params.k)
        .map(|_| {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            match params.coeff_law {
                CoeffLaw::Rademacher => sign,
                CoeffLaw::SignedUniform { low } => {
                    sign * rng.random_range(low..=signed_uniform_high(low))
                }
            }
        })
        .collect();
    SparseCode { support, values }
}

/// `y = A* x* + ξ` with `ξ ~ N(0, noise_sigma² I)`.
pub fn generate_sample(
    astar: &Matrix,
    code: &SparseCode,
    noise_sigma: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    if let Some(&bad) = code.support.iter().find(|&&i| i >= astar.cols()) {
        return Err(ModelError::InvalidCode(format!(
            "index {bad} out of range for {} atoms",
            astar.cols()
        )));
    }
    let mut y = code.synthesize(astar);
    if noise_sigma > 0.0 {
        for v in &mut y {
            let z: f64 = StandardNormal.sample(rng);
            *v += noise_sigma * z;
        }
    }
    Ok(y)
}

/// A batch of samples stored as the columns of an `n × p` matrix, together
/// with the codes that generated them.
#[derive(Debug, Clone)]
pub struct Batch {
    pub samples: Matrix,
    pub codes: Vec<SparseCode>,
}

/// Draws `p` samples using the code and noise streams at `index`.
pub fn draw_batch(
    astar: &Matrix,
    params: &ModelParams,
    p: usize,
    seed: u64,
    index: u64,
) -> Result<Batch> {
    let mut stream = BatchStream::new(astar, params, p, seed, index)?;
    stream
        .next_chunk(p)
        .expect("a positive batch size yields one chunk")
}

/// The samples of [`draw_batch`] produced a chunk at a time. Concatenating
/// the chunks gives exactly the batch `draw_batch` returns, whatever the
/// chunk sizes.
pub struct BatchStream<'a> {
    astar: &'a Matrix,
    params: ModelParams,
    remaining: usize,
    code_rng: Rng,
    noise_rng: Rng,
}

impl<'a> BatchStream<'a> {
    pub fn new(
        astar: &'a Matrix,
        params: &ModelParams,
        p: usize,
        seed: u64,
        index: u64,
    ) -> Result<Self> {
        if p == 0 {
            return Err(ModelError::InvalidParams(
                "batch size must be positive".into(),
            ));
        }
        if astar.cols() != params.m || astar.rows() != params.n {
            return Err(ModelError::InvalidParams(format!(
                "dictionary is {}x{} but the model says {}x{}",
                astar.rows(),
                astar.cols(),
                params.n,
                params.m
            )));
        }
        Ok(BatchStream {
            astar,
            params: *params,
            remaining: p,
            code_rng: rng::stream(seed, StreamKind::Codes, index),
            noise_rng: rng::stream(seed, StreamKind::Noise, index),
        })
    }

    pub fn remaining(&self) -> usize {
        self.remaining
    }

    /// Up to `max` further samples, or `None` once the batch is exhausted.
    pub fn next_chunk(&mut self, max: usize) -> Option<Result<Batch>> {
        let take = self.remaining.min(max.max(1));
        if take == 0 {
            return None;
        }
        self.remaining -= take;
        let params = &self.params;
        let codes: Vec<SparseCode> = (0..take)
            .map(|_| sample_code(params, &mut self.code_rng))
            .collect();
        let mut data = Vec::with_capacity(params.n * take);
        for code in &codes {
            match generate_sample(self.astar, code, params.noise_sigma, &mut self.noise_rng) {
                Ok(y) => data.extend(y),
                Err(e) => return Some(Err(e)),
            }
        }
        Some(
            Matrix::from_column_major(params.n, take, data)
                .map(|samples| Batch { samples, codes })
                .map_err(Into::into),
        )
    }
}

/// Perturbs every column of `astar` by exactly `delta` in a random direction
/// orthogonal to it. The result has column errors equal to `delta`.
pub fn perturb_columns(astar: &Matrix, delta: f64, seed: u64) -> Result<Matrix> {
    let mut rng = rng::stream(seed, StreamKind::Perturb, 0);
    let (n, m) = (astar.rows(), astar.cols());
    let mut out = astar.inner().clone();
    for j in 0..m {
        let a = astar.column(j);
        let an = norm(a);
        let mut dir: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        if an > 0.0 {
            let c = dot(&dir, a) / (an * an);
            for (d, x) in dir.iter_mut().zip(a) {
                *d -= c * x;
            }
        }
        let dn = norm(&dir);
        for (r, d) in dir.iter().enumerate() {
            out[(r, j)] += delta * d / dn;
        }
    }
    Ok(Matrix::from_dmatrix(out)?)
}
