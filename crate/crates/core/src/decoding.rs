//! One-step threshold decoding and the per-column projected decoding matrices.

use nalgebra::DMatrix;
use thiserror::Error;

use crate::genmodel::{generate_sample, sample_code, ModelParams, SparseCode};
use crate::numerics::{dot, norm, Matrix};
use crate::rng::{self, StreamKind};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecodeError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("column {0} is zero, cannot project onto its complement")]
    ZeroColumn(usize),
    #[error("column index {index} out of range for {cols} columns")]
    IndexOutOfRange { index: usize, cols: usize },
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
}

pub type Result<T> = std::result::Result<T, DecodeError>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodeConfig {
    pub threshold: f64,
    /// Keep the raw inner products; otherwise only their signs.
    pub keep_values: bool,
}

impl DecodeConfig {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(DecodeError::InvalidThreshold(threshold));
        }
        Ok(DecodeConfig {
            threshold,
            keep_values: true,
        })
    }

    /// Threshold `C/2` for the model's magnitude floor.
    pub fn for_model(params: &ModelParams) -> Self {
        DecodeConfig {
            threshold: params.c_min() / 2.0,
            keep_values: true,
        }
    }
}

fn threshold_scores(scores: &[f64], cfg: &DecodeConfig) -> SparseCode {
    let mut code = SparseCode::empty();
    for (i, &z) in scores.iter().enumerate() {
        if z.abs() > cfg.threshold {
            code.support.push(i);
            code.values
                .push(if cfg.keep_values { z } else { z.signum() });
        }
    }
    code
}

/// Keeps the entries of `Aᵀy` whose magnitude exceeds the threshold.
pub fn threshold_decode(a: &Matrix, y: &[f64], cfg: &DecodeConfig) -> Result<SparseCode> {
    if y.len() != a.rows() {
        return Err(DecodeError::DimensionMismatch(format!(
            "sample of length {} for a dictionary with {} rows",
            y.len(),
            a.rows()
        )));
    }
    let scores: Vec<f64> = (0..a.cols()).map(|j| dot(a.column(j), y)).collect();
    Ok(threshold_scores(&scores, cfg))
}

/// Decodes every column of `samples` with a single `Aᵀ Y` product.
pub fn decode_batch(a: &Matrix, samples: &Matrix, cfg: &DecodeConfig) -> Result<Vec<SparseCode>> {
    if samples.rows() != a.rows() {
        return Err(DecodeError::DimensionMismatch(format!(
            "samples have {} rows, dictionary has {}",
            samples.rows(),
            a.rows()
        )));
    }
    let scores: DMatrix<f64> = a.inner().tr_mul(samples.inner());
    let m = a.cols();
    Ok(scores
        .as_slice()
        .chunks_exact(m)
        .map(|col| threshold_scores(col, cfg))
        .collect())
}

/// Fraction of `trials` fresh model samples whose decoding against `a` has
/// exactly the support and signs of the generating code.
pub fn sign_recovery_rate(
    a: &Matrix,
    astar: &Matrix,
    params: &ModelParams,
    trials: usize,
    seed: u64,
) -> Result<f64> {
    if a.rows() != astar.rows() || a.cols() != astar.cols() {
        return Err(DecodeError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            astar.rows(),
            astar.cols()
        )));
    }
    if trials == 0 {
        return Ok(0.0);
    }
    let cfg = DecodeConfig::for_model(params);
    let mut code_rng = rng::stream(seed, StreamKind::Trials, 0);
    let mut noise_rng = rng::stream(seed, StreamKind::Trials, 1);
    let mut hits = 0usize;
    for _ in 0..trials {
        let code = sample_code(params, &mut code_rng);
        let y = generate_sample(astar, &code, params.noise_sigma, &mut noise_rng)
            .map_err(|e| DecodeError::DimensionMismatch(e.to_string()))?;
        let decoded = threshold_decode(a, &y, &cfg)?;
        if decoded.same_signs(&code) {
            hits += 1;
        }
    }
    Ok(hits as f64 / trials as f64)
}

/// `B` with `B_i = A_i` and every other column projected onto `A_i^⊥`.
pub fn projected_decoding_matrix(a: &Matrix, i: usize) -> Result<Matrix> {
    if i >= a.cols() {
        return Err(DecodeError::IndexOutOfRange {
            index: i,
            cols: a.cols(),
        });
    }
    let ai = a.column(i);
    let ni = norm(ai);
    if ni == 0.0 {
        return Err(DecodeError::ZeroColumn(i));
    }
    let unit: Vec<f64> = ai.iter().map(|x| x / ni).collect();
    let mut b = a.inner().clone();
    for j in (0..a.cols()).filter(|&j| j != i) {
        let c = dot(a.column(j), &unit);
        for (r, u) in unit.iter().enumerate() {
            b[(r, j)] -= c * u;
        }
    }
    Ok(Matrix::wrap(b))
}
