//! Update directions for the three alternating-minimization rules, their
//! closed-form expectations, the update step and the projection onto `𝓑`.
//!
//! All directions are oriented so that `A − η·G` moves toward the ground
//! truth: the empirical simple rule averages `(A x − y)·sgn(x)ᵀ`, the
//! Olshausen-Field rule averages `(A x − y)·xᵀ`, and the unbiased rule
//! averages `(B⁽ⁱ⁾ x̄ⁱ − y)·sgn(x_i)` column by column.
//!
//! The expected directions assume that decoding recovers the support and
//! signs of the generating code, which is the regime the closed forms
//! describe. They are exact under that assumption for uniform k-subset
//! supports and unit-variance symmetric coefficients.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::decoding::{decode_batch, DecodeConfig, DecodeError};
use crate::genmodel::{SparseCode, SupportStats};
use crate::numerics::{clip_singular_values, Matrix, NumericsError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum UpdateError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, UpdateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateRule {
    /// Threshold decode, then average `(A x − y) sgn(x)ᵀ`.
    Simple,
    /// Average `(A x − y) xᵀ`, followed by projection onto `𝓑`.
    OlshausenField,
    /// Per-column decoding with `B⁽ⁱ⁾`, which removes the systemic bias.
    Unbiased,
}

impl UpdateRule {
    pub fn name(&self) -> &'static str {
        match self {
            UpdateRule::Simple => "simple",
            UpdateRule::OlshausenField => "of",
            UpdateRule::Unbiased => "unbiased",
        }
    }
}

impl std::str::FromStr for UpdateRule {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "simple" => Ok(UpdateRule::Simple),
            "of" | "olshausen-field" => Ok(UpdateRule::OlshausenField),
            "unbiased" => Ok(UpdateRule::Unbiased),
            other => Err(format!("unknown rule '{other}' (simple|of|unbiased)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GradientMode {
    Empirical,
    AnalyticOracle,
}

impl std::str::FromStr for GradientMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "empirical" => Ok(GradientMode::Empirical),
            "oracle" => Ok(GradientMode::AnalyticOracle),
            other => Err(format!("unknown mode '{other}' (empirical|oracle)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub g: Matrix,
    pub rule: UpdateRule,
    /// Number of samples averaged; zero for analytic directions.
    pub p_used: usize,
    pub mode: GradientMode,
}

/// Streaming accumulator for the empirical directions.
///
/// Samples may be fed in any number of chunks; the sum is formed in sample
/// order, so the result does not depend on how the batch was split.
pub struct GradientAccumulator<'a> {
    rule: UpdateRule,
    a: &'a Matrix,
    cfg: DecodeConfig,
    sum: DMatrix<f64>,
    count: usize,
    gram: Option<DMatrix<f64>>,
    col_norms: Vec<f64>,
}

impl<'a> GradientAccumulator<'a> {
    pub fn new(rule: UpdateRule, a: &'a Matrix, cfg: &DecodeConfig) -> Self {
        let cfg = DecodeConfig {
            threshold: cfg.threshold,
            keep_values: true,
        };
        let gram = (rule == UpdateRule::Unbiased).then(|| a.inner().tr_mul(a.inner()));
        GradientAccumulator {
            rule,
            a,
            cfg,
            sum: DMatrix::zeros(a.rows(), a.cols()),
            count: 0,
            gram,
            col_norms: a.column_norms(),
        }
    }

    pub fn add_batch(&mut self, samples: &Matrix) -> Result<()> {
        if samples.rows() != self.a.rows() {
            return Err(UpdateError::DimensionMismatch(format!(
                "samples have {} rows, dictionary has {}",
                samples.rows(),
                self.a.rows()
            )));
        }
        match self.rule {
            UpdateRule::Simple | UpdateRule::OlshausenField => self.add_plain(samples)?,
            UpdateRule::Unbiased => self.add_unbiased(samples),
        }
        self.count += samples.cols();
        Ok(())
    }

    fn add_plain(&mut self, samples: &Matrix) -> Result<()> {
        let codes = decode_batch(self.a, samples, &self.cfg)?;
        let n = self.a.rows();
        let mut resid = vec![0.0; n];
        for (t, code) in codes.iter().enumerate() {
            if code.is_empty() {
                continue;
            }
            residual_into(self.a, code, samples.column(t), &mut resid);
            for (&i, &v) in code.support.iter().zip(&code.values) {
                let w = match self.rule {
                    UpdateRule::Simple => v.signum(),
                    _ => v,
                };
                let mut col = self.sum.column_mut(i);
                for (g, r) in col.iter_mut().zip(&resid) {
                    *g += w * r;
                }
            }
        }
        Ok(())
    }

    fn add_unbiased(&mut self, samples: &Matrix) {
        let a = self.a;
        let (n, m) = (a.rows(), a.cols());
        let gram = self
            .gram
            .as_ref()
            .expect("gram is built for the unbiased rule");
        let scores = a.inner().tr_mul(samples.inner());
        let thr = self.cfg.threshold;
        let mut proj_scores = vec![0.0; m];
        let mut recon = vec![0.0; n];
        for t in 0..samples.cols() {
            let z = scores.column(t);
            let y = samples.column(t);
            for i in 0..m {
                let zi = z[i];
                if zi.abs() <= thr {
                    continue;
                }
                let ni = self.col_norms[i];
                if ni == 0.0 {
                    continue;
                }
                // ⟨B_j, y⟩ = ⟨A_j, y⟩ − ⟨A_j, Â_i⟩⟨Â_i, y⟩ for j ≠ i
                let proj_y = zi / ni;
                for j in 0..m {
                    proj_scores[j] = if j == i {
                        zi
                    } else {
                        z[j] - gram[(j, i)] / ni * proj_y
                    };
                }
                recon.iter_mut().for_each(|r| *r = 0.0);
                let mut along = 0.0;
                for j in 0..m {
                    let xj = proj_scores[j];
                    if xj.abs() <= thr {
                        continue;
                    }
                    for (r, av) in recon.iter_mut().zip(a.column(j)) {
                        *r += xj * av;
                    }
                    if j != i {
                        along += xj * gram[(j, i)] / ni;
                    }
                }
                let ai = a.column(i);
                let s = zi.signum();
                let mut col = self.sum.column_mut(i);
                for r in 0..n {
                    let bx = recon[r] - along * ai[r] / ni;
                    col[r] += s * (bx - y[r]);
                }
            }
        }
    }

    pub fn finish(self) -> Result<GradientEstimate> {
        if self.count == 0 {
            return Err(UpdateError::EmptyBatch);
        }
        let g = self.sum / self.count as f64;
        Ok(GradientEstimate {
            g: Matrix::from_dmatrix(g)?,
            rule: self.rule,
            p_used: self.count,
            mode: GradientMode::Empirical,
        })
    }
}

/// `A x − y` written into `out`.
fn residual_into(a: &Matrix, code: &SparseCode, y: &[f64], out: &mut [f64]) {
    for (o, yv) in out.iter_mut().zip(y) {
        *o = -yv;
    }
    for (&i, &v) in code.support.iter().zip(&code.values) {
        for (o, av) in out.iter_mut().zip(a.column(i)) {
            *o += v * av;
        }
    }
}

/// Empirical direction of `rule` over the columns of `samples`.
pub fn empirical_gradient(
    rule: UpdateRule,
    a: &Matrix,
    samples: &Matrix,
    cfg: &DecodeConfig,
) -> Result<GradientEstimate> {
    let mut acc = GradientAccumulator::new(rule, a, cfg);
    acc.add_batch(samples)?;
    acc.finish()
}

/// `(1/p) Σ (A x − y) sgn(x)ᵀ` with `x` the threshold decoding of `y`.
pub fn simple_gradient_hat(
    a: &Matrix,
    samples: &Matrix,
    cfg: &DecodeConfig,
) -> Result<GradientEstimate> {
    empirical_gradient(UpdateRule::Simple, a, samples, cfg)
}

/// `(1/p) Σ (A x − y) xᵀ`.
pub fn of_gradient_hat(
    a: &Matrix,
    samples: &Matrix,
    cfg: &DecodeConfig,
) -> Result<GradientEstimate> {
    empirical_gradient(UpdateRule::OlshausenField, a, samples, cfg)
}

/// Column `i` is `(1/p) Σ (B⁽ⁱ⁾ x̄ⁱ − y) sgn(x_i)` with `x̄ⁱ` decoded against `B⁽ⁱ⁾`.
pub fn unbiased_gradient_hat(
    a: &Matrix,
    samples: &Matrix,
    cfg: &DecodeConfig,
) -> Result<GradientEstimate> {
    empirical_gradient(UpdateRule::Unbiased, a, samples, cfg)
}

fn check_pair(a: &Matrix, astar: &Matrix) -> Result<()> {
    if a.rows() != astar.rows() || a.cols() != astar.cols() {
        return Err(UpdateError::DimensionMismatch(format!(
            "estimate is {}x{}, ground truth is {}x{}",
            a.rows(),
            a.cols(),
            astar.rows(),
            astar.cols()
        )));
    }
    Ok(())
}

/// Expected simple-rule direction:
/// `g_i = p_i q_i (λ_i A_i − A*_i) + p_i Σ_{j≠i} q_ij A_j ⟨A_j, A*_i⟩`, `λ_i = ⟨A_i, A*_i⟩`.
pub fn simple_gradient_expected(
    a: &Matrix,
    astar: &Matrix,
    stats: &SupportStats,
) -> Result<GradientEstimate> {
    check_pair(a, astar)?;
    let (am, sm) = (a.inner(), astar.inner());
    // cross[(j, i)] = ⟨A_j, A*_i⟩
    let mut cross = am.tr_mul(sm);
    let lambda: Vec<f64> = (0..a.cols()).map(|i| cross[(i, i)]).collect();
    cross.fill_diagonal(0.0);
    let mut g = am * cross * (stats.p_i * stats.q_ij);
    let pq = stats.p_i * stats.q_i;
    for (i, l) in lambda.iter().enumerate() {
        let mut col = g.column_mut(i);
        col.axpy(pq * l, &am.column(i), 1.0);
        col.axpy(-pq, &sm.column(i), 1.0);
    }
    finish_expected(g, UpdateRule::Simple)
}

/// Expected Olshausen-Field direction, evaluated term by term:
///
/// * leading `q_i (λ_i² A_i − λ_i A*_i)`
/// * `q_ij (A_i A_iᵀ − I) Σ_{j≠i} A*_j ⟨A*_j, A_i⟩`
/// * `λ_i q_ij Σ_{j≠i} A_j ⟨A_j, A*_i⟩`
/// * `Σ_{j≠i} v_j A_j` with `v_j = Σ_{l≠i} Pr[i,j,l ∈ S] ⟨A*_l, A_i⟩⟨A*_l, A_j⟩`
///
/// The last sum includes `l = j`, whose probability is `q_ij`.
pub fn of_gradient_expected(
    a: &Matrix,
    astar: &Matrix,
    stats: &SupportStats,
) -> Result<GradientEstimate> {
    finish_expected(
        of_expected_terms(a, astar, stats)?.total(),
        UpdateRule::OlshausenField,
    )
}

/// The four pieces of the expected Olshausen-Field direction.
#[derive(Debug, Clone)]
pub struct OfTerms {
    pub leading: DMatrix<f64>,
    pub projected_cross: DMatrix<f64>,
    pub scaled_cross: DMatrix<f64>,
    pub triple: DMatrix<f64>,
}

impl OfTerms {
    pub fn total(&self) -> DMatrix<f64> {
        &self.leading + &self.projected_cross + &self.scaled_cross + &self.triple
    }
}

pub fn of_expected_terms(a: &Matrix, astar: &Matrix, stats: &SupportStats) -> Result<OfTerms> {
    check_pair(a, astar)?;
    let (n, m) = (a.rows(), a.cols());
    let (am, sm) = (a.inner(), astar.inner());
    let (q, q2, q3) = (stats.q_i, stats.q_ij, stats.q_ijk);
    // d[(l, b)] = ⟨A*_l, A_b⟩
    let d = sm.tr_mul(am);
    let h = d.tr_mul(&d);
    let mut leading = DMatrix::zeros(n, m);
    let mut projected_cross = DMatrix::zeros(n, m);
    let mut scaled_cross = DMatrix::zeros(n, m);
    let mut triple = DMatrix::zeros(n, m);
    let mut coeff = DVector::zeros(m);
    for i in 0..m {
        let ai = am.column(i);
        let si = sm.column(i);
        let lam = d[(i, i)];
        leading
            .column_mut(i)
            .copy_from(&((ai * (lam * lam) - si * lam) * q));

        // w = Σ_{j≠i} A*_j ⟨A*_j, A_i⟩
        for j in 0..m {
            coeff[j] = if j == i { 0.0 } else { d[(j, i)] };
        }
        let w = sm * &coeff;
        let proj = ai * ai.dot(&w) - &w;
        projected_cross.column_mut(i).copy_from(&(proj * q2));

        // Σ_{j≠i} A_j ⟨A_j, A*_i⟩, with ⟨A_j, A*_i⟩ = d[(i, j)]
        for j in 0..m {
            coeff[j] = if j == i { 0.0 } else { d[(i, j)] };
        }
        scaled_cross
            .column_mut(i)
            .copy_from(&(am * &coeff * (lam * q2)));

        for j in 0..m {
            coeff[j] = if j == i {
                0.0
            } else {
                let excl_i = h[(i, j)] - d[(i, i)] * d[(i, j)];
                let same = d[(j, i)] * d[(j, j)];
                q3 * (excl_i - same) + q2 * same
            };
        }
        triple.column_mut(i).copy_from(&(am * &coeff));
    }
    Ok(OfTerms {
        leading,
        projected_cross,
        scaled_cross,
        triple,
    })
}

/// Expected unbiased-rule direction:
/// `g_i = p_i q_i (λ_i A_i − A*_i) + p_i q_ij B₋ᵢ B₋ᵢᵀ (A*_i − A_i)`,
/// where `B₋ᵢ = (I − Â_iÂ_iᵀ) A₋ᵢ`.
pub fn unbiased_gradient_expected(
    a: &Matrix,
    astar: &Matrix,
    stats: &SupportStats,
) -> Result<GradientEstimate> {
    check_pair(a, astar)?;
    let (n, m) = (a.rows(), a.cols());
    let (am, sm) = (a.inner(), astar.inner());
    let pq = stats.p_i * stats.q_i;
    let pq2 = stats.p_i * stats.q_ij;
    let mut g = DMatrix::zeros(n, m);
    let mut coeff = DVector::zeros(m);
    for i in 0..m {
        let ai = am.column(i);
        let ni = ai.norm();
        if ni == 0.0 {
            return Err(UpdateError::InvalidArgument(format!("column {i} is zero")));
        }
        let unit = ai / ni;
        let si = sm.column(i);
        let lam = ai.dot(&si);
        let mut r = si - ai;
        let c = unit.dot(&r);
        r.axpy(-c, &unit, 1.0);
        for j in 0..m {
            coeff[j] = if j == i { 0.0 } else { am.column(j).dot(&r) };
        }
        let mut w = am * &coeff;
        let c = unit.dot(&w);
        w.axpy(-c, &unit, 1.0);
        let col = (ai * lam - si) * pq + w * pq2;
        g.column_mut(i).copy_from(&col);
    }
    finish_expected(g, UpdateRule::Unbiased)
}

/// Closed-form expected direction for `rule`.
pub fn expected_gradient(
    rule: UpdateRule,
    a: &Matrix,
    astar: &Matrix,
    stats: &SupportStats,
) -> Result<GradientEstimate> {
    match rule {
        UpdateRule::Simple => simple_gradient_expected(a, astar, stats),
        UpdateRule::OlshausenField => of_gradient_expected(a, astar, stats),
        UpdateRule::Unbiased => unbiased_gradient_expected(a, astar, stats),
    }
}

fn finish_expected(g: DMatrix<f64>, rule: UpdateRule) -> Result<GradientEstimate> {
    Ok(GradientEstimate {
        g: Matrix::from_dmatrix(g)?,
        rule,
        p_used: 0,
        mode: GradientMode::AnalyticOracle,
    })
}

/// `A − η G`.
pub fn update_step(a: &Matrix, g: &GradientEstimate, eta: f64) -> Result<Matrix> {
    check_pair(a, &g.g)?;
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(UpdateError::InvalidArgument(format!(
            "step size must be >= 0, got {eta}"
        )));
    }
    Ok(Matrix::from_dmatrix(a.inner() - g.g.inner() * eta)?)
}

/// `𝓑 = { A : ‖A_j − A0_j‖ ≤ δ₀ for all j, ‖A‖ ≤ norm_cap }`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionSetB {
    pub anchor: Matrix,
    pub delta0: f64,
    pub norm_cap: f64,
}

impl ProjectionSetB {
    pub fn new(anchor: Matrix, delta0: f64, norm_cap: f64) -> Result<Self> {
        if !(delta0 > 0.0 && norm_cap > 0.0 && delta0.is_finite() && norm_cap.is_finite()) {
            return Err(UpdateError::InvalidArgument(format!(
                "need delta0 > 0 and norm_cap > 0, got {delta0} and {norm_cap}"
            )));
        }
        Ok(ProjectionSetB {
            anchor,
            delta0,
            norm_cap,
        })
    }

    /// Nearest point of the column-ball constraint alone.
    pub fn project_columns(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = x.clone();
        for j in 0..x.ncols() {
            let a0 = self.anchor.inner().column(j);
            let d = x.column(j) - a0;
            let dn = d.norm();
            if dn > self.delta0 {
                out.column_mut(j).copy_from(&(a0 + d * (self.delta0 / dn)));
            }
        }
        out
    }

    /// Largest column distance to the anchor minus `delta0` (≤ 0 inside).
    pub fn column_violation(&self, x: &Matrix) -> f64 {
        (0..x.cols())
            .map(|j| (x.inner().column(j) - self.anchor.inner().column(j)).norm())
            .fold(f64::NEG_INFINITY, f64::max)
            - self.delta0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub matrix: Matrix,
    pub sweeps: usize,
    /// False when `max_sweeps` ran out before the change fell below `tol`.
    pub converged: bool,
}

/// Euclidean projection onto `𝓑` by Dykstra's alternating projections
/// between the column balls and the spectral-norm ball.
pub fn project_to_b(
    a: &Matrix,
    set: &ProjectionSetB,
    max_sweeps: usize,
    tol: f64,
) -> Result<Projection> {
    check_pair(a, &set.anchor)?;
    let mut x = a.inner().clone();
    let mut p = DMatrix::zeros(a.rows(), a.cols());
    let mut q = DMatrix::zeros(a.rows(), a.cols());
    for sweep in 1..=max_sweeps {
        let xp = &x + &p;
        let y = set.project_columns(&xp);
        p = xp - &y;
        let yq = &y + &q;
        let next = clip_singular_values(&Matrix::wrap(yq.clone()), set.norm_cap)?.into_inner();
        q = yq - &next;
        let change = (&next - &x).norm();
        x = next;
        if change < tol {
            return Ok(Projection {
                matrix: Matrix::from_dmatrix(x)?,
                sweeps: sweep,
                converged: true,
            });
        }
    }
    Ok(Projection {
        matrix: Matrix::from_dmatrix(x)?,
        sweeps: max_sweeps,
        converged: false,
    })
}
