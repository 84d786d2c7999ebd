//! Approximate gradient descent driver, correlation slacks and the
//! per-step convergence audit.

use thiserror::Error;

use crate::decoding::DecodeConfig;
use crate::genmodel::{support_stats, BatchStream, ModelError, ModelParams};
use crate::numerics::{spectral_norm, Matrix, NumericsError, DEFAULT_TOL};
use crate::updates::{
    expected_gradient, project_to_b, update_step, GradientAccumulator, GradientEstimate,
    GradientMode, ProjectionSetB, UpdateError, UpdateRule,
};

/// Samples decoded per accumulation chunk in empirical mode.
pub const CHUNK: usize = 4096;
pub const PROJECTION_SWEEPS: usize = 500;
pub const PROJECTION_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite values at iteration {iteration}")]
    NonFinite {
        iteration: usize,
        trace: Box<DescentTrace>,
    },
    #[error(transparent)]
    Update(#[from] UpdateError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

pub type Result<T> = std::result::Result<T, DescentError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DescentConfig {
    pub rule: UpdateRule,
    pub eta: f64,
    pub iterations: usize,
    pub p_per_iter: usize,
    pub mode: GradientMode,
    pub project: Option<ProjectionSetB>,
    pub seed: u64,
}

impl DescentConfig {
    /// Step size `eta_scale · m / k`.
    pub fn eta_for(params: &ModelParams, eta_scale: f64) -> f64 {
        eta_scale * params.m as f64 / params.k as f64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta.is_finite()) {
            return Err(DescentError::InvalidConfig(format!("eta = {}", self.eta)));
        }
        if self.iterations == 0 {
            return Err(DescentError::InvalidConfig(
                "iterations must be >= 1".into(),
            ));
        }
        if self.mode == GradientMode::Empirical && self.p_per_iter == 0 {
            return Err(DescentError::InvalidConfig(
                "p_per_iter must be >= 1 in empirical mode".into(),
            ));
        }
        Ok(())
    }
}

/// `(α, β, ε)` of the correlation condition
/// `⟨g, z − z*⟩ ≥ α‖z − z*‖² + β‖g‖² − ε`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationParams {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
}

impl CorrelationParams {
    pub fn new(alpha: f64, beta: f64, eps: f64) -> Result<Self> {
        if !(alpha > 0.0 && beta > 0.0 && eps >= 0.0) {
            return Err(DescentError::InvalidConfig(format!(
                "need alpha > 0, beta > 0, eps >= 0; got {alpha}, {beta}, {eps}"
            )));
        }
        Ok(CorrelationParams { alpha, beta, eps })
    }

    /// `α = p_i q_i / 4`, `β = 1 / (100 α)`.
    pub fn for_model(params: &ModelParams) -> Self {
        let s = support_stats(params);
        let alpha = s.p_i * s.q_i / 4.0;
        CorrelationParams {
            alpha,
            beta: 1.0 / (100.0 * alpha),
            eps: 0.0,
        }
    }

    /// A strongly convex and smooth pair always has `αβ ≤ 1/4`.
    pub fn is_realizable(&self) -> bool {
        self.alpha * self.beta <= 0.25 + 1e-15
    }
}

/// `α‖z − z*‖² + β‖g‖² − ⟨g, z − z*⟩`: the smallest `ε` for which `g` is
/// `(α, β, ε)`-correlated with `z*` at `z`.
pub fn correlation_slack(
    g: &[f64],
    z: &[f64],
    zstar: &[f64],
    cp: &CorrelationParams,
) -> Result<f64> {
    if g.len() != z.len() || z.len() != zstar.len() {
        return Err(DescentError::DimensionMismatch(format!(
            "lengths {}, {}, {}",
            g.len(),
            z.len(),
            zstar.len()
        )));
    }
    let (mut dd, mut gg, mut gd) = (0.0, 0.0, 0.0);
    for ((gi, zi), si) in g.iter().zip(z).zip(zstar) {
        let d = zi - si;
        dd += d * d;
        gg += gi * gi;
        gd += gi * d;
    }
    Ok(cp.alpha * dd + cp.beta * gg - gd)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlackSummary {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
}

impl SlackSummary {
    fn of(values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n == 0 {
            0.0
        } else if n % 2 == 1 {
            sorted[n / 2]
        } else {
            0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
        };
        SlackSummary {
            max: sorted.last().copied().unwrap_or(0.0),
            mean: values.iter().sum::<f64>() / n.max(1) as f64,
            median,
        }
    }
}

/// State of the run at iteration `iter`, measured before the update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterRecord {
    pub iter: usize,
    pub max_col_err: f64,
    pub mean_col_err: f64,
    /// `‖A − A*‖ / ‖A*‖`
    pub spec_ratio: f64,
    /// Frobenius norm of the direction evaluated at this iterate.
    pub grad_norm: f64,
    pub eta: f64,
    pub corr_slack: SlackSummary,
    pub col_err_sq: Vec<f64>,
    pub col_slack: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DescentTrace {
    pub records: Vec<IterRecord>,
}

impl DescentTrace {
    pub fn max_col_errors(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.max_col_err).collect()
    }

    pub fn final_record(&self) -> Option<&IterRecord> {
        self.records.last()
    }
}

fn check_dims(a: &Matrix, b: &Matrix) -> Result<()> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(DescentError::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.rows(),
            a.cols(),
            b.rows(),
            b.cols()
        )));
    }
    Ok(())
}

fn direction(
    a: &Matrix,
    astar: &Matrix,
    params: &ModelParams,
    cfg: &DescentConfig,
    iter: usize,
) -> Result<GradientEstimate> {
    match cfg.mode {
        GradientMode::AnalyticOracle => Ok(expected_gradient(
            cfg.rule,
            a,
            astar,
            &support_stats(params),
        )?),
        GradientMode::Empirical => {
            let decode = DecodeConfig::for_model(params);
            let mut acc = GradientAccumulator::new(cfg.rule, a, &decode);
            let mut stream =
                BatchStream::new(astar, params, cfg.p_per_iter, cfg.seed, iter as u64)?;
            while let Some(chunk) = stream.next_chunk(CHUNK) {
                acc.add_batch(&chunk?.samples)?;
            }
            Ok(acc.finish()?)
        }
    }
}

fn record(
    iter: usize,
    a: &Matrix,
    astar: &Matrix,
    astar_norm: f64,
    g: &GradientEstimate,
    eta: f64,
    cp: &CorrelationParams,
) -> Result<IterRecord> {
    let m = a.cols();
    let mut col_err_sq = Vec::with_capacity(m);
    let mut col_slack = Vec::with_capacity(m);
    for i in 0..m {
        let (z, zs, gi) = (a.column(i), astar.column(i), g.g.column(i));
        col_err_sq.push(
            z.iter()
                .zip(zs)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>(),
        );
        col_slack.push(correlation_slack(gi, z, zs, cp)?);
    }
    let diff = Matrix::from_dmatrix(a.inner() - astar.inner())?;
    let spec = spectral_norm(&diff, DEFAULT_TOL)?;
    let errs: Vec<f64> = col_err_sq.iter().map(|e| e.sqrt()).collect();
    Ok(IterRecord {
        iter,
        max_col_err: errs.iter().copied().fold(0.0, f64::max),
        mean_col_err: errs.iter().sum::<f64>() / m as f64,
        spec_ratio: spec / astar_norm,
        grad_norm: g.g.frobenius_norm(),
        eta,
        corr_slack: SlackSummary::of(&col_slack),
        col_err_sq,
        col_slack,
    })
}

/// Runs `cfg.iterations` steps of decode → direction → update (→ project)
/// from `a0`, measuring against `astar` at every iterate. The trace has
/// `iterations + 1` records; the last one describes the returned matrix.
///
/// Empirical mode draws a fresh batch for iteration `s` from the code and
/// noise streams at index `s`.
pub fn run_descent(
    astar: &Matrix,
    a0: &Matrix,
    params: &ModelParams,
    cfg: &DescentConfig,
) -> Result<(Matrix, DescentTrace)> {
    cfg.validate()?;
    check_dims(astar, a0)?;
    if astar.rows() != params.n || astar.cols() != params.m {
        return Err(DescentError::DimensionMismatch(format!(
            "dictionary is {}x{}, model is {}x{}",
            astar.rows(),
            astar.cols(),
            params.n,
            params.m
        )));
    }
    if let Some(set) = &cfg.project {
        check_dims(&set.anchor, a0)?;
    }
    let cp = CorrelationParams::for_model(params);
    let astar_norm = spectral_norm(astar, DEFAULT_TOL)?;
    let mut trace = DescentTrace::default();
    let mut a = a0.clone();
    for s in 0..=cfg.iterations {
        let g = match direction(&a, astar, params, cfg, s) {
            Ok(g) => g,
            Err(DescentError::Update(UpdateError::Numerics(NumericsError::NonFinite {
                ..
            }))) => {
                return Err(DescentError::NonFinite {
                    iteration: s,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e),
        };
        trace
            .records
            .push(record(s, &a, astar, astar_norm, &g, cfg.eta, &cp)?);
        if s == cfg.iterations {
            break;
        }
        let stepped = update_step(&a, &g, cfg.eta).and_then(|next| match &cfg.project {
            Some(set) => Ok(project_to_b(&next, set, PROJECTION_SWEEPS, PROJECTION_TOL)?.matrix),
            None => Ok(next),
        });
        a = match stepped {
            Ok(next) => next,
            Err(UpdateError::Numerics(NumericsError::NonFinite { .. })) => {
                return Err(DescentError::NonFinite {
                    iteration: s + 1,
                    trace: Box::new(trace),
                })
            }
            Err(e) => return Err(e.into()),
        };
    }
    Ok((a, trace))
}

/// One step of a descent as seen by the convergence inequality.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditStep {
    pub dist_sq_before: f64,
    pub dist_sq_after: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditViolation {
    pub step: usize,
    pub column: usize,
    /// `lhs − rhs`, positive.
    pub excess: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    /// `η ≤ 2β`; without it the inequality is not guaranteed.
    pub precondition_holds: bool,
    pub contraction: f64,
    pub steps_checked: usize,
    pub violations: Vec<AuditViolation>,
    /// `‖z^{s+1} − z*‖ / ‖z^s − z*‖` for each checked step with nonzero distance.
    pub ratios: Vec<f64>,
}

/// Absolute slack allowed for rounding when checking the inequality.
pub const AUDIT_ARITH_TOL: f64 = 1e-12;

/// Checks `‖z^{s+1} − z*‖² ≤ (1 − 2αη)‖z^s − z*‖² + 2η ε_s` for every step of
/// every coordinate block; `series[c]` holds the steps of block `c`.
pub fn audit_steps(series: &[Vec<AuditStep>], cp: &CorrelationParams, eta: f64) -> AuditReport {
    let contraction = 1.0 - 2.0 * cp.alpha * eta;
    let mut violations = Vec::new();
    let mut ratios = Vec::new();
    let mut steps_checked = 0;
    for (column, steps) in series.iter().enumerate() {
        for (step, st) in steps.iter().enumerate() {
            steps_checked += 1;
            let rhs = contraction * st.dist_sq_before + 2.0 * eta * st.slack;
            let scale = 1.0f64.max(st.dist_sq_before);
            if st.dist_sq_after > rhs + AUDIT_ARITH_TOL * scale {
                violations.push(AuditViolation {
                    step,
                    column,
                    excess: st.dist_sq_after - rhs,
                });
            }
            if st.dist_sq_before > 0.0 {
                ratios.push((st.dist_sq_after / st.dist_sq_before).sqrt());
            }
        }
    }
    AuditReport {
        precondition_holds: eta <= 2.0 * cp.beta,
        contraction,
        steps_checked,
        violations,
        ratios,
    }
}

/// Audits a dictionary run column by column, with `ε_s` the measured slack
/// of the direction applied at step `s`.
pub fn audit_convergence_bound(
    trace: &DescentTrace,
    cp: &CorrelationParams,
    eta: f64,
) -> AuditReport {
    let m = trace.records.first().map_or(0, |r| r.col_err_sq.len());
    let series: Vec<Vec<AuditStep>> = (0..m)
        .map(|i| {
            trace
                .records
                .windows(2)
                .map(|w| AuditStep {
                    dist_sq_before: w[0].col_err_sq[i],
                    dist_sq_after: w[1].col_err_sq[i],
                    slack: w[0].col_slack[i],
                })
                .collect()
        })
        .collect();
    audit_steps(&series, cp, eta)
}

/// Result of [`descend_vector`].
#[derive(Debug, Clone, PartialEq)]
pub struct VectorRun {
    pub z: Vec<f64>,
    pub steps: Vec<AuditStep>,
}

/// `z ← Proj(z − η g(z))` for `iterations` steps, logging each step's
/// distances to `zstar` and the slack of `g` under `cp`.
pub fn descend_vector<G, P>(
    z0: &[f64],
    zstar: &[f64],
    mut grad: G,
    mut project: P,
    eta: f64,
    iterations: usize,
    cp: &CorrelationParams,
) -> Result<VectorRun>
where
    G: FnMut(&[f64]) -> Vec<f64>,
    P: FnMut(&mut [f64]),
{
    if z0.len() != zstar.len() {
        return Err(DescentError::DimensionMismatch(format!(
            "start has length {}, target {}",
            z0.len(),
            zstar.len()
        )));
    }
    let dist_sq = |z: &[f64]| {
        z.iter()
            .zip(zstar)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
    };
    let mut z = z0.to_vec();
    let mut steps = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let g = grad(&z);
        let slack = correlation_slack(&g, &z, zstar, cp)?;
        let before = dist_sq(&z);
        for (zi, gi) in z.iter_mut().zip(&g) {
            *zi -= eta * gi;
        }
        project(&mut z);
        steps.push(AuditStep {
            dist_sq_before: before,
            dist_sq_after: dist_sq(&z),
            slack,
        });
    }
    Ok(VectorRun { z, steps })
}

/// Index of the first iteration after which the error drops by less than
/// 1% for three consecutive steps.
pub fn detect_floor(errors: &[f64]) -> Option<usize> {
    let stalled = |s: usize| errors[s + 1] > 0.99 * errors[s];
    (0..errors.len().saturating_sub(3)).find(|&s| (s..s + 3).all(stalled))
}

/// Least-squares fit of `ln e_s² = a + s·ln r` over `errors`, returning the
/// per-step squared-error ratio `r`. Zero errors are skipped.
pub fn fit_sq_ratio(errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .filter(|(_, e)| **e > 0.0)
        .map(|(s, e)| (s as f64, (e * e).ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    Some((sxy / sxx).exp())
}

/// Squared-error ratio fitted over the first `max_len` iterations, cut at
/// the floor when one is detected earlier.
pub fn pre_floor_ratio(errors: &[f64], max_len: usize) -> Option<f64> {
    let end = detect_floor(errors)
        .map_or(errors.len(), |f| f + 1)
        .min(max_len)
        .min(errors.len());
    fit_sq_ratio(&errors[..end.max(2).min(errors.len())])
}

/// Mean of the last `k` entries.
pub fn tail_mean(errors: &[f64], k: usize) -> f64 {
    let k = k.min(errors.len()).max(1);
    errors[errors.len() - k..].iter().sum::<f64>() / k as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slack_examples() {
        let cp = CorrelationParams::new(0.5, 0.5, 0.0).unwrap();
        let z = [1.0, 2.0];
        let zs = [0.0, 0.5];
        let g: Vec<f64> = z
            .iter()
            .zip(&zs)
            .map(|(a, b)| 2.0 * 0.5 * (a - b))
            .collect();
        assert_eq!(correlation_slack(&g, &z, &zs, &cp).unwrap(), 0.0);
        assert_eq!(correlation_slack(&[0.0; 2], &zs, &zs, &cp).unwrap(), 0.0);

        let one = CorrelationParams::new(1.0, 1.0, 0.0).unwrap();
        let d = [0.5, -1.0];
        let g: Vec<f64> = d.iter().map(|x| -x).collect();
        let s = correlation_slack(&g, &d, &[0.0, 0.0], &one).unwrap();
        assert_eq!(s, 3.0 * 1.25);
        assert!(correlation_slack(&[0.0], &z, &zs, &cp).is_err());
    }

    #[test]
    fn floor_and_ratio() {
        let e: Vec<f64> = (0..10).map(|s| 0.9f64.powi(s)).collect();
        assert!((fit_sq_ratio(&e).unwrap() - 0.81).abs() < 1e-12);
        assert_eq!(detect_floor(&e), None);
        let mut f = e[..5].to_vec();
        f.extend([0.6, 0.6, 0.6, 0.6]);
        assert_eq!(detect_floor(&f), Some(5));
        assert!(fit_sq_ratio(&[1.0]).is_none());
    }

    #[test]
    fn realizability() {
        assert!(CorrelationParams::new(0.5, 0.5, 0.0)
            .unwrap()
            .is_realizable());
        assert!(!CorrelationParams::new(1.0, 1.0, 0.0)
            .unwrap()
            .is_realizable());
        assert!(CorrelationParams::new(0.0, 1.0, 0.0).is_err());
    }
}
