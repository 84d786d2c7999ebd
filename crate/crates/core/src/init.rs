//! Pairwise initialization: reweighted second moments `M_{u,v}`, the
//! top-two singular value uniqueness test and greedy deduplication.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng as _;
use thiserror::Error;

use crate::genmodel::{
    generate_sample, sample_code, support_stats, ModelError, ModelParams, SparseCode, SupportStats,
};
use crate::numerics::{spectral_norm, Matrix, NumericsError, DEFAULT_TOL};
use crate::rng::{self, StreamKind};
use crate::updates::{project_to_b, ProjectionSetB, UpdateError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InitError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("found {found} of {wanted} atoms after {pairs_tried} pairs")]
    Partial {
        found: usize,
        wanted: usize,
        pairs_tried: usize,
        candidates: CandidateList,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Update(#[from] UpdateError),
}

pub type Result<T> = std::result::Result<T, InitError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentSource {
    /// Sample moment over the `p2` moment samples.
    Empirical,
    /// Closed-form expectation; needs the generating codes of `u` and `v`.
    Oracle,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InitConfig {
    pub p1: usize,
    pub p2: usize,
    pub sigma1_floor: f64,
    pub sigma2_ceil: f64,
    pub dedup_radius: f64,
    pub max_pairs: usize,
    pub seed: u64,
    pub moment: MomentSource,
}

impl InitConfig {
    pub fn defaults(params: &ModelParams, seed: u64) -> Self {
        let (m, k) = (params.m as f64, params.k as f64);
        let ln_m = m.ln().max(1.0);
        InitConfig {
            p1: (20.0 * m * ln_m).ceil() as usize,
            p2: 100_000,
            sigma1_floor: 0.3,
            sigma2_ceil: 3.0,
            dedup_radius: if params.m > 2 { 1.0 / m.ln() } else { 0.5 },
            max_pairs: (50.0 * (m / k).powi(2) * ln_m).ceil() as usize,
            seed,
            moment: MomentSource::Empirical,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma1_floor > 0.0 && self.sigma2_ceil > 0.0) {
            return Err(InitError::InvalidConfig(format!(
                "thresholds must be positive, got {} and {}",
                self.sigma1_floor, self.sigma2_ceil
            )));
        }
        if !(self.dedup_radius > 0.0 && self.dedup_radius < 1.0) {
            return Err(InitError::InvalidConfig(format!(
                "dedup_radius must lie in (0, 1), got {}",
                self.dedup_radius
            )));
        }
        if self.p1 < 2 || self.p2 == 0 || self.max_pairs == 0 {
            return Err(InitError::InvalidConfig(
                "need p1 >= 2, p2 >= 1 and max_pairs >= 1".into(),
            ));
        }
        Ok(())
    }

    /// `(σ₁ floor, σ₂ ceiling)` in absolute units: `floor·k/m` and
    /// `ceil·k/(m ln m)`.
    pub fn thresholds(&self, params: &ModelParams) -> (f64, f64) {
        let (m, k) = (params.m as f64, params.k as f64);
        let ln_m = if params.m > 1 { m.ln() } else { 1.0 };
        (self.sigma1_floor * k / m, self.sigma2_ceil * k / (m * ln_m))
    }
}

/// `σ₁ ≥ floor·k/m` and `σ₂ ≤ ceil·k/(m ln m)`.
pub fn uniqueness_test(sigma1: f64, sigma2: f64, params: &ModelParams, cfg: &InitConfig) -> bool {
    let (lo, hi) = cfg.thresholds(params);
    sigma1 >= lo && sigma2 <= hi
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub vector: Vec<f64>,
    /// Pool indices of `u` and `v`.
    pub pair: (usize, usize),
    pub sigma1: f64,
    pub sigma2: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CandidateList {
    pub candidates: Vec<Candidate>,
}

/// `min(‖a − b‖, ‖a + b‖)`.
pub fn sign_invariant_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut minus, mut plus) = (0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        minus += (x - y) * (x - y);
        plus += (x + y) * (x + y);
    }
    minus.min(plus).sqrt()
}

/// Flips `v` so that its largest-magnitude entry (first one on ties) is positive.
pub fn sign_normalize(v: &mut [f64]) {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v.get(best).is_some_and(|x| *x < 0.0) {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

impl CandidateList {
    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        self.candidates
            .iter()
            .map(|c| c.vector.as_slice())
            .collect()
    }

    /// Adds `cand` unless it lies within `radius` of an existing vector.
    pub fn try_insert(&mut self, cand: Candidate, radius: f64) -> bool {
        if self
            .candidates
            .iter()
            .any(|c| sign_invariant_distance(&c.vector, &cand.vector) <= radius)
        {
            return false;
        }
        self.candidates.push(cand);
        true
    }

    /// Columns in insertion order.
    pub fn to_matrix(&self) -> Result<Matrix> {
        let cols: Vec<Vec<f64>> = self.candidates.iter().map(|c| c.vector.clone()).collect();
        Ok(Matrix::from_columns(&cols)?)
    }
}

fn symmetrize_upper(m: &mut DMatrix<f64>) {
    for j in 0..m.ncols() {
        for i in (j + 1)..m.nrows() {
            m[(i, j)] = m[(j, i)];
        }
    }
}

/// `(1/p) Σ ⟨y,u⟩⟨y,v⟩ y yᵀ` over the columns of `samples`.
pub fn weighted_moment(u: &[f64], v: &[f64], samples: &Matrix) -> Result<Matrix> {
    let n = samples.rows();
    if u.len() != n || v.len() != n {
        return Err(InitError::DimensionMismatch(format!(
            "u, v have lengths {}, {}; samples have {} rows",
            u.len(),
            v.len(),
            n
        )));
    }
    if samples.cols() == 0 {
        return Err(InitError::InvalidConfig("no moment samples".into()));
    }
    let y = samples.inner();
    let wu = y.tr_mul(&DVector::from_column_slice(u));
    let wv = y.tr_mul(&DVector::from_column_slice(v));
    let mut scaled = y.clone();
    for (t, mut col) in scaled.column_iter_mut().enumerate() {
        col *= wu[t] * wv[t];
    }
    let mut m = scaled * y.transpose() / samples.cols() as f64;
    symmetrize_upper(&mut m);
    Ok(Matrix::from_dmatrix(m)?)
}

/// Code-domain weight matrix `K = (1/p) Σ (βᵀx)(β'ᵀx) x xᵀ`; for noiseless
/// samples `y = A* x` the sample moment equals `A* K A*ᵀ`.
pub fn code_moment(beta: &[f64], beta_p: &[f64], codes: &[SparseCode]) -> DMatrix<f64> {
    let m = beta.len();
    let mut k = DMatrix::zeros(m, m);
    for x in codes {
        let (mut a, mut b) = (0.0, 0.0);
        for (&i, &v) in x.support.iter().zip(&x.values) {
            a += beta[i] * v;
            b += beta_p[i] * v;
        }
        let w = a * b;
        if w == 0.0 {
            continue;
        }
        for (&i, &vi) in x.support.iter().zip(&x.values) {
            for (&j, &vj) in x.support.iter().zip(&x.values) {
                if j >= i {
                    k[(i, j)] += w * vi * vj;
                }
            }
        }
    }
    k /= codes.len().max(1) as f64;
    symmetrize_upper(&mut k);
    k
}

/// The four pieces of the expected moment, each written as a code-domain
/// weight matrix `K` so that the term equals `A* K A*ᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentWeights {
    pub main: DMatrix<f64>,
    pub e1: DMatrix<f64>,
    pub e2: DMatrix<f64>,
    pub e3: DMatrix<f64>,
}

impl MomentWeights {
    pub fn total(&self) -> DMatrix<f64> {
        &self.main + &self.e1 + &self.e2 + &self.e3
    }

    pub fn errors(&self) -> DMatrix<f64> {
        &self.e1 + &self.e2 + &self.e3
    }
}

/// Weights of `E[⟨u,y⟩⟨v,y⟩ y yᵀ]` for noiseless samples, with
/// `β = A*ᵀu`, `β' = A*ᵀv` and `shared` the indices in `U ∩ V`:
///
/// * main: `Σ_{i∈U∩V} q_i c_i β_iβ'_i e_i e_iᵀ`
/// * e1: the same sum over `i ∉ U∩V`
/// * e2: `Σ_{i≠j} q_ij β_iβ'_i e_j e_jᵀ`
/// * e3: `Σ_{i≠j} q_ij (β_iβ'_j + β'_iβ_j) e_i e_jᵀ`
pub fn moment_weights(
    beta: &[f64],
    beta_p: &[f64],
    shared: &[usize],
    stats: &SupportStats,
) -> MomentWeights {
    let m = beta.len();
    let bb: Vec<f64> = beta.iter().zip(beta_p).map(|(a, b)| a * b).collect();
    let total_bb: f64 = bb.iter().sum();
    let qc = stats.q_i * stats.c_i;
    let mut main = DMatrix::zeros(m, m);
    let mut e1 = DMatrix::zeros(m, m);
    let mut e2 = DMatrix::zeros(m, m);
    let mut e3 = DMatrix::zeros(m, m);
    for i in 0..m {
        if shared.contains(&i) {
            main[(i, i)] = qc * bb[i];
        } else {
            e1[(i, i)] = qc * bb[i];
        }
        e2[(i, i)] = stats.q_ij * (total_bb - bb[i]);
        for j in 0..m {
            if j != i {
                e3[(i, j)] = stats.q_ij * (beta[i] * beta_p[j] + beta_p[i] * beta[j]);
            }
        }
    }
    MomentWeights { main, e1, e2, e3 }
}

/// The expected moment and its decomposition in sample space.
#[derive(Debug, Clone)]
pub struct AnalyticMoment {
    pub total: Matrix,
    pub main: Matrix,
    pub e1: Matrix,
    pub e2: Matrix,
    pub e3: Matrix,
    pub main_norm: f64,
    pub e1_norm: f64,
    pub e2_norm: f64,
    pub e3_norm: f64,
    /// `‖E₁ + E₂ + E₃‖`
    pub error_norm: f64,
}

fn lift(astar: &DMatrix<f64>, k: &DMatrix<f64>) -> DMatrix<f64> {
    let mut m = astar * k * astar.transpose();
    symmetrize_upper(&mut m);
    m
}

/// Largest absolute eigenvalue of a symmetric matrix.
fn sym_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, l| acc.max(l.abs()))
}

/// `E[⟨u,y⟩⟨v,y⟩ y yᵀ]` for `u = A*α`, `v = A*α'`, split into its main term
/// and the three error terms, with spectral norms.
pub fn analytic_moment(
    u_code: &SparseCode,
    v_code: &SparseCode,
    astar: &Matrix,
    stats: &SupportStats,
) -> Result<AnalyticMoment> {
    let a = astar.inner();
    let u = DVector::from_vec(u_code.synthesize(astar));
    let v = DVector::from_vec(v_code.synthesize(astar));
    let beta = a.tr_mul(&u);
    let beta_p = a.tr_mul(&v);
    let shared: Vec<usize> = u_code
        .support
        .iter()
        .copied()
        .filter(|i| v_code.support.contains(i))
        .collect();
    let w = moment_weights(beta.as_slice(), beta_p.as_slice(), &shared, stats);
    let main = lift(a, &w.main);
    let e1 = lift(a, &w.e1);
    let e2 = lift(a, &w.e2);
    let e3 = lift(a, &w.e3);
    let errors = &e1 + &e2 + &e3;
    let total = &main + &errors;
    Ok(AnalyticMoment {
        main_norm: sym_norm(&main),
        e1_norm: sym_norm(&e1),
        e2_norm: sym_norm(&e2),
        e3_norm: sym_norm(&e3),
        error_norm: sym_norm(&errors),
        total: Matrix::from_dmatrix(total)?,
        main: Matrix::from_dmatrix(main)?,
        e1: Matrix::from_dmatrix(e1)?,
        e2: Matrix::from_dmatrix(e2)?,
        e3: Matrix::from_dmatrix(e3)?,
    })
}

/// Top two singular values of a symmetric matrix with the top singular
/// vector, sign-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct TopTwo {
    pub sigma1: f64,
    pub sigma2: f64,
    pub vector: Vec<f64>,
}

fn top_two_symmetric(m: DMatrix<f64>) -> TopTwo {
    let eig = SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .abs()
            .total_cmp(&eig.eigenvalues[a].abs())
            .then(a.cmp(&b))
    });
    let sigma1 = order.first().map_or(0.0, |&i| eig.eigenvalues[i].abs());
    let sigma2 = order.get(1).map_or(0.0, |&i| eig.eigenvalues[i].abs());
    let vector = order.first().map_or_else(Vec::new, |&i| {
        eig.eigenvectors.column(i).iter().copied().collect()
    });
    TopTwo {
        sigma1,
        sigma2,
        vector,
    }
}

/// Spectral data of `A* K A*ᵀ` computed in an `m`-dimensional space when
/// `A*` is tall: with `A* = QR`, `A* K A*ᵀ = Q (R K Rᵀ) Qᵀ`.
struct Reducer {
    q: Option<DMatrix<f64>>,
    r: DMatrix<f64>,
}

impl Reducer {
    fn new(astar: &DMatrix<f64>) -> Self {
        if astar.ncols() < astar.nrows() {
            let qr = astar.clone().qr();
            Reducer {
                q: Some(qr.q()),
                r: qr.r(),
            }
        } else {
            Reducer {
                q: None,
                r: astar.clone(),
            }
        }
    }

    fn top_two(&self, k: &DMatrix<f64>) -> TopTwo {
        let mut s = &self.r * k * self.r.transpose();
        symmetrize_upper(&mut s);
        let mut t = top_two_symmetric(s);
        if let Some(q) = &self.q {
            t.vector = (q * DVector::from_vec(t.vector)).as_slice().to_vec();
        }
        let nv = t.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nv > 0.0 {
            t.vector.iter_mut().for_each(|x| *x /= nv);
        }
        sign_normalize(&mut t.vector);
        t
    }
}

/// Top two singular values and the sign-normalized top vector of the
/// symmetric moment `m`.
pub fn moment_spectrum(m: &Matrix) -> TopTwo {
    let mut t = top_two_symmetric(m.inner().clone());
    sign_normalize(&mut t.vector);
    t
}

/// Where the pair and moment samples come from.
pub enum InitInput<'a> {
    /// Draw both pools from the model around a known ground truth.
    Synthetic { astar: &'a Matrix },
    /// Observed samples: columns `[0, p1)` form the pair pool and
    /// `[p1, p1 + p2)` the moment pool.
    Data { samples: &'a Matrix },
}

#[derive(Debug, Clone)]
pub struct InitOutput {
    pub dictionary: Matrix,
    pub candidates: CandidateList,
    pub pairs_tried: usize,
    pub projection_converged: bool,
}

/// A pool of model samples together with their codes.
pub struct Pool {
    pub samples: Matrix,
    pub codes: Vec<SparseCode>,
}

/// Noise stream indices reserved for the initialization pools.
const PAIR_NOISE_INDEX: u64 = 1 << 54;
const MOMENT_NOISE_INDEX: u64 = (1 << 54) + 1;

fn draw_pool(
    astar: &Matrix,
    params: &ModelParams,
    p: usize,
    seed: u64,
    code_kind: StreamKind,
    noise_index: u64,
) -> Result<Pool> {
    let mut code_rng = rng::stream(seed, code_kind, 0);
    let mut noise_rng = rng::stream(seed, StreamKind::Noise, noise_index);
    let codes: Vec<SparseCode> = (0..p).map(|_| sample_code(params, &mut code_rng)).collect();
    let mut data = Vec::with_capacity(params.n * p);
    for c in &codes {
        data.extend(generate_sample(
            astar,
            c,
            params.noise_sigma,
            &mut noise_rng,
        )?);
    }
    Ok(Pool {
        samples: Matrix::from_column_major(params.n, p, data)?,
        codes,
    })
}

/// The pair pool used by [`pairwise_init`] in synthetic mode.
pub fn pair_pool(astar: &Matrix, params: &ModelParams, cfg: &InitConfig) -> Result<Pool> {
    draw_pool(
        astar,
        params,
        cfg.p1,
        cfg.seed,
        StreamKind::PairCodes,
        PAIR_NOISE_INDEX,
    )
}

/// The moment pool used by [`pairwise_init`] in synthetic mode.
pub fn moment_pool(astar: &Matrix, params: &ModelParams, cfg: &InitConfig) -> Result<Pool> {
    draw_pool(
        astar,
        params,
        cfg.p2,
        cfg.seed,
        StreamKind::MomentCodes,
        MOMENT_NOISE_INDEX,
    )
}

/// The `s`-th pair of distinct pool indices.
pub struct PairSampler {
    rng: rng::Rng,
    pool: usize,
}

impl PairSampler {
    pub fn new(seed: u64, pool: usize) -> Self {
        PairSampler {
            rng: rng::stream(seed, StreamKind::Pairs, 0),
            pool,
        }
    }

    pub fn next_pair(&mut self) -> (usize, usize) {
        let a = self.rng.random_range(0..self.pool);
        let mut b = self.rng.random_range(0..self.pool - 1);
        if b >= a {
            b += 1;
        }
        (a, b)
    }
}

/// `|U ∩ V|` for two codes.
pub fn overlap(u: &SparseCode, v: &SparseCode) -> usize {
    u.support.iter().filter(|i| v.support.contains(i)).count()
}

/// Collects candidate atoms from sample pairs until `m` distinct ones are
/// found, then projects the assembled estimate onto `𝓑` anchored at itself
/// with spectral cap `2‖A*‖` (synthetic) or `2‖Ã‖` (data).
pub fn pairwise_init(
    input: InitInput<'_>,
    params: &ModelParams,
    cfg: &InitConfig,
) -> Result<InitOutput> {
    cfg.validate()?;
    params.validate()?;
    let stats = support_stats(params);
    let m = params.m;

    enum Source<'b> {
        Fast {
            astar: &'b Matrix,
            reducer: Reducer,
            pairs: Pool,
            moments: Option<Vec<SparseCode>>,
        },
        Dense {
            pairs: Matrix,
            moments: Matrix,
        },
    }

    let (source, cap) = match input {
        InitInput::Synthetic { astar } => {
            if astar.rows() != params.n || astar.cols() != m {
                return Err(InitError::DimensionMismatch(format!(
                    "dictionary is {}x{}, model is {}x{}",
                    astar.rows(),
                    astar.cols(),
                    params.n,
                    m
                )));
            }
            let cap = 2.0 * spectral_norm(astar, DEFAULT_TOL)?;
            let pairs = pair_pool(astar, params, cfg)?;
            let src = match (cfg.moment, params.noise_sigma > 0.0) {
                (MomentSource::Oracle, _) => Source::Fast {
                    astar,
                    reducer: Reducer::new(astar.inner()),
                    pairs,
                    moments: None,
                },
                (MomentSource::Empirical, false) => {
                    let moments = moment_pool(astar, params, cfg)?.codes;
                    Source::Fast {
                        astar,
                        reducer: Reducer::new(astar.inner()),
                        pairs,
                        moments: Some(moments),
                    }
                }
                (MomentSource::Empirical, true) => Source::Dense {
                    pairs: pairs.samples,
                    moments: moment_pool(astar, params, cfg)?.samples,
                },
            };
            (src, Some(cap))
        }
        InitInput::Data { samples } => {
            if cfg.moment == MomentSource::Oracle {
                return Err(InitError::InvalidConfig(
                    "oracle moments need a ground-truth dictionary".into(),
                ));
            }
            if samples.rows() != params.n || samples.cols() < cfg.p1 + cfg.p2 {
                return Err(InitError::DimensionMismatch(format!(
                    "need {} samples of length {}, got {} of length {}",
                    cfg.p1 + cfg.p2,
                    params.n,
                    samples.cols(),
                    samples.rows()
                )));
            }
            let n = params.n;
            let data = samples.as_slice();
            let pairs = Matrix::from_column_major(n, cfg.p1, data[..n * cfg.p1].to_vec())?;
            let moments = Matrix::from_column_major(
                n,
                cfg.p2,
                data[n * cfg.p1..n * (cfg.p1 + cfg.p2)].to_vec(),
            )?;
            (Source::Dense { pairs, moments }, None)
        }
    };

    let mut list = CandidateList::default();
    let mut sampler = PairSampler::new(cfg.seed, cfg.p1);
    let mut tried = 0;
    while list.len() < m && tried < cfg.max_pairs {
        tried += 1;
        let (a, b) = sampler.next_pair();
        let top = match &source {
            Source::Fast {
                astar,
                reducer,
                pairs,
                moments,
            } => {
                let k = match moments {
                    Some(codes) => {
                        let am = astar.inner();
                        let beta = am.tr_mul(&DVector::from_column_slice(pairs.samples.column(a)));
                        let beta_p =
                            am.tr_mul(&DVector::from_column_slice(pairs.samples.column(b)));
                        code_moment(beta.as_slice(), beta_p.as_slice(), codes)
                    }
                    None => {
                        let (cu, cv) = (&pairs.codes[a], &pairs.codes[b]);
                        let am = astar.inner();
                        let beta = am.tr_mul(&DVector::from_vec(cu.synthesize(astar)));
                        let beta_p = am.tr_mul(&DVector::from_vec(cv.synthesize(astar)));
                        let shared: Vec<usize> = cu
                            .support
                            .iter()
                            .copied()
                            .filter(|i| cv.support.contains(i))
                            .collect();
                        moment_weights(beta.as_slice(), beta_p.as_slice(), &shared, &stats).total()
                    }
                };
                reducer.top_two(&k)
            }
            Source::Dense { pairs, moments } => {
                moment_spectrum(&weighted_moment(pairs.column(a), pairs.column(b), moments)?)
            }
        };
        if uniqueness_test(top.sigma1, top.sigma2, params, cfg) {
            list.try_insert(
                Candidate {
                    vector: top.vector,
                    pair: (a, b),
                    sigma1: top.sigma1,
                    sigma2: top.sigma2,
                },
                cfg.dedup_radius,
            );
        }
    }
    if list.len() < m {
        return Err(InitError::Partial {
            found: list.len(),
            wanted: m,
            pairs_tried: tried,
            candidates: list,
        });
    }
    let tilde = list.to_matrix()?;
    let cap = match cap {
        Some(c) => c,
        None => 2.0 * spectral_norm(&tilde, DEFAULT_TOL)?,
    };
    let set = ProjectionSetB::new(tilde.clone(), cfg.dedup_radius, cap)?;
    let proj = project_to_b(&tilde, &set, 500, 1e-10)?;
    Ok(InitOutput {
        dictionary: proj.matrix,
        candidates: list,
        pairs_tried: tried,
        projection_converged: proj.converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ModelParams {
        ModelParams::rademacher(16, 8, 2).unwrap()
    }

    #[test]
    fn uniqueness_examples() {
        let p = params();
        let cfg = InitConfig::defaults(&p, 0);
        assert!(uniqueness_test(1e6, 0.0, &p, &cfg));
        let strict = InitConfig {
            sigma1_floor: 0.5,
            sigma2_ceil: 0.5,
            ..cfg
        };
        assert!(!uniqueness_test(0.3, 0.3, &p, &strict));
    }

    #[test]
    fn rank_one_moment() {
        let e1 = Matrix::from_columns(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let m = weighted_moment(&[1.0, 0.0, 0.0], &[1.0, 0.0, 0.0], &e1).unwrap();
        let mut expect = Matrix::zeros(3, 3).into_inner();
        expect[(0, 0)] = 1.0;
        assert_eq!(m.inner(), &expect);
        let z = weighted_moment(&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &e1).unwrap();
        assert_eq!(z.frobenius_norm(), 0.0);
        assert!(weighted_moment(&[1.0], &[1.0], &e1).is_err());
    }

    #[test]
    fn sign_normalization_and_distance() {
        let mut v = vec![0.1, -0.9, 0.3];
        sign_normalize(&mut v);
        assert_eq!(v, vec![-0.1, 0.9, -0.3]);
        assert_eq!(sign_invariant_distance(&[1.0, 0.0], &[-1.0, 0.0]), 0.0);
    }

    #[test]
    fn dedup_is_idempotent() {
        let mut l = CandidateList::default();
        let c = Candidate {
            vector: vec![1.0, 0.0],
            pair: (0, 1),
            sigma1: 1.0,
            sigma2: 0.0,
        };
        assert!(l.try_insert(c.clone(), 0.2));
        assert!(!l.try_insert(c.clone(), 0.2));
        let mut flipped = c;
        flipped.vector = vec![-1.0, 0.0];
        assert!(!l.try_insert(flipped, 0.2));
        assert_eq!(l.len(), 1);
    }

    #[test]
    fn pair_sampler_distinct() {
        let mut s = PairSampler::new(3, 2);
        for _ in 0..50 {
            let (a, b) = s.next_pair();
            assert_ne!(a, b);
            assert!(a < 2 && b < 2);
        }
    }

    #[test]
    fn config_validation() {
        let p = params();
        let mut cfg = InitConfig::defaults(&p, 0);
        assert!(cfg.validate().is_ok());
        cfg.dedup_radius = 1.5;
        assert!(cfg.validate().is_err());
    }
}
