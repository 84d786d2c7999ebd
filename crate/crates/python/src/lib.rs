//! Python bindings for `sparsecode`.
//!
//! Matrices cross the boundary as [`PyMatrix`] objects, built from and
//! converted to lists of rows. Codes are `(support, values)` tuples and
//! reports are plain dictionaries.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sparsecode::decoding::{self, DecodeConfig};
use sparsecode::descent::{self, DescentConfig};
use sparsecode::genmodel::{self, CoeffLaw, ModelParams, SparseCode};
use sparsecode::init::{self, InitConfig, InitInput, MomentSource};
use sparsecode::numerics::Matrix;
use sparsecode::updates::{self, GradientMode, ProjectionSetB, UpdateRule};
use sparsecode::{io, metrics, Error};

fn err<E: Into<Error>>(e: E) -> PyErr {
    PyValueError::new_err(e.into().to_string())
}

fn parse<T: std::str::FromStr<Err = String>>(s: &str) -> PyResult<T> {
    s.parse().map_err(PyValueError::new_err)
}

/// A dense real matrix.
#[pyclass(name = "Matrix", module = "sparsecode_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyMatrix(Matrix);

#[pymethods]
impl PyMatrix {
    /// Builds a matrix from a list of equally long rows.
    #[new]
    fn new(rows: Vec<Vec<f64>>) -> PyResult<Self> {
        Matrix::from_rows(&rows).map(PyMatrix).map_err(err)
    }

    #[staticmethod]
    fn from_columns(columns: Vec<Vec<f64>>) -> PyResult<Self> {
        Matrix::from_columns(&columns).map(PyMatrix).map_err(err)
    }

    #[getter]
    fn shape(&self) -> (usize, usize) {
        (self.0.rows(), self.0.cols())
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.0.to_rows()
    }

    fn column(&self, j: usize) -> PyResult<Vec<f64>> {
        if j >= self.0.cols() {
            return Err(PyValueError::new_err(format!(
                "column {j} out of range for {} columns",
                self.0.cols()
            )));
        }
        Ok(self.0.column(j).to_vec())
    }

    fn get(&self, row: usize, col: usize) -> PyResult<f64> {
        if row >= self.0.rows() || col >= self.0.cols() {
            return Err(PyValueError::new_err("index out of range"));
        }
        Ok(self.0.get(row, col))
    }

    fn frobenius_norm(&self) -> f64 {
        self.0.frobenius_norm()
    }

    fn spectral_norm(&self) -> PyResult<f64> {
        sparsecode::numerics::spectral_norm(&self.0, sparsecode::numerics::DEFAULT_TOL).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!("Matrix({}x{})", self.0.rows(), self.0.cols())
    }
}

/// Parameters of the sparse generative model.
#[pyclass(name = "Model", module = "sparsecode_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel(ModelParams);

#[pymethods]
impl PyModel {
    /// `coeff_low=None` selects Rademacher values, otherwise signed
    /// uniform values with magnitudes from `coeff_low` upward.
    #[new]
    #[pyo3(signature = (n, m, k, coeff_low=None, noise_sigma=0.0))]
    fn new(
        n: usize,
        m: usize,
        k: usize,
        coeff_low: Option<f64>,
        noise_sigma: f64,
    ) -> PyResult<Self> {
        let law = match coeff_low {
            None => CoeffLaw::Rademacher,
            Some(low) => CoeffLaw::SignedUniform { low },
        };
        ModelParams::new(n, m, k, law, noise_sigma)
            .map(PyModel)
            .map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n
    }

    #[getter]
    fn m(&self) -> usize {
        self.0.m
    }

    #[getter]
    fn k(&self) -> usize {
        self.0.k
    }

    /// `q_i`, `q_ij`, `q_ijk`, `p_i`, `c_i` as a dictionary.
    fn support_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let s = genmodel::support_stats(&self.0);
        let d = PyDict::new(py);
        d.set_item("q_i", s.q_i)?;
        d.set_item("q_ij", s.q_ij)?;
        d.set_item("q_ijk", s.q_ijk)?;
        d.set_item("p_i", s.p_i)?;
        d.set_item("c_i", s.c_i)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("Model(n={}, m={}, k={})", self.0.n, self.0.m, self.0.k)
    }
}

type Code = (Vec<usize>, Vec<f64>);

fn code_tuple(c: SparseCode) -> Code {
    (c.support, c.values)
}

#[pyfunction]
fn generate_dictionary(n: usize, m: usize, seed: u64) -> PyResult<PyMatrix> {
    genmodel::generate_dictionary(n, m, seed)
        .map(PyMatrix)
        .map_err(err)
}

#[pyfunction]
fn generate_orthonormal_dictionary(n: usize, m: usize, seed: u64) -> PyResult<PyMatrix> {
    genmodel::generate_orthonormal_dictionary(n, m, seed)
        .map(PyMatrix)
        .map_err(err)
}

/// Moves every column by exactly `delta` orthogonally to itself.
#[pyfunction]
fn perturb_columns(astar: &PyMatrix, delta: f64, seed: u64) -> PyResult<PyMatrix> {
    genmodel::perturb_columns(&astar.0, delta, seed)
        .map(PyMatrix)
        .map_err(err)
}

#[pyfunction]
fn coherence(a: &PyMatrix) -> PyResult<f64> {
    genmodel::coherence(&a.0).map_err(err)
}

/// `p` samples as the columns of a matrix, with their generating codes.
#[pyfunction]
#[pyo3(signature = (astar, model, p, seed, index=0))]
fn draw_batch(
    astar: &PyMatrix,
    model: &PyModel,
    p: usize,
    seed: u64,
    index: u64,
) -> PyResult<(PyMatrix, Vec<Code>)> {
    let b = genmodel::draw_batch(&astar.0, &model.0, p, seed, index).map_err(err)?;
    Ok((
        PyMatrix(b.samples),
        b.codes.into_iter().map(code_tuple).collect(),
    ))
}

/// Entries of `Aᵀy` above `threshold` in magnitude.
#[pyfunction]
fn threshold_decode(a: &PyMatrix, y: Vec<f64>, threshold: f64) -> PyResult<Code> {
    let cfg = DecodeConfig::new(threshold).map_err(err)?;
    decoding::threshold_decode(&a.0, &y, &cfg)
        .map(code_tuple)
        .map_err(err)
}

#[pyfunction]
fn sign_recovery_rate(
    a: &PyMatrix,
    astar: &PyMatrix,
    model: &PyModel,
    trials: usize,
    seed: u64,
) -> PyResult<f64> {
    decoding::sign_recovery_rate(&a.0, &astar.0, &model.0, trials, seed).map_err(err)
}

/// Closed-form expected direction of `rule` at `a`.
#[pyfunction]
fn expected_gradient(
    rule: &str,
    a: &PyMatrix,
    astar: &PyMatrix,
    model: &PyModel,
) -> PyResult<PyMatrix> {
    let stats = genmodel::support_stats(&model.0);
    updates::expected_gradient(parse(rule)?, &a.0, &astar.0, &stats)
        .map(|g| PyMatrix(g.g))
        .map_err(err)
}

/// Sample-average direction of `rule` over the columns of `samples`.
#[pyfunction]
fn empirical_gradient(
    rule: &str,
    a: &PyMatrix,
    samples: &PyMatrix,
    model: &PyModel,
) -> PyResult<PyMatrix> {
    let cfg = DecodeConfig::for_model(&model.0);
    updates::empirical_gradient(parse(rule)?, &a.0, &samples.0, &cfg)
        .map(|g| PyMatrix(g.g))
        .map_err(err)
}

/// Runs the descent and returns the final dictionary with its trace as
/// a list of per-iteration dictionaries and as CSV text.
#[pyfunction]
#[pyo3(signature = (astar, a0, model, rule="simple", mode="oracle", eta_scale=0.25, iterations=25, p_per_iter=0, seed=0, project_radius=None))]
#[allow(clippy::too_many_arguments)]
fn run_descent<'py>(
    py: Python<'py>,
    astar: &PyMatrix,
    a0: &PyMatrix,
    model: &PyModel,
    rule: &str,
    mode: &str,
    eta_scale: f64,
    iterations: usize,
    p_per_iter: usize,
    seed: u64,
    project_radius: Option<f64>,
) -> PyResult<(PyMatrix, Vec<Bound<'py, PyDict>>, String)> {
    let project = match project_radius {
        Some(r) => {
            let cap = 2.0
                * sparsecode::numerics::spectral_norm(&astar.0, sparsecode::numerics::DEFAULT_TOL)
                    .map_err(err)?;
            Some(ProjectionSetB::new(a0.0.clone(), r, cap).map_err(err)?)
        }
        None => None,
    };
    let rule: UpdateRule = parse(rule)?;
    let mode: GradientMode = parse(mode)?;
    let cfg = DescentConfig {
        rule,
        eta: DescentConfig::eta_for(&model.0, eta_scale),
        iterations,
        p_per_iter,
        mode,
        project,
        seed,
    };
    let (a, trace) = py
        .detach(|| descent::run_descent(&astar.0, &a0.0, &model.0, &cfg))
        .map_err(err)?;
    let mut rows = Vec::with_capacity(trace.records.len());
    for r in &trace.records {
        let d = PyDict::new(py);
        d.set_item("iter", r.iter)?;
        d.set_item("max_col_err", r.max_col_err)?;
        d.set_item("mean_col_err", r.mean_col_err)?;
        d.set_item("spec_ratio", r.spec_ratio)?;
        d.set_item("grad_norm", r.grad_norm)?;
        d.set_item("eta", r.eta)?;
        d.set_item("max_slack", r.corr_slack.max)?;
        rows.push(d);
    }
    Ok((PyMatrix(a), rows, io::trace_to_csv(&trace)))
}

/// Pairwise spectral initialization around a known ground truth.
/// Returns the dictionary, or raises when fewer than `m` atoms are found.
#[pyfunction]
#[pyo3(signature = (astar, model, seed, p2=None, oracle_moments=false))]
fn pairwise_init(
    py: Python<'_>,
    astar: &PyMatrix,
    model: &PyModel,
    seed: u64,
    p2: Option<usize>,
    oracle_moments: bool,
) -> PyResult<(PyMatrix, usize)> {
    let mut cfg = InitConfig::defaults(&model.0, seed);
    if let Some(p2) = p2 {
        cfg.p2 = p2;
    }
    if oracle_moments {
        cfg.moment = MomentSource::Oracle;
    }
    let out = py
        .detach(|| init::pairwise_init(InitInput::Synthetic { astar: &astar.0 }, &model.0, &cfg))
        .map_err(err)?;
    Ok((PyMatrix(out.dictionary), out.pairs_tried))
}

/// Signed-permutation matching report as a dictionary.
#[pyfunction]
#[pyo3(signature = (a, astar, delta_target=0.1, kappa_target=2.0))]
fn nearness<'py>(
    py: Python<'py>,
    a: &PyMatrix,
    astar: &PyMatrix,
    delta_target: f64,
    kappa_target: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let r = metrics::nearness(&a.0, &astar.0, delta_target, kappa_target).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("permutation", r.permutation)?;
    d.set_item("signs", r.signs)?;
    d.set_item("per_col_err", r.per_col_err)?;
    d.set_item("delta", r.delta)?;
    d.set_item("kappa", r.kappa)?;
    d.set_item("is_near", r.is_near)?;
    Ok(d)
}

/// Writes SCMX, or CSV when the path ends in `.csv`.
#[pyfunction]
fn save_matrix(path: PathBuf, m: &PyMatrix) -> PyResult<()> {
    io::save_matrix(&path, &m.0).map_err(err)
}

#[pyfunction]
fn load_matrix(path: PathBuf) -> PyResult<PyMatrix> {
    io::load_matrix(&path).map(PyMatrix).map_err(err)
}

#[pymodule]
pub fn sparsecode_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMatrix>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(generate_dictionary, m)?)?;
    m.add_function(wrap_pyfunction!(generate_orthonormal_dictionary, m)?)?;
    m.add_function(wrap_pyfunction!(perturb_columns, m)?)?;
    m.add_function(wrap_pyfunction!(coherence, m)?)?;
    m.add_function(wrap_pyfunction!(draw_batch, m)?)?;
    m.add_function(wrap_pyfunction!(threshold_decode, m)?)?;
    m.add_function(wrap_pyfunction!(sign_recovery_rate, m)?)?;
    m.add_function(wrap_pyfunction!(expected_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(run_descent, m)?)?;
    m.add_function(wrap_pyfunction!(pairwise_init, m)?)?;
    m.add_function(wrap_pyfunction!(nearness, m)?)?;
    m.add_function(wrap_pyfunction!(save_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(load_matrix, m)?)?;
    Ok(())
}
