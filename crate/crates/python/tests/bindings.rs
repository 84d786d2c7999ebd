use pyo3::prelude::*;
use pyo3::types::PyDict;

fn with_module<F: FnOnce(Python<'_>, &Bound<'_, PyDict>)>(f: F) {
    Python::attach(|py| {
        let module = pyo3::wrap_pymodule!(sparsecode_py::sparsecode_py)(py);
        let globals = PyDict::new(py);
        globals.set_item("sc", module).unwrap();
        f(py, &globals);
    });
}

fn run(py: Python<'_>, globals: &Bound<'_, PyDict>, code: &str) {
    let code = std::ffi::CString::new(code).unwrap();
    if let Err(e) = py.run(&code, Some(globals), None) {
        e.print(py);
        panic!("python snippet failed");
    }
}

#[test]
fn self_nearness_is_zero() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
a = sc.generate_dictionary(8, 8, 0)
assert a.shape == (8, 8)
r = sc.nearness(a, a, 0.0, 0.0)
assert r["delta"] == 0.0 and r["is_near"]
"#,
        );
    });
}

#[test]
fn oracle_descent_from_truth_is_stationary() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
model = sc.Model(12, 12, 2)
a = sc.generate_orthonormal_dictionary(12, 12, 3)
final, trace, csv = sc.run_descent(a, a, model, rule="unbiased", iterations=3)
assert len(trace) == 4
assert all(r["max_col_err"] < 1e-12 for r in trace)
assert csv.splitlines()[0] == "iter,max_col_err,mean_col_err,spec_ratio,grad_norm,eta"
"#,
        );
    });
}

#[test]
fn errors_become_value_errors() {
    with_module(|py, g| {
        run(
            py,
            g,
            r#"
try:
    sc.Model(4, 3, 5)
except ValueError as e:
    assert "k" in str(e)
else:
    raise AssertionError("expected ValueError")
try:
    sc.expected_gradient("nope", sc.generate_dictionary(4, 4, 0), sc.generate_dictionary(4, 4, 0), sc.Model(4, 4, 2))
except ValueError:
    pass
else:
    raise AssertionError("expected ValueError")
"#,
        );
    });
}
