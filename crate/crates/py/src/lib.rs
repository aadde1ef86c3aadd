//! Python bindings. Scenarios and reports cross the boundary as JSON text;
//! matrices cross as nested lists of Python complex numbers.

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use rankhom::harness::{self, build_complex, ComplexSpec, Command, FieldSpec, GenerationContext, RunOptions};
use rankhom::linalg::{self, CMatrix, HermitianMatrix, Tolerances};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_error(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_matrix(rows: Vec<Vec<Complex64>>) -> PyResult<CMatrix> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(value_error("ragged matrix rows"));
    }
    CMatrix::from_row_major(n, m, rows.into_iter().flatten().collect()).map_err(value_error)
}

fn to_hermitian(rows: Vec<Vec<Complex64>>) -> PyResult<HermitianMatrix> {
    HermitianMatrix::new(to_matrix(rows)?).map_err(value_error)
}

fn from_matrix(m: &CMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows()).map(|r| (0..m.cols()).map(|c| m[(r, c)]).collect()).collect()
}

fn tolerances() -> PyResult<Tolerances> {
    Tolerances::from_env().map_err(value_error)
}

/// Scenario and report schema version.
#[pyfunction]
fn schema_version() -> u32 {
    harness::SCHEMA_VERSION
}

/// Names accepted by `run`.
#[pyfunction]
fn commands() -> Vec<&'static str> {
    Command::ALL.iter().map(Command::as_str).collect()
}

/// Runs a command on a scenario given as JSON text and returns
/// `(report_json, csv_or_none)`. Invalid scenarios raise `ValueError`.
#[pyfunction]
#[pyo3(signature = (command, scenario_json, seed=None, depth=None, steps=None, fixed_report=false))]
fn run(
    py: Python<'_>,
    command: &str,
    scenario_json: &str,
    seed: Option<u64>,
    depth: Option<usize>,
    steps: Option<usize>,
    fixed_report: bool,
) -> PyResult<(String, Option<String>)> {
    let command: Command = command.parse().map_err(value_error)?;
    let scenario = harness::parse_scenario(scenario_json).map_err(value_error)?;
    let opts = RunOptions {
        seed,
        depth,
        steps,
        fixed_report,
    };
    let out = py.detach(|| harness::run(command, &scenario, &opts));
    Ok((out.report.to_json(), out.csv))
}

/// Expands a generator spec (JSON) on a complex spec (JSON) into an
/// explicit field spec (JSON).
#[pyfunction]
#[pyo3(signature = (field_json, complex_json, n, k, l, depth=2, seed=1))]
#[allow(clippy::too_many_arguments)]
fn generate(field_json: &str, complex_json: &str, n: usize, k: usize, l: usize, depth: usize, seed: u64) -> PyResult<String> {
    let spec: FieldSpec = serde_json::from_str(field_json).map_err(value_error)?;
    let complex_spec: ComplexSpec = serde_json::from_str(complex_json).map_err(value_error)?;
    let complex = build_complex(&complex_spec).map_err(value_error)?;
    let window = rankhom::field::RankWindow::new(n, k, l).map_err(value_error)?;
    let tol = tolerances()?;
    let ctx = GenerationContext {
        complex: &complex,
        window,
        depth,
        seed,
        tol: &tol,
    };
    let out = harness::generate(&spec, &ctx).map_err(runtime_error)?;
    serde_json::to_string(&out).map_err(runtime_error)
}

/// Eigenvalues (ascending) and the unitary whose columns are eigenvectors.
#[pyfunction]
fn hermitian_eig(a: Vec<Vec<Complex64>>) -> PyResult<(Vec<f64>, Vec<Vec<Complex64>>)> {
    let e = linalg::hermitian_eig(&to_hermitian(a)?, &tolerances()?).map_err(runtime_error)?;
    let basis = from_matrix(&e.basis);
    Ok((e.eigenvalues, basis))
}

/// `(a - eps)_+`.
#[pyfunction]
fn cut_epsilon(a: Vec<Vec<Complex64>>, eps: f64) -> PyResult<Vec<Vec<Complex64>>> {
    let m = linalg::cut_epsilon(&to_hermitian(a)?, eps, &tolerances()?).map_err(value_error)?;
    Ok(from_matrix(m.matrix()))
}

/// Projection onto the eigenvectors with eigenvalue above `eta`.
#[pyfunction]
fn spectral_projection(a: Vec<Vec<Complex64>>, eta: f64) -> PyResult<Vec<Vec<Complex64>>> {
    let m = linalg::spectral_projection(&to_hermitian(a)?, eta, &tolerances()?).map_err(value_error)?;
    Ok(from_matrix(m.matrix()))
}

/// `c` with `(a - eps)_+ = c* b c`, with its residual and norm.
#[pyfunction]
fn roerdam_factor(a: Vec<Vec<Complex64>>, b: Vec<Vec<Complex64>>, eps: f64) -> PyResult<(Vec<Vec<Complex64>>, f64, f64)> {
    let f = linalg::roerdam_factor(&to_hermitian(a)?, &to_hermitian(b)?, eps, &tolerances()?).map_err(value_error)?;
    Ok((from_matrix(&f.c), f.residual, f.norm))
}

#[pymodule]
fn rankhom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(schema_version, m)?)?;
    m.add_function(wrap_pyfunction!(commands, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(hermitian_eig, m)?)?;
    m.add_function(wrap_pyfunction!(cut_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_projection, m)?)?;
    m.add_function(wrap_pyfunction!(roerdam_factor, m)?)?;
    Ok(())
}
