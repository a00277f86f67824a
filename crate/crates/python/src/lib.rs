//! Python bindings. Reports cross the boundary as JSON and come back as plain dicts, so the
//! Python side sees exactly what the command-line tool prints.

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use nilsoliton::document::{corpus_document, parse_algebra, AlgebraDocument};
use nilsoliton::linalg::Mat;
use nilsoliton::pipeline::{self, Command, Options, RunReport};
use nilsoliton::ricci::ricci_endo;
use nilsoliton::stability::hm_weight;
use nilsoliton::{corpus, Error};

create_exception!(pynilsoliton, NilsolitonError, PyValueError, "Input or verification error; `code` names the kind.");

fn to_py(err: Error) -> PyErr {
    let e = NilsolitonError::new_err(err.to_string());
    Python::attach(|py| {
        let value = e.value(py);
        let _ = value.setattr("code", err.code());
        let _ = value.setattr("module", err.module());
    });
    e
}

fn load(document: Option<&str>, name: Option<&str>) -> Result<(AlgebraDocument, Vec<String>), Error> {
    match (document, name) {
        (Some(text), None) => parse_algebra(text).map(|p| (p.document, p.warnings)),
        (None, Some(name)) => corpus_document(name).map(|d| (d, Vec::new())),
        _ => Err(Error::Io("give exactly one of `document` or `corpus`".into())),
    }
}

fn matrix(rows: &[Vec<f64>]) -> Result<Mat, Error> {
    let n = rows.len();
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch { expected: n, found: bad.len() });
    }
    Ok(Mat::from_fn(n, n, |i, j| rows[i][j]))
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn report_to_py<'py>(py: Python<'py>, report: &RunReport) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let json = py.import("json")?;
    Ok((report.exit_code, json.call_method1("loads", (report.to_json(),))?))
}

/// Run one pipeline command and return `(exit_code, report)`.
///
/// Pass the algebra either as a JSON `document` string or by `corpus` name.
#[pyfunction]
#[pyo3(signature = (command, document=None, corpus=None, seed=1, search=32, max_iter=20000, tol=1e-11, lambda_rows=None))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    command: &str,
    document: Option<&str>,
    corpus: Option<&str>,
    seed: u64,
    search: usize,
    max_iter: usize,
    tol: f64,
    lambda_rows: Option<Vec<Vec<f64>>>,
) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let command: Command = command.parse().map_err(to_py)?;
    let (doc, warnings) = load(document, corpus).map_err(to_py)?;
    let mut opts = Options { seed, search_budget: search, ..Options::default() };
    opts.flow.max_iter = max_iter;
    opts.flow.grad_tol = tol;
    opts.flow.seed = seed;
    opts.lambda = lambda_rows.as_deref().map(matrix).transpose().map_err(to_py)?;
    let report = py.detach(|| pipeline::run(&doc, &warnings, command, &opts)).map_err(to_py)?;
    report_to_py(py, &report)
}

/// Re-verify a certificate file's contents; returns `(exit_code, report)`.
#[pyfunction]
fn certify<'py>(py: Python<'py>, text: &str) -> PyResult<(i32, Bound<'py, PyAny>)> {
    let report = pipeline::certify(text, &Options::default()).map_err(to_py)?;
    report_to_py(py, &report)
}

/// Names of the built-in algebras.
#[pyfunction]
fn corpus_names() -> Vec<String> {
    corpus::names()
}

/// A built-in algebra as a JSON document string.
#[pyfunction]
fn corpus_json(name: &str) -> PyResult<String> {
    corpus_document(name).map(|d| d.render()).map_err(to_py)
}

/// Ricci endomorphism of the orthonormal basis in which the document is written.
#[pyfunction]
#[pyo3(signature = (document=None, corpus=None))]
fn ricci(document: Option<&str>, corpus: Option<&str>) -> PyResult<Vec<Vec<f64>>> {
    let (doc, _) = load(document, corpus).map_err(to_py)?;
    Ok(rows(&ricci_endo(&doc.to_tensor().map_err(to_py)?)))
}

/// Weight of a symmetric direction, with the attaining triple (1-based).
#[pyfunction]
#[pyo3(signature = (lambda_rows, document=None, corpus=None))]
fn weight<'py>(
    py: Python<'py>,
    lambda_rows: Vec<Vec<f64>>,
    document: Option<&str>,
    corpus: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let (doc, _) = load(document, corpus).map_err(to_py)?;
    let w = hm_weight(&matrix(&lambda_rows).map_err(to_py)?, &doc.to_tensor().map_err(to_py)?).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("nu", w.nu)?;
    out.set_item("witness", w.witness)?;
    Ok(out)
}

#[pymodule]
fn pynilsoliton(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NilsolitonError", m.py().get_type::<NilsolitonError>())?;
    m.add("__version__", pipeline::VERSION)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(certify, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_names, m)?)?;
    m.add_function(wrap_pyfunction!(corpus_json, m)?)?;
    m.add_function(wrap_pyfunction!(ricci, m)?)?;
    m.add_function(wrap_pyfunction!(weight, m)?)?;
    Ok(())
}
