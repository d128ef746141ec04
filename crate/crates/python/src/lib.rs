//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::HashMap;

use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use wgom::evaluation::{hamming_error_with, AlignmentStrategy};
use wgom::{
    DMatrix, DiscreteScheme, DistributionSpec, ItemParams, MembershipMatrix, Method, ModelSpec,
    ProfileThresholds, ResponseMatrix, SimulationConfig, SvdOptions,
};

create_exception!(wgom_py, WgomError, PyValueError);

fn err(e: wgom::WgomError) -> PyErr {
    WgomError::new_err(e.to_string())
}

type Rows = Vec<Vec<f64>>;
type Curve = Vec<(usize, Option<f64>)>;

fn to_matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let j = rows.first().map_or(0, Vec::len);
    if n == 0 || j == 0 {
        return Err(WgomError::new_err("matrix must be non-empty"));
    }
    if rows.iter().any(|r| r.len() != j) {
        return Err(WgomError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, j, |a, b| rows[a][b]))
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn responses(rows: Vec<Vec<f64>>) -> PyResult<ResponseMatrix> {
    ResponseMatrix::new(to_matrix(rows)?).map_err(err)
}

fn membership(rows: Vec<Vec<f64>>) -> PyResult<MembershipMatrix> {
    MembershipMatrix::new(to_matrix(rows)?).map_err(err)
}

/// A bare name such as `"bernoulli"`, or a JSON object such as
/// `'{"kind": "binomial", "trials": 5}'`.
fn distribution(text: &str) -> PyResult<DistributionSpec> {
    let json = if text.trim_start().starts_with('{') {
        text.to_string()
    } else {
        format!("{{\"kind\": \"{}\"}}", text.trim())
    };
    serde_json::from_str(&json).map_err(|e| WgomError::new_err(format!("bad distribution: {e}")))
}

fn method(name: &str) -> PyResult<Method> {
    name.parse().map_err(err)
}

#[pyclass(name = "EstimationResult", frozen)]
struct PyEstimation {
    inner: wgom::EstimationResult,
}

#[pymethods]
impl PyEstimation {
    /// `N x K` estimated memberships.
    #[getter]
    fn membership(&self) -> Vec<Vec<f64>> {
        to_rows(self.inner.membership_hat.as_matrix())
    }

    /// `J x K` estimated item parameters.
    #[getter]
    fn item_params(&self) -> Vec<Vec<f64>> {
        to_rows(&self.inner.item_params_hat)
    }

    /// Zero-based indices of the subjects picked as pure.
    #[getter]
    fn pure_indices(&self) -> Vec<usize> {
        self.inner.pure_index_set.clone()
    }

    /// Leading singular values (empty for RMSP).
    #[getter]
    fn singular_values(&self) -> Vec<f64> {
        self.inner.singular_values.clone()
    }

    #[getter]
    fn zero_row_fallbacks(&self) -> usize {
        self.inner.zero_row_fallbacks
    }

    fn __repr__(&self) -> String {
        format!(
            "EstimationResult(n_subjects={}, k={})",
            self.inner.membership_hat.n_subjects(),
            self.inner.membership_hat.n_classes()
        )
    }
}

/// Draws a response matrix with expectation `membership @ item_params.T`.
#[pyfunction]
#[pyo3(signature = (membership_rows, item_params, distribution_spec, sparsity=1.0, seed=0))]
fn sample(
    membership_rows: Vec<Vec<f64>>,
    item_params: Vec<Vec<f64>>,
    distribution_spec: &str,
    sparsity: f64,
    seed: u64,
) -> PyResult<(Rows, HashMap<String, f64>)> {
    let items = ItemParams::new(to_matrix(item_params)?).map_err(err)?;
    let spec = ModelSpec::new(membership(membership_rows)?, items, distribution(distribution_spec)?, sparsity);
    let (r, diag) = wgom::sample_response(&spec, seed).map_err(err)?;
    let diagnostics = HashMap::from([
        ("tau_hat".to_string(), diag.tau_hat),
        ("gamma_hat".to_string(), diag.gamma_hat),
    ]);
    Ok((to_rows(r.values()), diagnostics))
}

/// Builds a simulation from a JSON config and samples it. Returns a dict
/// with `responses`, `membership`, `item_params` and `expected`.
#[pyfunction]
#[pyo3(signature = (config_json, seed=0))]
fn simulate(config_json: &str, seed: u64) -> PyResult<HashMap<String, Vec<Vec<f64>>>> {
    let config: SimulationConfig =
        serde_json::from_str(config_json).map_err(|e| WgomError::new_err(format!("bad config: {e}")))?;
    let spec = config.build_spec(seed).map_err(err)?;
    let (r, _) = wgom::sample_response(&spec, seed).map_err(err)?;
    Ok(HashMap::from([
        ("responses".to_string(), to_rows(r.values())),
        ("membership".to_string(), to_rows(spec.membership.as_matrix())),
        ("item_params".to_string(), to_rows(spec.item_params.values())),
        ("expected".to_string(), to_rows(&wgom::expected_responses(&spec))),
    ]))
}

#[pyfunction]
#[pyo3(signature = (responses_rows, k, seed=0))]
fn scgoma(responses_rows: Vec<Vec<f64>>, k: usize, seed: u64) -> PyResult<PyEstimation> {
    let r = responses(responses_rows)?;
    let inner = wgom::estimation::scgoma_with(&r, k, &SvdOptions::with_seed(seed)).map_err(err)?;
    Ok(PyEstimation { inner })
}

#[pyfunction]
fn rmsp(responses_rows: Vec<Vec<f64>>, k: usize) -> PyResult<PyEstimation> {
    let inner = wgom::rmsp(&responses(responses_rows)?, k).map_err(err)?;
    Ok(PyEstimation { inner })
}

/// Returns `(k_hat, [(k, modularity or None), ...])`.
#[pyfunction]
#[pyo3(signature = (responses_rows, method_name="scgoma", k_max=15, seed=0))]
fn select_k(
    responses_rows: Vec<Vec<f64>>,
    method_name: &str,
    k_max: usize,
    seed: u64,
) -> PyResult<(usize, Curve)> {
    let r = responses(responses_rows)?;
    let sel = wgom::select_k(&r, method(method_name)?, k_max, seed).map_err(err)?;
    Ok((sel.k_hat, sel.curve.iter().map(|p| (p.k, p.modularity)).collect()))
}

#[pyfunction]
fn modularity(responses_rows: Vec<Vec<f64>>, membership_rows: Vec<Vec<f64>>) -> PyResult<f64> {
    wgom::fuzzy_weighted_modularity(&responses(responses_rows)?, &membership(membership_rows)?)
        .map_err(err)
}

#[pyfunction]
fn hamming_error(estimate: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    hamming_error_with(&to_matrix(estimate)?, &to_matrix(truth)?, AlignmentStrategy::Auto).map_err(err)
}

#[pyfunction]
fn relative_error(estimate: Vec<Vec<f64>>, truth: Vec<Vec<f64>>) -> PyResult<f64> {
    wgom::relative_error(&to_matrix(estimate)?, &to_matrix(truth)?).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (membership_rows, mixed=0.6, pure=0.9))]
fn profile(membership_rows: Vec<Vec<f64>>, mixed: f64, pure: f64) -> PyResult<HashMap<String, f64>> {
    let p = wgom::profile_memberships(&membership(membership_rows)?, ProfileThresholds { mixed, pure });
    Ok(HashMap::from([
        ("omega_mixed".to_string(), p.omega_mixed),
        ("omega_pure".to_string(), p.omega_pure),
        ("eta".to_string(), p.eta),
    ]))
}

/// Probabilities over `support` with the given mean. `scheme` is a JSON
/// object such as `'{"type": "pinned", "index": 0}'`.
#[pyfunction]
#[pyo3(signature = (support, mean, scheme=None))]
fn construct_discrete(support: Vec<f64>, mean: f64, scheme: Option<&str>) -> PyResult<Vec<f64>> {
    let scheme: DiscreteScheme = match scheme {
        Some(s) => serde_json::from_str(s).map_err(|e| WgomError::new_err(format!("bad scheme: {e}")))?,
        None if support.len() == 2 => DiscreteScheme::Binary,
        None => DiscreteScheme::default(),
    };
    wgom::construct_discrete(&support, scheme, mean).map_err(err)
}

/// Returns `(U, singular_values, V)` of the rank-`k` truncation.
#[pyfunction]
#[pyo3(signature = (matrix, k, seed=0))]
fn top_k_svd(matrix: Rows, k: usize, seed: u64) -> PyResult<(Rows, Vec<f64>, Rows)> {
    let svd = wgom::linalg::top_k_svd_with(&to_matrix(matrix)?, k, &SvdOptions::with_seed(seed)).map_err(err)?;
    Ok((to_rows(svd.left()), svd.singular_values().to_vec(), to_rows(svd.right())))
}

#[pymodule]
fn wgom_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("WgomError", m.py().get_type::<WgomError>())?;
    m.add_class::<PyEstimation>()?;
    m.add_function(wrap_pyfunction!(sample, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(scgoma, m)?)?;
    m.add_function(wrap_pyfunction!(rmsp, m)?)?;
    m.add_function(wrap_pyfunction!(select_k, m)?)?;
    m.add_function(wrap_pyfunction!(modularity, m)?)?;
    m.add_function(wrap_pyfunction!(hamming_error, m)?)?;
    m.add_function(wrap_pyfunction!(relative_error, m)?)?;
    m.add_function(wrap_pyfunction!(profile, m)?)?;
    m.add_function(wrap_pyfunction!(construct_discrete, m)?)?;
    m.add_function(wrap_pyfunction!(top_k_svd, m)?)?;
    Ok(())
}
