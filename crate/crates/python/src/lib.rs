//! Python module `repute`: matrices, the reputation engine, the audit,
//! harmonization, the statistics and the end-to-end pipeline.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use repute::dataset::{self, AgeBrackets, ItemId, RatingScale, UserId};
use repute::independence::{self, AuditConfig};
use repute::pipeline::{self, AttributeChoice, OutputFormats};
use repute::reputation::{self, EngineConfig, RankingVector, ReputationVector, Variant};
use repute::stats::{self, MwMethod, TauVariant};

fn err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Sparse user-item rating matrix.
#[pyclass(name = "RatingsMatrix", module = "repute", frozen)]
struct PyRatingsMatrix(dataset::RatingsMatrix);

#[pymethods]
impl PyRatingsMatrix {
    /// Builds a matrix from `(user, item, raw_rating)` triples.
    #[staticmethod]
    #[pyo3(signature = (triples, scale_max = 5))]
    fn from_triples(triples: Vec<(u32, u32, i64)>, scale_max: u32) -> PyResult<Self> {
        let mut b = dataset::MatrixBuilder::new(RatingScale::new(scale_max).map_err(err)?);
        for (u, i, r) in triples {
            b.add(UserId(u), ItemId(i), r).map_err(err)?;
        }
        Ok(Self(b.build()))
    }

    /// Reads `user::item::rating::timestamp` lines, or `user,item,rating` for `.csv`.
    #[staticmethod]
    #[pyo3(signature = (path, scale_max = 5))]
    fn load(path: PathBuf, scale_max: u32) -> PyResult<Self> {
        pipeline::load_ratings(&path, scale_max)
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn n_users(&self) -> usize {
        self.0.n_users()
    }

    #[getter]
    fn n_items(&self) -> usize {
        self.0.n_items()
    }

    #[getter]
    fn nnz(&self) -> usize {
        self.0.nnz()
    }

    #[getter]
    fn delta_r(&self) -> f64 {
        self.0.delta_r()
    }

    fn __repr__(&self) -> String {
        format!(
            "RatingsMatrix(users={}, items={}, ratings={})",
            self.0.n_users(),
            self.0.n_items(),
            self.0.nnz()
        )
    }
}

/// Disjoint assignment of users to the classes of one attribute.
#[pyclass(name = "AttributeTable", module = "repute", frozen)]
struct PyAttributeTable(dataset::AttributeTable);

#[pymethods]
impl PyAttributeTable {
    /// `classes` fixes the class order; by default classes are sorted.
    #[new]
    #[pyo3(signature = (name, assignment, classes = None))]
    fn new(
        name: String,
        assignment: BTreeMap<u32, String>,
        classes: Option<Vec<String>>,
    ) -> PyResult<Self> {
        let classes = classes.unwrap_or_else(|| {
            let mut c: Vec<String> = assignment.values().cloned().collect();
            c.sort();
            c.dedup();
            c
        });
        let mut table = dataset::AttributeTable::new(name, classes);
        for (user, class) in &assignment {
            table.assign(UserId(*user), class).map_err(err)?;
        }
        Ok(Self(table))
    }

    /// Reads `attribute` ("gender" or "age") from a MovieLens users file
    /// or a `user,attribute,class` CSV.
    #[staticmethod]
    fn load(path: PathBuf, attribute: &str) -> PyResult<Self> {
        let choice: AttributeChoice = attribute.parse().map_err(err)?;
        pipeline::load_attribute(&path, choice, &AgeBrackets::movielens())
            .map(Self)
            .map_err(err)
    }

    #[getter]
    fn name(&self) -> &str {
        self.0.name()
    }

    #[getter]
    fn classes(&self) -> Vec<String> {
        self.0.classes().to_vec()
    }

    fn class_of(&self, user: u32) -> Option<String> {
        self.0.class_of(UserId(user)).map(String::from)
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }
}

fn rankings_dict<'py>(py: Python<'py>, r: &RankingVector) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (item, score) in r.iter() {
        d.set_item(item.0, score)?;
    }
    Ok(d)
}

fn reputations_dict<'py>(py: Python<'py>, r: &ReputationVector) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (user, value) in r.iter() {
        d.set_item(user.0, value)?;
    }
    Ok(d)
}

fn reputation_vector(values: BTreeMap<u32, f64>) -> ReputationVector {
    let (users, values) = values.into_iter().map(|(u, v)| (UserId(u), v)).unzip();
    ReputationVector::from_values(users, values)
}

fn json_to_py(py: Python<'_>, value: &serde_json::Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (value.to_string(),))?.unbind())
}

/// Unweighted per-item mean rating, `{item: score}`.
#[pyfunction]
fn aa_ranking<'py>(py: Python<'py>, matrix: &PyRatingsMatrix) -> PyResult<Bound<'py, PyDict>> {
    rankings_dict(py, &reputation::aa_ranking(&matrix.0).map_err(err)?)
}

/// Iterates the reputation engine to convergence.
///
/// Returns a dict with `rankings`, `reputations`, `iterations`,
/// `converged` and `trajectory` (sup-norm change per iteration).
#[pyfunction]
#[pyo3(signature = (matrix, lambda_ = 0.5, variant = "normalized", tol = 1e-8, max_iter = 200))]
fn run<'py>(
    py: Python<'py>,
    matrix: &PyRatingsMatrix,
    lambda_: f64,
    variant: &str,
    tol: f64,
    max_iter: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let variant: Variant = variant.parse().map_err(err)?;
    let config = EngineConfig {
        lambda: lambda_,
        tolerance: tol,
        max_iterations: max_iter,
        variant,
        ..EngineConfig::default()
    };
    let out = reputation::run(&matrix.0, &config).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("rankings", rankings_dict(py, &out.rankings)?)?;
    d.set_item("reputations", reputations_dict(py, &out.reputations)?)?;
    d.set_item("iterations", out.reputations.iterations_run)?;
    d.set_item("converged", out.reputations.converged)?;
    d.set_item("trajectory", out.reputations.trajectory.clone())?;
    Ok(d)
}

/// Pairwise disparate-reputation audit with Mann-Whitney tests.
#[pyfunction]
#[pyo3(signature = (reputations, attribute, alpha = 0.05, lambda_ = 0.5, delta_r = 0.8))]
fn audit(
    py: Python<'_>,
    reputations: BTreeMap<u32, f64>,
    attribute: &PyAttributeTable,
    alpha: f64,
    lambda_: f64,
    delta_r: f64,
) -> PyResult<Py<PyAny>> {
    let reps = reputation_vector(reputations);
    let report = independence::mw_pairwise_audit(
        &reps,
        &attribute.0,
        &AuditConfig::new(alpha, lambda_, delta_r),
    )
    .map_err(err)?;
    json_to_py(py, &report.to_json())
}

/// Per-class affine harmonization; returns reputations, recomputed rankings,
/// the common target mean and std, and the degeneracy flag.
#[pyfunction]
fn harmonize<'py>(
    py: Python<'py>,
    reputations: BTreeMap<u32, f64>,
    attribute: &PyAttributeTable,
    matrix: &PyRatingsMatrix,
) -> PyResult<Bound<'py, PyDict>> {
    let reps = reputation_vector(reputations);
    let h = independence::harmonize(&reps, &attribute.0, &matrix.0).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("reputations", reputations_dict(py, &h.reputations)?)?;
    d.set_item("rankings", rankings_dict(py, &h.rankings)?)?;
    d.set_item("target_mean", h.target_mean)?;
    d.set_item("target_std", h.target_std)?;
    d.set_item("degenerate", h.degenerate)?;
    Ok(d)
}

/// Two-sided Mann-Whitney U test; returns `(u, p)` for the first sample.
#[pyfunction]
#[pyo3(signature = (a, b, method = "auto"))]
fn mann_whitney_u(a: Vec<f64>, b: Vec<f64>, method: &str) -> PyResult<(f64, f64)> {
    let method = match method {
        "auto" => MwMethod::Auto,
        "exact" => MwMethod::Exact,
        "asymptotic" => MwMethod::Asymptotic,
        other => return Err(err(format!("unknown method {other:?}"))),
    };
    let r = stats::mann_whitney_u_with(&a, &b, method).map_err(err)?;
    Ok((r.u_statistic, r.p_value))
}

/// Kendall tau of paired scores, tau-b unless `variant="a"`.
#[pyfunction]
#[pyo3(signature = (x, y, variant = "b"))]
fn kendall_tau(x: Vec<f64>, y: Vec<f64>, variant: &str) -> PyResult<f64> {
    let variant = match variant {
        "a" => TauVariant::A,
        "b" => TauVariant::B,
        other => return Err(err(format!("unknown tau variant {other:?}"))),
    };
    stats::kendall_tau_slices(&x, &y, variant).map_err(err)
}

/// Runs the whole pipeline and returns the paths of the files written.
#[pyfunction]
#[pyo3(signature = (
    ratings, out, users = None, attribute = "none", lambda_ = 0.5, variant = "normalized",
    tol = 1e-8, max_iter = 200, alpha = 0.05
))]
#[allow(clippy::too_many_arguments)]
fn run_pipeline(
    ratings: PathBuf,
    out: PathBuf,
    users: Option<PathBuf>,
    attribute: &str,
    lambda_: f64,
    variant: &str,
    tol: f64,
    max_iter: usize,
    alpha: f64,
) -> PyResult<Vec<PathBuf>> {
    let mut config = pipeline::RunConfig::new(ratings, out);
    config.users_path = users;
    config.attribute = attribute.parse().map_err(err)?;
    config.engine = EngineConfig {
        lambda: lambda_,
        tolerance: tol,
        max_iterations: max_iter,
        variant: variant.parse().map_err(err)?,
        ..EngineConfig::default()
    };
    config.alpha = alpha;
    config.formats = OutputFormats::default();
    pipeline::run_pipeline(&config)
        .map(|o| o.files)
        .map_err(err)
}

/// Text rendering of a pipeline output directory.
#[pyfunction]
fn print_report(dir: PathBuf) -> PyResult<String> {
    repute::print_report(&dir).map_err(err)
}

#[pymodule(name = "repute")]
fn repute_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRatingsMatrix>()?;
    m.add_class::<PyAttributeTable>()?;
    m.add_function(wrap_pyfunction!(aa_ranking, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(audit, m)?)?;
    m.add_function(wrap_pyfunction!(harmonize, m)?)?;
    m.add_function(wrap_pyfunction!(mann_whitney_u, m)?)?;
    m.add_function(wrap_pyfunction!(kendall_tau, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(print_report, m)?)?;
    Ok(())
}
