//! Python bindings: datasets, model configurations, the two-step fit,
//! bootstrap intervals, the gamma profile, diagnostics and the simulation
//! generators. Structured results are returned as plain dicts.

use nalgebra::DMatrix;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde_json::{json, Value};

use nimd::bootstrap::{bootstrap_percentile_ci, bootstrap_t_ci, BootstrapResult};
use nimd::data::{parse_dataset, write_dataset, BasisTerm, CsvSchema};
use nimd::diagnostics::{ncv_score_test, uss_gof_test};
use nimd::ipw::{profile_gamma as profile, GridSpec};
use nimd::pipeline::{estimate_point, fit_point, fit_proposed, Estimator, FitOptions};
use nimd::simulation::{compute_truth as truth, generate_dataset, Scenario, SelectionDesign};
use nimd::{Error, H1Form};

create_exception!(nimd, NimdError, PyException, "Estimation or input error; the message starts with its code.");

fn to_py(e: Error) -> PyErr {
    NimdError::new_err(format!("{}: {e}", e.code().as_str()))
}

fn to_dict(py: Python<'_>, v: &Value) -> PyResult<Py<PyAny>> {
    let json = py.import("json")?;
    Ok(json.call_method1("loads", (v.to_string(),))?.unbind())
}

/// Rows with `r`, `y` (None when missing) and covariates `x`.
#[pyclass(name = "Dataset", module = "nimd", frozen)]
struct PyDataset {
    inner: nimd::Dataset,
}

#[pymethods]
impl PyDataset {
    /// `x` is a list of rows. When `r` is None it is derived from `y`.
    #[new]
    #[pyo3(signature = (y, x, r=None))]
    fn new(y: Vec<Option<f64>>, x: Vec<Vec<f64>>, r: Option<Vec<u8>>) -> PyResult<Self> {
        let n = x.len();
        let d = x.first().map_or(0, Vec::len);
        if x.iter().any(|row| row.len() != d) {
            return Err(to_py(Error::InvalidArgument("covariate rows differ in length".into())));
        }
        let r = r.unwrap_or_else(|| y.iter().map(|v| u8::from(v.is_some())).collect());
        let m = DMatrix::from_fn(n, d, |i, j| x[i][j]);
        nimd::Dataset::new(r, y, m).map(|inner| PyDataset { inner }).map_err(to_py)
    }

    #[staticmethod]
    #[pyo3(signature = (path, y_column="y", r_column=None, x_columns=None))]
    fn from_csv(path: &str, y_column: &str, r_column: Option<String>, x_columns: Option<Vec<String>>) -> PyResult<Self> {
        let schema = CsvSchema {
            y: y_column.to_string(),
            r: r_column,
            x: x_columns.unwrap_or_default(),
        };
        parse_dataset(path, &schema).map(|inner| PyDataset { inner }).map_err(to_py)
    }

    fn to_csv(&self, path: &str) -> PyResult<()> {
        write_dataset(&self.inner, path).map_err(to_py)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn d(&self) -> usize {
        self.inner.d()
    }

    #[getter]
    fn n_observed(&self) -> usize {
        self.inner.n_observed()
    }

    #[getter]
    fn r(&self) -> Vec<u32> {
        self.inner.r().iter().map(|&v| u32::from(v)).collect()
    }

    #[getter]
    fn y(&self) -> Vec<Option<f64>> {
        self.inner.y().to_vec()
    }

    #[getter]
    fn x(&self) -> Vec<Vec<f64>> {
        let x = self.inner.x();
        (0..x.nrows()).map(|i| x.row(i).iter().copied().collect()).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.n()
    }

    fn __repr__(&self) -> String {
        format!("Dataset(n={}, d={}, n_observed={})", self.inner.n(), self.inner.d(), self.inner.n_observed())
    }
}

/// Mean basis as exponent vectors and 1-based selection-model covariates.
#[pyclass(name = "ModelConfig", module = "nimd", frozen)]
struct PyModelConfig {
    inner: nimd::ModelConfig,
}

#[pymethods]
impl PyModelConfig {
    #[new]
    fn new(mean_basis: Vec<Vec<u32>>, x1_columns: Vec<usize>) -> PyResult<Self> {
        if x1_columns.contains(&0) {
            return Err(to_py(Error::Config("x1_columns are 1-based".into())));
        }
        let basis = mean_basis.into_iter().map(BasisTerm::new).collect();
        let x1 = x1_columns.iter().map(|c| c - 1).collect();
        nimd::ModelConfig::new(basis, x1).map(|inner| PyModelConfig { inner }).map_err(to_py)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        nimd::ModelConfig::from_json_str(text).map(|inner| PyModelConfig { inner }).map_err(to_py)
    }

    fn to_json(&self) -> String {
        self.inner.to_json_string()
    }

    fn __repr__(&self) -> String {
        format!("ModelConfig({})", self.inner.to_json_string())
    }
}

fn bootstrap_value(b: &BootstrapResult) -> Value {
    json!({
        "lower": b.ci.lower,
        "upper": b.ci.upper,
        "level": b.ci.level,
        "method": b.ci.method,
        "n_resamples_requested": b.n_resamples_requested,
        "n_successful": b.n_successful,
        "failures": b.failures,
        "seed": b.seed,
    })
}

/// Two-step fit with the sandwich variance and Wald interval.
#[pyfunction]
#[pyo3(signature = (data, model, level=0.95, h1_form="as_printed"))]
fn fit(py: Python<'_>, data: &PyDataset, model: &PyModelConfig, level: f64, h1_form: &str) -> PyResult<Py<PyAny>> {
    let opts = FitOptions {
        h1_form: H1Form::parse(h1_form).map_err(to_py)?,
        level,
    };
    let f = py.detach(|| fit_proposed(&data.inner, &model.inner, &opts)).map_err(to_py)?;
    let p = &f.point;
    let v = json!({
        "xi_hat": p.outcome.xi_hat.as_slice(),
        "sigma2_hat": p.outcome.sigma2_hat,
        "theta_hat": { "alpha": p.propensity.alpha(), "beta": p.propensity.beta(), "gamma": p.propensity.gamma() },
        "converged": p.propensity.converged,
        "alpha0_hat": p.tau.alpha0_hat,
        "tau_hat": p.tau.tau_hat,
        "eta_hat": p.tau.eta_hat,
        "sigma2_tau": f.variance.sigma2_tau,
        "h1_form": f.variance.h1_form.as_str(),
        "wald_ci": { "lower": f.wald.lower, "upper": f.wald.upper, "level": f.wald.level },
        "identifiability_report": p.identifiability,
    });
    to_dict(py, &v)
}

/// Point estimate for `proposed`, `normal-plugin`, `ipw` or `gmm-K`.
#[pyfunction]
fn estimate(py: Python<'_>, estimator: &str, data: &PyDataset, model: &PyModelConfig) -> PyResult<Py<PyAny>> {
    let est: Estimator = estimator.parse().map_err(to_py)?;
    let p = py.detach(|| estimate_point(est, &data.inner, &model.inner)).map_err(to_py)?;
    to_dict(py, &json!({ "estimator": est, "tau_hat": p.tau, "gamma_hat": p.gamma, "converged": p.converged }))
}

/// Pairs bootstrap interval; `method` is `t` or `percentile`.
#[pyfunction]
#[pyo3(signature = (data, model, resamples=999, seed=nimd::rng::DEFAULT_SEED, method="t", estimator="proposed", level=0.95))]
#[allow(clippy::too_many_arguments)]
fn bootstrap(
    py: Python<'_>,
    data: &PyDataset,
    model: &PyModelConfig,
    resamples: usize,
    seed: u64,
    method: &str,
    estimator: &str,
    level: f64,
) -> PyResult<Py<PyAny>> {
    let (ds, cfg) = (&data.inner, &model.inner);
    let b = match method {
        "t" => {
            let opts = FitOptions { level, ..Default::default() };
            py.detach(|| bootstrap_t_ci(ds, cfg, &opts, resamples, seed))
        }
        "percentile" => {
            let est: Estimator = estimator.parse().map_err(to_py)?;
            py.detach(|| bootstrap_percentile_ci(est, ds, cfg, level, resamples, seed))
        }
        other => return Err(to_py(Error::InvalidArgument(format!("unknown bootstrap method '{other}'")))),
    }
    .map_err(to_py)?;
    to_dict(py, &bootstrap_value(&b))
}

/// `M(gamma)` on a grid with `alpha0` and `beta` fixed; `x1_columns` are 1-based.
#[pyfunction]
#[pyo3(signature = (data, x1_columns, alpha0, beta, lo=-2.0, hi=6.0, step=0.05))]
#[allow(clippy::too_many_arguments)]
fn profile_gamma(
    py: Python<'_>,
    data: &PyDataset,
    x1_columns: Vec<usize>,
    alpha0: f64,
    beta: Vec<f64>,
    lo: f64,
    hi: f64,
    step: f64,
) -> PyResult<Py<PyAny>> {
    if x1_columns.contains(&0) {
        return Err(to_py(Error::Config("x1_columns are 1-based".into())));
    }
    let cols: Vec<usize> = x1_columns.iter().map(|c| c - 1).collect();
    let prof = profile(&data.inner, &cols, alpha0, &beta, GridSpec { lo, hi, step }).map_err(to_py)?;
    to_dict(py, &serde_json::to_value(prof).expect("plain data serializes"))
}

/// Score test for non-constant variance and the USS goodness-of-fit test.
#[pyfunction]
fn diagnose(py: Python<'_>, data: &PyDataset, model: &PyModelConfig) -> PyResult<Py<PyAny>> {
    let p = fit_point(&data.inner, &model.inner).map_err(to_py)?;
    let show = |r: nimd::Result<nimd::diagnostics::TestResult>| match r {
        Ok(t) => serde_json::to_value(t).expect("plain data serializes"),
        Err(e) => json!({ "error": { "code": e.code().as_str(), "message": e.to_string() } }),
    };
    let v = json!({
        "ncv": show(ncv_score_test(&p.outcome, &p.design)),
        "uss": show(uss_gof_test(&data.inner, &p.propensity, &p.mu_hat, &p.design)),
    });
    to_dict(py, &v)
}

fn scenario(name: &str, alpha0: f64, delta: f64) -> PyResult<Scenario> {
    match name {
        "example1" => Scenario::example1(alpha0, delta),
        "example2" => Scenario::example2(alpha0, delta),
        other => Err(Error::InvalidArgument(format!("unknown scenario '{other}'"))),
    }
    .map_err(to_py)
}

/// Simulated dataset: `example1`, `example2` or the two-root `selection` design.
#[pyfunction]
#[pyo3(signature = (scenario_name, n, seed=nimd::rng::DEFAULT_SEED, alpha0=-1.7, delta=0.0))]
fn generate(scenario_name: &str, n: usize, seed: u64, alpha0: f64, delta: f64) -> PyResult<PyDataset> {
    let ds = if scenario_name == "selection" {
        SelectionDesign::default().generate(n, seed).map(|g| g.dataset)
    } else {
        generate_dataset(&scenario(scenario_name, alpha0, delta)?, n, seed)
    }
    .map_err(to_py)?;
    Ok(PyDataset { inner: ds })
}

/// True mean response and missingness probability of a scenario.
#[pyfunction]
#[pyo3(signature = (scenario_name, alpha0, delta=0.0, draws=1_000_000, seed=nimd::rng::DEFAULT_SEED))]
fn compute_truth(py: Python<'_>, scenario_name: &str, alpha0: f64, delta: f64, draws: usize, seed: u64) -> PyResult<Py<PyAny>> {
    let sc = scenario(scenario_name, alpha0, delta)?;
    let t = py.detach(|| truth(&sc, draws, seed)).map_err(to_py)?;
    to_dict(py, &serde_json::to_value(t).expect("plain data serializes"))
}

#[pymodule]
#[pyo3(name = "nimd")]
fn nimd_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("NimdError", m.py().get_type::<NimdError>())?;
    m.add_class::<PyDataset>()?;
    m.add_class::<PyModelConfig>()?;
    m.add_function(wrap_pyfunction!(fit, m)?)?;
    m.add_function(wrap_pyfunction!(estimate, m)?)?;
    m.add_function(wrap_pyfunction!(bootstrap, m)?)?;
    m.add_function(wrap_pyfunction!(profile_gamma, m)?)?;
    m.add_function(wrap_pyfunction!(diagnose, m)?)?;
    m.add_function(wrap_pyfunction!(generate, m)?)?;
    m.add_function(wrap_pyfunction!(compute_truth, m)?)?;
    Ok(())
}
