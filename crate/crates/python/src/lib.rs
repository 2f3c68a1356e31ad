//! Python bindings for the `varbayes` crate.

use std::collections::BTreeMap;

use pyo3::exceptions::{PyKeyError, PyValueError};
use pyo3::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use varbayes::baseline;
use varbayes::diagnostics::{self, DiagnosticsReport};
use varbayes::inference::{self, ParameterSummary};
use varbayes::model::{initialize, BetweenData, Covariates, Design, PriorConfig, RepeatedData, VariabilityModel};
use varbayes::rng::derive_seed;
use varbayes::sampler::{run_chains, ChainConfig, PosteriorDraws};
use varbayes::simulation::{self, Estimator, SimMetrics};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn covariates(named: Option<BTreeMap<String, Vec<f64>>>) -> PyResult<Option<Covariates>> {
    named
        .filter(|m| !m.is_empty())
        .map(|m| {
            let (names, columns) = m.into_iter().unzip();
            Covariates::from_columns(names, columns).map_err(err)
        })
        .transpose()
}

/// A posterior summary of one quantity.
#[pyclass(name = "Summary", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PySummary {
    name: String,
    mean: f64,
    median: f64,
    sd: f64,
    ci_low: f64,
    ci_high: f64,
    p_value: f64,
}

impl From<ParameterSummary> for PySummary {
    fn from(s: ParameterSummary) -> Self {
        PySummary {
            name: s.name,
            mean: s.mean,
            median: s.median,
            sd: s.sd,
            ci_low: s.ci_low,
            ci_high: s.ci_high,
            p_value: s.p_value,
        }
    }
}

#[pymethods]
impl PySummary {
    fn __repr__(&self) -> String {
        format!(
            "Summary(name={:?}, mean={}, ci=[{}, {}], p={})",
            self.name, self.mean, self.ci_low, self.ci_high, self.p_value
        )
    }
}

/// Hierarchical location-scale model with a between-person regression.
///
/// `subjects` holds a 0-based subject index per repeated measure; the
/// between-person arrays are indexed by subject.
#[pyclass(name = "Model", frozen)]
struct PyModel {
    inner: VariabilityModel,
}

#[pymethods]
impl PyModel {
    #[new]
    #[pyo3(signature = (subjects, values, outcome, mediator=None, within_covariates=None, between_covariates=None, use_latent_mean=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        subjects: Vec<usize>,
        values: Vec<f64>,
        outcome: Vec<f64>,
        mediator: Option<Vec<f64>>,
        within_covariates: Option<BTreeMap<String, Vec<f64>>>,
        between_covariates: Option<BTreeMap<String, Vec<f64>>>,
        use_latent_mean: bool,
    ) -> PyResult<Self> {
        let design = if mediator.is_some() {
            Design::v_to_m_to_y(use_latent_mean)
        } else {
            Design::v_to_y(use_latent_mean)
        };
        let repeated = RepeatedData::new(subjects, values, covariates(within_covariates)?).map_err(err)?;
        let between = BetweenData::new(outcome, mediator, covariates(between_covariates)?).map_err(err)?;
        let inner = VariabilityModel::new(repeated, between, design, PriorConfig::default()).map_err(err)?;
        Ok(PyModel { inner })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn design(&self) -> &'static str {
        self.inner.design().label()
    }

    /// Names of the unconstrained coordinates.
    fn param_names(&self) -> Vec<String> {
        self.inner.layout().names().to_vec()
    }

    fn log_posterior(&self, theta: Vec<f64>) -> PyResult<f64> {
        self.inner.log_posterior(&theta).map_err(err)
    }

    fn gradient(&self, theta: Vec<f64>) -> PyResult<Vec<f64>> {
        self.inner.grad_log_posterior(&theta).map_err(err)
    }

    /// A jittered unconstrained starting point.
    #[pyo3(signature = (seed=1))]
    fn initial_state(&self, seed: u64) -> PyResult<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        initialize(self.inner.repeated(), self.inner.between(), self.inner.design(), &mut rng).map_err(err)
    }

    /// Runs NUTS and returns the retained draws.
    #[pyo3(signature = (chains=4, warmup=1000, iter=4000, thin=1, seed=1))]
    fn sample(&self, py: Python<'_>, chains: usize, warmup: usize, iter: usize, thin: usize, seed: u64) -> PyResult<PyFit> {
        let config = ChainConfig {
            chains,
            warmup,
            total_post_warmup: iter,
            thin,
            seed,
            ..ChainConfig::default()
        };
        config.validate().map_err(err)?;
        let model = &self.inner;
        let draws = py.detach(|| {
            let inits = (0..chains as u64)
                .map(|c| {
                    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(&[seed, 2, c]));
                    initialize(model.repeated(), model.between(), model.design(), &mut rng).map_err(err)
                })
                .collect::<PyResult<Vec<_>>>()?;
            run_chains(model, &config, &inits).map_err(err)
        })?;
        Ok(PyFit { draws })
    }
}

/// Posterior draws from [`PyModel::sample`].
#[pyclass(name = "Fit", frozen)]
struct PyFit {
    draws: PosteriorDraws,
}

impl PyFit {
    fn index(&self, name: &str) -> PyResult<usize> {
        self.draws
            .param_index(name)
            .ok_or_else(|| PyKeyError::new_err(name.to_string()))
    }
}

#[pymethods]
impl PyFit {
    #[getter]
    fn names(&self) -> Vec<String> {
        self.draws.names().to_vec()
    }

    #[getter]
    fn n_chains(&self) -> usize {
        self.draws.n_chains()
    }

    #[getter]
    fn n_iterations(&self) -> usize {
        self.draws.n_iterations()
    }

    /// Draws of one quantity, one list per chain.
    fn chains(&self, name: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(self.draws.chains_of(self.index(name)?))
    }

    /// Draws of one quantity pooled over chains.
    fn pooled(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.draws.pooled(self.index(name)?))
    }

    #[pyo3(signature = (name, ci=0.95))]
    fn summary(&self, name: &str, ci: f64) -> PyResult<PySummary> {
        let draws = self.pooled(name)?;
        inference::summarize(name, &draws, ci).map(Into::into).map_err(err)
    }

    /// Per-draw product of two coefficients.
    #[pyo3(signature = (a, b, ci=0.95))]
    fn indirect_effect(&self, a: &str, b: &str, ci: f64) -> PyResult<PySummary> {
        let name = format!("{a} * {b}");
        inference::indirect_effect(&name, &self.pooled(a)?, &self.pooled(b)?, ci)
            .map(Into::into)
            .map_err(err)
    }

    /// PSRF and ESS of every quantity plus the convergence verdict.
    #[pyo3(signature = (focal="Yalpha[1]"))]
    fn diagnostics(&self, focal: &str) -> PyResult<PyReport> {
        diagnostics::convergence_report_with(&self.draws, focal, self.draws.n_chains() < 2)
            .map(|inner| PyReport { inner })
            .map_err(err)
    }
}

#[pyclass(name = "Report", frozen)]
struct PyReport {
    inner: DiagnosticsReport,
}

#[pymethods]
impl PyReport {
    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    #[getter]
    fn max_rhat(&self) -> f64 {
        self.inner.max_rhat
    }

    #[getter]
    fn min_ess(&self) -> f64 {
        self.inner.min_ess
    }

    #[getter]
    fn focal_ess(&self) -> f64 {
        self.inner.focal_ess
    }

    #[getter]
    fn rhat(&self) -> BTreeMap<String, f64> {
        self.inner.names.iter().cloned().zip(self.inner.rhat.iter().copied()).collect()
    }

    #[getter]
    fn ess(&self) -> BTreeMap<String, f64> {
        self.inner.names.iter().cloned().zip(self.inner.ess.iter().copied()).collect()
    }
}

/// Gelman-Rubin potential scale reduction factor.
#[pyfunction]
#[pyo3(signature = (chains, split=false))]
fn psrf(chains: Vec<Vec<f64>>, split: bool) -> PyResult<f64> {
    let d = if split {
        diagnostics::psrf_split(&chains)
    } else {
        diagnostics::psrf(&chains)
    };
    d.map(|d| d.value).map_err(err)
}

/// Effective sample size pooled over chains.
#[pyfunction]
fn ess(chains: Vec<Vec<f64>>) -> PyResult<f64> {
    diagnostics::ess(&chains).map(|d| d.value).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (draws, ci=0.95, name="x"))]
fn summarize(draws: Vec<f64>, ci: f64, name: &str) -> PyResult<PySummary> {
    inference::summarize(name, &draws, ci).map(Into::into).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (a, b, ci=0.95))]
fn indirect_effect(a: Vec<f64>, b: Vec<f64>, ci: f64) -> PyResult<PySummary> {
    inference::indirect_effect("a * b", &a, &b, ci).map(Into::into).map_err(err)
}

/// Sample standard deviation of one series.
#[pyfunction]
fn isd(series: Vec<f64>) -> PyResult<f64> {
    baseline::isd(&series).map_err(err)
}

/// Root mean square of successive differences; `None` marks a missing day.
#[pyfunction]
fn rmssd(series: Vec<Option<f64>>) -> PyResult<f64> {
    baseline::rmssd(&series).map_err(err)
}

/// Least squares on the rows of `x` (include the intercept column yourself).
/// Returns a dict of coefficient vectors and intervals.
#[pyfunction]
#[pyo3(signature = (x, y, ci=0.95))]
fn ols(py: Python<'_>, x: Vec<Vec<f64>>, y: Vec<f64>, ci: f64) -> PyResult<Py<PyAny>> {
    let ncols = x.first().map_or(0, Vec::len);
    if x.iter().any(|r| r.len() != ncols) {
        return Err(PyValueError::new_err("ragged design matrix"));
    }
    let m = nalgebra::DMatrix::from_fn(x.len(), ncols, |r, c| x[r][c]);
    let fit = baseline::ols_fit(&m, &y, ci).map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("coefs", fit.coefs)?;
    d.set_item("standard_errors", fit.standard_errors)?;
    d.set_item("ci_low", fit.ci_low)?;
    d.set_item("ci_high", fit.ci_high)?;
    d.set_item("residual_sd", fit.residual_sd)?;
    d.set_item("df", fit.df)?;
    Ok(d.into_any().unbind())
}

/// Keys of the sixteen simulation conditions.
#[pyfunction]
fn paper_grid() -> Vec<String> {
    simulation::paper_grid(1).iter().map(|c| c.key()).collect()
}

/// Runs a replication study and returns one metrics dict per condition.
#[pyfunction]
#[pyo3(signature = (conditions, replications=100, estimator="bayes", seed=1))]
fn simulate(py: Python<'_>, conditions: Vec<String>, replications: usize, estimator: &str, seed: u64) -> PyResult<Vec<Py<PyAny>>> {
    let estimator = match estimator {
        "bayes" => Estimator::Bayes,
        "isdm" => Estimator::Isdm,
        other => return Err(PyValueError::new_err(format!("unknown estimator '{other}'"))),
    };
    let conds = conditions
        .iter()
        .map(|k| {
            simulation::paper_condition(k, replications)
                .ok_or_else(|| PyKeyError::new_err(format!("unknown condition '{k}'")))
        })
        .collect::<PyResult<Vec<_>>>()?;
    let study = py.detach(|| simulation::run_study(&conds, estimator, seed)).map_err(err)?;
    study.metrics.iter().map(|m| metrics_dict(py, m)).collect()
}

fn metrics_dict(py: Python<'_>, m: &SimMetrics) -> PyResult<Py<PyAny>> {
    let d = pyo3::types::PyDict::new(py);
    d.set_item("condition", &m.condition)?;
    d.set_item("replications", m.replications)?;
    d.set_item("n_used", m.n_used)?;
    d.set_item("convergence_rate", m.convergence_rate)?;
    d.set_item("sufficient_ess_rate", m.sufficient_ess_rate)?;
    for (name, p) in [("alpha1", &m.alpha1), ("alpha2", &m.alpha2)] {
        d.set_item(format!("{name}_relative_bias_pct"), p.relative_bias_pct)?;
        d.set_item(format!("{name}_coverage"), p.coverage)?;
        d.set_item(format!("{name}_power"), p.power)?;
    }
    d.set_item("intercept_bias", m.intercept_bias)?;
    d.set_item("intercept_coverage", m.intercept_coverage)?;
    Ok(d.into_any().unbind())
}

#[pymodule]
pub fn varbayes_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyFit>()?;
    m.add_class::<PyReport>()?;
    m.add_class::<PySummary>()?;
    m.add_function(wrap_pyfunction!(psrf, m)?)?;
    m.add_function(wrap_pyfunction!(ess, m)?)?;
    m.add_function(wrap_pyfunction!(summarize, m)?)?;
    m.add_function(wrap_pyfunction!(indirect_effect, m)?)?;
    m.add_function(wrap_pyfunction!(isd, m)?)?;
    m.add_function(wrap_pyfunction!(rmssd, m)?)?;
    m.add_function(wrap_pyfunction!(ols, m)?)?;
    m.add_function(wrap_pyfunction!(paper_grid, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
