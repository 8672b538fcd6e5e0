//! Python bindings: graphs and statistics, simulation, the exchange
//! algorithm, and training/sampling of the conditional flow.

use std::path::PathBuf;

use ergm_sbi::exact::{exact_log_normalizer as exact_log_c, ExactModel};
use ergm_sbi::exchange::{run_exchange as run_chain, ExchangeConfig};
use ergm_sbi::flow::{load_checkpoint, save_checkpoint, MafModel};
use ergm_sbi::npe::{posterior_sample, train_npe as fit, NpeConfig};
use ergm_sbi::rng::rng_from_seed;
use ergm_sbi::sim::{simulate_network as sim_network, simulate_stats as sim_stats};
use ergm_sbi::stats::{change_stats, summary_stats};
use ergm_sbi::{Error, Graph, PriorSpec, ProposalSpec, SimConfig, StatKind, StatsConfig, SummaryStats, ThetaVector, TrainingSet};
use pyo3::exceptions::{PyArithmeticError, PyIOError, PyValueError};
use pyo3::prelude::*;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::NonFinite(_) | Error::Numerical(_) | Error::Leakage { .. } => PyArithmeticError::new_err(e.to_string()),
        Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn stats_config(stat_set: Option<Vec<String>>, decay: f64) -> PyResult<StatsConfig> {
    let kinds = match stat_set {
        None => StatKind::ALL.to_vec(),
        Some(names) => names
            .iter()
            .map(|n| {
                StatKind::ALL
                    .into_iter()
                    .find(|k| k.name() == n)
                    .ok_or_else(|| PyValueError::new_err(format!("unknown statistic `{n}`")))
            })
            .collect::<PyResult<_>>()?,
    };
    StatsConfig::new(decay, kinds).map_err(py_err)
}

fn theta(v: Vec<f64>) -> PyResult<ThetaVector> {
    ThetaVector::new(v).map_err(py_err)
}

fn sim_config(n: usize, iterations: usize, seed: u64, stats: StatsConfig) -> SimConfig {
    SimConfig::new(n, stats).with_iterations(iterations).with_seed(seed)
}

/// Undirected simple graph on `n` labelled vertices.
#[pyclass(name = "Graph", module = "ergm_sbi", skip_from_py_object)]
#[derive(Clone)]
struct PyGraph(Graph);

#[pymethods]
impl PyGraph {
    #[new]
    #[pyo3(signature = (n, edges = Vec::new()))]
    fn new(n: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        Graph::from_edges(n, &edges).map(PyGraph).map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    fn edge_count(&self) -> usize {
        self.0.edge_count()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.0.edges()
    }

    fn has_edge(&self, i: usize, j: usize) -> bool {
        self.0.has_edge(i, j)
    }

    fn toggle(&mut self, i: usize, j: usize) -> PyResult<()> {
        self.0.toggle(i, j).map_err(py_err)
    }

    #[pyo3(signature = (stat_set = None, decay = 0.75))]
    fn summary_stats(&self, stat_set: Option<Vec<String>>, decay: f64) -> PyResult<Vec<f64>> {
        Ok(summary_stats(&self.0, &stats_config(stat_set, decay)?).into_inner())
    }

    /// Statistics change when toggling `{i, j}`.
    #[pyo3(signature = (i, j, stat_set = None, decay = 0.75))]
    fn change_stats(&self, i: usize, j: usize, stat_set: Option<Vec<String>>, decay: f64) -> PyResult<Vec<f64>> {
        change_stats(&self.0, i, j, &stats_config(stat_set, decay)?).map_err(py_err)
    }

    fn __repr__(&self) -> String {
        format!("Graph(n={}, edges={})", self.0.n(), self.0.edge_count())
    }
}

/// One MH realisation of `ERGM(θ)`.
#[pyfunction]
#[pyo3(signature = (theta, n, iterations = 50_000, seed = 0, stat_set = None, decay = 0.75))]
fn simulate_network(
    theta: Vec<f64>,
    n: usize,
    iterations: usize,
    seed: u64,
    stat_set: Option<Vec<String>>,
    decay: f64,
) -> PyResult<PyGraph> {
    let th = self::theta(theta)?;
    let cfg = sim_config(n, iterations, seed, stats_config(stat_set, decay)?);
    sim_network(&th, &cfg).map(PyGraph).map_err(py_err)
}

/// Statistics of one independent realisation per row of `thetas`.
#[pyfunction]
#[pyo3(signature = (thetas, n, iterations = 50_000, seed = 0, stat_set = None, decay = 0.75))]
fn simulate_stats(
    thetas: Vec<Vec<f64>>,
    n: usize,
    iterations: usize,
    seed: u64,
    stat_set: Option<Vec<String>>,
    decay: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let ths = thetas.into_iter().map(theta).collect::<PyResult<Vec<_>>>()?;
    let cfg = sim_config(n, iterations, seed, stats_config(stat_set, decay)?);
    Ok(sim_stats(&ths, &cfg)
        .map_err(py_err)?
        .into_iter()
        .map(SummaryStats::into_inner)
        .collect())
}

/// `log c(θ)` by enumeration; `n <= 5`.
#[pyfunction]
#[pyo3(signature = (theta, n, stat_set = None, decay = 0.75))]
fn exact_log_normalizer(theta: Vec<f64>, n: usize, stat_set: Option<Vec<String>>, decay: f64) -> PyResult<f64> {
    let model = ExactModel::enumerate(n, &stats_config(stat_set, decay)?).map_err(py_err)?;
    exact_log_c(&self::theta(theta)?, &model).map_err(py_err)
}

/// Exchange-algorithm chain at `x_obs` under an isotropic normal prior;
/// returns the post-burn-in samples.
#[pyfunction]
#[pyo3(signature = (
    x_obs, n, iterations = 7_000, burn_in = 1_000, prior_sd = 1.0, proposal_sd = 0.1,
    sim_iterations = 50_000, seed = 0, stat_set = None, decay = 0.75
))]
#[allow(clippy::too_many_arguments)]
fn run_exchange(
    x_obs: Vec<f64>,
    n: usize,
    iterations: usize,
    burn_in: usize,
    prior_sd: f64,
    proposal_sd: f64,
    sim_iterations: usize,
    seed: u64,
    stat_set: Option<Vec<String>>,
    decay: f64,
) -> PyResult<Vec<Vec<f64>>> {
    let stats = stats_config(stat_set, decay)?;
    let p = stats.dim();
    let prior = PriorSpec::isotropic(p, prior_sd * prior_sd).map_err(py_err)?;
    let cfg = ExchangeConfig {
        iterations,
        burn_in,
        proposal: ProposalSpec::isotropic(p, proposal_sd).map_err(py_err)?,
        ..ExchangeConfig::with_defaults(p).map_err(py_err)?
    };
    let sim = sim_config(n, sim_iterations, 0, stats);
    let chain = run_chain(&SummaryStats::new(x_obs), &prior, &cfg, &sim, seed).map_err(py_err)?;
    Ok(chain.post_burn_in().iter().map(|t| t.to_vec()).collect())
}

/// Trained conditional density `q(θ | x)`.
#[pyclass(name = "Flow", module = "ergm_sbi")]
struct PyFlow {
    model: MafModel,
    stats: StatsConfig,
}

#[pymethods]
impl PyFlow {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let (model, stats) = load_checkpoint(&path).map_err(py_err)?;
        Ok(PyFlow { model, stats })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.model, &self.stats, &path).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.model.p()
    }

    #[getter]
    fn stat_set(&self) -> Vec<&'static str> {
        self.stats.stat_set().iter().map(|k| k.name()).collect()
    }

    fn log_prob(&self, theta: Vec<f64>, x: Vec<f64>) -> PyResult<f64> {
        self.model
            .log_prob(&self::theta(theta)?, &SummaryStats::new(x))
            .map_err(py_err)
    }

    /// Draws from `q(· | x)`. With `truncate`, draws outside a ±6 sd box of
    /// the `N(0, prior_sd² I)` prior are rejected.
    #[pyo3(signature = (x, count, seed = 0, truncate = false, prior_sd = 1.0))]
    fn sample(&self, x: Vec<f64>, count: usize, seed: u64, truncate: bool, prior_sd: f64) -> PyResult<Vec<Vec<f64>>> {
        let prior = PriorSpec::isotropic(self.model.p(), prior_sd * prior_sd).map_err(py_err)?;
        let draws = posterior_sample(&self.model, &SummaryStats::new(x), count, &prior, truncate, &mut rng_from_seed(seed))
            .map_err(py_err)?;
        Ok(draws.samples.iter().map(|t| t.to_vec()).collect())
    }
}

/// Fits the flow to `(θ, x)` pairs. Returns the flow and the per-epoch
/// validation losses (initial loss first).
#[pyfunction]
#[pyo3(signature = (
    thetas, xs, stat_set = None, decay = 0.75, epochs = 200, batch_size = 256, learning_rate = 5e-4,
    num_transforms = 5, hidden_units = 50, seed = 0
))]
#[allow(clippy::too_many_arguments)]
fn train_npe(
    thetas: Vec<Vec<f64>>,
    xs: Vec<Vec<f64>>,
    stat_set: Option<Vec<String>>,
    decay: f64,
    epochs: usize,
    batch_size: usize,
    learning_rate: f64,
    num_transforms: usize,
    hidden_units: usize,
    seed: u64,
) -> PyResult<(PyFlow, Vec<f64>)> {
    if thetas.len() != xs.len() {
        return Err(PyValueError::new_err("thetas and xs must have the same length"));
    }
    let stats = stats_config(stat_set, decay)?;
    let mut set = TrainingSet::new(stats.dim());
    for (t, x) in thetas.into_iter().zip(xs) {
        set.push(theta(t)?, SummaryStats::new(x), 0).map_err(py_err)?;
    }
    let cfg = NpeConfig {
        num_pairs: set.len(),
        epochs,
        batch_size,
        learning_rate,
        num_transforms,
        hidden_units,
        seed,
        ..NpeConfig::default()
    };
    let (model, report) = fit(&set, &cfg).map_err(py_err)?;
    Ok((PyFlow { model, stats }, report.validation_loss))
}

#[pymodule(name = "ergm_sbi")]
fn ergm_sbi_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyFlow>()?;
    m.add_function(wrap_pyfunction!(simulate_network, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_stats, m)?)?;
    m.add_function(wrap_pyfunction!(exact_log_normalizer, m)?)?;
    m.add_function(wrap_pyfunction!(run_exchange, m)?)?;
    m.add_function(wrap_pyfunction!(train_npe, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
