//! Python bindings. Indices are zero-based here, as in the Rust API; only
//! JSON configs use one-based player numbers.
//!
//! Structured results (reports, constants, summaries) come back as plain
//! dicts built from their JSON form.

use intermittent_nash::dynamics::{self, SimConfig};
use intermittent_nash::experiment::{self, ExperimentConfig, ExperimentError};
use intermittent_nash::graph::{self, DirectedGraph, Edge};
use intermittent_nash::{AcrMode, GameModel, Schedule, SeekSign};
use nalgebra::{DMatrix, DVector};
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(intermittent_nash, ConfigError, PyValueError);
create_exception!(intermittent_nash, MathError, PyArithmeticError);
create_exception!(intermittent_nash, NumericError, PyRuntimeError);

fn experiment_err(e: ExperimentError) -> PyErr {
    match e.exit_code() {
        3 => MathError::new_err(e.to_string()),
        4 => NumericError::new_err(e.to_string()),
        _ => ConfigError::new_err(e.to_string()),
    }
}

fn err<E: Into<ExperimentError>>(e: E) -> PyErr {
    experiment_err(e.into())
}

/// Serialises `v` to JSON and parses it back with Python's `json` module.
fn to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| NumericError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn parse_mode(mode: &str) -> PyResult<AcrMode> {
    match mode {
        "from-zero" | "from_zero" => Ok(AcrMode::FromZero),
        "all-pairs" | "all_pairs" => Ok(AcrMode::AllPairs),
        other => Err(ConfigError::new_err(format!("unknown ACR mode {other:?}"))),
    }
}

#[pyclass(name = "Game", module = "intermittent_nash", frozen)]
struct PyGame {
    inner: GameModel,
}

#[pymethods]
impl PyGame {
    #[staticmethod]
    fn energy(xq: Vec<f64>, r1: f64, r2: f64) -> PyResult<Self> {
        Ok(Self {
            inner: GameModel::energy(&xq, r1, r2).map_err(err)?,
        })
    }

    #[staticmethod]
    fn connectivity() -> Self {
        Self {
            inner: GameModel::connectivity(),
        }
    }

    /// Pseudo-gradient `M x + b`; `seek_sign` entries are `+1` or `-1`.
    #[staticmethod]
    #[pyo3(signature = (m, b, dims, seek_sign = None))]
    fn affine(m: Vec<Vec<f64>>, b: Vec<f64>, dims: Vec<usize>, seek_sign: Option<Vec<f64>>) -> PyResult<Self> {
        let d = b.len();
        if m.len() != d || m.iter().any(|r| r.len() != d) {
            return Err(ConfigError::new_err(format!("m must be {d}x{d}")));
        }
        let signs = match seek_sign {
            None => vec![SeekSign::Ascent; dims.len()],
            Some(s) => s
                .into_iter()
                .map(|f| SeekSign::from_factor(f).ok_or_else(|| ConfigError::new_err("seek_sign entries must be ±1")))
                .collect::<PyResult<_>>()?,
        };
        let mat = DMatrix::from_fn(d, d, |r, c| m[r][c]);
        Ok(Self {
            inner: GameModel::affine(mat, DVector::from_vec(b), dims, signs).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.inner.dims().to_vec()
    }

    #[getter]
    fn total_dim(&self) -> usize {
        self.inner.total_dim()
    }

    fn partial_gradient(&self, i: usize, v: Vec<f64>) -> PyResult<Vec<f64>> {
        if i >= self.inner.n() || v.len() != self.inner.total_dim() {
            return Err(ConfigError::new_err("player index or vector length out of range"));
        }
        Ok(self.inner.partial_gradient(i, &v))
    }

    fn pseudo_gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.total_dim() {
            return Err(ConfigError::new_err("vector length does not match total_dim"));
        }
        Ok(self.inner.pseudo_gradient(&x))
    }

    fn payoff(&self, i: usize, v: Vec<f64>) -> PyResult<Option<f64>> {
        if i >= self.inner.n() || v.len() != self.inner.total_dim() {
            return Err(ConfigError::new_err("player index or vector length out of range"));
        }
        Ok(self.inner.payoff(i, &v))
    }

    #[pyo3(signature = (x0 = None, tol = 1e-10, max_iter = 200))]
    fn solve_nash<'py>(
        &self,
        py: Python<'py>,
        x0: Option<Vec<f64>>,
        tol: f64,
        max_iter: usize,
    ) -> PyResult<Bound<'py, PyAny>> {
        let x0 = x0.unwrap_or_else(|| vec![0.0; self.inner.total_dim()]);
        let sol = self.inner.solve_nash(&x0, tol, max_iter).map_err(err)?;
        to_py(py, &sol)
    }

    fn regularity_constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let reg = self.inner.regularity_constants();
        let d = PyDict::new(py);
        d.set_item("alpha", reg.alpha)?;
        d.set_item("beta", reg.beta)?;
        Ok(d)
    }
}

#[pyclass(name = "Graph", module = "intermittent_nash", frozen)]
struct PyGraph {
    inner: DirectedGraph,
}

#[pymethods]
impl PyGraph {
    /// `edges` are zero-based `(from, to, weight)` triples.
    #[new]
    fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> PyResult<Self> {
        let edges: Vec<Edge> = edges.into_iter().map(|(f, t, w)| Edge::new(f, t, w)).collect();
        Ok(Self {
            inner: DirectedGraph::from_edges(n, &edges).map_err(err)?,
        })
    }

    /// Unit-weight ring `i -> i-1 (mod n)`.
    #[staticmethod]
    fn reverse_ring(n: usize) -> PyResult<Self> {
        Ok(Self {
            inner: DirectedGraph::reverse_ring(n).map_err(err)?,
        })
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    fn is_strongly_connected(&self) -> bool {
        self.inner.is_strongly_connected()
    }

    fn laplacian(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.inner.laplacian())
    }

    /// `H = L ⊗ I + B` for the given per-player dims (scalar actions by default).
    #[pyo3(signature = (dims = None))]
    fn coupling_matrix(&self, dims: Option<Vec<usize>>) -> Vec<Vec<f64>> {
        let dims = dims.unwrap_or_else(|| vec![1; self.inner.n()]);
        matrix_rows(&graph::coupling_matrices_for_dims(&self.inner, &dims).coupling)
    }

    /// Solves `HᵀP + PH = I`; returns `{p, residual, p_min, p_norm}`.
    #[pyo3(signature = (dims = None))]
    fn lyapunov_certificate<'py>(&self, py: Python<'py>, dims: Option<Vec<usize>>) -> PyResult<Bound<'py, PyDict>> {
        let dims = dims.unwrap_or_else(|| vec![1; self.inner.n()]);
        let cm = graph::coupling_matrices_for_dims(&self.inner, &dims);
        let q = DMatrix::identity(cm.stack_len(), cm.stack_len());
        let cert = graph::solve_lyapunov_certificate(&cm, &q).map_err(err)?;
        let d = PyDict::new(py);
        d.set_item("p", matrix_rows(&cert.p_matrix))?;
        d.set_item("residual", cert.residual)?;
        d.set_item("p_min", cert.p_min())?;
        d.set_item("p_norm", cert.p_norm())?;
        Ok(d)
    }
}

#[pyclass(name = "Schedule", module = "intermittent_nash", frozen)]
struct PySchedule {
    inner: Schedule,
}

#[pymethods]
impl PySchedule {
    #[staticmethod]
    fn periodic(period: f64, theta: f64, horizon: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Schedule::periodic(period, theta, horizon).map_err(err)?,
        })
    }

    #[staticmethod]
    fn from_intervals(windows: Vec<(f64, f64)>, horizon: f64) -> PyResult<Self> {
        Ok(Self {
            inner: Schedule::from_intervals(&windows, horizon).map_err(err)?,
        })
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon()
    }

    #[getter]
    fn windows(&self) -> Vec<(f64, f64)> {
        self.inner.windows().iter().map(|w| (w.start, w.end)).collect()
    }

    fn comm_width(&self, a: f64, b: f64) -> PyResult<f64> {
        self.inner.comm_width(a, b).map_err(err)
    }

    fn is_communicating(&self, t: f64) -> PyResult<bool> {
        self.inner.is_communicating(t).map_err(err)
    }

    #[pyo3(signature = (theta, mode = "from-zero"))]
    fn check_acr<'py>(&self, py: Python<'py>, theta: f64, mode: &str) -> PyResult<Bound<'py, PyAny>> {
        let report = self.inner.check_acr(theta, parse_mode(mode)?).map_err(err)?;
        to_py(py, &report)
    }

    fn interval_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.interval_stats().map_err(err)?)
    }

    fn quasi_periodic_stats<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.inner.quasi_periodic_stats().map_err(err)?)
    }
}

/// Integrates the seeking dynamics; returns `{times, comm, x, y}` with one
/// row per sample.
#[pyfunction]
#[pyo3(signature = (game, graph, schedule, epsilon, dt, t_end, x0, y0 = None, kbar = None))]
#[allow(clippy::too_many_arguments)]
fn simulate<'py>(
    py: Python<'py>,
    game: &PyGame,
    graph: &PyGraph,
    schedule: &PySchedule,
    epsilon: f64,
    dt: f64,
    t_end: f64,
    x0: Vec<f64>,
    y0: Option<Vec<f64>>,
    kbar: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let mut cfg = SimConfig::new(epsilon, dt, t_end, x0, game.inner.n());
    if let Some(y0) = y0 {
        cfg.y0 = y0;
    }
    if let Some(k) = kbar {
        cfg.kbar = k;
    }
    let traj = py
        .detach(|| dynamics::simulate(&game.inner, &graph.inner, &schedule.inner, &cfg))
        .map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("times", traj.times.clone())?;
    d.set_item("comm", traj.comm.clone())?;
    d.set_item("x", (0..traj.len()).map(|k| traj.x(k).to_vec()).collect::<Vec<_>>())?;
    d.set_item("y", (0..traj.len()).map(|k| traj.y(k).to_vec()).collect::<Vec<_>>())?;
    Ok(d)
}

/// Margin of the average-communication-ratio condition for given rates.
#[pyfunction]
fn acr_margin(mu1: f64, mu2: f64, vartheta: f64) -> f64 {
    mu1 * vartheta - mu2 * (1.0 - vartheta)
}

fn parse_config(config_json: &str) -> PyResult<ExperimentConfig> {
    ExperimentConfig::from_json(config_json).map_err(experiment_err)
}

/// JSON text of a bundled fixture config, e.g. `"energy_pic.json"`.
#[pyfunction]
fn fixture(name: &str) -> PyResult<String> {
    intermittent_nash::fixtures::config_text(name)
        .map(str::to_owned)
        .ok_or_else(|| ConfigError::new_err(format!("unknown fixture {name}")))
}

#[pyfunction]
fn fixture_names() -> Vec<&'static str> {
    intermittent_nash::fixtures::CONFIGS.iter().map(|(n, _)| *n).collect()
}

#[pyfunction]
fn solve_ne<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let sol = experiment::solve_ne(&parse_config(config_json)?).map_err(experiment_err)?;
    to_py(py, &sol)
}

#[pyfunction]
#[pyo3(signature = (config_json, theta = None, mode = None))]
fn check_schedule<'py>(
    py: Python<'py>,
    config_json: &str,
    theta: Option<f64>,
    mode: Option<&str>,
) -> PyResult<Bound<'py, PyAny>> {
    let mode = mode.map(parse_mode).transpose()?;
    let report = experiment::check_schedule(&parse_config(config_json)?, theta, mode).map_err(experiment_err)?;
    to_py(py, &report)
}

#[pyfunction]
fn check_conditions<'py>(py: Python<'py>, config_json: &str) -> PyResult<Bound<'py, PyAny>> {
    let report = experiment::check_conditions(&parse_config(config_json)?).map_err(experiment_err)?;
    to_py(py, &report)
}

/// Runs a config and returns `{summary, csv}`; nothing is written to disk.
#[pyfunction]
#[pyo3(signature = (config_json, seed = None))]
fn run<'py>(py: Python<'py>, config_json: &str, seed: Option<u64>) -> PyResult<Bound<'py, PyDict>> {
    let cfg = parse_config(config_json)?;
    let (summary, csv) = py
        .detach(|| {
            experiment::run(&cfg, seed).map(|out| {
                let csv = experiment::trajectory_csv(&out.trajectory, out.lyapunov.as_deref());
                (out.summary, csv)
            })
        })
        .map_err(experiment_err)?;
    let d = PyDict::new(py);
    d.set_item("summary", to_py(py, &summary)?)?;
    d.set_item("csv", csv)?;
    Ok(d)
}

#[pymodule]
#[pyo3(name = "intermittent_nash")]
fn intermittent_nash_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGame>()?;
    m.add_class::<PyGraph>()?;
    m.add_class::<PySchedule>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(acr_margin, m)?)?;
    m.add_function(wrap_pyfunction!(fixture, m)?)?;
    m.add_function(wrap_pyfunction!(fixture_names, m)?)?;
    m.add_function(wrap_pyfunction!(solve_ne, m)?)?;
    m.add_function(wrap_pyfunction!(check_schedule, m)?)?;
    m.add_function(wrap_pyfunction!(check_conditions, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("MathError", m.py().get_type::<MathError>())?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_accept_both_spellings() {
        assert!(matches!(parse_mode("from_zero"), Ok(AcrMode::FromZero)));
        assert!(matches!(parse_mode("all-pairs"), Ok(AcrMode::AllPairs)));
        assert!(parse_mode("sometimes").is_err());
    }

    #[test]
    fn matrix_rows_are_row_major() {
        let m = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(matrix_rows(&m), vec![vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
    }

    #[test]
    fn every_fixture_name_resolves() {
        for name in fixture_names() {
            parse_config(&fixture(name).unwrap()).unwrap();
        }
        assert!(fixture("missing.json").is_err());
    }

    #[test]
    fn graph_wrapper_uses_zero_based_edges() {
        let g = PyGraph::reverse_ring(5).unwrap();
        assert!(g.is_strongly_connected());
        for row in g.laplacian() {
            assert!(row.iter().sum::<f64>().abs() < 1e-15);
        }
        assert!(PyGraph::new(3, vec![(0, 3, 1.0)]).is_err());
        assert_eq!(g.coupling_matrix(Some(vec![2; 5])).len(), 50);
    }

    #[test]
    fn schedule_wrapper() {
        let s = PySchedule::from_intervals(vec![(0.0, 2.0), (5.0, 6.0)], 10.0).unwrap();
        assert_eq!(s.comm_width(0.0, 10.0).unwrap(), 3.0);
        assert!(s.is_communicating(5.0).unwrap());
        assert!(!s.is_communicating(6.0).unwrap());
        assert_eq!(acr_margin(1.0, 1.0, 0.5), 0.0);
    }

    #[test]
    fn game_wrapper_dimensions() {
        let g = PyGame::connectivity();
        assert_eq!((g.n(), g.total_dim()), (5, 10));
        assert!(PyGame::affine(vec![vec![1.0, 1.0]], vec![1.0, 2.0], vec![1, 1], None).is_err());
        let singular = PyGame::affine(vec![vec![1.0, 1.0], vec![1.0, 1.0]], vec![1.0, 2.0], vec![1, 1], None).unwrap();
        assert!(singular.inner.solve_nash(&[0.0, 0.0], 1e-12, 10).is_err());
    }
}
