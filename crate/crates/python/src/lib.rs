//! Python bindings: `GridSpec`, `solve`, and model storage accounting.
//!
//! Build with `cargo build -p cpmdp-python --release`; the resulting
//! `libcpmdp.so` imports as the `cpmdp` module once renamed to `cpmdp.so`
//! (see `python/smoke_test.py`).

use cpmdp_core::bench::{measure_run_with_result, MeasureOptions};
use cpmdp_core::gridworld;
use cpmdp_core::transition::{build_models, dense_bytes_estimate, dense_entries_estimate};
use cpmdp_core::{ActionId, Error, GridShape, MultiIndex, SolverConfig, SolverKind, StateId};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use std::path::PathBuf;

fn to_py_err(e: Error) -> PyErr {
    if e.is_capacity() || e.is_io() {
        PyRuntimeError::new_err(e.to_string())
    } else {
        PyValueError::new_err(e.to_string())
    }
}

/// An n-dimensional gridworld: axis sizes, obstacle and terminal cells,
/// step reward, and action noise.
#[pyclass(frozen, name = "GridSpec")]
struct PyGridSpec {
    inner: gridworld::GridSpec,
}

impl PyGridSpec {
    fn shape(&self) -> &GridShape {
        self.inner.shape()
    }
}

#[pymethods]
impl PyGridSpec {
    /// Explicit construction; obstacles and terminals are multi-indices.
    #[new]
    #[pyo3(signature = (dims, obstacles=vec![], terminals=vec![], step_reward=gridworld::DEFAULT_STEP_REWARD, noise=gridworld::DEFAULT_NOISE, seed=0))]
    fn new(
        dims: Vec<usize>,
        obstacles: Vec<Vec<usize>>,
        terminals: Vec<(Vec<usize>, f64)>,
        step_reward: f64,
        noise: f64,
        seed: u64,
    ) -> PyResult<Self> {
        let shape = GridShape::new(dims).map_err(to_py_err)?;
        let obstacles = obstacles
            .into_iter()
            .map(|m| shape.linear_index(&MultiIndex::from(m)))
            .collect::<Result<Vec<_>, _>>()
            .map_err(to_py_err)?;
        let terminals = terminals
            .into_iter()
            .map(|(m, r)| Ok((shape.linear_index(&MultiIndex::from(m))?, r)))
            .collect::<Result<Vec<_>, Error>>()
            .map_err(to_py_err)?;
        let inner = gridworld::GridSpec::new(shape, obstacles, terminals, step_reward, noise, seed)
            .map_err(to_py_err)?;
        Ok(PyGridSpec { inner })
    }

    /// Random placement of `obstacles` obstacle cells and `terminals`
    /// terminal cells (rewards alternating +100/-100), as drawn by `seed`.
    #[staticmethod]
    #[pyo3(signature = (dims, obstacles, terminals, seed, noise=gridworld::DEFAULT_NOISE))]
    fn generate(
        dims: Vec<usize>,
        obstacles: usize,
        terminals: usize,
        seed: u64,
        noise: f64,
    ) -> PyResult<Self> {
        let shape = GridShape::new(dims).map_err(to_py_err)?;
        let inner = gridworld::GridSpec::generate_random_spec(shape, obstacles, terminals, seed)
            .and_then(|s| s.with_noise(noise))
            .map_err(to_py_err)?;
        Ok(PyGridSpec { inner })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(PyGridSpec {
            inner: gridworld::GridSpec::load(&path).map_err(to_py_err)?,
        })
    }

    fn save(&self, path: PathBuf) -> PyResult<()> {
        self.inner.save(&path).map_err(to_py_err)
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        Ok(PyGridSpec {
            inner: gridworld::GridSpec::from_toml(text).map_err(to_py_err)?,
        })
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Successor distribution of one state/action pair as
    /// `[(state, probability), ...]`, sorted by state.
    fn transition(&self, state: usize, action: usize) -> PyResult<Vec<(usize, f64)>> {
        if action >= self.inner.action_count() {
            return Err(PyValueError::new_err(format!(
                "action {action} out of range for {} actions",
                self.inner.action_count()
            )));
        }
        let dist = self
            .inner
            .transition_distribution(StateId(state), ActionId(action))
            .map_err(to_py_err)?;
        Ok(dist.into_iter().map(|(s, p)| (s.0, p)).collect())
    }

    fn state_to_coords(&self, state: usize) -> PyResult<Vec<usize>> {
        let m = self.shape().multi_index(StateId(state)).map_err(to_py_err)?;
        Ok(m.coords().to_vec())
    }

    fn coords_to_state(&self, coords: Vec<usize>) -> PyResult<usize> {
        let s = self
            .shape()
            .linear_index(&MultiIndex::from(coords))
            .map_err(to_py_err)?;
        Ok(s.0)
    }

    fn is_obstacle(&self, state: usize) -> bool {
        state < self.inner.num_states() && self.inner.is_obstacle(StateId(state))
    }

    fn is_terminal(&self, state: usize) -> bool {
        state < self.inner.num_states() && self.inner.is_terminal(StateId(state))
    }

    fn terminal_reward(&self, state: usize) -> Option<f64> {
        self.inner.terminal_reward(StateId(state))
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.shape().dims().to_vec()
    }

    #[getter]
    fn num_states(&self) -> usize {
        self.inner.num_states()
    }

    #[getter]
    fn num_actions(&self) -> usize {
        self.inner.action_count()
    }

    #[getter]
    fn obstacles(&self) -> Vec<usize> {
        self.inner.obstacles().iter().map(|s| s.0).collect()
    }

    #[getter]
    fn terminals(&self) -> Vec<(usize, f64)> {
        self.inner.terminals().iter().map(|&(s, r)| (s.0, r)).collect()
    }

    #[getter]
    fn step_reward(&self) -> f64 {
        self.inner.step_reward()
    }

    #[getter]
    fn noise(&self) -> f64 {
        self.inner.noise()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed()
    }

    fn __repr__(&self) -> String {
        format!(
            "GridSpec(dims={:?}, obstacles={}, terminals={}, noise={}, seed={})",
            self.shape().dims(),
            self.inner.obstacles().len(),
            self.inner.terminals().len(),
            self.inner.noise(),
            self.inner.seed()
        )
    }
}

/// Values, policy, and counters from one solver run.
#[pyclass(frozen, name = "SolveResult")]
struct PySolveResult {
    #[pyo3(get)]
    solver: String,
    #[pyo3(get)]
    values: Vec<f64>,
    /// One entry per state; `None` for obstacles and terminals.
    #[pyo3(get)]
    policy: Vec<Option<usize>>,
    #[pyo3(get)]
    iterations: usize,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    residual_trace: Vec<f64>,
    #[pyo3(get)]
    multiplies: u64,
    #[pyo3(get)]
    wall_time_s: f64,
}

#[pymethods]
impl PySolveResult {
    fn __repr__(&self) -> String {
        format!(
            "SolveResult(solver={}, states={}, iterations={}, converged={})",
            self.solver,
            self.values.len(),
            self.iterations,
            self.converged
        )
    }
}

/// Run one solver on a spec. `solver` is one of cp-vi, cp-pi, tab-vi,
/// tab-pi.
#[pyfunction]
#[pyo3(signature = (spec, solver="cp-vi", gamma=0.9, epsilon=1e-4, max_iter=1000, eval_epsilon=1e-6, eval_max_iter=1000, threads=1, dense_cap_bytes=None))]
#[allow(clippy::too_many_arguments)]
fn solve(
    spec: &PyGridSpec,
    solver: &str,
    gamma: f64,
    epsilon: f64,
    max_iter: usize,
    eval_epsilon: f64,
    eval_max_iter: usize,
    threads: usize,
    dense_cap_bytes: Option<u64>,
) -> PyResult<PySolveResult> {
    let kind: SolverKind = solver.parse().map_err(PyValueError::new_err)?;
    let cfg = SolverConfig {
        gamma,
        epsilon,
        max_iter,
        eval_epsilon,
        eval_max_iter,
    };
    let opts = MeasureOptions {
        dense_cap_bytes: dense_cap_bytes
            .unwrap_or(cpmdp_core::transition::DEFAULT_DENSE_CAP_BYTES),
        threads,
        solve_only_timing: false,
    };
    let measured = measure_run_with_result(&spec.inner, kind, &cfg, &opts).map_err(to_py_err)?;
    let result = measured.result.ok_or_else(|| {
        PyRuntimeError::new_err(format!(
            "dense model needs {} bytes, cap is {}",
            measured.record.model_bytes, opts.dense_cap_bytes
        ))
    })?;
    let policy = (0..spec.inner.num_states())
        .map(|s| result.policy.action(StateId(s)).map(|a| a.0))
        .collect();
    Ok(PySolveResult {
        solver: kind.to_string(),
        values: result.value.into_values(),
        policy,
        iterations: result.iterations,
        converged: result.converged,
        residual_trace: result.residual_trace,
        multiplies: result.multiplies,
        wall_time_s: measured.record.wall_time_s,
    })
}

/// Deterministic storage accounting of the compressed and dense transition
/// models of a spec.
#[pyfunction]
fn storage_stats<'py>(py: Python<'py>, spec: &PyGridSpec) -> PyResult<Bound<'py, PyDict>> {
    let (cm, _) = build_models(&spec.inner).map_err(to_py_err)?;
    let stats = cm.storage_entries();
    let s = spec.inner.num_states();
    let a = spec.inner.action_count();
    let out = PyDict::new(py);
    out.set_item("components", stats.components)?;
    out.set_item("bytes", stats.bytes)?;
    out.set_item("dense_entries", dense_entries_estimate(s, a))?;
    out.set_item("dense_bytes", dense_bytes_estimate(s, a))?;
    Ok(out)
}

#[pymodule]
fn cpmdp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGridSpec>()?;
    m.add_class::<PySolveResult>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(storage_stats, m)?)?;
    m.add("SOLVERS", vec!["cp-vi", "cp-pi", "tab-vi", "tab-pi"])?;
    Ok(())
}
