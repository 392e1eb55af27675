//! Python bindings: experiment configs and sweeps, dependency chains, bound
//! evaluation, and the Monte-Carlo validators.

use pyo3::exceptions::{PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use cl_recovery::bounds::{self, BoundKind, DEFAULT_C, DEFAULT_DELTA, DEFAULT_U_GRID};
use cl_recovery::datagen::generate_full;
use cl_recovery::harness::{self, ExperimentConfig, Row};
use cl_recovery::memory::{reservoir_select as reservoir, restrict};
use cl_recovery::rng::{derive, stream, tag};
use cl_recovery::transforms::TransformSpec;
use cl_recovery::{DependencyChain, Error, InputDist, Transformation};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Io(_) => PyOSError::new_err(e.to_string()),
        Error::Precondition(_) => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn row_dict<'py>(py: Python<'py>, r: &Row) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("kind", &r.kind)?;
    d.set_item("grid_index", r.grid_index)?;
    d.set_item("axis", &r.axis)?;
    d.set_item("axis_value", r.axis_value)?;
    d.set_item("trial", r.trial)?;
    d.set_item("paradigm", &r.paradigm)?;
    d.set_item("T", r.tasks)?;
    d.set_item("m", r.m)?;
    d.set_item("n_min", r.n_min)?;
    d.set_item("total_samples", r.total_samples)?;
    d.set_item("seed", r.seed)?;
    d.set_item("objective", r.objective)?;
    d.set_item("converged", r.converged)?;
    d.set_item("err_weighted", r.err_weighted)?;
    d.set_item("err_se", r.err_se)?;
    d.set_item("err_avg", r.err_avg)?;
    d.set_item("err_beta", r.err_beta)?;
    d.set_item("err_tasks", r.per_task())?;
    d.set_item("discrepancy", r.discrepancy)?;
    d.set_item("bound_value", r.bound_value)?;
    d.set_item("in_regime", r.in_regime)?;
    d.set_item("config_hash", &r.config_hash)?;
    Ok(d)
}

/// An experiment configuration (TOML text plus `key=value` overrides).
#[pyclass(name = "Experiment", frozen)]
struct PyExperiment {
    cfg: ExperimentConfig,
}

#[pymethods]
impl PyExperiment {
    #[new]
    #[pyo3(signature = (toml, overrides = Vec::new()))]
    fn new(toml: &str, overrides: Vec<String>) -> PyResult<Self> {
        Ok(Self { cfg: ExperimentConfig::from_toml_with(toml, &overrides).map_err(to_py)? })
    }

    #[staticmethod]
    #[pyo3(signature = (path, overrides = Vec::new()))]
    fn load(path: &str, overrides: Vec<String>) -> PyResult<Self> {
        Ok(Self { cfg: ExperimentConfig::load(path.as_ref(), &overrides).map_err(to_py)? })
    }

    fn hash(&self) -> String {
        self.cfg.hash()
    }

    fn to_toml(&self) -> String {
        self.cfg.to_toml()
    }

    /// All rows (runs, then aggregates) as dicts.
    fn sweep<'py>(&self, py: Python<'py>) -> PyResult<Vec<Bound<'py, PyDict>>> {
        let res = py.detach(|| harness::run_sweep(&self.cfg)).map_err(to_py)?;
        res.rows.iter().map(|r| row_dict(py, r)).collect()
    }

    /// The sweep table as CSV text.
    fn sweep_csv(&self, py: Python<'_>) -> PyResult<String> {
        let res = py.detach(|| harness::run_sweep(&self.cfg)).map_err(to_py)?;
        harness::table_to_string(&res.rows).map_err(to_py)
    }

    /// One trial at the first grid point.
    fn train<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let point = self.cfg.point(0).map_err(to_py)?;
        let detail = py.detach(|| harness::run_one(&point, 0, 0, None)).map_err(to_py)?;
        let d = row_dict(py, &detail.row)?;
        d.set_item("theta_hat", detail.outcome.theta_hat)?;
        d.set_item("solver_iters", detail.outcome.solver_iters)?;
        Ok(d)
    }

    /// Bound value, its terms, regime flag and the estimated constants.
    fn bound<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let (c, inputs, v) = py.detach(|| harness::bound_at(&self.cfg)).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("value", v.value)?;
        d.set_item("terms", v.terms.to_vec())?;
        d.set_item("in_regime", v.in_regime)?;
        d.set_item("n_prime", inputs.n_prime())?;
        d.set_item("n_dprime", inputs.n_dprime())?;
        d.set_item("kappa", c.kappa)?;
        d.set_item("m2", c.m2)?;
        d.set_item("l_g", c.l_g)?;
        d.set_item("k_g", c.k_g)?;
        d.set_item("b", c.b)?;
        Ok(d)
    }

    /// `(x, y)` nested per task, keeping only the stored samples of trial 0.
    fn generate(&self) -> PyResult<(Vec<Vec<Vec<f64>>>, Vec<Vec<Vec<f64>>>)> {
        let point = self.cfg.point(0).map_err(to_py)?;
        let data_seed = derive(self.cfg.seed, &[tag::TRIAL, 0, 0]);
        let spec = point.build_spec(data_seed).map_err(to_py)?;
        let store = generate_full(&spec).map_err(to_py)?;
        let policy = point.policy(derive(data_seed, &[tag::MEMORY])).map_err(to_py)?;
        let view = restrict(&store, &policy, spec.tasks).map_err(to_py)?;
        let (mut xs, mut ys) = (Vec::new(), Vec::new());
        for t in 1..=view.tasks() {
            xs.push(view.rows(t).iter().map(|&i| view.x(t, i).unwrap().to_vec()).collect());
            ys.push(view.rows(t).iter().map(|&i| view.y(t, i).unwrap().to_vec()).collect());
        }
        Ok((xs, ys))
    }
}

/// A task dependency chain.
#[pyclass(name = "Chain", frozen)]
struct PyChain {
    inner: DependencyChain,
}

#[pymethods]
impl PyChain {
    #[staticmethod]
    fn identity(d_x: usize, tasks: usize) -> Self {
        Self { inner: DependencyChain::identity(d_x, tasks) }
    }

    /// `g_t = s * identity` for `t >= 2`.
    #[staticmethod]
    fn scaling(d_x: usize, tasks: usize, s: f64) -> PyResult<Self> {
        let mut maps = vec![Transformation::Identity];
        for _ in 1..tasks {
            maps.push(Transformation::scaling(s).map_err(to_py)?);
        }
        Ok(Self { inner: DependencyChain::new(d_x, maps).map_err(to_py)? })
    }

    #[staticmethod]
    fn rotations(d_x: usize, tasks: usize, seed: u64) -> PyResult<Self> {
        let mut rng = stream(seed, &[tag::CHAIN]);
        let mut maps = vec![Transformation::Identity];
        for _ in 1..tasks {
            maps.push(Transformation::random_rotation(d_x, &mut rng).map_err(to_py)?);
        }
        Ok(Self { inner: DependencyChain::new(d_x, maps).map_err(to_py)? })
    }

    #[staticmethod]
    fn block_drift(d_x: usize, tasks: usize, block: usize, decay: f64) -> PyResult<Self> {
        Ok(Self { inner: DependencyChain::block_drift(d_x, tasks, block, decay).map_err(to_py)? })
    }

    /// From a TOML document with a `maps` array of transformation records,
    /// the first of which must be `{kind = "identity"}`.
    #[staticmethod]
    fn from_toml(d_x: usize, text: &str) -> PyResult<Self> {
        #[derive(serde::Deserialize)]
        struct Doc {
            maps: Vec<TransformSpec>,
        }
        let doc: Doc = toml::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner: DependencyChain::from_specs(d_x, &doc.maps).map_err(to_py)? })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn apply(&self, t: usize, x1: Vec<f64>) -> PyResult<Vec<f64>> {
        if x1.len() != self.inner.d_x() {
            return Err(PyValueError::new_err(format!("expected {} coordinates", self.inner.d_x())));
        }
        let out = self.inner.apply(t, &nalgebra::DVector::from_vec(x1)).map_err(to_py)?;
        Ok(out.as_slice().to_vec())
    }

    fn uniform_scale(&self, t: usize) -> Option<f64> {
        self.inner.uniform_scale(t)
    }

    /// `(L_G, k_G, alpha)`.
    fn lipschitz_constants(&self, lf: f64, c_max: f64) -> PyResult<(f64, f64, f64)> {
        let s = self.inner.lipschitz_constants(lf, c_max).map_err(to_py)?;
        Ok((s.l_g, s.k_g, s.alpha))
    }
}

/// Constants of the explicit bound.
#[pyclass(name = "BoundInputs", frozen)]
struct PyBoundInputs {
    inner: bounds::BoundInputs,
}

#[pymethods]
impl PyBoundInputs {
    #[new]
    #[pyo3(signature = (
        *, p, d_x, d_y, sigma, nu, m, n, w, kappa, m2, l_g, k_g, b,
        delta = DEFAULT_DELTA, c = DEFAULT_C, alpha = 1.0, omega_at_fstar = 0.0, lambda_ = 0.0, beta = Vec::new()
    ))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        p: usize,
        d_x: usize,
        d_y: usize,
        sigma: f64,
        nu: f64,
        m: usize,
        n: Vec<usize>,
        w: Vec<f64>,
        kappa: f64,
        m2: f64,
        l_g: f64,
        k_g: f64,
        b: f64,
        delta: f64,
        c: f64,
        alpha: f64,
        omega_at_fstar: f64,
        lambda_: f64,
        beta: Vec<f64>,
    ) -> PyResult<Self> {
        let inner = bounds::BoundInputs {
            p,
            d_x,
            d_y,
            sigma,
            nu,
            tasks: n.len(),
            m,
            n,
            w,
            delta,
            c,
            kappa,
            m2,
            l_g,
            k_g,
            alpha,
            b,
            omega_at_fstar,
            lambda: lambda_,
            beta,
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn n_prime(&self) -> f64 {
        self.inner.n_prime()
    }

    fn n_dprime(&self) -> f64 {
        self.inner.n_dprime()
    }

    fn lambda_cap(&self) -> f64 {
        self.inner.lambda_cap()
    }

    fn radii(&self) -> PyResult<(f64, f64)> {
        bounds::radii(&self.inner).map_err(to_py)
    }

    /// `kind` is `general`, `distill` or `dep-weights` (which needs `w_cap`).
    #[pyo3(signature = (kind = "general", w_cap = None))]
    fn bound<'py>(&self, py: Python<'py>, kind: &str, w_cap: Option<f64>) -> PyResult<Bound<'py, PyDict>> {
        let kind = match (kind, w_cap) {
            ("general", _) => BoundKind::General,
            ("distill", _) => BoundKind::Distill,
            ("dep-weights", Some(w_cap)) => BoundKind::DepWeights { w_cap },
            ("dep-weights", None) => return Err(PyValueError::new_err("dep-weights needs w_cap")),
            (other, _) => return Err(PyValueError::new_err(format!("unknown bound kind `{other}`"))),
        };
        let v = bounds::theorem_bound(&self.inner, kind).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("value", v.value)?;
        d.set_item("terms", v.terms.to_vec())?;
        d.set_item("in_regime", v.in_regime)?;
        d.set_item("n_margin", v.condition.n_margin)?;
        d.set_item("m_margin", v.condition.m_margin)?;
        Ok(d)
    }
}

/// Indices kept by Algorithm R over `0..n`.
#[pyfunction]
fn reservoir_select(n: usize, k: usize, seed: u64) -> Vec<usize> {
    reservoir(0..n, k, &mut stream(seed, &[tag::RESERVOIR]))
}

/// `(slope, stderr)` of `ln y` against `ln x`.
#[pyfunction]
fn fit_loglog(xs: Vec<f64>, ys: Vec<f64>) -> PyResult<(f64, f64)> {
    harness::fit_loglog(&xs, &ys).map_err(to_py)
}

#[pyfunction]
fn net_size(p: usize, diam: f64, eps: f64) -> PyResult<f64> {
    bounds::net_size(p, diam, eps).map_err(to_py)
}

/// Rows `(u, empirical, se, bound, ok)` on the default `u` grid.
#[pyfunction]
#[pyo3(signature = (sigma, d, trials = 100_000, seed = 0))]
fn validate_norm_concentration(sigma: f64, d: usize, trials: usize, seed: u64) -> PyResult<Vec<(f64, f64, f64, f64, bool)>> {
    let r = bounds::validate_norm_concentration(InputDist::Gaussian, sigma, d, trials, &DEFAULT_U_GRID, seed).map_err(to_py)?;
    Ok(r.rows.iter().map(|x| (x.param, x.empirical, x.se, x.bound, x.ok)).collect())
}

/// `(empirical, se, bound, ok)`.
#[pyfunction]
#[pyo3(signature = (sigma, d, r, lipschitz = 1.0, trials = 100_000, seed = 0))]
fn validate_projection_difference(sigma: f64, d: usize, r: f64, lipschitz: f64, trials: usize, seed: u64) -> PyResult<(f64, f64, f64, bool)> {
    let rep = bounds::validate_projection_difference(InputDist::Gaussian, sigma, d, r, lipschitz, trials, seed).map_err(to_py)?;
    let x = &rep.rows[0];
    Ok((x.empirical, x.se, x.bound, x.ok))
}

#[pymodule]
fn cl_recovery_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyExperiment>()?;
    m.add_class::<PyChain>()?;
    m.add_class::<PyBoundInputs>()?;
    m.add_function(wrap_pyfunction!(reservoir_select, m)?)?;
    m.add_function(wrap_pyfunction!(fit_loglog, m)?)?;
    m.add_function(wrap_pyfunction!(net_size, m)?)?;
    m.add_function(wrap_pyfunction!(validate_norm_concentration, m)?)?;
    m.add_function(wrap_pyfunction!(validate_projection_difference, m)?)?;
    Ok(())
}
