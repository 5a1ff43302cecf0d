//! Python bindings: parameter sets, jump coefficients, the scalar maps, single
//! trajectories and the Monte Carlo experiments.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use jumpsde::harness::{self, Ladder, RunSpec, Scheme};
use jumpsde::model::{JumpRequirement, ProbeGrid};
use jumpsde::{Error, JumpCoefficient, ModelParams, SolverConfig};

fn to_py(e: Error) -> PyErr {
    if e.is_validation() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

#[pyclass(name = "ModelParams", module = "jumpsde", skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    #[pyo3(get, set)]
    alpha_m1: f64,
    #[pyo3(get, set)]
    alpha0: f64,
    #[pyo3(get, set)]
    alpha1: f64,
    #[pyo3(get, set)]
    alpha2: f64,
    #[pyo3(get, set)]
    alpha3: f64,
    #[pyo3(get, set)]
    gamma: f64,
    #[pyo3(get, set)]
    rho: f64,
    #[pyo3(get, set)]
    lambda_: f64,
    #[pyo3(get, set)]
    x0: f64,
    #[pyo3(get, set)]
    horizon: f64,
}

impl From<ModelParams> for PyModelParams {
    fn from(p: ModelParams) -> Self {
        Self {
            alpha_m1: p.alpha_m1,
            alpha0: p.alpha0,
            alpha1: p.alpha1,
            alpha2: p.alpha2,
            alpha3: p.alpha3,
            gamma: p.gamma,
            rho: p.rho,
            lambda_: p.lambda,
            x0: p.x0,
            horizon: p.horizon,
        }
    }
}

impl PyModelParams {
    fn inner(&self) -> ModelParams {
        ModelParams {
            alpha_m1: self.alpha_m1,
            alpha0: self.alpha0,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            alpha3: self.alpha3,
            gamma: self.gamma,
            rho: self.rho,
            lambda: self.lambda_,
            x0: self.x0,
            horizon: self.horizon,
        }
    }
}

#[pymethods]
impl PyModelParams {
    #[new]
    #[pyo3(signature = (alpha_m1, alpha0, alpha1, alpha2, alpha3, gamma, rho, lambda_ = 1.0, x0 = 1.0, horizon = 1.0))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        alpha_m1: f64,
        alpha0: f64,
        alpha1: f64,
        alpha2: f64,
        alpha3: f64,
        gamma: f64,
        rho: f64,
        lambda_: f64,
        x0: f64,
        horizon: f64,
    ) -> Self {
        Self {
            alpha_m1,
            alpha0,
            alpha1,
            alpha2,
            alpha3,
            gamma,
            rho,
            lambda_,
            x0,
            horizon,
        }
    }

    #[staticmethod]
    fn set_one() -> Self {
        ModelParams::set_one().into()
    }

    #[staticmethod]
    fn set_two() -> Self {
        ModelParams::set_two().into()
    }

    fn with_lambda(&self, lambda_: f64) -> Self {
        self.inner().with_lambda(lambda_).into()
    }

    /// Checks the parameters; returns `(regime, critical_moment_cap)`.
    fn validate(&self) -> PyResult<(String, Option<f64>)> {
        let r = jumpsde::validate_params(&self.inner()).map_err(to_py)?;
        Ok((format!("{:?}", r.regime), r.critical_moment_cap))
    }

    fn m_exponent(&self) -> f64 {
        self.inner().m_exponent()
    }

    fn drift(&self, x: f64) -> PyResult<f64> {
        self.inner().drift(x).map_err(to_py)
    }

    fn diffusion(&self, x: f64) -> PyResult<f64> {
        self.inner().diffusion(x).map_err(to_py)
    }

    fn transformed_drift(&self, z: f64) -> PyResult<f64> {
        self.inner().transformed_drift(z).map_err(to_py)
    }

    fn transformed_drift_prime(&self, z: f64) -> PyResult<f64> {
        self.inner().transformed_drift_prime(z).map_err(to_py)
    }

    fn transformed_drift_second(&self, z: f64) -> PyResult<f64> {
        self.inner().transformed_drift_second(z).map_err(to_py)
    }

    /// One-sided Lipschitz constant of the transformed drift.
    fn q(&self) -> PyResult<f64> {
        jumpsde::compute_q(&self.inner()).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.inner())
    }
}

#[pyclass(name = "JumpCoefficient", module = "jumpsde", frozen)]
struct PyJump {
    inner: JumpCoefficient,
}

#[pymethods]
impl PyJump {
    /// Parses `family:param`, e.g. `linear:-0.5`, `sine:1`, `rational:0.5`, `zero`.
    #[new]
    fn new(spec: &str) -> PyResult<Self> {
        Ok(Self {
            inner: spec.parse().map_err(to_py)?,
        })
    }

    fn eval(&self, x: f64) -> f64 {
        self.inner.eval(x)
    }

    fn deriv(&self, x: f64) -> f64 {
        self.inner.deriv(x)
    }

    /// Growth and band constants as a dict with keys `mu, r, mu1, mu2, sampled_only`.
    #[pyo3(signature = (params, require_band = false))]
    fn constants<'py>(&self, py: Python<'py>, params: PyRef<'_, PyModelParams>, require_band: bool) -> PyResult<Bound<'py, PyDict>> {
        let requirement = if require_band {
            JumpRequirement::Convergence
        } else {
            JumpRequirement::Positivity
        };
        let k = jumpsde::validate_jump(&self.inner, &params.inner(), &ProbeGrid::default(), requirement).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("mu", k.mu)?;
        d.set_item("r", k.r)?;
        d.set_item("mu1", k.mu1)?;
        d.set_item("mu2", k.mu2)?;
        d.set_item("sampled_only", k.sampled_only)?;
        Ok(d)
    }

    fn __repr__(&self) -> String {
        format!("JumpCoefficient('{}')", self.inner)
    }

    fn __str__(&self) -> String {
        self.inner.to_string()
    }
}

#[pyfunction]
fn lamperti_forward(rho: f64, x: f64) -> PyResult<f64> {
    jumpsde::lamperti_forward(rho, x).map_err(to_py)
}

#[pyfunction]
fn lamperti_inverse(rho: f64, z: f64) -> PyResult<f64> {
    jumpsde::lamperti_inverse(rho, z).map_err(to_py)
}

#[pyfunction]
fn jump_map_z(rho: f64, h: PyRef<'_, PyJump>, z: f64) -> PyResult<f64> {
    jumpsde::jump_map_z(rho, &h.inner, z).map_err(to_py)
}

/// Root of `z - dt F(z) = rhs`.
#[pyfunction]
#[pyo3(signature = (params, rhs, dt, q = None))]
fn implicit_step_z(params: PyRef<'_, PyModelParams>, rhs: f64, dt: f64, q: Option<f64>) -> PyResult<f64> {
    let p = params.inner();
    let q = match q {
        Some(q) => q,
        None => jumpsde::compute_q(&p).map_err(to_py)?,
    };
    jumpsde::implicit_step_z(&p, q, rhs, dt, &SolverConfig::default()).map_err(to_py)
}

/// Merged grid `(nodes, is_jump)`.
#[pyfunction]
fn build_mesh(m: usize, horizon: f64, jump_times: Vec<f64>) -> PyResult<(Vec<f64>, Vec<bool>)> {
    let mesh = jumpsde::build_mesh(m, horizon, &jump_times).map_err(to_py)?;
    Ok((mesh.nodes().to_vec(), mesh.is_jump().to_vec()))
}

/// One TJABEM trajectory on its jump-adapted mesh.
#[pyfunction]
#[pyo3(signature = (params, h, m, seed, path_index = 0))]
fn simulate<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    h: PyRef<'_, PyJump>,
    m: usize,
    seed: u64,
    path_index: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let p = params.inner();
    jumpsde::validate_params(&p).map_err(to_py)?;
    jumpsde::validate_jump(&h.inner, &p, &ProbeGrid::default(), JumpRequirement::Positivity).map_err(to_py)?;
    let bundle = jumpsde::generate_bundle(&p, m, seed, path_index).map_err(to_py)?;
    let tj = jumpsde::Tjabem::new(&p, &h.inner, SolverConfig::default()).map_err(to_py)?;
    let (traj, x_t) = tj.path(&bundle.fine_mesh, &bundle.dw_fine).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("t", bundle.fine_mesh.nodes().to_vec())?;
    d.set_item("is_jump", bundle.fine_mesh.is_jump().to_vec())?;
    d.set_item("x", traj.x())?;
    d.set_item("z_pre", traj.z_pre)?;
    d.set_item("z_post", traj.z_post)?;
    d.set_item("x_T", x_t)?;
    Ok(d)
}

fn parse_scheme(s: &str) -> PyResult<Scheme> {
    match s {
        "tjabem" => Ok(Scheme::Tjabem),
        "bem" => Ok(Scheme::Bem),
        other => Err(PyValueError::new_err(format!("unknown scheme '{other}' (tjabem, bem)"))),
    }
}

/// Strong errors against the fine-mesh reference; one dict per scheme.
#[pyfunction]
#[pyo3(signature = (params, h, schemes, m_list, m_ref, n_paths, seed, parallelism = 0))]
#[allow(clippy::too_many_arguments)]
fn strong_error_ladder<'py>(
    py: Python<'py>,
    params: PyRef<'_, PyModelParams>,
    h: PyRef<'_, PyJump>,
    schemes: Vec<String>,
    m_list: Vec<usize>,
    m_ref: usize,
    n_paths: u64,
    seed: u64,
    parallelism: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let p = params.inner();
    let coeff = h.inner.clone();
    let schemes = schemes.iter().map(|s| parse_scheme(s)).collect::<PyResult<Vec<_>>>()?;
    let ladder = Ladder { m_list, m_ref };
    let run = RunSpec {
        n_paths,
        global_seed: seed,
        parallelism,
    };
    let reports = py
        .detach(|| harness::strong_error_ladders(&p, &coeff, &schemes, &ladder, &run, &SolverConfig::default()))
        .map_err(to_py)?;
    reports
        .iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("scheme", r.scheme.label())?;
            d.set_item("dt", r.points.iter().map(|x| x.dt).collect::<Vec<_>>())?;
            d.set_item("error_l1", r.points.iter().map(|x| x.error_l1).collect::<Vec<_>>())?;
            d.set_item("stderr", r.points.iter().map(|x| x.stderr).collect::<Vec<_>>())?;
            d.set_item("error_l2", r.points.iter().map(|x| x.error_l2).collect::<Vec<_>>())?;
            d.set_item("slope", r.fit.slope)?;
            d.set_item("intercept", r.fit.intercept)?;
            d.set_item("r2", r.fit.r2)?;
            d.set_item("monotone_ok", r.monotone_ok)?;
            Ok(d)
        })
        .collect()
}

/// Non-positive value counts; one dict per (dt, h, parameter set) cell.
#[pyfunction]
#[pyo3(signature = (sets, families, m_list, lambda_, n_paths, seed, parallelism = 0))]
#[allow(clippy::too_many_arguments)]
fn positivity_table<'py>(
    py: Python<'py>,
    sets: Vec<(String, PyRef<'_, PyModelParams>)>,
    families: Vec<String>,
    m_list: Vec<usize>,
    lambda_: f64,
    n_paths: u64,
    seed: u64,
    parallelism: usize,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let sets: Vec<(String, ModelParams)> = sets.iter().map(|(n, p)| (n.clone(), p.inner())).collect();
    let families = families
        .iter()
        .map(|f| f.parse::<JumpCoefficient>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(to_py)?;
    let run = RunSpec {
        n_paths,
        global_seed: seed,
        parallelism,
    };
    let report = py
        .detach(|| jumpsde::positivity_table(&sets, &families, &m_list, lambda_, &run, &SolverConfig::default()))
        .map_err(to_py)?;
    report
        .cells
        .iter()
        .map(|c| {
            let d = PyDict::new(py);
            d.set_item("param_set", &c.param_set)?;
            d.set_item("h_family", &c.h_family)?;
            d.set_item("dt", c.dt)?;
            d.set_item("n_values", c.n_values)?;
            d.set_item("n_nonpositive", c.n_nonpositive)?;
            d.set_item("percent", c.percent)?;
            Ok(d)
        })
        .collect()
}

/// Rows `(p, sup_mean, sup_stderr, terminal_mean, terminal_stderr)`.
#[pyfunction]
#[pyo3(signature = (params, h, m, p_list, n_paths, seed, parallelism = 0))]
#[allow(clippy::too_many_arguments, clippy::type_complexity)]
fn moment_probe(
    py: Python<'_>,
    params: PyRef<'_, PyModelParams>,
    h: PyRef<'_, PyJump>,
    m: usize,
    p_list: Vec<f64>,
    n_paths: u64,
    seed: u64,
    parallelism: usize,
) -> PyResult<Vec<(f64, f64, f64, f64, f64)>> {
    let p = params.inner();
    let coeff = h.inner.clone();
    let run = RunSpec {
        n_paths,
        global_seed: seed,
        parallelism,
    };
    let table = py
        .detach(|| harness::moment_probe(&p, &coeff, m, &p_list, &run, &SolverConfig::default()))
        .map_err(to_py)?;
    Ok(table
        .rows
        .iter()
        .map(|r| (r.p, r.sup_mean, r.sup_stderr, r.terminal_mean, r.terminal_stderr))
        .collect())
}

/// Least-squares `(slope, intercept, r2)` of `ln error` against `ln dt`.
#[pyfunction]
fn fit_order(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let f = jumpsde::fit_order(&points).map_err(to_py)?;
    Ok((f.slope, f.intercept, f.r2))
}

#[pymodule]
#[pyo3(name = "jumpsde")]
fn jumpsde_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyJump>()?;
    m.add_function(wrap_pyfunction!(lamperti_forward, m)?)?;
    m.add_function(wrap_pyfunction!(lamperti_inverse, m)?)?;
    m.add_function(wrap_pyfunction!(jump_map_z, m)?)?;
    m.add_function(wrap_pyfunction!(implicit_step_z, m)?)?;
    m.add_function(wrap_pyfunction!(build_mesh, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(strong_error_ladder, m)?)?;
    m.add_function(wrap_pyfunction!(positivity_table, m)?)?;
    m.add_function(wrap_pyfunction!(moment_probe, m)?)?;
    m.add_function(wrap_pyfunction!(fit_order, m)?)?;
    Ok(())
}
