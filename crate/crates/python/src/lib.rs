//! Python bindings: `import coopv2x_py`.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use coopv2x::cli::Config;
use coopv2x::simulator::{self, ScenarioPoint};
use coopv2x::{
    link, stats, FadingMode, LinkPair, LinkState, Policy, PowerAllocation, RoadGeometry, SweepSpec, SweepVariable,
    TruncGaussParams,
};

fn err(e: coopv2x::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// System constants in SI units (W, Hz, m, s).
#[pyclass(name = "SystemParams", get_all, set_all, skip_from_py_object)]
#[derive(Clone)]
struct PySystemParams {
    phi0: f64,
    alpha: f64,
    phi1: f64,
    tau: f64,
    n0: f64,
    b_r: f64,
    b_v: f64,
    p_rm: f64,
    p_vm: f64,
    d_vm: f64,
    eps_r: f64,
    eps_v: f64,
    delta: f64,
    mu: f64,
    sigma: f64,
}

impl From<coopv2x::SystemParams> for PySystemParams {
    fn from(p: coopv2x::SystemParams) -> Self {
        Self {
            phi0: p.phi0,
            alpha: p.alpha,
            phi1: p.phi1,
            tau: p.tau,
            n0: p.n0,
            b_r: p.b_r,
            b_v: p.b_v,
            p_rm: p.p_rm,
            p_vm: p.p_vm,
            d_vm: p.d_vm,
            eps_r: p.eps_r,
            eps_v: p.eps_v,
            delta: p.delta,
            mu: p.trunc.mu,
            sigma: p.trunc.sigma,
        }
    }
}

impl PySystemParams {
    fn core(&self) -> PyResult<coopv2x::SystemParams> {
        let p = coopv2x::SystemParams {
            phi0: self.phi0,
            alpha: self.alpha,
            phi1: self.phi1,
            tau: self.tau,
            n0: self.n0,
            b_r: self.b_r,
            b_v: self.b_v,
            p_rm: self.p_rm,
            p_vm: self.p_vm,
            d_vm: self.d_vm,
            eps_r: self.eps_r,
            eps_v: self.eps_v,
            delta: self.delta,
            trunc: TruncGaussParams {
                mu: self.mu,
                sigma: self.sigma,
            },
        };
        p.validate().map_err(err)?;
        Ok(p)
    }
}

#[pymethods]
impl PySystemParams {
    #[new]
    fn new() -> Self {
        coopv2x::SystemParams::default().into()
    }

    /// Parameters from a `key = value` config file.
    #[staticmethod]
    fn from_config(path: &str) -> PyResult<Self> {
        Ok(Config::load(path.as_ref()).map_err(err)?.params().into())
    }

    fn validate(&self) -> PyResult<()> {
        self.core().map(|_| ())
    }

    fn __repr__(&self) -> String {
        format!(
            "SystemParams(p_rm={}, p_vm={}, d_vm={}, delta={}, mu={}, sigma={})",
            self.p_rm, self.p_vm, self.d_vm, self.delta, self.mu, self.sigma
        )
    }
}

#[pyclass(name = "Allocation", get_all, frozen)]
struct PyAllocation {
    p_v: f64,
    p_r: f64,
    mode: String,
    feasible: bool,
    total: f64,
    achieved_outage: f64,
}

impl From<PowerAllocation> for PyAllocation {
    fn from(a: PowerAllocation) -> Self {
        Self {
            p_v: a.p_v,
            p_r: a.p_r,
            mode: a.mode.to_string(),
            feasible: a.feasible,
            total: a.total,
            achieved_outage: a.achieved_outage,
        }
    }
}

#[pymethods]
impl PyAllocation {
    fn __repr__(&self) -> String {
        format!(
            "Allocation(mode={}, p_v={:e}, p_r={:e}, feasible={})",
            self.mode, self.p_v, self.p_r, self.feasible
        )
    }
}

#[pyclass(name = "SweepRow", get_all, frozen)]
struct PySweepRow {
    point: f64,
    policy: String,
    mean_total_power: f64,
    stderr_power: f64,
    mean_rate: f64,
    stderr_rate: f64,
    feasible_frac: f64,
}

fn params_or_default(params: Option<PyRef<'_, PySystemParams>>) -> PyResult<coopv2x::SystemParams> {
    match params {
        Some(p) => p.core(),
        None => Ok(coopv2x::SystemParams::default()),
    }
}

#[pyfunction]
fn phi_cdf(x: f64) -> PyResult<f64> {
    stats::phi_cdf(x).map_err(err)
}

#[pyfunction]
fn phi_inv(p: f64) -> PyResult<f64> {
    stats::phi_inv(p).map_err(err)
}

#[pyfunction]
fn q_gauss(x: f64) -> PyResult<f64> {
    stats::q_gauss(x).map_err(err)
}

#[pyfunction]
fn q_gauss_inv(p: f64) -> PyResult<f64> {
    stats::q_gauss_inv(p).map_err(err)
}

/// Smallest `q*` with `P{q > q*} <= delta` under the truncated model.
#[pyfunction]
fn trunc_upper_quantile(delta: f64, mu: f64, sigma: f64) -> PyResult<f64> {
    let t = TruncGaussParams::new(mu, sigma).map_err(err)?;
    stats::trunc_upper_quantile(delta, &t).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (rate_sum, v, params=None))]
fn analytic_outage(rate_sum: f64, v: f64, params: Option<PyRef<'_, PySystemParams>>) -> PyResult<f64> {
    Ok(link::analytic_outage(rate_sum, v, &params_or_default(params)?))
}

/// Optimal allocation at target position `x` on the default road.
#[pyfunction]
#[pyo3(signature = (x, speed=20.0, h_v=1.0, h_r=1.0, params=None))]
fn allocate(
    x: f64,
    speed: f64,
    h_v: f64,
    h_r: f64,
    params: Option<PyRef<'_, PySystemParams>>,
) -> PyResult<PyAllocation> {
    let p = params_or_default(params)?;
    let pt = ScenarioPoint::at(&RoadGeometry::default(), &p, x, speed, h_v, h_r).map_err(err)?;
    Ok(simulator::policy_allocation(Policy::Optimal, &pt, &p).into())
}

/// Cooperative closed form for explicit link distances and gains.
#[pyfunction]
#[pyo3(signature = (d_v, d_r, v, h_v=1.0, h_r=1.0, params=None))]
fn allocate_cooperative(
    d_v: f64,
    d_r: f64,
    v: f64,
    h_v: f64,
    h_r: f64,
    params: Option<PyRef<'_, PySystemParams>>,
) -> PyResult<PyAllocation> {
    let p = params_or_default(params)?;
    let links = LinkPair {
        v2v: LinkState::v2v(d_v, h_v, &p).map_err(err)?,
        v2i: LinkState::v2i(d_r, h_r, &p).map_err(err)?,
    };
    Ok(coopv2x::allocate_cooperative(&links, v, &p).into())
}

#[allow(clippy::too_many_arguments)]
fn sweep(
    variable: SweepVariable,
    points: Vec<f64>,
    speed: f64,
    trials: usize,
    fading: &str,
    seed: u64,
    workers: Option<usize>,
    params: Option<PyRef<'_, PySystemParams>>,
) -> PyResult<Vec<PySweepRow>> {
    let p = params_or_default(params)?;
    let fading: FadingMode = fading.parse().map_err(PyValueError::new_err)?;
    let spec = SweepSpec {
        variable,
        points,
        trials,
        fading,
        policies: Policy::ALL.to_vec(),
        seed,
        speed,
        workers,
    };
    let geom = RoadGeometry::default();
    let res = match variable {
        SweepVariable::Position => simulator::sweep_position(&spec, &geom, &p),
        SweepVariable::Speed => simulator::sweep_speed(&spec, &geom, &p),
    }
    .map_err(err)?;
    Ok(res
        .rows
        .into_iter()
        .map(|r| PySweepRow {
            point: r.point,
            policy: r.policy.to_string(),
            mean_total_power: r.mean_total_power,
            stderr_power: r.stderr_power,
            mean_rate: r.mean_rate,
            stderr_rate: r.stderr_rate,
            feasible_frac: r.feasible_frac,
        })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (positions, speed=20.0, trials=1000, fading="det", seed=1, workers=None, params=None))]
#[allow(clippy::too_many_arguments)]
fn sweep_position(
    positions: Vec<f64>,
    speed: f64,
    trials: usize,
    fading: &str,
    seed: u64,
    workers: Option<usize>,
    params: Option<PyRef<'_, PySystemParams>>,
) -> PyResult<Vec<PySweepRow>> {
    sweep(
        SweepVariable::Position,
        positions,
        speed,
        trials,
        fading,
        seed,
        workers,
        params,
    )
}

#[pyfunction]
#[pyo3(signature = (speeds, trials=1000, fading="exp", seed=1, workers=None, params=None))]
fn sweep_speed(
    speeds: Vec<f64>,
    trials: usize,
    fading: &str,
    seed: u64,
    workers: Option<usize>,
    params: Option<PyRef<'_, PySystemParams>>,
) -> PyResult<Vec<PySweepRow>> {
    sweep(
        SweepVariable::Speed,
        speeds,
        20.0,
        trials,
        fading,
        seed,
        workers,
        params,
    )
}

/// Monte Carlo estimate of `P{q v > rate_sum}`.
#[pyfunction]
#[pyo3(signature = (rate_sum, v, n, seed=1, params=None))]
fn empirical_outage(
    rate_sum: f64,
    v: f64,
    n: u64,
    seed: u64,
    params: Option<PyRef<'_, PySystemParams>>,
) -> PyResult<f64> {
    simulator::empirical_outage(rate_sum, v, &params_or_default(params)?, n, seed).map_err(err)
}

#[pymodule]
fn coopv2x_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyAllocation>()?;
    m.add_class::<PySweepRow>()?;
    m.add_function(wrap_pyfunction!(phi_cdf, m)?)?;
    m.add_function(wrap_pyfunction!(phi_inv, m)?)?;
    m.add_function(wrap_pyfunction!(q_gauss, m)?)?;
    m.add_function(wrap_pyfunction!(q_gauss_inv, m)?)?;
    m.add_function(wrap_pyfunction!(trunc_upper_quantile, m)?)?;
    m.add_function(wrap_pyfunction!(analytic_outage, m)?)?;
    m.add_function(wrap_pyfunction!(allocate, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_cooperative, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_position, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_speed, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_outage, m)?)?;
    Ok(())
}
