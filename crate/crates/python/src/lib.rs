//! Python bindings for the `secbw` core crate.

use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use secbw::gnn::{gnn_forward, Checkpoint, FnnParams};
use secbw::{BestChannelRule, ChannelSample, DropReason};

fn py_err(e: secbw::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

#[pyclass(name = "SystemParams", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PySystemParams(secbw::SystemParams);

#[pymethods]
impl PySystemParams {
    /// Parameters in the usual table units (dBm, MHz, dBm/Hz, Mbps, m).
    #[new]
    #[pyo3(signature = (
        tx_power_dbm = 23.0,
        total_bandwidth_mhz = 10.0,
        noise_density_dbm_per_hz = -174.0,
        path_loss_exp = 3.0,
        min_secrecy_rate_mbps = 0.8,
        area_half_width_m = 100.0,
    ))]
    fn new(
        tx_power_dbm: f64,
        total_bandwidth_mhz: f64,
        noise_density_dbm_per_hz: f64,
        path_loss_exp: f64,
        min_secrecy_rate_mbps: f64,
        area_half_width_m: f64,
    ) -> PyResult<Self> {
        secbw::SystemParams::from_table_units(
            tx_power_dbm,
            total_bandwidth_mhz,
            noise_density_dbm_per_hz,
            path_loss_exp,
            min_secrecy_rate_mbps,
            area_half_width_m,
        )
        .map(Self)
        .map_err(py_err)
    }

    #[getter]
    fn tx_power_w(&self) -> f64 {
        self.0.tx_power_w
    }
    #[getter]
    fn total_bandwidth_hz(&self) -> f64 {
        self.0.total_bandwidth_hz
    }
    #[getter]
    fn noise_density_w_per_hz(&self) -> f64 {
        self.0.noise_density_w_per_hz
    }
    #[getter]
    fn path_loss_exp(&self) -> f64 {
        self.0.path_loss_exp
    }
    #[getter]
    fn min_secrecy_rate_bps(&self) -> f64 {
        self.0.min_secrecy_rate_bps
    }
    #[getter]
    fn area_half_width_m(&self) -> f64 {
        self.0.area_half_width_m
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

#[pyclass(name = "UserChannel", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyUserChannel(secbw::UserChannel);

#[pymethods]
impl PyUserChannel {
    #[new]
    fn new(d_bs_m: f64, d_eve_m: f64, g_bs: f64, g_eve: f64) -> PyResult<Self> {
        secbw::UserChannel::new(d_bs_m, d_eve_m, g_bs, g_eve).map(Self).map_err(py_err)
    }

    #[getter]
    fn d_bs_m(&self) -> f64 {
        self.0.d_bs_m
    }
    #[getter]
    fn d_eve_m(&self) -> f64 {
        self.0.d_eve_m
    }
    #[getter]
    fn g_bs(&self) -> f64 {
        self.0.g_bs
    }
    #[getter]
    fn g_eve(&self) -> f64 {
        self.0.g_eve
    }

    fn __repr__(&self) -> String {
        format!("{:?}", self.0)
    }
}

fn to_sample(users: &[PyUserChannel]) -> PyResult<ChannelSample> {
    ChannelSample::new(users.iter().map(|u| u.0).collect()).map_err(py_err)
}

/// Admitted users with their minimum bandwidths, tied to the channels they
/// were computed from.
#[pyclass(name = "Schedule", frozen)]
struct PySchedule {
    sched: secbw::Schedule,
    sample: ChannelSample,
}

#[pymethods]
impl PySchedule {
    #[getter]
    fn scheduled_idx(&self) -> Vec<usize> {
        self.sched.scheduled_idx.clone()
    }
    #[getter]
    fn w_min_hz(&self) -> Vec<f64> {
        self.sched.w_min_hz.clone()
    }
    #[getter]
    fn surplus_hz(&self) -> f64 {
        self.sched.surplus_hz()
    }
    /// `(user index, reason)` pairs, reason being `"infeasible-alone"` or `"budget-exceeded"`.
    #[getter]
    fn dropped(&self) -> Vec<(usize, &'static str)> {
        self.sched
            .dropped
            .iter()
            .map(|&(i, r)| {
                let why = match r {
                    DropReason::InfeasibleAlone => "infeasible-alone",
                    DropReason::BudgetExceeded => "budget-exceeded",
                };
                (i, why)
            })
            .collect()
    }

    fn __len__(&self) -> usize {
        self.sched.k()
    }

    /// Sum secrecy rate of an allocation aligned with `scheduled_idx`.
    fn sum_secrecy_rate(&self, w_hz: Vec<f64>, params: &PySystemParams) -> PyResult<f64> {
        let alloc = secbw::Allocation {
            w_hz,
            policy: secbw::Policy::Ivs,
        };
        secbw::sum_secrecy_rate(&alloc, &self.sched, &self.sample, &params.0).map_err(py_err)
    }
}

#[pyfunction]
fn sample_channels(seed: u64, num_users: usize, params: &PySystemParams) -> PyResult<Vec<PyUserChannel>> {
    let s = secbw::sample_channels(seed, num_users, &params.0).map_err(py_err)?;
    Ok(s.users.into_iter().map(PyUserChannel).collect())
}

#[pyfunction]
fn data_rate(bandwidth_hz: f64, d_m: f64, gain: f64, params: &PySystemParams) -> PyResult<f64> {
    secbw::data_rate(bandwidth_hz, d_m, gain, &params.0).map_err(py_err)
}

#[pyfunction]
fn secrecy_rate(bandwidth_hz: f64, ch: &PyUserChannel, params: &PySystemParams) -> PyResult<f64> {
    secbw::secrecy_rate(bandwidth_hz, &ch.0, &params.0).map_err(py_err)
}

#[pyfunction]
fn secrecy_rate_deriv(bandwidth_hz: f64, ch: &PyUserChannel, params: &PySystemParams) -> PyResult<f64> {
    secbw::secrecy_rate_deriv(bandwidth_hz, &ch.0, &params.0).map_err(py_err)
}

#[pyfunction]
fn secrecy_rate_second_deriv(bandwidth_hz: f64, ch: &PyUserChannel, params: &PySystemParams) -> PyResult<f64> {
    secbw::secrecy_rate_second_deriv(bandwidth_hz, &ch.0, &params.0).map_err(py_err)
}

#[pyfunction]
fn min_bandwidth(ch: &PyUserChannel, params: &PySystemParams) -> PyResult<f64> {
    secbw::min_bandwidth_bisect(&ch.0, &params.0).map_err(py_err)
}

#[pyfunction]
fn schedule_users(users: Vec<PyUserChannel>, params: &PySystemParams) -> PyResult<PySchedule> {
    let sample = to_sample(&users)?;
    let sched = secbw::schedule_users(&sample, &params.0).map_err(py_err)?;
    Ok(PySchedule { sched, sample })
}

#[pyfunction]
#[pyo3(signature = (schedule, params, delta_w_hz = 1e5))]
fn allocate_ivs(schedule: &PySchedule, params: &PySystemParams, delta_w_hz: f64) -> PyResult<Vec<f64>> {
    secbw::allocate_ivs(&schedule.sched, &schedule.sample, &params.0, delta_w_hz)
        .map(|a| a.w_hz)
        .map_err(py_err)
}

#[pyfunction]
#[pyo3(signature = (schedule, params, rule = "legitimate-snr"))]
fn allocate_bec(schedule: &PySchedule, params: &PySystemParams, rule: &str) -> PyResult<Vec<f64>> {
    let rule: BestChannelRule = rule.parse().map_err(py_err)?;
    secbw::allocate_bec(&schedule.sched, &schedule.sample, &params.0, rule)
        .map(|a| a.w_hz)
        .map_err(py_err)
}

/// Graph-network allocator.
#[pyclass(name = "Gnn", frozen)]
struct PyGnn(FnnParams);

#[pymethods]
impl PyGnn {
    /// Freshly initialized (untrained) weights.
    #[new]
    #[pyo3(signature = (seed = 0))]
    fn new(seed: u64) -> Self {
        PyGnn(FnnParams::init(seed))
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Checkpoint::load(&path).map(|c| PyGnn(c.params)).map_err(py_err)
    }

    #[getter]
    fn num_params(&self) -> usize {
        self.0.num_params()
    }

    /// Allocation in Hz, aligned with `schedule.scheduled_idx`.
    fn allocate(&self, schedule: &PySchedule) -> PyResult<Vec<f64>> {
        gnn_forward(&schedule.sched, &self.0).map(|o| o.w_hz).map_err(py_err)
    }
}

#[pymodule]
fn secbw_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyUserChannel>()?;
    m.add_class::<PySchedule>()?;
    m.add_class::<PyGnn>()?;
    m.add_function(wrap_pyfunction!(sample_channels, m)?)?;
    m.add_function(wrap_pyfunction!(data_rate, m)?)?;
    m.add_function(wrap_pyfunction!(secrecy_rate, m)?)?;
    m.add_function(wrap_pyfunction!(secrecy_rate_deriv, m)?)?;
    m.add_function(wrap_pyfunction!(secrecy_rate_second_deriv, m)?)?;
    m.add_function(wrap_pyfunction!(min_bandwidth, m)?)?;
    m.add_function(wrap_pyfunction!(schedule_users, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_ivs, m)?)?;
    m.add_function(wrap_pyfunction!(allocate_bec, m)?)?;
    Ok(())
}
