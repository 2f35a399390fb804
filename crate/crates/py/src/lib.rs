//! Python bindings for the vbmap spin-Hamiltonian engine.
//!
//! ```python
//! import vbmap_py as vb
//!
//! sys = vb.SpinSystem.default()
//! p = vb.FieldPoint(1.718, 0.0, 0.0)
//! levels = vb.energies(sys, p)
//! best = max(vb.transitions(sys, p), key=lambda t: t["probability"])
//! csv_text = vb.sweep_csv(sys, '{"kind": "line-parallel", "b_min_mT": 0, "b_max_mT": 6, "n": 61}')
//! ```

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use vbmap::io::{write_sweep_csv, FileMetadata, SWEEP_SCHEMA};
use vbmap::spectra::{eigensystem, transitions as all_transitions, TransitionRecord};
use vbmap::{Error, HamiltonianModel, NoiseModel, Quantity, ResponseOptions, Selector, SweepGrid, SweepSettings};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Eigensolver { .. } => PyRuntimeError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

/// Electron spin plus nuclear spins with their coupling tensors.
#[pyclass(name = "SpinSystem", module = "vbmap_py", from_py_object)]
#[derive(Clone)]
struct PySpinSystem {
    inner: vbmap::SpinSystem,
}

#[pymethods]
impl PySpinSystem {
    /// The boron vacancy with three nearest-neighbour nitrogen nuclei.
    #[staticmethod]
    fn default() -> Self {
        Self {
            inner: vbmap::default_vb_system(),
        }
    }

    /// Parses the same JSON object used by the `system` config key.
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner: vbmap::SpinSystem = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[getter]
    fn dim(&self) -> PyResult<usize> {
        self.inner.dim().map_err(to_py)
    }

    #[getter]
    fn zfs(&self) -> f64 {
        self.inner.zfs
    }

    #[getter]
    fn gamma_e(&self) -> f64 {
        self.inner.gamma_e
    }

    #[getter]
    fn n_nuclei(&self) -> usize {
        self.inner.nuclei.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SpinSystem(D={} MHz, gamma_e={} MHz/mT, nuclei={})",
            self.inner.zfs,
            self.inner.gamma_e,
            self.inner.nuclei.len()
        )
    }
}

/// Field magnitude in mT and polar/azimuthal angles in radians.
#[pyclass(name = "FieldPoint", module = "vbmap_py", from_py_object)]
#[derive(Clone, Copy)]
struct PyFieldPoint {
    inner: vbmap::FieldPoint,
}

#[pymethods]
impl PyFieldPoint {
    #[new]
    #[pyo3(signature = (b0, theta = 0.0, phi = 0.0))]
    fn new(b0: f64, theta: f64, phi: f64) -> PyResult<Self> {
        vbmap::field_vector(b0, theta, phi).map_err(to_py)?;
        Ok(Self {
            inner: vbmap::FieldPoint::new(b0, theta, phi),
        })
    }

    #[getter]
    fn b0(&self) -> f64 {
        self.inner.b0
    }

    #[getter]
    fn theta(&self) -> f64 {
        self.inner.theta
    }

    #[getter]
    fn phi(&self) -> f64 {
        self.inner.phi
    }

    /// (Bx, By, Bz) in mT.
    fn cartesian(&self) -> (f64, f64, f64) {
        let [x, y, z] = self.inner.cartesian();
        (x, y, z)
    }

    fn __repr__(&self) -> String {
        format!("FieldPoint(b0={}, theta={}, phi={})", self.inner.b0, self.inner.theta, self.inner.phi)
    }
}

fn transition_dict<'py>(py: Python<'py>, r: &TransitionRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("initial", r.initial)?;
    d.set_item("final", r.fin)?;
    d.set_item("f_MHz", r.energy)?;
    d.set_item("probability", r.probability)?;
    d.set_item("ms_initial", r.ms_initial)?;
    d.set_item("ms_final", r.ms_final)?;
    d.set_item("mI_initial", r.mi_initial)?;
    d.set_item("mI_final", r.mi_final)?;
    d.set_item("mixed", r.mixed)?;
    Ok(d)
}

/// Dense Hamiltonian in MHz as a list of rows of complex numbers.
#[pyfunction]
fn hamiltonian(system: &PySpinSystem, point: &PyFieldPoint) -> PyResult<Vec<Vec<Complex64>>> {
    let h = vbmap::build_hamiltonian(&system.inner, &point.inner).map_err(to_py)?;
    Ok(h.row_iter().map(|row| row.iter().copied().collect()).collect())
}

/// Eigenvalues in MHz, ascending.
#[pyfunction]
fn energies(system: &PySpinSystem, point: &PyFieldPoint) -> PyResult<Vec<f64>> {
    let model = HamiltonianModel::new(&system.inner).map_err(to_py)?;
    let es = eigensystem(&model, point.inner.cartesian()).map_err(to_py)?;
    Ok(es.energies.clone())
}

/// Every m_s = 0 to m_s = ±1 transition as a dict.
#[pyfunction]
fn transitions<'py>(py: Python<'py>, system: &PySpinSystem, point: &PyFieldPoint) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let model = HamiltonianModel::new(&system.inner).map_err(to_py)?;
    let es = eigensystem(&model, point.inner.cartesian()).map_err(to_py)?;
    all_transitions(&es).iter().map(|r| transition_dict(py, r)).collect()
}

fn selector(all_transitions: bool, threshold: f64) -> Selector {
    if all_transitions {
        Selector::All
    } else {
        Selector::MaxProbability { threshold }
    }
}

/// Field gradient, curvature and T2 of the selected transitions.
#[pyfunction]
#[pyo3(signature = (system, point, sigma_b_mt = vbmap::response::DEFAULT_SIGMA_B_MT, fd_step_mt = vbmap::response::DEFAULT_STEP_MT, all_transitions = false, threshold = vbmap::response::DEFAULT_PROBABILITY_THRESHOLD))]
fn sensitivities<'py>(
    py: Python<'py>,
    system: &PySpinSystem,
    point: &PyFieldPoint,
    sigma_b_mt: f64,
    fd_step_mt: f64,
    all_transitions: bool,
    threshold: f64,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let model = HamiltonianModel::new(&system.inner).map_err(to_py)?;
    let opts = ResponseOptions {
        step: fd_step_mt,
        noise: NoiseModel::new(sigma_b_mt).map_err(to_py)?,
        ..Default::default()
    };
    let report = py
        .detach(|| vbmap::sensitivities(&model, &point.inner, &selector(all_transitions, threshold), &opts))
        .map_err(to_py)?;
    report
        .results
        .iter()
        .map(|s| {
            let d = transition_dict(py, &s.transition)?;
            d.set_item("grad_MHz_per_mT", s.grad_mag)?;
            d.set_item("grad_vector", (s.grad[0], s.grad[1], s.grad[2]))?;
            d.set_item("curv_MHz_per_mT2", s.curv_mag)?;
            d.set_item("t2_us", s.t2.value)?;
            d.set_item("flags", s.flags.to_string())?;
            Ok(d)
        })
        .collect()
}

/// T2 in μs from gradient (MHz/mT) and curvature (MHz/mT²).
#[pyfunction]
#[pyo3(signature = (grad, curv = 0.0, sigma_b_mt = vbmap::response::DEFAULT_SIGMA_B_MT, cap_us = vbmap::response::DEFAULT_T2_CAP_US))]
fn estimate_t2(grad: f64, curv: f64, sigma_b_mt: f64, cap_us: f64) -> PyResult<f64> {
    let noise = NoiseModel::new(sigma_b_mt).map_err(to_py)?;
    Ok(vbmap::estimate_t2(grad, curv, &noise, cap_us).map_err(to_py)?.value)
}

/// Closed-form axial dip fields in mT for each collective projection.
#[pyfunction]
#[pyo3(signature = (a_zz, gamma_e = vbmap::hamiltonian::GAMMA_E_MHZ_PER_MT, mi = vec![-3, -2, -1, 0, 1, 2, 3]))]
fn dip_fields(a_zz: f64, gamma_e: f64, mi: Vec<i32>) -> PyResult<Vec<f64>> {
    vbmap::analytic::dip_fields(a_zz, gamma_e, &mi).map_err(to_py)
}

fn parse_quantities(names: &[String]) -> PyResult<Vec<Quantity>> {
    names
        .iter()
        .map(|n| serde_json::from_value(serde_json::Value::String(n.clone())).map_err(|e| PyValueError::new_err(format!("{n}: {e}"))))
        .collect()
}

/// Runs a sweep and returns the versioned CSV text. `grid` is the JSON form
/// of the `sweep` config table.
#[pyfunction]
#[pyo3(signature = (system, grid, quantities = vec!["gradient".to_string(), "t2".to_string()], workers = 1, all_transitions = false, threshold = vbmap::response::DEFAULT_PROBABILITY_THRESHOLD))]
fn sweep_csv(
    py: Python<'_>,
    system: &PySpinSystem,
    grid: &str,
    quantities: Vec<String>,
    workers: usize,
    all_transitions: bool,
    threshold: f64,
) -> PyResult<String> {
    let grid: SweepGrid = serde_json::from_str(grid).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let quantities = parse_quantities(&quantities)?;
    let sel = selector(all_transitions, threshold);
    let settings = SweepSettings {
        workers,
        ..Default::default()
    };
    let ds = py
        .detach(|| vbmap::run_sweep(&system.inner, &grid, &quantities, &sel, &settings))
        .map_err(to_py)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &ds, &FileMetadata::new(SWEEP_SCHEMA, serde_json::Value::Null)).map_err(to_py)?;
    String::from_utf8(buf).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pymodule]
fn vbmap_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySpinSystem>()?;
    m.add_class::<PyFieldPoint>()?;
    m.add_function(wrap_pyfunction!(hamiltonian, m)?)?;
    m.add_function(wrap_pyfunction!(energies, m)?)?;
    m.add_function(wrap_pyfunction!(transitions, m)?)?;
    m.add_function(wrap_pyfunction!(sensitivities, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_t2, m)?)?;
    m.add_function(wrap_pyfunction!(dip_fields, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_csv, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
