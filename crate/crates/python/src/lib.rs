//! Python bindings for the dephasing simulator.
//!
//! Units are SI throughout; fields in tesla, times in seconds. Errors map to
//! `ConfigError` (a `ValueError`), `NumericError` (an `ArithmeticError`) and
//! `OSError`.

use std::collections::BTreeMap;
use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;

use dspsim_core::angmom::{cg_coefficient, rotation_matrix, HalfInt, HyperfineManifold};
use dspsim_core::constants::PhysicalConstants;
use dspsim_core::error::Error;
use dspsim_core::fields::{assembly_field, drift_displacement, CoilAssembly, Vec3};
use dspsim_core::metrics::{background_similarity, relative_similarity, similarity, BackgroundModel};
use dspsim_core::scenario::{
    echo_config, parse_config, parse_config_str, preset_scenario, run_scenario, simulate, FitModel, PRESET_NAMES,
};

create_exception!(dspsim, ConfigError, PyValueError);
create_exception!(dspsim, NumericError, PyArithmeticError);

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } => ConfigError::new_err(e.to_string()),
        Error::Io { .. } => PyOSError::new_err(e.to_string()),
        _ => NumericError::new_err(e.to_string()),
    }
}

fn half_int(v: f64) -> PyResult<HalfInt> {
    HalfInt::new(v).map_err(py_err)
}

/// Physical constants used by the simulator, by name.
#[pyfunction]
fn constants() -> BTreeMap<&'static str, f64> {
    let c = PhysicalConstants::standard();
    BTreeMap::from([
        ("mu_B", c.mu_b),
        ("hbar", c.hbar),
        ("mu_0", c.mu_0),
        ("k_B", c.k_b),
        ("m_atom", c.m_atom),
        ("lambda_signal", c.lambda_signal),
    ])
}

/// Clebsch-Gordan coefficient `<j1 m1; j2 m2 | j m>` (half-integers as floats).
#[pyfunction]
fn clebsch_gordan(j1: f64, m1: f64, j2: f64, m2: f64, j: f64, m: f64) -> PyResult<f64> {
    cg_coefficient(half_int(j1)?, half_int(m1)?, half_int(j2)?, half_int(m2)?, half_int(j)?, half_int(m)?)
        .map_err(py_err)
}

/// Rotation matrix of a spin-F manifold with Landé factor `g_f` after `t`
/// seconds in the static field `b`; rows and columns in descending m.
#[pyfunction]
fn rotation(f: f64, g_f: f64, b: [f64; 3], t: f64) -> PyResult<Vec<Vec<Complex64>>> {
    let man = HyperfineManifold::new(half_int(f)?, g_f).map_err(py_err)?;
    let d = rotation_matrix(&man, b, t).map_err(py_err)?.entries;
    Ok((0..d.nrows()).map(|r| (0..d.ncols()).map(|c| d[(r, c)]).collect()).collect())
}

/// Field of a coil pair (`anti=True` for the gradient configuration).
#[pyfunction]
#[allow(clippy::too_many_arguments)]
#[pyo3(signature = (point, radius, separation, turns, current, axis=[1.0, 0.0, 0.0], anti=true, segments=720))]
fn coil_pair_field(
    point: [f64; 3],
    radius: f64,
    separation: f64,
    turns: u32,
    current: f64,
    axis: [f64; 3],
    anti: bool,
    segments: usize,
) -> PyResult<[f64; 3]> {
    let pair = CoilAssembly::coil_pair(
        Vec3::zeros(),
        Vec3::from(axis),
        radius,
        separation,
        turns,
        current,
        anti,
        segments,
    )
    .map_err(py_err)?;
    let b = assembly_field(&pair, Vec3::from(point)).map_err(py_err)?;
    Ok([b.x, b.y, b.z])
}

/// Displacement after `t` seconds under a constant force from rest.
#[pyfunction]
fn drift(force: [f64; 3], mass: f64, t: f64) -> PyResult<[f64; 3]> {
    let d = drift_displacement(Vec3::from(force), mass, t).map_err(py_err)?;
    Ok([d.x, d.y, d.z])
}

/// `(S, S_bg, S_r)` of an image against an original (flat lists, same size),
/// with a uniform background.
#[pyfunction]
fn compare(original: Vec<f64>, image: Vec<f64>) -> PyResult<(f64, f64, f64)> {
    if original.len() != image.len() {
        return Err(NumericError::new_err("images differ in size"));
    }
    let s = similarity(&original, &image).map_err(py_err)?;
    let s_bg = background_similarity(&original, &BackgroundModel::Uniform).map_err(py_err)?;
    Ok((s, s_bg, relative_similarity(s, s_bg).map_err(py_err)?))
}

/// Names of the bundled scenarios.
#[pyfunction]
fn presets() -> Vec<&'static str> {
    PRESET_NAMES.to_vec()
}

/// A parsed scenario. Build one from a config file, config text or a preset.
#[pyclass(module = "dspsim", frozen)]
struct Scenario {
    inner: dspsim_core::scenario::Scenario,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config(&path).map_err(py_err)?,
        })
    }

    /// Config text; relative pattern paths resolve against `base_dir`.
    #[staticmethod]
    #[pyo3(signature = (text, base_dir=PathBuf::from(".")))]
    fn from_text(text: &str, base_dir: PathBuf) -> PyResult<Self> {
        Ok(Self {
            inner: parse_config_str(text, &base_dir).map_err(py_err)?,
        })
    }

    #[staticmethod]
    fn preset(name: &str) -> PyResult<Self> {
        Ok(Self {
            inner: preset_scenario(name).map_err(py_err)?,
        })
    }

    /// Same field of view on an `n × n` grid.
    fn with_grid(&self, n: usize) -> Self {
        Self {
            inner: self.inner.clone().with_grid(n),
        }
    }

    fn with_n_z(&self, k: usize) -> Self {
        Self {
            inner: self.inner.clone().with_n_z(k),
        }
    }

    /// Copy with the sampled times replaced (seconds; sorted, duplicates dropped).
    fn with_times(&self, mut times: Vec<f64>) -> PyResult<Self> {
        if times.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
            return Err(ConfigError::new_err("times must be finite and non-negative"));
        }
        times.sort_by(f64::total_cmp);
        times.dedup();
        let mut inner = self.inner.clone();
        inner.times = times;
        Ok(Self { inner })
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.times.clone()
    }

    #[getter]
    fn grid(&self) -> usize {
        self.inner.optics.grid
    }

    /// Canonical SI config text.
    fn echo(&self) -> String {
        echo_config(&self.inner, true)
    }

    /// Runs in memory; returns `(t, S, S_r, efficiency)` rows.
    fn simulate(&self, py: Python<'_>) -> PyResult<Vec<(f64, f64, f64, f64)>> {
        let s = self.inner.clone();
        let run = py.detach(move || simulate(&s)).map_err(py_err)?;
        Ok(run.records.iter().map(|r| (r.t, r.s, r.s_r, r.efficiency)).collect())
    }

    /// Runs and writes the output directory.
    fn run(&self, py: Python<'_>, out: PathBuf) -> PyResult<()> {
        let s = self.inner.clone();
        py.detach(move || run_scenario(&s, &out).map(|_| ())).map_err(py_err)
    }

    /// Predicted efficiencies for a coil field strength `b` (T).
    fn predict(&self, py: Python<'_>, b: f64, times: Vec<f64>) -> PyResult<Vec<f64>> {
        let s = self.inner.clone();
        py.detach(move || FitModel::new(&s)?.predict(b, &times)).map_err(py_err)
    }

    /// Fits the coil field strength (T) to `(t, efficiency)` observations;
    /// returns `(fitted, residual, at_lower_edge)`.
    #[pyo3(signature = (observed, lo, hi, tol=1e-9))]
    fn fit(&self, py: Python<'_>, observed: Vec<(f64, f64)>, lo: f64, hi: f64, tol: f64) -> PyResult<(f64, f64, bool)> {
        let s = self.inner.clone();
        let r = py
            .detach(move || FitModel::new(&s)?.fit(&observed, (lo, hi), tol))
            .map_err(py_err)?;
        Ok((r.fitted, r.residual, r.boundary))
    }

    fn __repr__(&self) -> String {
        format!(
            "Scenario(grid={}, n_z={}, times={})",
            self.inner.optics.grid,
            self.inner.ensemble.n_z,
            self.inner.times.len()
        )
    }
}

#[pymodule]
fn dspsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NumericError", m.py().get_type::<NumericError>())?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(clebsch_gordan, m)?)?;
    m.add_function(wrap_pyfunction!(rotation, m)?)?;
    m.add_function(wrap_pyfunction!(coil_pair_field, m)?)?;
    m.add_function(wrap_pyfunction!(drift, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    m.add_function(wrap_pyfunction!(presets, m)?)?;
    m.add_class::<Scenario>()?;
    Ok(())
}
