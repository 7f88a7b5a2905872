//! Python bindings for the abiot simulator.
//!
//! Structured results (metrics, events, reports) come back as plain Python
//! dicts and lists.

use abiot_core::acoustics::{self, EmitterSpec, ExposureField};
use abiot_core::config::RunConfig as CoreConfig;
use abiot_core::field::build_field;
use abiot_core::geometry::{Point2, Rect};
use abiot_core::path::{self, Corner};
use abiot_core::sim::{self, CalibrationGrid, CalibrationTargets, LoggedEvent, Metrics, Scenario};
use abiot_core::swarm::{self, CellAssignment};
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;

create_exception!(
    abiot,
    AbiotError,
    PyException,
    "Invalid configuration, refused partition or failed calibration."
);

fn err(e: abiot_core::Error) -> PyErr {
    AbiotError::new_err(e.to_string())
}

fn to_py<'py, T: Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(v).map_err(|e| AbiotError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn from_py<T: DeserializeOwned>(obj: &Bound<'_, PyAny>) -> PyResult<T> {
    let text: String = obj.py().import("json")?.call_method1("dumps", (obj,))?.extract()?;
    serde_json::from_str(&text).map_err(|e| AbiotError::new_err(e.to_string()))
}

fn corner(name: &str) -> PyResult<Corner> {
    serde_json::from_value(serde_json::Value::String(name.to_string()))
        .map_err(|_| AbiotError::new_err(format!("unknown corner `{name}`")))
}

fn points(v: Vec<Point2>) -> Vec<(f64, f64)> {
    v.into_iter().map(|p| (p.x, p.y)).collect()
}

/// A run configuration: defaults, optionally replaced by a JSON document,
/// then `section.key=value` overrides.
#[pyclass(name = "RunConfig", from_py_object)]
#[derive(Clone)]
struct PyRunConfig {
    inner: CoreConfig,
}

#[pymethods]
impl PyRunConfig {
    #[new]
    #[pyo3(signature = (json=None, overrides=Vec::new()))]
    fn new(json: Option<&str>, overrides: Vec<String>) -> PyResult<Self> {
        let inner = match json {
            Some(text) => CoreConfig::from_json_str(text, &overrides),
            None => CoreConfig::default().with_overrides(&overrides),
        }
        .map_err(err)?;
        Ok(Self { inner })
    }

    fn with_overrides(&self, overrides: Vec<String>) -> PyResult<Self> {
        Ok(Self {
            inner: self.inner.with_overrides(&overrides).map_err(err)?,
        })
    }

    fn to_json(&self) -> String {
        self.inner.to_json_pretty()
    }

    /// The repellence constants `(k, i_ref)`.
    #[getter]
    fn calibration(&self) -> (f64, f64) {
        let c = self.inner.sim.calibration;
        (c.k, c.i_ref)
    }

    fn __repr__(&self) -> String {
        format!(
            "RunConfig(mode={:?}, seed={}, days={})",
            self.inner.sim.mode, self.inner.sim.seed, self.inner.sim.days
        )
    }
}

#[pyclass(skip_from_py_object)]
struct RunResult {
    metrics: Metrics,
    events: Vec<LoggedEvent>,
    exposure: ExposureField,
    distance_m: Vec<Vec<f64>>,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn effectiveness(&self) -> f64 {
        self.metrics.effectiveness
    }

    #[getter]
    fn coverage(&self) -> f64 {
        self.metrics.coverage
    }

    #[getter]
    fn energy_used_j(&self) -> f64 {
        self.metrics.energy_used_j
    }

    #[getter]
    fn laps_completed(&self) -> u32 {
        self.metrics.laps_completed
    }

    #[getter]
    fn per_day_effectiveness(&self) -> Vec<f64> {
        self.metrics.per_day_effectiveness.clone()
    }

    /// Distance flown, indexed `[day][agent]`.
    #[getter]
    fn distance_m(&self) -> Vec<Vec<f64>> {
        self.distance_m.clone()
    }

    fn metrics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.metrics)
    }

    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &self.events)
    }

    /// Accumulated dose per cell as rows from south to north.
    fn exposure(&self) -> Vec<Vec<f64>> {
        (0..self.exposure.ny())
            .map(|j| (0..self.exposure.nx()).map(|i| self.exposure.dose(i, j)).collect())
            .collect()
    }

    fn exposure_pgm(&self) -> String {
        abiot_core::cli::exposure_pgm(&self.exposure)
    }
}

fn scenario(config: &PyRunConfig) -> PyResult<Scenario> {
    Scenario::from_config(&config.inner).map_err(err)
}

#[pyfunction]
fn run(config: &PyRunConfig) -> PyResult<RunResult> {
    let out = sim::run(&scenario(config)?).map_err(err)?;
    Ok(RunResult {
        metrics: out.metrics,
        events: out.events,
        exposure: out.exposure,
        distance_m: out.distance_m,
    })
}

/// Mean effectiveness over consecutive seeds starting at `sim.seed`.
#[pyfunction]
#[pyo3(signature = (config, seeds=20))]
fn mean_effectiveness(config: &PyRunConfig, seeds: usize) -> PyResult<f64> {
    sim::mean_effectiveness(&scenario(config)?, seeds).map_err(err)
}

#[pyfunction]
#[pyo3(signature = (config, seeds=20, k_values=None, i_ref_values=None, targets=None))]
fn calibrate<'py>(
    py: Python<'py>,
    config: &PyRunConfig,
    seeds: usize,
    k_values: Option<Vec<f64>>,
    i_ref_values: Option<Vec<f64>>,
    targets: Option<(f64, f64, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    let mut grid = CalibrationGrid::default();
    if let Some(k) = k_values {
        grid.k = k;
    }
    if let Some(i) = i_ref_values {
        grid.i_ref = i;
    }
    let t = targets.map_or_else(CalibrationTargets::default, |(standalone, coordinated, system)| {
        CalibrationTargets {
            standalone,
            coordinated,
            system,
        }
    });
    let report = sim::calibrate(&config.inner, &t, &grid, seeds).map_err(err)?;
    to_py(py, &report)
}

#[pyfunction]
#[pyo3(signature = (config, days=20))]
fn habituation_experiment<'py>(py: Python<'py>, config: &PyRunConfig, days: u32) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &sim::habituation_experiment(&scenario(config)?, days).map_err(err)?)
}

#[pyfunction]
fn compare_baseline<'py>(py: Python<'py>, effectiveness: f64) -> PyResult<Bound<'py, PyAny>> {
    let m = Metrics {
        effectiveness,
        coverage: 0.0,
        energy_used_j: 0.0,
        laps_completed: 0,
        per_day_effectiveness: vec![effectiveness],
    };
    to_py(py, &sim::compare_baseline(&m))
}

#[pyfunction]
#[pyo3(signature = (region, spacing_m, corner="south_west"))]
fn spiral_inward(region: (f64, f64, f64, f64), spacing_m: f64, corner: &str) -> PyResult<Vec<(f64, f64)>> {
    let r = Rect::new(region.0, region.1, region.2, region.3);
    Ok(points(path::spiral_inward(&r, spacing_m, self::corner(corner)?).map_err(err)?))
}

#[pyfunction]
fn full_lap(inward: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let pts: Vec<Point2> = inward.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
    points(path::full_lap(&pts))
}

#[pyfunction]
#[pyo3(signature = (region, spacing_m, laps=6, corner="south_west"))]
fn mission_path(region: (f64, f64, f64, f64), spacing_m: f64, laps: u32, corner: &str) -> PyResult<Vec<(f64, f64)>> {
    let r = Rect::new(region.0, region.1, region.2, region.3);
    let plan = path::mission_path(&r, spacing_m, laps, self::corner(corner)?).map_err(err)?;
    Ok(points(plan.waypoints))
}

#[pyfunction]
#[pyo3(signature = (acoustic_power_w, distance_m, effective_range_m=15.0))]
fn intensity_at(acoustic_power_w: f64, distance_m: f64, effective_range_m: f64) -> PyResult<f64> {
    let em = EmitterSpec {
        acoustic_power_w,
        frequency_hz: 40_000.0,
        rf_enabled: false,
        effective_range_m,
    };
    acoustics::intensity_at(&em, distance_m).map_err(err)
}

#[pyfunction]
fn oscillator_frequency(r1_ohm: f64, r2_ohm: f64, capacitance_f: f64) -> PyResult<f64> {
    acoustics::oscillator_frequency(&acoustics::OscillatorConfig {
        r1_ohm,
        r2_ohm,
        capacitance_f,
    })
    .map_err(err)
}

/// Grid partition of the configured field, after neighbor negotiation.
#[pyfunction]
#[pyo3(signature = (config, agents))]
fn partition_field<'py>(py: Python<'py>, config: &PyRunConfig, agents: usize) -> PyResult<Bound<'py, PyAny>> {
    let field = build_field(&config.inner.field).map_err(err)?;
    let cells = swarm::partition_field(&field, agents).map_err(err)?;
    let neg = swarm::negotiate(&cells, config.inner.swarm.max_rounds).map_err(err)?;
    to_py(py, &neg.assignments)
}

#[pyfunction]
fn validate_partition<'py>(
    py: Python<'py>,
    config: &PyRunConfig,
    assignments: &Bound<'py, PyAny>,
) -> PyResult<Bound<'py, PyAny>> {
    let field = build_field(&config.inner.field).map_err(err)?;
    let cells: Vec<CellAssignment> = from_py(assignments)?;
    to_py(py, &swarm::validate_partition(&cells, &field))
}

#[pymodule]
fn abiot(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("AbiotError", m.py().get_type::<AbiotError>())?;
    m.add_class::<PyRunConfig>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(mean_effectiveness, m)?)?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(habituation_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(compare_baseline, m)?)?;
    m.add_function(wrap_pyfunction!(spiral_inward, m)?)?;
    m.add_function(wrap_pyfunction!(full_lap, m)?)?;
    m.add_function(wrap_pyfunction!(mission_path, m)?)?;
    m.add_function(wrap_pyfunction!(intensity_at, m)?)?;
    m.add_function(wrap_pyfunction!(oscillator_frequency, m)?)?;
    m.add_function(wrap_pyfunction!(partition_field, m)?)?;
    m.add_function(wrap_pyfunction!(validate_partition, m)?)?;
    Ok(())
}
