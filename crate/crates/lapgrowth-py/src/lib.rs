//! Python bindings for the lapgrowth library.

use std::path::PathBuf;

use lapgrowth_core::cli::{self, Command, RunOptions};
use lapgrowth_core::conformal::{classify_regime_at, RationalMap as CoreMap};
use lapgrowth_core::evolve::{evolve as core_evolve, Convention, EvolveOptions};
use lapgrowth_core::orthopoly::{build_basis, scaling_n, GramOptions, OrthoBasis};
use lapgrowth_core::spectral::{build_curve, density_profile, kl_from_profile, profile_sup_error, trace_trajectory, TraceOptions};
use lapgrowth_core::{solve_droplet as core_droplet, solve_params as core_params, MomentData, Potential};
use num_complex::Complex64;
use pyo3::create_exception;
use pyo3::exceptions::{PyException, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(lapgrowth, LapgrowthError, PyException);

fn err(e: impl std::fmt::Display) -> PyErr {
    LapgrowthError::new_err(e.to_string())
}

/// Exterior conformal map f(ζ) = rζ + u + v/(ζ − A).
#[pyclass(frozen, skip_from_py_object, name = "RationalMap", module = "lapgrowth")]
#[derive(Clone)]
struct PyMap {
    inner: CoreMap,
    univalent: bool,
}

#[pymethods]
impl PyMap {
    #[new]
    fn new(r: f64, v: Complex64, pole: Complex64) -> PyResult<Self> {
        let inner = CoreMap::new(r, v, pole).map_err(err)?;
        Ok(PyMap { univalent: inner.is_univalent(), inner })
    }

    #[getter]
    fn r(&self) -> f64 {
        self.inner.r
    }
    #[getter]
    fn u(&self) -> Complex64 {
        self.inner.u
    }
    #[getter]
    fn v(&self) -> Complex64 {
        self.inner.v
    }
    #[getter]
    fn pole(&self) -> Complex64 {
        self.inner.pole
    }
    #[getter]
    fn univalent(&self) -> bool {
        self.univalent
    }
    #[getter]
    fn t0(&self) -> f64 {
        self.inner.t0()
    }

    fn __call__(&self, zeta: Complex64) -> Complex64 {
        self.inner.eval(zeta)
    }

    fn inverse(&self, z: Complex64) -> PyResult<Complex64> {
        self.inner.inverse(z).map_err(err)
    }

    fn conformal_measure(&self, z: Complex64) -> PyResult<f64> {
        self.inner.conformal_measure(z).map_err(err)
    }

    /// (β, a, t0) from the correspondence formulas.
    fn forward_params(&self) -> PyResult<(f64, Complex64, f64)> {
        let p = self.inner.forward_params().map_err(err)?;
        Ok((p.beta, p.a, p.t0))
    }

    fn branch_points(&self) -> (Complex64, Complex64) {
        self.inner.branch_points()
    }

    #[pyo3(signature = (m = 512))]
    fn boundary(&self, m: usize) -> Vec<Complex64> {
        self.inner.boundary_polygon(m)
    }

    fn __repr__(&self) -> String {
        let m = &self.inner;
        format!("RationalMap(r={}, u={}, v={}, pole={})", m.r, m.u, m.v, m.pole)
    }
}

fn wrap(solved: lapgrowth_core::conformal::SolvedMap) -> PyMap {
    PyMap { inner: solved.map, univalent: solved.univalent }
}

fn moments(t0: f64, beta: f64, a: Complex64) -> PyResult<MomentData> {
    MomentData::geometric(t0, beta, a).map_err(|e| PyValueError::new_err(e.to_string()))
}

/// Regime tag and radii for a charge β at a with area t0.
#[pyfunction]
fn classify_regime(py: Python<'_>, beta: f64, a: Complex64, t0: f64) -> PyResult<Py<PyDict>> {
    let r = classify_regime_at(beta, a, t0);
    let d = PyDict::new(py);
    d.set_item("tag", format!("{:?}", r.tag))?;
    d.set_item("r1", r.r1)?;
    d.set_item("r2", r.r2)?;
    Ok(d.unbind())
}

/// Solve the correspondence formulas for (r, v, A) as written.
#[pyfunction]
fn solve_params(beta: f64, a: Complex64, t0: f64) -> PyResult<PyMap> {
    core_params(beta, a, t0).map(wrap).map_err(err)
}

/// Droplet of the weight e^{-N|z|²}|1 − z/a|^{2Nβ} at area t0.
#[pyfunction]
fn solve_droplet(t0: f64, beta: f64, a: Complex64) -> PyResult<PyMap> {
    core_droplet(&moments(t0, beta, a)?).map(wrap).map_err(err)
}

fn basis(py: Python<'_>, t0: f64, beta: f64, a: Complex64, n: usize, extended: bool) -> PyResult<OrthoBasis> {
    let md = moments(t0, beta, a)?;
    py.detach(|| {
        let p = Potential::new(md);
        build_basis(&p, n, scaling_n(n, t0), &GramOptions::for_degree(n, extended)).map(|(_, b)| b).map_err(err)
    })
}

/// Zeros of the degree-n orthogonal polynomial with N = n / t0.
#[pyfunction]
#[pyo3(signature = (t0, beta, a, n, seed = 0, extended = false))]
fn zeros(py: Python<'_>, t0: f64, beta: f64, a: Complex64, n: usize, seed: u64, extended: bool) -> PyResult<Vec<Complex64>> {
    let b = basis(py, t0, beta, a, n, extended)?;
    py.detach(|| b.zeros(n, seed).map_err(err))
}

/// Weighted density ρ_n at the given points, N = n / t0.
#[pyfunction]
#[pyo3(signature = (t0, beta, a, n, points, extended = false))]
fn density(py: Python<'_>, t0: f64, beta: f64, a: Complex64, n: usize, points: Vec<Complex64>, extended: bool) -> PyResult<Vec<f64>> {
    let b = basis(py, t0, beta, a, n, extended)?;
    points.iter().map(|z| b.eval_density(n, *z).map_err(err)).collect()
}

/// (raw KL, mean-adjusted KL, profile sup error) of ρ_n against the conformal measure.
#[pyfunction]
#[pyo3(signature = (t0, beta, a, n, samples = 512))]
fn kl_divergence(py: Python<'_>, t0: f64, beta: f64, a: Complex64, n: usize, samples: usize) -> PyResult<(f64, f64, f64)> {
    let map = core_droplet(&moments(t0, beta, a)?).map_err(err)?.map;
    let b = basis(py, t0, beta, a, n, false)?;
    let prof = density_profile(&b, n, &map, samples).map_err(err)?;
    let kl = kl_from_profile(&prof).map_err(err)?;
    Ok((kl.raw, kl.mean_adjusted, profile_sup_error(&prof)))
}

/// Critical trajectory points and their line densities.
#[pyfunction]
#[pyo3(signature = (t0, beta, a, cells = 256))]
fn trajectory(py: Python<'_>, t0: f64, beta: f64, a: Complex64, cells: usize) -> PyResult<(Vec<Complex64>, Vec<f64>)> {
    let map = core_droplet(&moments(t0, beta, a)?).map_err(err)?.map;
    py.detach(|| {
        let curve = build_curve(&map).map_err(err)?;
        let traj = trace_trajectory(&curve, &map.boundary_polygon(1024), TraceOptions { cells, ..TraceOptions::default() }).map_err(err)?;
        Ok((traj.points, traj.rho_s))
    })
}

/// Sweep t0 at fixed (β, a); returns t0 values, maps, nesting flag and cusp bracket.
#[pyfunction]
#[pyo3(signature = (beta, a, t0_start, t0_end, steps = 10, droplet = false))]
fn evolve(
    py: Python<'_>,
    beta: f64,
    a: Complex64,
    t0_start: f64,
    t0_end: f64,
    steps: usize,
    droplet: bool,
) -> PyResult<Py<PyDict>> {
    let convention = if droplet { Convention::Droplet } else { Convention::Literal };
    let opts = EvolveOptions { t0_start, t0_end, steps, convention, ..EvolveOptions::default() };
    let ev = py.detach(|| core_evolve(beta, a, &opts)).map_err(err)?;
    let d = PyDict::new(py);
    d.set_item("t0", ev.steps.iter().map(|s| s.t0).collect::<Vec<_>>())?;
    d.set_item("maps", ev.steps.iter().map(|s| PyMap { inner: s.map, univalent: s.univalent }).collect::<Vec<_>>())?;
    d.set_item("nested", ev.nested)?;
    d.set_item("cusp", ev.cusp.map(|c| (c.lo, c.hi)))?;
    Ok(d.unbind())
}

/// Run a CLI command; returns the written paths or raises with the exit code.
#[pyfunction]
#[pyo3(signature = (command, config, out, extended_precision = false, seed = None))]
fn run(py: Python<'_>, command: &str, config: PathBuf, out: PathBuf, extended_precision: bool, seed: Option<u64>) -> PyResult<Vec<PathBuf>> {
    let command = match command {
        "solve-map" => Command::SolveMap,
        "density" => Command::Density,
        "kl" => Command::Kl,
        "zeros" => Command::Zeros,
        "trajectory" => Command::Trajectory,
        "evolve" => Command::Evolve,
        "validate" => Command::Validate,
        other => return Err(PyValueError::new_err(format!("unknown command {other:?}"))),
    };
    let opts = RunOptions { command, config, out, threads: None, extended_precision, seed, dump_grid: false };
    py.detach(|| cli::run(&opts)).map_err(|e| LapgrowthError::new_err((e.exit_code(), e.to_string())))
}

#[pymodule]
fn lapgrowth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("LapgrowthError", m.py().get_type::<LapgrowthError>())?;
    m.add_class::<PyMap>()?;
    m.add_function(wrap_pyfunction!(classify_regime, m)?)?;
    m.add_function(wrap_pyfunction!(solve_params, m)?)?;
    m.add_function(wrap_pyfunction!(solve_droplet, m)?)?;
    m.add_function(wrap_pyfunction!(zeros, m)?)?;
    m.add_function(wrap_pyfunction!(density, m)?)?;
    m.add_function(wrap_pyfunction!(kl_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(trajectory, m)?)?;
    m.add_function(wrap_pyfunction!(evolve, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
