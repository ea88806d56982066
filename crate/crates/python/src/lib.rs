//! Python bindings for the thermal-noise impedance tomography core.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ::thermal_eit::experiment::{self, BoundarySet, DataModel};
use ::thermal_eit::forward::solve_many;
use ::thermal_eit::inverse::relative_l2_error as rel_err;
use ::thermal_eit::symbol::{condition_map as cond_map, FieldGradients};
use ::thermal_eit::{
    ConductivityField, ElectrodeFunction, ExperimentParams, GridOperators, GridSpec,
    MeasurementSet, NoiseScaling, Phantom, ReconstructionConfig, SymbolKind,
};

fn py_err(e: ::thermal_eit::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Uniform square grid with optional fine refinement.
#[pyclass(name = "Grid", module = "thermal_eit", frozen)]
struct PyGrid(GridSpec);

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, extent = 10.0, fine_factor = 1))]
    fn new(n: usize, extent: f64, fine_factor: usize) -> PyResult<Self> {
        GridSpec::with_fine_factor(n, extent, fine_factor)
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn extent(&self) -> f64 {
        self.0.extent()
    }

    #[getter]
    fn fine_factor(&self) -> usize {
        self.0.fine_factor()
    }

    #[getter]
    fn dx(&self) -> f64 {
        self.0.dx()
    }

    #[getter]
    fn num_nodes(&self) -> usize {
        self.0.num_nodes()
    }

    fn fine(&self) -> Self {
        Self(self.0.fine())
    }

    /// `(x, y)` of every node, index `i + n*j`.
    fn coords(&self) -> Vec<(f64, f64)> {
        self.0.node_coords()
    }

    fn interior_nodes(&self) -> Vec<usize> {
        self.0.interior_nodes()
    }

    fn __repr__(&self) -> String {
        format!(
            "Grid(n={}, extent={}, fine_factor={})",
            self.0.n(),
            self.0.extent(),
            self.0.fine_factor()
        )
    }
}

/// Nodal conductivity `sigma' + i sigma''`, S/cm.
#[pyclass(name = "Conductivity", module = "thermal_eit", frozen)]
struct PyConductivity(ConductivityField);

#[pymethods]
impl PyConductivity {
    #[new]
    #[pyo3(signature = (grid, re, im = None))]
    fn new(grid: &PyGrid, re: Vec<f64>, im: Option<Vec<f64>>) -> PyResult<Self> {
        let im = im.unwrap_or_else(|| vec![0.0; re.len()]);
        ConductivityField::new(grid.0, re, im)
            .map(Self)
            .map_err(py_err)
    }

    /// Built-in phantom: `two-bumps`, `complex-default` or `constant:re[,im]`.
    #[staticmethod]
    fn phantom(name: &str, grid: &PyGrid) -> PyResult<Self> {
        Phantom::parse(name)
            .and_then(|p| p.field(&grid.0))
            .map(Self)
            .map_err(py_err)
    }

    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(*self.0.grid())
    }

    #[getter]
    fn re(&self) -> Vec<f64> {
        self.0.sigma_re().to_vec()
    }

    #[getter]
    fn im(&self) -> Vec<f64> {
        self.0.sigma_im().to_vec()
    }

    /// Averages onto a coarser grid whose fine grid is this one.
    fn restrict(&self, coarse: &PyGrid) -> PyResult<Self> {
        experiment::restrict_conductivity(&self.0, &coarse.0)
            .map(Self)
            .map_err(py_err)
    }
}

/// Electrode layout and one electrode function per experiment.
#[pyclass(name = "Boundary", module = "thermal_eit", frozen)]
struct PyBoundary(BoundarySet);

#[pymethods]
impl PyBoundary {
    /// `functions` are strings such as `g1`, `ht2` or `affine:c,a,b`.
    #[new]
    #[pyo3(signature = (functions, gap_width = None))]
    fn new(functions: Vec<String>, gap_width: Option<f64>) -> PyResult<Self> {
        let functions = functions
            .iter()
            .map(|s| ElectrodeFunction::parse(s))
            .collect::<Result<Vec<_>, _>>()
            .map_err(py_err)?;
        Ok(Self(BoundarySet {
            gap_width,
            functions,
        }))
    }

    #[staticmethod]
    fn affine_pair() -> Self {
        Self(BoundarySet::affine_pair())
    }

    #[getter]
    fn num_experiments(&self) -> usize {
        self.0.functions.len()
    }

    #[getter]
    fn gap_width(&self) -> Option<f64> {
        self.0.gap_width
    }
}

/// Internal functionals sampled on a coarse grid.
#[pyclass(name = "Measurements", module = "thermal_eit", frozen)]
struct PyMeasurements(MeasurementSet);

#[pymethods]
impl PyMeasurements {
    #[getter]
    fn grid(&self) -> PyGrid {
        PyGrid(self.0.grid)
    }

    /// One list per experiment, W/cm^2 in physical units.
    #[getter]
    fn data(&self) -> Vec<Vec<f64>> {
        self.0.data.clone()
    }
}

/// Result of a Gauss-Newton reconstruction.
#[pyclass(name = "Reconstruction", module = "thermal_eit", frozen)]
struct PyReconstruction {
    #[pyo3(get)]
    re: Vec<f64>,
    #[pyo3(get)]
    im: Vec<f64>,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    residual_norms: Vec<f64>,
    #[pyo3(get)]
    step_norms: Vec<f64>,
}

#[pymethods]
impl PyReconstruction {
    #[getter]
    fn iterations(&self) -> usize {
        self.residual_norms.len().saturating_sub(1)
    }
}

/// Potentials `(re, im)` for each experiment of `boundary`.
#[pyfunction]
fn solve(sigma: &PyConductivity, boundary: &PyBoundary) -> PyResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let grid = sigma.0.grid();
    let ops = GridOperators::new(grid).map_err(py_err)?;
    let specs = boundary.0.specs(grid).map_err(py_err)?;
    let u = solve_many(&sigma.0, &specs, &ops).map_err(py_err)?;
    Ok(u.iter().map(|p| (p.real_part(), p.imag_part())).collect())
}

/// Forward-solves on `truth`'s grid and samples the internal data on `coarse`.
/// `model` is `deterministic` or `stochastic`.
#[pyfunction]
#[pyo3(signature = (truth, coarse, boundary, a, model = "deterministic", t0 = 300.0, realizations = 1000, seed = 0))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    py: Python<'_>,
    truth: &PyConductivity,
    coarse: &PyGrid,
    boundary: &PyBoundary,
    a: f64,
    model: &str,
    t0: f64,
    realizations: usize,
    seed: u64,
) -> PyResult<PyMeasurements> {
    let model = match model {
        "deterministic" => DataModel::Deterministic,
        "stochastic" => DataModel::Stochastic {
            params: ExperimentParams {
                t0,
                realizations,
                ..Default::default()
            },
            scaling: NoiseScaling::Physical,
            seed,
        },
        other => return Err(PyValueError::new_err(format!("unknown model {other:?}"))),
    };
    py.detach(|| experiment::synthesize(&truth.0, &coarse.0, &boundary.0, a, &model))
        .map(PyMeasurements)
        .map_err(py_err)
}

/// Pointwise worst-case condition number of the linearised symbol.
#[pyfunction]
#[pyo3(signature = (sigma, boundary, kind = "real", directions = 100))]
fn condition_map(
    py: Python<'_>,
    sigma: &PyConductivity,
    boundary: &PyBoundary,
    kind: &str,
    directions: usize,
) -> PyResult<Vec<f64>> {
    let kind = match kind {
        "real" => SymbolKind::Real,
        "complex" => SymbolKind::Complex,
        other => return Err(PyValueError::new_err(format!("unknown kind {other:?}"))),
    };
    py.detach(|| {
        let grid = sigma.0.grid();
        let ops = GridOperators::new(grid)?;
        let u = solve_many(&sigma.0, &boundary.0.specs(grid)?, &ops)?;
        cond_map(
            &FieldGradients::from_potentials(&u, &ops),
            &sigma.0,
            kind,
            directions,
        )
    })
    .map(|m| m.values)
    .map_err(py_err)
}

/// Gauss-Newton reconstruction with `known` supplying the boundary band.
#[pyfunction]
#[pyo3(signature = (data, boundary, known, kind = "real", gamma = None, step_tol = None, max_iters = None))]
#[allow(clippy::too_many_arguments)]
fn reconstruct(
    py: Python<'_>,
    data: &PyMeasurements,
    boundary: &PyBoundary,
    known: &PyConductivity,
    kind: &str,
    gamma: Option<f64>,
    step_tol: Option<f64>,
    max_iters: Option<usize>,
) -> PyResult<PyReconstruction> {
    let mut config = match (kind, boundary.0.gap_width) {
        ("real", None) => ReconstructionConfig::real(),
        ("real", Some(_)) => ReconstructionConfig::mixed(),
        ("complex", _) => ReconstructionConfig::complex(),
        (other, _) => return Err(PyValueError::new_err(format!("unknown kind {other:?}"))),
    };
    if let Some(g) = gamma {
        config.gamma = g;
    }
    if let Some(t) = step_tol {
        config.step_tol = t;
    }
    if let Some(m) = max_iters {
        config.max_iters = m;
    }
    let st = py
        .detach(|| experiment::reconstruct(&data.0, &boundary.0, &known.0, &config))
        .map_err(py_err)?;
    Ok(PyReconstruction {
        residual_norms: st.log.iter().map(|r| r.residual_norm).collect(),
        step_norms: st.log.iter().map(|r| r.step_norm).collect(),
        re: st.s_re,
        im: st.s_im,
        converged: st.converged,
    })
}

/// `||a - b|| / ||b||` over `nodes` (all nodes when omitted).
#[pyfunction]
#[pyo3(signature = (a, b, nodes = None))]
fn relative_l2_error(a: Vec<f64>, b: Vec<f64>, nodes: Option<Vec<usize>>) -> PyResult<f64> {
    if a.len() != b.len() {
        return Err(PyValueError::new_err("length mismatch"));
    }
    let nodes = nodes.unwrap_or_else(|| (0..a.len()).collect());
    if nodes.iter().any(|&k| k >= a.len()) {
        return Err(PyValueError::new_err("node index out of range"));
    }
    Ok(rel_err(&a, &b, &nodes))
}

/// Electrode function value at `(x, y)` as a complex number.
#[pyfunction]
#[pyo3(signature = (function, x, y, extent = 10.0))]
fn electrode_value(function: &str, x: f64, y: f64, extent: f64) -> PyResult<Complex64> {
    ElectrodeFunction::parse(function)
        .map(|f| f.eval(x, y, extent))
        .map_err(py_err)
}

#[pymodule(name = "thermal_eit")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PyConductivity>()?;
    m.add_class::<PyBoundary>()?;
    m.add_class::<PyMeasurements>()?;
    m.add_class::<PyReconstruction>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(condition_map, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(relative_l2_error, m)?)?;
    m.add_function(wrap_pyfunction!(electrode_value, m)?)?;
    Ok(())
}
