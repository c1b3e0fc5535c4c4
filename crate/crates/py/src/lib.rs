use std::sync::Arc;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use sobolev_lab::constants::{
    a_opt_product_critical, a_opt_spectral_gap, a_opt_sphere_closed_form, constant_extremal_b, constants_report,
    ExtremalAssumption,
};
use sobolev_lab::functionals::criticality_residual;
use sobolev_lab::optimize::{minimize, CriticalPoint, MinimizeOptions};
use sobolev_lab::reproduce::{self, ReproduceOptions};
use sobolev_lab::stability::{self, log_grid, ExperimentReport, ExtremalFamily, Ray};
use sobolev_lab::{rng, DiscreteFunction, Discretization, LabError, ManifoldModel, ModelKind, QuotientSpec};

fn err(e: LabError) -> PyErr {
    match e {
        LabError::Dimension { .. }
        | LabError::InvalidParameter(_)
        | LabError::Resolution(_)
        | LabError::ZeroFunction
        | LabError::Mismatch
        | LabError::NotNormalized { .. }
        | LabError::Precondition(_)
        | LabError::Parse(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn json_err(e: serde_json::Error) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn parse_kind(kind: &str) -> PyResult<ModelKind> {
    match kind {
        "sphere" => Ok(ModelKind::SphereRadial),
        "product" => Ok(ModelKind::ProductCircle),
        other => Err(PyValueError::new_err(format!("unknown model '{other}' (sphere|product)"))),
    }
}

fn parse_family(family: &str) -> PyResult<ExtremalFamily> {
    match family {
        "constants" => Ok(ExtremalFamily::Constants),
        "constants_and_scalings" => Ok(ExtremalFamily::ConstantsAndScalings),
        "bubbles_and_constants" => Ok(ExtremalFamily::BubblesAndConstants),
        other => Err(PyValueError::new_err(format!("unknown extremal family '{other}'"))),
    }
}

/// A model manifold: `"sphere"` (radial functions on S^d) or `"product"`
/// (circle-dependent functions on S^1 x S^(d-1)).
#[pyclass(name = "Model", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModel(ManifoldModel);

#[pymethods]
impl PyModel {
    #[new]
    fn new(kind: &str, d: usize) -> PyResult<Self> {
        ManifoldModel::new(parse_kind(kind)?, d).map(Self).map_err(err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim
    }

    #[getter]
    fn length(&self) -> f64 {
        self.0.length
    }

    #[getter]
    fn total_volume(&self) -> f64 {
        self.0.total_volume
    }

    #[getter]
    fn scalar_curvature(&self) -> f64 {
        self.0.scalar_curvature
    }

    #[getter]
    fn critical_exponent(&self) -> f64 {
        self.0.critical_exponent()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }

    fn __repr__(&self) -> String {
        format!("Model({:?}, d={})", self.0.kind, self.0.dim)
    }
}

/// Spectral discretization of a model with `n` nodes.
#[pyclass(name = "Grid", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid(Arc<Discretization>);

impl PyGrid {
    fn function(&self, values: Vec<f64>) -> PyResult<DiscreteFunction> {
        DiscreteFunction::new(self.0.clone(), values).map_err(err)
    }
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(model: &PyModel, n: usize) -> PyResult<Self> {
        Discretization::build(&model.0, n).map(Self).map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.0.n()
    }

    #[getter]
    fn model(&self) -> PyModel {
        PyModel(self.0.model().clone())
    }

    #[getter]
    fn nodes(&self) -> Vec<f64> {
        self.0.nodes().to_vec()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.0.quad_weights().to_vec()
    }

    /// Lowest `k` eigenvalues of the reduced Laplace–Beltrami operator.
    fn laplace_eigenvalues(&self, k: usize) -> PyResult<Vec<f64>> {
        Ok(self.0.laplace_eigenpairs(k).map_err(err)?.eigenvalues)
    }

    fn integral(&self, values: Vec<f64>) -> PyResult<f64> {
        self.0.integral(&self.function(values)?).map_err(err)
    }

    fn lp_norm(&self, values: Vec<f64>, p: f64) -> PyResult<f64> {
        self.0.lp_norm(&self.function(values)?, p).map_err(err)
    }

    fn gradient_norm_sq(&self, values: Vec<f64>) -> PyResult<f64> {
        self.0.gradient_norm_sq(&self.function(values)?).map_err(err)
    }

    /// Node values of `a (1 - b cos t)^((2-d)/2)`.
    fn bubble(&self, a: f64, b: f64) -> PyResult<Vec<f64>> {
        Ok(stability::bubble(&self.0, a, b).map_err(err)?.values().iter().copied().collect())
    }

    /// Seeded smooth positive test function.
    #[pyo3(signature = (seed, modes=8, amplitude=0.8))]
    fn random_positive(&self, seed: u64, modes: usize, amplitude: f64) -> PyResult<Vec<f64>> {
        let f = rng::random_positive_field(&self.0, &mut rng::stream(seed, 0), modes, amplitude).map_err(err)?;
        Ok(f.values().iter().copied().collect())
    }
}

/// The quotient `(A |grad u|^2 + B |u|^2) / |u|_q^2` on a grid.
#[pyclass(name = "Spec", frozen)]
struct PySpec {
    spec: QuotientSpec,
    grid: PyGrid,
}

#[pymethods]
impl PySpec {
    #[new]
    fn new(grid: &PyGrid, a: f64, b: f64, q: f64) -> PyResult<Self> {
        Ok(Self {
            spec: QuotientSpec::new(a, b, q, grid.0.clone()).map_err(err)?,
            grid: grid.clone(),
        })
    }

    /// Spec at the optimal constants of the grid's model, `A` scaled by `a_scale`.
    #[staticmethod]
    #[pyo3(signature = (grid, q=None, a_scale=1.0))]
    fn optimal(grid: &PyGrid, q: Option<f64>, a_scale: f64) -> PyResult<Self> {
        let model = grid.0.model();
        let q = q.unwrap_or_else(|| model.critical_exponent());
        let critical = (q - model.critical_exponent()).abs() <= 1e-12 * q;
        let a = match model.kind {
            ModelKind::SphereRadial => a_opt_sphere_closed_form(model.dim, q),
            ModelKind::ProductCircle if critical => a_opt_product_critical(model.dim),
            ModelKind::ProductCircle => {
                a_opt_spectral_gap(&grid.0, q, ExtremalAssumption::Unverified).map(|g| g.value)
            }
        }
        .map_err(err)?;
        Self::new(grid, a * a_scale, constant_extremal_b(model, q), q)
    }

    #[getter]
    fn a(&self) -> f64 {
        self.spec.a()
    }

    #[getter]
    fn b(&self) -> f64 {
        self.spec.b()
    }

    #[getter]
    fn q(&self) -> f64 {
        self.spec.q()
    }

    fn quotient(&self, values: Vec<f64>) -> PyResult<f64> {
        self.spec.quotient(&self.grid.function(values)?).map_err(err)
    }

    fn deficit(&self, values: Vec<f64>) -> PyResult<f64> {
        self.spec.deficit(&self.grid.function(values)?).map_err(err)
    }

    /// Constrained gradient at a normalized `u`.
    fn gradient(&self, values: Vec<f64>) -> PyResult<Vec<f64>> {
        let g = self.spec.gradient(&self.grid.function(values)?).map_err(err)?;
        Ok(g.values().iter().copied().collect())
    }

    fn criticality_residual(&self, values: Vec<f64>) -> PyResult<f64> {
        criticality_residual(&self.spec, &self.grid.function(values)?).map_err(err)
    }

    /// Minimizes from `init` (default: the constant function).
    #[pyo3(signature = (init=None, max_iter=500, grad_tol=1e-10))]
    fn minimize(&self, py: Python<'_>, init: Option<Vec<f64>>, max_iter: usize, grad_tol: f64) -> PyResult<PyCriticalPoint> {
        let init = match init {
            Some(v) => self.grid.function(v)?,
            None => DiscreteFunction::constant(&self.grid.0, 1.0),
        };
        let opts = MinimizeOptions {
            max_iter,
            grad_tol,
            ..MinimizeOptions::default()
        };
        let spec = &self.spec;
        py.detach(|| minimize(spec, &init, &opts)).map(PyCriticalPoint).map_err(err)
    }

    /// Deficit against distance along the ray from the constants through
    /// the `mode`-th Laplace eigenfunction.
    #[pyo3(signature = (mode=1, eps_lo=1e-3, eps_hi=1e-1, count=25, family="constants", seed=None))]
    fn ray_scan(
        &self,
        py: Python<'_>,
        mode: usize,
        eps_lo: f64,
        eps_hi: f64,
        count: usize,
        family: &str,
        seed: Option<u64>,
    ) -> PyResult<PyScanReport> {
        let family = parse_family(family)?;
        let spec = &self.spec;
        py.detach(|| {
            let ray = Ray::from_constants(spec.disc(), spec.q(), mode)?.with_epsilons(log_grid(eps_lo, eps_hi, count))?;
            stability::ray_scan(spec, &ray, family, seed)
        })
        .map(PyScanReport)
        .map_err(err)
    }
}

#[pyclass(name = "CriticalPoint", frozen)]
struct PyCriticalPoint(CriticalPoint);

#[pymethods]
impl PyCriticalPoint {
    #[getter]
    fn value(&self) -> f64 {
        self.0.value
    }

    #[getter]
    fn grad_residual(&self) -> f64 {
        self.0.grad_residual
    }

    #[getter]
    fn converged(&self) -> bool {
        self.0.converged
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.0.iterations
    }

    #[getter]
    fn kernel_dim(&self) -> usize {
        self.0.kernel_dim
    }

    #[getter]
    fn values(&self) -> Vec<f64> {
        self.0.u.values().iter().copied().collect()
    }

    #[getter]
    fn hessian_eigenvalues(&self) -> Vec<f64> {
        self.0.hessian_spectrum.eigenvalues.clone()
    }

    #[getter]
    fn history(&self) -> Vec<f64> {
        self.0.history.clone()
    }
}

#[pyclass(name = "ScanReport", frozen)]
struct PyScanReport(ExperimentReport);

#[pymethods]
impl PyScanReport {
    #[getter]
    fn fitted_slope(&self) -> Option<f64> {
        self.0.fitted_slope
    }

    #[getter]
    fn slope_stderr(&self) -> Option<f64> {
        self.0.slope_stderr
    }

    #[getter]
    fn classification(&self) -> String {
        serde_json::to_value(self.0.classification)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default()
    }

    /// `(epsilon, deficit, distance)` triples.
    #[getter]
    fn rows(&self) -> Vec<(f64, f64, f64)> {
        self.0.rows.iter().map(|r| (r.epsilon, r.deficit, r.distance)).collect()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.0).map_err(json_err)
    }
}

/// JSON table of the optimal constants of a model.
#[pyfunction]
#[pyo3(signature = (model, q=None, n=256))]
fn constants(model: &PyModel, q: Option<f64>, n: usize) -> PyResult<String> {
    let report = constants_report(&model.0, q, n, None).map_err(err)?;
    serde_json::to_string(&report).map_err(json_err)
}

/// Runs the acceptance suite; returns `(id, name, passed, measured)` tuples.
#[pyfunction]
#[pyo3(signature = (only=None, n=None))]
fn reproduce_suite(py: Python<'_>, only: Option<Vec<String>>, n: Option<usize>) -> PyResult<Vec<(u32, String, bool, String)>> {
    let only = only.unwrap_or_default();
    reproduce::validate_selection(&only).map_err(err)?;
    let opts = ReproduceOptions {
        n,
        only,
        ..ReproduceOptions::default()
    };
    let outcomes = py.detach(|| reproduce::run(&opts, |_| {}));
    Ok(outcomes
        .into_iter()
        .map(|o| (o.id, o.name.to_string(), o.pass, o.measured))
        .collect())
}

#[pymodule]
fn pysobolev(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModel>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PySpec>()?;
    m.add_class::<PyCriticalPoint>()?;
    m.add_class::<PyScanReport>()?;
    m.add_function(wrap_pyfunction!(constants, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_suite, m)?)?;
    Ok(())
}
