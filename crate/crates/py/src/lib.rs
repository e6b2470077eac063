//! Python bindings: a configuration object wrapping the assembled operators,
//! plus the experiment runner and the subspace utilities.

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyAny;
use serde::Serialize;

use schwarz_lab::cli::{self, ExperimentConfig};
use schwarz_lab::decomposition::OverlapDecomposition;
use schwarz_lab::diagnostics::{self, DenseModel};
use schwarz_lab::fem::{unit_load, StructuredGrid};
use schwarz_lab::operators::{self as ops, LocalSolverBundle, MethodKind};
use schwarz_lab::spaces::{self, InnerProduct, IpLabel, Subspace};
use schwarz_lab::Error;

fn to_py_err(e: Error) -> PyErr {
    match e {
        Error::Config(_)
        | Error::InvalidEpsilon(_)
        | Error::IndivisibleBlocks { .. }
        | Error::TooCoarse { .. }
        | Error::UnsupportedDimension(_)
        | Error::ZeroOverlap
        | Error::OverlapTooLarge(_)
        | Error::DimensionMismatch { .. }
        | Error::RankDeficient { .. }
        | Error::NotSpd { .. }
        | Error::NotComplementary => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Serializes through JSON into plain Python objects.
fn to_py<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

fn method(name: &str) -> PyResult<MethodKind> {
    name.parse().map_err(to_py_err)
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows have different lengths"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Grid, decomposition and local solvers of one configuration.
#[pyclass(name = "Problem", module = "pyschwarz")]
struct PyProblem {
    bundle: LocalSolverBundle,
    model: Option<DenseModel>,
}

impl PyProblem {
    fn model(&mut self) -> PyResult<&DenseModel> {
        if self.model.is_none() {
            self.model = Some(DenseModel::new(&self.bundle).map_err(to_py_err)?);
        }
        Ok(self.model.as_ref().expect("set above"))
    }
}

#[pymethods]
impl PyProblem {
    #[new]
    #[pyo3(signature = (dim, cells_per_side, blocks_per_side, overlap_layers))]
    fn new(dim: usize, cells_per_side: usize, blocks_per_side: usize, overlap_layers: usize) -> PyResult<Self> {
        let grid = StructuredGrid::new(dim, cells_per_side).map_err(to_py_err)?;
        let od = OverlapDecomposition::new(&grid, blocks_per_side, overlap_layers).map_err(to_py_err)?;
        let bundle = LocalSolverBundle::new(&grid, &od).map_err(to_py_err)?;
        Ok(Self { bundle, model: None })
    }

    /// Number of free dofs.
    #[getter]
    fn dim(&self) -> usize {
        self.bundle.dim()
    }

    #[getter]
    fn num_subdomains(&self) -> usize {
        self.bundle.num_subdomains()
    }

    #[getter]
    fn nu(&self) -> usize {
        self.bundle.decomposition().nu()
    }

    /// Load vector of `f ≡ 1`.
    fn load(&self) -> Vec<f64> {
        unit_load(self.bundle.grid(), self.bundle.free_dofs()).as_slice().to_vec()
    }

    /// `T u` for the named method.
    fn apply(&self, method_name: &str, u: Vec<f64>) -> PyResult<Vec<f64>> {
        let v = ops::operator_apply(method(method_name)?, &self.bundle, &DVector::from_vec(u)).map_err(to_py_err)?;
        Ok(v.as_slice().to_vec())
    }

    /// Dense matrix of the method, as a list of rows.
    fn materialize(&self, method_name: &str) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&ops::materialize(method(method_name)?, &self.bundle).map_err(to_py_err)?))
    }

    fn stiffness(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(&self.bundle.stiffness_dense().map_err(to_py_err)?))
    }

    #[pyo3(signature = (epsilons = vec![0.5, 0.1, 0.02, 0.004]))]
    fn constants<'py>(&mut self, py: Python<'py>, epsilons: Vec<f64>) -> PyResult<Bound<'py, PyAny>> {
        let model = self.model()?.clone();
        to_py(py, &diagnostics::measure_with_model(&self.bundle, &model, &epsilons).map_err(to_py_err)?)
    }

    fn spectrum<'py>(&self, py: Python<'py>, method_name: &str) -> PyResult<Bound<'py, PyAny>> {
        to_py(py, &diagnostics::spectrum(method(method_name)?, &self.bundle).map_err(to_py_err)?)
    }

    fn positivity<'py>(&mut self, py: Python<'py>, epsilon: f64) -> PyResult<Bound<'py, PyAny>> {
        let model = self.model()?.clone();
        to_py(py, &diagnostics::positivity_with_model(&self.bundle, &model, epsilon).map_err(to_py_err)?)
    }

    /// Iterative solve of `A u = load(f ≡ 1)`; one dict per method and solver,
    /// the unpreconditioned baseline first.
    #[pyo3(signature = (methods, tol = 1e-10, max_iter = 1000))]
    fn solve<'py>(&self, py: Python<'py>, methods: Vec<String>, tol: f64, max_iter: usize) -> PyResult<Bound<'py, PyAny>> {
        let kinds = methods.iter().map(|m| method(m)).collect::<PyResult<Vec<_>>>()?;
        let runs = diagnostics::solver_table(&self.bundle, &kinds, tol, max_iter, None).map_err(to_py_err)?;
        let rows: Vec<_> = runs.into_iter().map(|r| r.row).collect();
        to_py(py, &rows)
    }

    fn __repr__(&self) -> String {
        let od = self.bundle.decomposition();
        format!(
            "Problem(dim={}, cells_per_side={}, blocks_per_side={}, overlap_layers={})",
            od.dim(),
            od.cells_per_side(),
            od.blocks_per_side(),
            od.overlap_layers()
        )
    }
}

/// Runs an experiment from a JSON configuration string and returns the manifest.
#[pyfunction]
#[pyo3(signature = (config_json, output = None))]
fn run_experiment<'py>(py: Python<'py>, config_json: &str, output: Option<String>) -> PyResult<Bound<'py, PyAny>> {
    let mut config = ExperimentConfig::from_json(config_json).map_err(to_py_err)?;
    if let Some(out) = output {
        config.output = out.into();
    }
    let manifest = py.detach(|| cli::run_experiment(&config)).map_err(to_py_err)?;
    to_py(py, &manifest)
}

/// Summary table of a finished run.
#[pyfunction]
fn summary(manifest_path: &str) -> PyResult<String> {
    cli::print_summary(manifest_path.as_ref()).map_err(to_py_err)
}

fn inner_product(gram: Option<Vec<Vec<f64>>>, n: usize) -> PyResult<InnerProduct> {
    match gram {
        Some(g) => InnerProduct::new(matrix(g)?, IpLabel::B).map_err(to_py_err),
        None => Ok(InnerProduct::euclidean(n)),
    }
}

/// Minimal angle and one-sided maximal angle between the column spans of
/// `x` and `y` (lists of rows), optionally in the inner product `gram`.
#[pyfunction]
#[pyo3(signature = (x, y, gram = None))]
fn subspace_angles(x: Vec<Vec<f64>>, y: Vec<Vec<f64>>, gram: Option<Vec<Vec<f64>>>) -> PyResult<(f64, f64)> {
    let (x, y) = (matrix(x)?, matrix(y)?);
    let ip = inner_product(gram, x.nrows())?;
    let xs = Subspace::new(x).map_err(to_py_err)?;
    let ys = Subspace::new(y).map_err(to_py_err)?;
    let a = spaces::subspace_angles(&xs, &ys, &ip).map_err(to_py_err)?;
    Ok((a.theta_min, a.theta_max))
}

/// Wielandt check for the pair of Gram matrices `(b, c)`.
#[pyfunction]
#[pyo3(signature = (b, c, samples = 200, seed = 0))]
fn wielandt<'py>(
    py: Python<'py>,
    b: Vec<Vec<f64>>,
    c: Vec<Vec<f64>>,
    samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let b = InnerProduct::new(matrix(b)?, IpLabel::B).map_err(to_py_err)?;
    let c = InnerProduct::new(matrix(c)?, IpLabel::CEps).map_err(to_py_err)?;
    to_py(py, &spaces::wielandt_gap(&b, &c, samples, seed).map_err(to_py_err)?)
}

#[pymodule]
fn pyschwarz(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyProblem>()?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(summary, m)?)?;
    m.add_function(wrap_pyfunction!(subspace_angles, m)?)?;
    m.add_function(wrap_pyfunction!(wielandt, m)?)?;
    m.add("METHODS", ["AS", "FE_T", "EF_T", "RAS_CUT", "OBDD_CUT"])?;
    Ok(())
}
