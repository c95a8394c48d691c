//! Python bindings for the `nnem` solver.

use std::sync::Arc;

use nalgebra::Point2;
use pyo3::create_exception;
use pyo3::exceptions::PyException;
use pyo3::prelude::*;

use nnem::problem::{builtin, BUILTIN_PROBLEMS};
use nnem::{BoundaryCondition, EnvelopeFamily, NNElementSpace, NetConfig, TrainConfig, TriangleRule};

create_exception!(nnem_py, NnemError, PyException);

fn py_err(e: nnem::Error) -> PyErr {
    NnemError::new_err(e.to_string())
}

fn family(kind: &str, order: usize, bubbles: bool) -> PyResult<EnvelopeFamily> {
    match kind {
        "lagrange" => Ok(EnvelopeFamily::Lagrange { order }),
        "hierarchical" => Ok(EnvelopeFamily::Hierarchical { bubbles }),
        other => Err(NnemError::new_err(format!("unknown envelope kind `{other}`"))),
    }
}

fn boundary(bc: &str) -> PyResult<BoundaryCondition> {
    match bc {
        "homogeneous" => Ok(BoundaryCondition::Homogeneous),
        "nonhomogeneous" => Ok(BoundaryCondition::Nonhomogeneous),
        "none" => Ok(BoundaryCondition::None),
        other => Err(NnemError::new_err(format!("unknown boundary condition `{other}`"))),
    }
}

fn rule(points: usize) -> PyResult<TriangleRule> {
    let k = (points as f64).sqrt().round() as usize;
    if k * k != points {
        return Err(NnemError::new_err(format!("triangle_points must be a square, got {points}")));
    }
    TriangleRule::collapsed_gauss(k).map_err(py_err)
}

/// Conforming triangulation.
#[pyclass(name = "Mesh", frozen, skip_from_py_object)]
struct PyMesh(Arc<nnem::Mesh>);

#[pymethods]
impl PyMesh {
    #[staticmethod]
    fn unit_square(n: usize) -> PyResult<Self> {
        nnem::Mesh::unit_square(n).map(|m| PyMesh(Arc::new(m))).map_err(py_err)
    }

    #[staticmethod]
    fn l_shape(n: usize) -> PyResult<Self> {
        nnem::Mesh::l_shape(n).map(|m| PyMesh(Arc::new(m))).map_err(py_err)
    }

    /// Parses the text mesh format.
    #[staticmethod]
    fn load(text: &str) -> PyResult<Self> {
        nnem::Mesh::load(text).map(|m| PyMesh(Arc::new(m))).map_err(py_err)
    }

    fn to_text(&self) -> String {
        self.0.to_text()
    }

    #[getter]
    fn n_vertices(&self) -> usize {
        self.0.n_vertices()
    }

    #[getter]
    fn n_triangles(&self) -> usize {
        self.0.n_triangles()
    }

    #[getter]
    fn h(&self) -> f64 {
        self.0.h
    }

    #[getter]
    fn area(&self) -> f64 {
        self.0.area()
    }

    /// Smallest interior angle in degrees.
    #[getter]
    fn min_angle(&self) -> f64 {
        self.0.min_angle().to_degrees()
    }

    fn __repr__(&self) -> String {
        format!("Mesh(vertices={}, triangles={}, h={:.5})", self.0.n_vertices(), self.0.n_triangles(), self.0.h)
    }
}

/// Model problem with source, coefficients and optional exact solution.
#[pyclass(name = "Problem", frozen, skip_from_py_object)]
struct PyProblem(nnem::EllipticProblem);

#[pymethods]
impl PyProblem {
    #[staticmethod]
    fn builtin(name: &str) -> PyResult<Self> {
        builtin(name).map(PyProblem).map_err(py_err)
    }

    #[staticmethod]
    fn names() -> Vec<&'static str> {
        BUILTIN_PROBLEMS.to_vec()
    }

    #[getter]
    fn name(&self) -> String {
        self.0.name.clone()
    }

    #[getter]
    fn has_exact(&self) -> bool {
        self.0.has_exact()
    }
}

/// Neural network element space.
#[pyclass(name = "Space", skip_from_py_object)]
struct PySpace(NNElementSpace);

#[pymethods]
impl PySpace {
    #[new]
    #[pyo3(signature = (mesh, kind="lagrange", order=2, bubbles=true, hidden_layers=2, width=16,
                        activation="sine", bc="homogeneous", seed=0, augment=true))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        mesh: &PyMesh,
        kind: &str,
        order: usize,
        bubbles: bool,
        hidden_layers: usize,
        width: usize,
        activation: &str,
        bc: &str,
        seed: u64,
        augment: bool,
    ) -> PyResult<Self> {
        let net = NetConfig { hidden_layers, width, activation: activation.parse().map_err(py_err)? };
        NNElementSpace::build(mesh.0.clone(), family(kind, order, bubbles)?, net, boundary(bc)?, seed, augment)
            .map(PySpace)
            .map_err(py_err)
    }

    /// Classical finite element space of the same envelope family.
    #[staticmethod]
    #[pyo3(signature = (mesh, kind="lagrange", order=2, bubbles=true, bc="homogeneous"))]
    fn fem(mesh: &PyMesh, kind: &str, order: usize, bubbles: bool, bc: &str) -> PyResult<Self> {
        NNElementSpace::fem(mesh.0.clone(), family(kind, order, bubbles)?, boundary(bc)?).map(PySpace).map_err(py_err)
    }

    #[getter]
    fn dim(&self) -> usize {
        self.0.dim()
    }

    #[getter]
    fn n_dofs(&self) -> usize {
        self.0.n_dofs()
    }

    #[getter]
    fn label(&self) -> String {
        self.0.family().label()
    }

    fn theta(&self) -> Vec<f64> {
        self.0.theta()
    }

    fn set_theta(&mut self, theta: Vec<f64>) -> PyResult<()> {
        self.0.set_theta(&theta).map_err(py_err)
    }
}

/// Galerkin solution with its training history.
#[pyclass(name = "Solution", skip_from_py_object)]
struct PySolution {
    inner: nnem::Solution,
    history: Vec<(usize, f64)>,
    loss: f64,
}

#[pymethods]
impl PySolution {
    fn value(&self, x: f64, y: f64) -> PyResult<f64> {
        self.inner.value(&Point2::new(x, y)).map_err(py_err)
    }

    fn gradient(&self, x: f64, y: f64) -> PyResult<(f64, f64)> {
        self.inner.gradient(&Point2::new(x, y)).map(|g| (g.x, g.y)).map_err(py_err)
    }

    #[getter]
    fn coefficients(&self) -> Vec<f64> {
        self.inner.c.iter().copied().collect()
    }

    #[getter]
    fn loss(&self) -> f64 {
        self.loss
    }

    /// `(step, loss)` pairs.
    #[getter]
    fn history(&self) -> Vec<(usize, f64)> {
        self.history.clone()
    }

    /// `(e_L2, e_H1)` against the problem's exact solution.
    #[pyo3(signature = (problem, triangle_points=36))]
    fn errors(&self, problem: &PyProblem, triangle_points: usize) -> PyResult<(f64, f64)> {
        let r = nnem::compute_errors(&self.inner, &problem.0, &rule(triangle_points)?).map_err(py_err)?;
        Ok((r.e_l2, r.e_h1))
    }
}

/// Trains the space with Adam for `steps` steps and returns the final Galerkin solution.
#[pyfunction]
#[pyo3(signature = (space, problem, steps=0, lr=3e-4, seed=0, log_every=100, triangle_points=36, edge_points=6))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    space: &PySpace,
    problem: &PyProblem,
    steps: usize,
    lr: f64,
    seed: u64,
    log_every: usize,
    triangle_points: usize,
    edge_points: usize,
) -> PyResult<PySolution> {
    let config =
        TrainConfig { max_steps: steps, learning_rate: lr, seed, log_every, edge_points, ..TrainConfig::default() };
    let rule = rule(triangle_points)?;
    let space = space.0.clone();
    let problem = &problem.0;
    let (inner, state) = py.detach(|| nnem::train(space, problem, &rule, config)).map_err(py_err)?;
    let history: Vec<(usize, f64)> = state.history.iter().map(|h| (h.step, h.loss)).collect();
    let loss = history.last().map_or(f64::NAN, |h| h.1);
    Ok(PySolution { inner, history, loss })
}

/// Classical FEM solve; returns the solution and `(e_L2, e_H1)` when the exact solution is known.
#[pyfunction]
#[pyo3(signature = (mesh, problem, kind="lagrange", order=2, bubbles=true, bc="homogeneous"))]
fn fem_solve(
    mesh: &PyMesh,
    problem: &PyProblem,
    kind: &str,
    order: usize,
    bubbles: bool,
    bc: &str,
) -> PyResult<(PySolution, Option<(f64, f64)>)> {
    let (inner, report) =
        nnem::fem_solve(mesh.0.clone(), family(kind, order, bubbles)?, &problem.0, boundary(bc)?, &nnem::triangle_rule_36())
            .map_err(py_err)?;
    let errors = problem.0.has_exact().then_some((report.e_l2, report.e_h1));
    Ok((PySolution { inner, history: Vec::new(), loss: f64::NAN }, errors))
}

#[pymodule]
pub fn nnem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyMesh>()?;
    m.add_class::<PyProblem>()?;
    m.add_class::<PySpace>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(fem_solve, m)?)?;
    m.add("NnemError", m.py().get_type::<NnemError>())?;
    Ok(())
}
