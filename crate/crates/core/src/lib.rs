//! Neural network element method for second-order elliptic problems on
//! triangular meshes.

pub mod analysis;
pub mod assembly;
pub mod envelope;
pub mod error;
pub mod linalg;
pub mod localnet;
pub mod mesh;
pub mod nnspace;
pub mod problem;
pub mod quadrature;
pub mod solver;

pub use analysis::{compute_errors, convergence_study, diagnostics, fem_solve, ConvergenceTable, ErrorReport, MeshKind, Method};
pub use assembly::{assemble, apply_homogeneous_dirichlet, assemble_boundary_system, SymmetricSystem};
pub use envelope::{BoundaryCondition, EnvelopeFamily};
pub use error::{Error, Result};
pub use linalg::{solve_linear, SymMatrix};
pub use localnet::{Activation, LocalNet, NetConfig};
pub use mesh::Mesh;
pub use nnspace::{BasisMode, NNElementSpace};
pub use problem::EllipticProblem;
pub use quadrature::{gauss_legendre_1d, triangle_rule_36, TriangleRule};
pub use solver::{loss_parameter_gradient, ritz_loss, solve_nonhomogeneous, train, Solution, TrainConfig, TrainState, Trainer};
