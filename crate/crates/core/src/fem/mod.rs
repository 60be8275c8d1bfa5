//! Low-order finite elements: Q1 on quadrilaterals, P1 on triangles.

pub mod element;
pub mod functional;
pub mod laplace;
pub mod mesh;
pub mod quadrature;
pub mod space;
pub mod sparse;
pub mod stokes;

pub use functional::{eval_functional, rhs_vector, GoalFunctional};
pub use laplace::{solve_adjoint_laplace, solve_laplace_dirichlet, solve_laplace_robin};
pub use mesh::{build_mesh, BoundaryEdge, CellKind, Mesh};
pub use space::{error_norms, normal_derivative, FeFunction};
pub use stokes::{solve_stokes_stabilized, StokesRhs, StokesSolution};
