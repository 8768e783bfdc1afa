//! P1 finite elements: unknown numbering, sparse assembly, linear solvers,
//! norms and transfer between nested meshes.

pub mod assembly;
pub mod dof;
pub mod norms;
pub mod poisson;
pub mod quadrature;
pub mod solve;
pub mod sparse;
pub mod transfer;

pub use assembly::{
    assemble_charge_term, assemble_system, assemble_weighted_stiffness, Coefficient, ElementGeometry, LinearSystem,
};
pub use dof::{DofMap, Field};
pub use norms::{error_norms, l2_inner, norms, Norms};
pub use poisson::solve_linear_poisson;
pub use solve::{dense_solve, pcg, solve_sparse, Cholesky, CholeskySymbolic, LinearSolver, PcgReport};
pub use sparse::{CsrMatrix, Pattern};
pub use transfer::{prolong, prolong_chain};
