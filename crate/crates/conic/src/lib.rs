//! Primal-dual interior-point solver for second-order cone programs.
//!
//! Problems are posed in the form `min cᵀx  s.t.  A x + s = b,  s ∈ K`, where
//! `K` is a product of zero cones, nonnegative orthants and second-order cones.

mod cones;
mod equilibrate;
mod kkt;
mod ldl;
mod program;
mod solver;
mod sparse;

pub use cones::Cone;
pub use program::{AffineExpr, ConeProgram, Diagnostics, ProgramBuilder, ProgramDump, RowRef};
pub use solver::{solve, ConeSolution, ConicError, IterationInfo, Settings, SolveStatus};
pub use sparse::CscMatrix;
