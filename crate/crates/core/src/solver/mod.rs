//! Sparse storage, orderings, direct and iterative solvers, and dense diagnostics.

pub mod dense;
pub mod kkt;
pub mod ldl;
pub mod minres;
pub mod ordering;
pub mod sparse;

pub use dense::{smallest_generalized_singular_value, symmetric_extreme_eigenvalues};
pub use kkt::{solve_kkt, solve_spd, ConstraintBlock, KktReport, KktSolution, SaddleSystem, SpdFactor};
pub use minres::{minres, MinresOutcome};
pub use sparse::{CsrMatrix, Definiteness, SparseSymmetric};
