//! Dense real matrix kernels: Schur decomposition, Sylvester solvers and
//! Gram accumulation.

mod dense;
mod gram;
mod matrix;
mod schur;
mod sylvester;

pub use dense::{cholesky, lu_solve};
pub use gram::{accumulate_cross, accumulate_gram};
pub use matrix::{dot, squared_distance, Matrix};
pub use schur::{schur_decompose, DiagBlock, SchurForm};
pub use sylvester::{
    kron_oracle_solve, solve_sylvester, sylvester_residual, KRON_ORACLE_MAX_UNKNOWNS, PENCIL_TOLERANCE,
};
