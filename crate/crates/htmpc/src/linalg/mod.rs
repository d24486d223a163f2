//! Dense real linear algebra: matrices, factorizations, eigen/singular values
//! and the discrete-time Lyapunov/Riccati solvers.

mod control;
mod eigen;
mod lu;
mod matrix;
mod svd;

#[allow(unused_imports)]
pub(crate) use control::require_schur;
pub use control::{
    dlqr_gain, is_schur, matrix_power_sum, min_singular_value, reachability_matrix, solve_dlyap,
    spectral_norm, spectral_radius, DEFAULT_SCHUR_TOL,
};
pub use eigen::{eigenvalues, symmetric_eigen};
pub use lu::{cholesky, inverse, solve, Lu};
pub use matrix::{vec, Matrix};
pub use svd::{null_space, range_basis, rank, singular_values, svd, Svd};
