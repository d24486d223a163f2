//! Dense convex solvers: a primal active-set QP method and a two-phase simplex LP.

mod active_set;
mod simplex;

use serde::Serialize;

use crate::error::{dim_err, Result};
use crate::linalg::{vec, Matrix};
use crate::scalar::Real;

pub use active_set::{solve, solve_warm};
pub use simplex::{feasible_point, solve_lp};

pub const DEFAULT_TOL: f64 = 1e-8;

/// Solver outcome.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    MaxIter,
    Unbounded,
}

/// `min ½xᵀHx + gᵀx` s.t. `A_eq x = b_eq`, `A_in x ≤ b_in`.
#[derive(Clone, Debug)]
pub struct QuadProgram<T> {
    pub h: Matrix<T>,
    pub g: Vec<T>,
    pub a_eq: Matrix<T>,
    pub b_eq: Vec<T>,
    pub a_in: Matrix<T>,
    pub b_in: Vec<T>,
}

impl<T: Real> QuadProgram<T> {
    /// Unconstrained program; add constraints with [`with_eq`](Self::with_eq) and
    /// [`with_ineq`](Self::with_ineq).
    pub fn new(h: Matrix<T>, g: Vec<T>) -> Self {
        let n = g.len();
        QuadProgram {
            h,
            g,
            a_eq: Matrix::zeros(0, n),
            b_eq: Vec::new(),
            a_in: Matrix::zeros(0, n),
            b_in: Vec::new(),
        }
    }

    pub fn with_eq(mut self, a: Matrix<T>, b: Vec<T>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_ineq(mut self, a: Matrix<T>, b: Vec<T>) -> Self {
        self.a_in = a;
        self.b_in = b;
        self
    }

    pub fn dim(&self) -> usize {
        self.g.len()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.dim();
        let ok = self.h.shape() == (n, n)
            && self.a_eq.cols() == n
            && self.a_eq.rows() == self.b_eq.len()
            && self.a_in.cols() == n
            && self.a_in.rows() == self.b_in.len();
        if ok {
            Ok(())
        } else {
            Err(dim_err(
                "QuadProgram",
                format!(
                    "H {:?}, g {}, A_eq {:?}, b_eq {}, A_in {:?}, b_in {}",
                    self.h.shape(),
                    n,
                    self.a_eq.shape(),
                    self.b_eq.len(),
                    self.a_in.shape(),
                    self.b_in.len()
                ),
            ))
        }
    }

    pub fn objective(&self, x: &[T]) -> T {
        let hx = self.h.mul_vec(x);
        vec::dot(x, &hx) * T::lit(0.5) + vec::dot(&self.g, x)
    }

    /// Largest equality residual or inequality violation at `x`.
    pub fn infeasibility(&self, x: &[T]) -> T {
        let mut worst = T::zero();
        for (r, b) in self.a_eq.mul_vec(x).iter().zip(&self.b_eq) {
            worst = worst.max((*r - *b).abs());
        }
        for (r, b) in self.a_in.mul_vec(x).iter().zip(&self.b_in) {
            worst = worst.max(*r - *b);
        }
        worst
    }
}

/// Primal point, multipliers and status returned by both solvers.
///
/// Multipliers follow `Hx + g + A_eqᵀν + A_inᵀμ = 0` with `μ ≥ 0`; they are
/// zero-length unless the status is [`Status::Optimal`] and the solver was the QP one.
#[derive(Clone, Debug)]
pub struct Solution<T> {
    pub x: Vec<T>,
    pub status: Status,
    pub objective: T,
    pub iterations: usize,
    pub eq_multipliers: Vec<T>,
    pub ineq_multipliers: Vec<T>,
}

impl<T: Real> Solution<T> {
    pub fn is_optimal(&self) -> bool {
        self.status == Status::Optimal
    }

    pub(crate) fn failed(n: usize, status: Status, iterations: usize) -> Self {
        Solution {
            x: vec![T::zero(); n],
            status,
            objective: T::nan(),
            iterations,
            eq_multipliers: Vec::new(),
            ineq_multipliers: Vec::new(),
        }
    }
}
