use crate::error::{dim_err, Result};
use crate::linalg::{vec, Matrix};
use crate::qp::{Solution, Status};
use crate::scalar::Real;

/// Minimizes `cᵀx` s.t. `A_in x ≤ b_in`, `A_eq x = b_eq` with `x` free.
///
/// Two-phase dense tableau simplex with Bland's anti-cycling rule; fully deterministic.
pub fn solve_lp<T: Real>(
    c: &[T],
    a_in: &Matrix<T>,
    b_in: &[T],
    a_eq: &Matrix<T>,
    b_eq: &[T],
) -> Result<Solution<T>> {
    let mut tab = Tableau::build(c.len(), a_in, b_in, a_eq, b_eq)?;
    match tab.phase_one() {
        Phase::Done => {}
        Phase::Stopped(status) => return Ok(Solution::failed(c.len(), status, tab.iterations)),
    }
    match tab.phase_two(c) {
        Phase::Done => {}
        Phase::Stopped(status) => return Ok(Solution::failed(c.len(), status, tab.iterations)),
    }
    let x = tab.primal();
    Ok(Solution {
        objective: vec::dot(c, &x),
        x,
        status: Status::Optimal,
        iterations: tab.iterations,
        eq_multipliers: Vec::new(),
        ineq_multipliers: Vec::new(),
    })
}

/// A point satisfying the constraints, or `None` when they are infeasible.
pub fn feasible_point<T: Real>(
    n: usize,
    a_eq: &Matrix<T>,
    b_eq: &[T],
    a_in: &Matrix<T>,
    b_in: &[T],
) -> Result<Option<Vec<T>>> {
    let mut tab = Tableau::build(n, a_in, b_in, a_eq, b_eq)?;
    Ok(match tab.phase_one() {
        Phase::Done => Some(tab.primal()),
        Phase::Stopped(_) => None,
    })
}

enum Phase {
    Done,
    Stopped(Status),
}

struct Tableau<T> {
    n: usize,
    /// Columns: `x⁺ (n) | x⁻ (n) | slacks | artificials | rhs`.
    rows: Vec<Vec<T>>,
    basis: Vec<usize>,
    n_real: usize,
    obj: Vec<T>,
    iterations: usize,
    cap: usize,
    piv_tol: T,
    rhs_scale: T,
}

impl<T: Real> Tableau<T> {
    fn build(n: usize, a_in: &Matrix<T>, b_in: &[T], a_eq: &Matrix<T>, b_eq: &[T]) -> Result<Self> {
        if a_in.cols() != n
            || a_eq.cols() != n
            || a_in.rows() != b_in.len()
            || a_eq.rows() != b_eq.len()
        {
            return Err(dim_err(
                "solve_lp",
                format!(
                    "{n} variables with A_in {:?}, b_in {}, A_eq {:?}, b_eq {}",
                    a_in.shape(),
                    b_in.len(),
                    a_eq.shape(),
                    b_eq.len()
                ),
            ));
        }
        let (mi, me) = (a_in.rows(), a_eq.rows());
        let m = mi + me;
        let n_real = 2 * n + mi;
        let width = n_real + m + 1;
        let mut rows = Vec::with_capacity(m);
        let mut basis = Vec::with_capacity(m);
        let mut rhs_scale = T::zero();
        for i in 0..m {
            let (a, b) = if i < mi {
                (a_in.row(i), b_in[i])
            } else {
                (a_eq.row(i - mi), b_eq[i - mi])
            };
            let s = vec::norm_inf(a);
            let s = if s > T::zero() { s } else { T::one() };
            let sign = if b < T::zero() { -T::one() } else { T::one() };
            let mut row = vec![T::zero(); width];
            for j in 0..n {
                row[j] = sign * a[j] / s;
                row[n + j] = -row[j];
            }
            row[width - 1] = sign * b / s;
            rhs_scale = rhs_scale.max(row[width - 1]);
            if i < mi {
                row[2 * n + i] = sign;
            }
            if i < mi && sign > T::zero() {
                basis.push(2 * n + i);
            } else {
                row[n_real + i] = T::one();
                basis.push(n_real + i);
            }
            rows.push(row);
        }
        Ok(Tableau {
            n,
            rows,
            basis,
            n_real,
            obj: vec![T::zero(); width],
            iterations: 0,
            cap: 50 * (m + width) + 1000,
            piv_tol: T::tol(1e-10),
            rhs_scale: rhs_scale.max(T::one()),
        })
    }

    fn width(&self) -> usize {
        self.obj.len()
    }

    fn phase_one(&mut self) -> Phase {
        let w = self.width();
        let mut obj = vec![T::zero(); w];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b >= self.n_real {
                for j in 0..self.n_real {
                    obj[j] -= row[j];
                }
                obj[w - 1] -= row[w - 1];
            }
        }
        self.obj = obj;
        if let Some(status) = self.iterate(T::tol(1e-11)) {
            return Phase::Stopped(status);
        }
        let infeasibility = -self.obj[w - 1];
        if infeasibility > T::tol(1e-9) * self.rhs_scale {
            return Phase::Stopped(Status::Infeasible);
        }
        for r in 0..self.rows.len() {
            if self.basis[r] < self.n_real {
                continue;
            }
            let col = (0..self.n_real).find(|&j| self.rows[r][j].abs() > self.piv_tol);
            if let Some(j) = col {
                self.pivot(r, j);
            }
        }
        Phase::Done
    }

    fn phase_two(&mut self, c: &[T]) -> Phase {
        let w = self.width();
        let n = self.n;
        let cost = |j: usize| -> T {
            if j < n {
                c[j]
            } else if j < 2 * n {
                -c[j - n]
            } else {
                T::zero()
            }
        };
        let mut obj: Vec<T> = (0..w)
            .map(|j| if j < self.n_real { cost(j) } else { T::zero() })
            .collect();
        obj[w - 1] = T::zero();
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            let cb = cost(b);
            if cb != T::zero() {
                for j in 0..w {
                    obj[j] -= cb * row[j];
                }
            }
        }
        self.obj = obj;
        let cscale = vec::norm_inf(c).max(T::one());
        match self.iterate(T::tol(1e-11) * cscale) {
            None => Phase::Done,
            Some(status) => Phase::Stopped(status),
        }
    }

    /// Runs Bland-rule pivots until optimal; returns the stopping status otherwise.
    fn iterate(&mut self, dtol: T) -> Option<Status> {
        let w = self.width();
        loop {
            let entering = (0..self.n_real).find(|&j| self.obj[j] < -dtol);
            let Some(j) = entering else {
                return None;
            };
            let mut leave: Option<(usize, T)> = None;
            for (r, row) in self.rows.iter().enumerate() {
                let a = row[j];
                if a <= self.piv_tol {
                    continue;
                }
                let ratio = row[w - 1].max(T::zero()) / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((br, best)) => {
                        let tie = (ratio - best).abs() <= T::tol(1e-12) * (T::one() + best);
                        if ratio < best && !tie || tie && self.basis[r] < self.basis[br] {
                            Some((r, ratio))
                        } else {
                            Some((br, best))
                        }
                    }
                };
            }
            let Some((r, _)) = leave else {
                return Some(Status::Unbounded);
            };
            self.pivot(r, j);
            self.iterations += 1;
            if self.iterations >= self.cap {
                return Some(Status::MaxIter);
            }
        }
    }

    fn pivot(&mut self, r: usize, j: usize) {
        let p = self.rows[r][j];
        for v in self.rows[r].iter_mut() {
            *v /= p;
        }
        self.rows[r][j] = T::one();
        let prow = self.rows[r].clone();
        for (i, row) in self.rows.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[j];
            if f != T::zero() {
                for (v, &pv) in row.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                row[j] = T::zero();
            }
        }
        let f = self.obj[j];
        if f != T::zero() {
            for (v, &pv) in self.obj.iter_mut().zip(&prow) {
                *v -= f * pv;
            }
            self.obj[j] = T::zero();
        }
        self.basis[r] = j;
    }

    fn primal(&self) -> Vec<T> {
        let w = self.width();
        let mut y = vec![T::zero(); self.n_real];
        for (row, &b) in self.rows.iter().zip(&self.basis) {
            if b < self.n_real {
                y[b] = row[w - 1];
            }
        }
        (0..self.n).map(|j| y[j] - y[self.n + j]).collect()
    }
}
