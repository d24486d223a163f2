use crate::error::{Error, Result};
use crate::linalg::{cholesky, symmetric_eigen, vec, Lu, Matrix};
use crate::qp::{feasible_point, QuadProgram, Solution, Status};
use crate::scalar::Real;

/// Solves a convex QP by the primal active-set method from a phase-one start.
pub fn solve<T: Real>(qp: &QuadProgram<T>, tol: T) -> Result<Solution<T>> {
    solve_warm(qp, tol, None)
}

/// As [`solve`], starting from `start` when it is feasible to within `tol`.
pub fn solve_warm<T: Real>(
    qp: &QuadProgram<T>,
    tol: T,
    start: Option<&[T]>,
) -> Result<Solution<T>> {
    qp.validate()?;
    let n = qp.dim();
    let h = qp.h.symmetrize();
    let hscale = h.max_abs().max(T::one());
    let positive_definite = n == 0 || cholesky(&h).is_some();
    if !positive_definite {
        let (eigs, _) = symmetric_eigen(&h)?;
        let smallest = eigs.first().copied().unwrap_or_else(T::zero);
        if smallest < -T::lit(1e-8) * hscale {
            return Err(Error::NotConvex(smallest.as_f64()));
        }
    }
    let delta = if positive_definite {
        T::zero()
    } else {
        T::lit(1e-9) * hscale
    };

    let feasible_start = start.filter(|x| x.len() == n && qp.infeasibility(x) <= tol);
    let mut x = match feasible_start {
        Some(x) => x.to_vec(),
        None => match feasible_point(n, &qp.a_eq, &qp.b_eq, &qp.a_in, &qp.b_in)? {
            Some(x) => x,
            None => return Ok(Solution::failed(n, Status::Infeasible, 0)),
        },
    };

    let mut basis = RowBasis::new(n);
    let mut eq_rows = Vec::new();
    for i in 0..qp.a_eq.rows() {
        if basis.try_add(qp.a_eq.row(i)) {
            eq_rows.push(i);
        }
    }
    let mut working: Vec<usize> = Vec::new();
    let ax = qp.a_in.mul_vec(&x);
    for i in 0..qp.a_in.rows() {
        let slack = qp.b_in[i] - ax[i];
        if slack.abs() <= tol * (T::one() + qp.b_in[i].abs()) && basis.try_add(qp.a_in.row(i)) {
            working.push(i);
        }
    }

    let max_iter = 1000 + 20 * (n + qp.a_in.rows());
    for iter in 0..max_iter {
        let grad = vec::add(&h.mul_vec(&x), &qp.g);
        let (p, nu) = eqp_step(&h, delta, &grad, qp, &eq_rows, &working)?;
        let pnorm = vec::norm_inf(&p);
        if pnorm <= tol * (T::one() + vec::norm_inf(&x)) {
            let gscale = vec::norm_inf(&grad).max(T::one());
            let ne = eq_rows.len();
            let drop = working
                .iter()
                .enumerate()
                .map(|(k, _)| (k, nu[ne + k]))
                .filter(|&(_, mu)| mu < -tol * gscale)
                .fold(None, |best: Option<(usize, T)>, (k, mu)| match best {
                    Some((_, b)) if b <= mu => best,
                    _ => Some((k, mu)),
                });
            match drop {
                Some((k, _)) => {
                    working.remove(k);
                    continue;
                }
                None => {
                    let mut eq_mult = vec![T::zero(); qp.a_eq.rows()];
                    for (k, &i) in eq_rows.iter().enumerate() {
                        eq_mult[i] = nu[k];
                    }
                    let mut in_mult = vec![T::zero(); qp.a_in.rows()];
                    for (k, &i) in working.iter().enumerate() {
                        in_mult[i] = nu[ne + k].max(T::zero());
                    }
                    return Ok(Solution {
                        objective: qp.objective(&x),
                        x,
                        status: Status::Optimal,
                        iterations: iter,
                        eq_multipliers: eq_mult,
                        ineq_multipliers: in_mult,
                    });
                }
            }
        }

        let ap = qp.a_in.mul_vec(&p);
        let ax = qp.a_in.mul_vec(&x);
        let mut alpha = T::one();
        let mut blocking = None;
        for i in 0..qp.a_in.rows() {
            if working.contains(&i) {
                continue;
            }
            let anorm = vec::norm2(qp.a_in.row(i));
            if ap[i] <= T::epsilon() * T::lit(16.0) * anorm * pnorm {
                continue;
            }
            let ratio = ((qp.b_in[i] - ax[i]).max(T::zero())) / ap[i];
            if ratio < alpha {
                alpha = ratio;
                blocking = Some(i);
            }
        }
        if blocking.is_none() && delta > T::zero() {
            let curvature = vec::dot(&p, &qp.h.mul_vec(&p));
            if curvature <= T::lit(1e-12) * hscale * vec::dot(&p, &p) {
                return Ok(Solution::failed(n, Status::Unbounded, iter));
            }
        }
        vec::axpy(&mut x, alpha, &p);
        if let Some(i) = blocking {
            working.push(i);
        }
    }
    Ok(Solution::failed(n, Status::MaxIter, max_iter))
}

/// Newton step of the equality-constrained subproblem on the working set, with multipliers.
fn eqp_step<T: Real>(
    h: &Matrix<T>,
    delta: T,
    grad: &[T],
    qp: &QuadProgram<T>,
    eq_rows: &[usize],
    working: &[usize],
) -> Result<(Vec<T>, Vec<T>)> {
    let n = grad.len();
    let w = eq_rows.len() + working.len();
    let mut kkt = Matrix::zeros(n + w, n + w);
    kkt.set_block(0, 0, h);
    for i in 0..n {
        kkt[(i, i)] += delta;
    }
    let rows = eq_rows
        .iter()
        .map(|&i| qp.a_eq.row(i))
        .chain(working.iter().map(|&i| qp.a_in.row(i)));
    for (k, row) in rows.enumerate() {
        for (j, &v) in row.iter().enumerate() {
            kkt[(n + k, j)] = v;
            kkt[(j, n + k)] = v;
        }
    }
    let mut rhs = vec![T::zero(); n + w];
    for j in 0..n {
        rhs[j] = -grad[j];
    }
    let sol = Lu::factor(&kkt)?.solve_vec(&rhs);
    Ok((sol[..n].to_vec(), sol[n..].to_vec()))
}

/// Orthonormal basis of accepted rows, used to keep the working set linearly independent.
struct RowBasis<T> {
    q: Vec<Vec<T>>,
    n: usize,
}

impl<T: Real> RowBasis<T> {
    fn new(n: usize) -> Self {
        RowBasis { q: Vec::new(), n }
    }

    fn try_add(&mut self, row: &[T]) -> bool {
        if self.q.len() >= self.n {
            return false;
        }
        let norm = vec::norm2(row);
        if norm == T::zero() {
            return false;
        }
        let mut r = row.to_vec();
        for _ in 0..2 {
            for q in &self.q {
                let d = vec::dot(&r, q);
                vec::axpy(&mut r, -d, q);
            }
        }
        let rn = vec::norm2(&r);
        if rn <= T::tol(1e-9) * norm {
            return false;
        }
        self.q.push(vec::scale(&r, T::one() / rn));
        true
    }
}
