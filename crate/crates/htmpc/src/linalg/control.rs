use crate::error::{dim_err, Error, Result};
use crate::linalg::{cholesky, eigenvalues, singular_values, Lu, Matrix};
use crate::scalar::Real;

pub const DEFAULT_SCHUR_TOL: f64 = 1e-9;
const RICCATI_TOL: f64 = 1e-10;
const RICCATI_CAP: usize = 10_000;

fn require_square<T: Real>(a: &Matrix<T>, context: &'static str) -> Result<()> {
    if a.is_square() {
        Ok(())
    } else {
        Err(Error::NotSquare {
            context,
            rows: a.rows(),
            cols: a.cols(),
        })
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Real>(a: &Matrix<T>) -> Result<T> {
    require_square(a, "spectral_radius")?;
    Ok(eigenvalues(a)?
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(T::zero(), |m, v| if v > m { v } else { m }))
}

/// `true` iff `ρ(A) < 1 − tol`.
pub fn is_schur<T: Real>(a: &Matrix<T>, tol: T) -> Result<bool> {
    Ok(spectral_radius(a)? < T::one() - tol)
}

pub(crate) fn require_schur<T: Real>(a: &Matrix<T>, context: &'static str) -> Result<()> {
    let rho = spectral_radius(a)?;
    if rho < T::one() - T::tol(DEFAULT_SCHUR_TOL) {
        Ok(())
    } else {
        Err(Error::NotSchur {
            context,
            radius: rho.as_f64(),
        })
    }
}

/// Induced 2-norm (largest singular value); zero for empty matrices.
pub fn spectral_norm<T: Real>(a: &Matrix<T>) -> T {
    singular_values(a).first().copied().unwrap_or_else(T::zero)
}

/// Smallest of the `min(m, n)` singular values; zero for empty matrices.
pub fn min_singular_value<T: Real>(a: &Matrix<T>) -> T {
    singular_values(a).last().copied().unwrap_or_else(T::zero)
}

/// Solves `FᵀPF − P = −Q` by squared Smith iteration with one refinement pass.
pub fn solve_dlyap<T: Real>(f: &Matrix<T>, q: &Matrix<T>) -> Result<Matrix<T>> {
    require_square(f, "solve_dlyap")?;
    if q.shape() != f.shape() {
        return Err(dim_err(
            "solve_dlyap",
            format!("F is {:?}, Q is {:?}", f.shape(), q.shape()),
        ));
    }
    require_schur(f, "solve_dlyap")?;
    let mut p = smith(f, q);
    let residual = &(&f.tr_matmul(&p).matmul(f) - &p) + q;
    let correction = smith(f, &residual.symmetrize());
    p += &correction;
    Ok(p.symmetrize())
}

fn smith<T: Real>(f: &Matrix<T>, q: &Matrix<T>) -> Matrix<T> {
    let mut p = q.symmetrize();
    let mut a = f.clone();
    for _ in 0..64 {
        let inc = a.tr_matmul(&p).matmul(&a);
        let done = inc.max_abs() <= T::epsilon() * p.max_abs();
        p += &inc;
        if done {
            break;
        }
        a = a.matmul(&a);
    }
    p
}

/// Infinite-horizon discrete LQ gain with the convention `u = Kx`.
///
/// Fixed-point iteration on the Riccati value recursion from `P = Q`.
pub fn dlqr_gain<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    q: &Matrix<T>,
    r: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    require_square(a, "dlqr_gain")?;
    let (n, m) = (a.rows(), b.cols());
    if b.rows() != n || q.shape() != (n, n) || r.shape() != (m, m) {
        return Err(dim_err(
            "dlqr_gain",
            format!(
                "A {:?}, B {:?}, Q {:?}, R {:?}",
                a.shape(),
                b.shape(),
                q.shape(),
                r.shape()
            ),
        ));
    }
    if m > 0 && cholesky(&r.symmetrize()).is_none() {
        return Err(Error::Invalid(
            "dlqr_gain: R must be positive definite".into(),
        ));
    }
    let tol = T::tol(RICCATI_TOL);
    let mut p = q.symmetrize();
    for _ in 0..RICCATI_CAP {
        let next = riccati_step(a, b, q, r, &p)?;
        let diff = next.max_abs_diff(&p);
        let scale = next.max_abs().max(T::one());
        p = next;
        if !p.is_finite() {
            break;
        }
        if diff <= tol * scale {
            let k = gain(a, b, r, &p)?;
            let closed = &a.clone() + &b.matmul(&k);
            require_schur(&closed, "dlqr_gain closed loop")?;
            return Ok((k, p));
        }
    }
    Err(Error::NoConvergence {
        what: "Riccati fixed-point iteration",
        iterations: RICCATI_CAP,
    })
}

fn riccati_step<T: Real>(
    a: &Matrix<T>,
    b: &Matrix<T>,
    q: &Matrix<T>,
    r: &Matrix<T>,
    p: &Matrix<T>,
) -> Result<Matrix<T>> {
    let pa = p.matmul(a);
    let mut next = &a.tr_matmul(&pa) + q;
    if b.cols() > 0 {
        let pb = p.matmul(b);
        let s = r + &b.tr_matmul(&pb);
        let btpa = b.tr_matmul(&pa);
        let x = Lu::factor(&s)?.solve(&btpa);
        next -= &btpa.tr_matmul(&x);
    }
    Ok(next.symmetrize())
}

fn gain<T: Real>(a: &Matrix<T>, b: &Matrix<T>, r: &Matrix<T>, p: &Matrix<T>) -> Result<Matrix<T>> {
    if b.cols() == 0 {
        return Ok(Matrix::zeros(0, a.rows()));
    }
    let s = r + &b.tr_matmul(&p.matmul(b));
    let btpa = b.tr_matmul(&p.matmul(a));
    Ok(-&Lu::factor(&s)?.solve(&btpa))
}

/// `Σ_{j=0}^{N−1} A^j B`.
pub fn matrix_power_sum<T: Real>(a: &Matrix<T>, b: &Matrix<T>, n: usize) -> Result<Matrix<T>> {
    require_square(a, "matrix_power_sum")?;
    if a.cols() != b.rows() {
        return Err(dim_err(
            "matrix_power_sum",
            format!("A {:?} with B {:?}", a.shape(), b.shape()),
        ));
    }
    if n == 0 {
        return Err(Error::Invalid(
            "matrix_power_sum: N must be at least 1".into(),
        ));
    }
    let mut s = b.clone();
    for _ in 1..n {
        s = b + &a.matmul(&s);
    }
    Ok(s)
}

/// `[B, AB, …, A^{k−1}B]`.
pub fn reachability_matrix<T: Real>(a: &Matrix<T>, b: &Matrix<T>, k: usize) -> Matrix<T> {
    let mut blocks = Vec::with_capacity(k);
    let mut cur = b.clone();
    for _ in 0..k {
        let next = a.matmul(&cur);
        blocks.push(cur);
        cur = next;
    }
    let refs: Vec<&Matrix<T>> = blocks.iter().collect();
    if refs.is_empty() {
        return Matrix::zeros(a.rows(), 0);
    }
    Matrix::hstack(&refs)
}
