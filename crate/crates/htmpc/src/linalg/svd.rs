use crate::linalg::Matrix;
use crate::scalar::Real;

const MAX_SWEEPS: usize = 80;

/// Thin singular value decomposition from one-sided Jacobi rotations.
///
/// For an `m×n` input, `u` is `m×n`, `sigma` has `n` entries sorted descending and
/// `v` is the full `n×n` orthogonal factor. Columns of `u` paired with zero singular
/// values are zero.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    pub u: Matrix<T>,
    pub sigma: Vec<T>,
    pub v: Matrix<T>,
}

pub fn svd<T: Real>(a: &Matrix<T>) -> Svd<T> {
    let (m, n) = a.shape();
    let mut w: Vec<Vec<T>> = (0..n).map(|j| a.col(j)).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| {
            (0..n)
                .map(|i| if i == j { T::one() } else { T::zero() })
                .collect()
        })
        .collect();
    let eps = T::epsilon();
    let negligible = {
        let f = a.frobenius() * eps;
        f * f
    };
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (mut alpha, mut beta, mut gamma) = (T::zero(), T::zero(), T::zero());
                for i in 0..m {
                    let (x, y) = (w[p][i], w[q][i]);
                    alpha += x * x;
                    beta += y * y;
                    gamma += x * y;
                }
                if gamma == T::zero() || alpha <= negligible || beta <= negligible {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (gamma + gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<T> = w.iter().map(|col| crate::linalg::vec::norm2(col)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        norms[j]
            .partial_cmp(&norms[i])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let mut u = Matrix::zeros(m, n);
    let mut vm = Matrix::zeros(n, n);
    let mut sigma = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        let s = norms[j];
        sigma.push(s);
        if s > T::zero() {
            for i in 0..m {
                u[(i, k)] = w[j][i] / s;
            }
        }
        for i in 0..n {
            vm[(i, k)] = v[j][i];
        }
    }
    Svd { u, sigma, v: vm }
}

fn rotate<T: Real>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

/// The `min(m, n)` singular values, descending.
pub fn singular_values<T: Real>(a: &Matrix<T>) -> Vec<T> {
    let (m, n) = a.shape();
    if m == 0 || n == 0 {
        return Vec::new();
    }
    if m >= n {
        svd(a).sigma
    } else {
        svd(&a.transpose()).sigma
    }
}

fn rank_threshold<T: Real>(a: &Matrix<T>, sigma_max: T, rtol: Option<T>) -> T {
    match rtol {
        Some(r) => r * sigma_max,
        None => T::from_count(a.rows().max(a.cols()).max(1)) * T::epsilon() * sigma_max,
    }
}

/// Numerical rank: count of singular values above `rtol·σ_max` (default `max(m,n)·ε·σ_max`).
pub fn rank<T: Real>(a: &Matrix<T>, rtol: Option<T>) -> usize {
    let s = singular_values(a);
    let smax = s.first().copied().unwrap_or_else(T::zero);
    if smax == T::zero() {
        return 0;
    }
    let thr = rank_threshold(a, smax, rtol);
    s.iter().filter(|&&x| x > thr).count()
}

/// Orthonormal basis of the null space of `A` as columns of an `n×k` matrix.
pub fn null_space<T: Real>(a: &Matrix<T>, rtol: Option<T>) -> Matrix<T> {
    let n = a.cols();
    if a.rows() == 0 {
        return Matrix::identity(n);
    }
    let d = svd(a);
    let smax = d.sigma.first().copied().unwrap_or_else(T::zero);
    let thr = rank_threshold(a, smax, rtol);
    let idx: Vec<usize> = (0..n).filter(|&k| d.sigma[k] <= thr).collect();
    d.v.select_cols(&idx)
}

/// Orthonormal basis of the column space of `A`.
pub fn range_basis<T: Real>(a: &Matrix<T>, rtol: Option<T>) -> Matrix<T> {
    if a.cols() == 0 || a.rows() == 0 {
        return Matrix::zeros(a.rows(), 0);
    }
    let d = svd(a);
    let smax = d.sigma[0];
    if smax == T::zero() {
        return Matrix::zeros(a.rows(), 0);
    }
    let thr = rank_threshold(a, smax, rtol);
    let idx: Vec<usize> = (0..a.cols()).filter(|&k| d.sigma[k] > thr).collect();
    d.u.select_cols(&idx)
}
