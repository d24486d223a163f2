use serde::Serialize;

use crate::error::{dim_err, Result};
use crate::linalg::{vec, Matrix};
use crate::qp::{solve_lp, Status};
use crate::scalar::Real;
use crate::sets::{boundary_tol, sphere_directions, AxisBox, BoundarySample, BoxBound, Contains};

/// Zonotope `{c + Gλ : ‖λ‖_∞ ≤ 1}` with generators as the columns of `G`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Zonotope<T> {
    pub center: Vec<T>,
    pub generators: Matrix<T>,
}

impl<T: Real> Zonotope<T> {
    pub fn new(center: Vec<T>, generators: Matrix<T>) -> Result<Self> {
        if generators.rows() != center.len() {
            return Err(dim_err(
                "Zonotope::new",
                format!(
                    "center of length {} with generators {:?}",
                    center.len(),
                    generators.shape()
                ),
            ));
        }
        Ok(Zonotope { center, generators })
    }

    pub fn point(x: &[T]) -> Self {
        Zonotope {
            center: x.to_vec(),
            generators: Matrix::zeros(x.len(), 0),
        }
    }

    /// The box as a zonotope with one axis-aligned generator per nondegenerate coordinate.
    pub fn from_box(b: &AxisBox<T>) -> Self {
        let r = b.radii();
        let cols: Vec<usize> = (0..r.len()).filter(|&i| r[i] > T::zero()).collect();
        let g = Matrix::from_fn(r.len(), cols.len(), |i, j| {
            if i == cols[j] {
                r[i]
            } else {
                T::zero()
            }
        });
        Zonotope {
            center: b.center(),
            generators: g,
        }
    }

    pub fn order(&self) -> usize {
        self.generators.cols()
    }

    pub fn is_point(&self) -> bool {
        self.generators.max_abs() == T::zero()
    }

    /// Image under `x ↦ Mx`.
    pub fn linear_map(&self, m: &Matrix<T>) -> Self {
        Zonotope {
            center: m.mul_vec(&self.center),
            generators: m.matmul(&self.generators),
        }
    }

    pub fn translate(&self, v: &[T]) -> Self {
        Zonotope {
            center: vec::add(&self.center, v),
            generators: self.generators.clone(),
        }
    }

    /// Exact Minkowski sum.
    pub fn sum(&self, other: &Zonotope<T>) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(dim_err(
                "Zonotope::sum",
                format!("dimensions {} and {}", self.dim(), other.dim()),
            ));
        }
        Ok(Zonotope {
            center: vec::add(&self.center, &other.center),
            generators: Matrix::hstack(&[&self.generators, &other.generators]),
        })
    }

    /// Support function `max_{x ∈ Z} dᵀx = dᵀc + ‖Gᵀd‖₁`.
    pub fn support(&self, d: &[T]) -> T {
        let gd = self.generators.tr_mul_vec(d);
        vec::dot(d, &self.center) + gd.iter().map(|v| v.abs()).sum::<T>()
    }

    /// A vertex maximizing `dᵀx`.
    pub fn vertex(&self, d: &[T]) -> Vec<T> {
        let gd = self.generators.tr_mul_vec(d);
        let signs: Vec<T> = gd
            .iter()
            .map(|&v| if v >= T::zero() { T::one() } else { -T::one() })
            .collect();
        vec::add(&self.center, &self.generators.mul_vec(&signs))
    }

    /// Smallest `‖λ‖_∞` with `c + Gλ = x`, or `None` when `x − c` is outside the span of `G`.
    pub fn gauge(&self, x: &[T]) -> Result<Option<T>> {
        let (n, g) = self.generators.shape();
        if x.len() != n {
            return Err(dim_err(
                "Zonotope::gauge",
                format!("expected dimension {n}, got {}", x.len()),
            ));
        }
        let rhs = vec::sub(x, &self.center);
        if g == 0 {
            let scale = vec::norm_inf(&self.center).max(T::one());
            return Ok((vec::norm_inf(&rhs) <= T::tol(1e-12) * scale).then(T::zero));
        }
        let mut a_eq = Matrix::zeros(n, g + 1);
        a_eq.set_block(0, 0, &self.generators);
        let mut a_in = Matrix::zeros(2 * g, g + 1);
        for j in 0..g {
            a_in[(2 * j, j)] = T::one();
            a_in[(2 * j, g)] = -T::one();
            a_in[(2 * j + 1, j)] = -T::one();
            a_in[(2 * j + 1, g)] = -T::one();
        }
        let mut c = vec![T::zero(); g + 1];
        c[g] = T::one();
        let sol = solve_lp(&c, &a_in, &vec![T::zero(); 2 * g], &a_eq, &rhs)?;
        Ok(match sol.status {
            Status::Optimal => Some(sol.x[g].max(T::zero())),
            _ => None,
        })
    }
}

impl<T: Real> BoxBound<T> for Zonotope<T> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn bounding_box(&self) -> AxisBox<T> {
        let r: Vec<T> = (0..self.dim())
            .map(|i| self.generators.row(i).iter().map(|v| v.abs()).sum())
            .collect();
        AxisBox {
            lower: vec::sub(&self.center, &r),
            upper: vec::add(&self.center, &r),
        }
    }
}

impl<T: Real> Contains<T> for Zonotope<T> {
    /// Decided by a bounded-variable phase-one simplex on `Gλ = x − c`, `|λ| ≤ 1 + tol`.
    fn contains(&self, x: &[T]) -> bool {
        if x.len() != self.dim() {
            return false;
        }
        let d = vec::sub(x, &self.center);
        let bound = T::one() + boundary_tol(T::one());
        box_feasible(&self.generators, &d, bound)
    }
}

/// Whether `Gλ = d` has a solution with `|λ_j| ≤ bound`.
fn box_feasible<T: Real>(g: &Matrix<T>, d: &[T], bound: T) -> bool {
    let (n, m) = g.shape();
    let upper = bound + bound;
    let scale = g.max_abs().max(vec::norm_inf(d)).max(T::one());
    let tol = T::tol(1e-11) * scale;
    // Shift λ = μ − bound so that μ ∈ [0, 2·bound] starts at its lower bound.
    let mut rows: Vec<Vec<T>> = Vec::with_capacity(n);
    let mut value = Vec::with_capacity(n);
    for i in 0..n {
        let shifted = d[i] + bound * g.row(i).iter().copied().sum::<T>();
        let sign = if shifted < T::zero() {
            -T::one()
        } else {
            T::one()
        };
        let mut row = vec![T::zero(); m + n];
        for j in 0..m {
            row[j] = sign * g[(i, j)];
        }
        row[m + i] = T::one();
        rows.push(row);
        value.push(sign * shifted);
    }
    let mut basis: Vec<usize> = (m..m + n).collect();
    let mut at_upper = vec![false; m];
    let mut cost: Vec<T> = (0..m + n)
        .map(|j| {
            if j < m {
                -rows.iter().map(|r| r[j]).sum::<T>()
            } else {
                T::zero()
            }
        })
        .collect();
    let cap = 50 * (m + n) + 100;
    for _ in 0..cap {
        let infeasibility: T = (0..n).filter(|&i| basis[i] >= m).map(|i| value[i]).sum();
        if infeasibility <= tol {
            return true;
        }
        let entering = (0..m).find(|&j| {
            !basis.contains(&j) && (!at_upper[j] && cost[j] < -tol || at_upper[j] && cost[j] > tol)
        });
        let Some(j) = entering else {
            return false;
        };
        let dir = if at_upper[j] { -T::one() } else { T::one() };
        let mut step = upper;
        let mut leave: Option<(usize, bool)> = None;
        for i in 0..n {
            let a = dir * rows[i][j];
            if a > tol {
                let t = value[i] / a;
                if t < step {
                    step = t;
                    leave = Some((i, false));
                }
            } else if a < -tol && basis[i] < m {
                let t = (upper - value[i]) / -a;
                if t < step {
                    step = t;
                    leave = Some((i, true));
                }
            }
        }
        let step = step.max(T::zero());
        for i in 0..n {
            value[i] -= dir * step * rows[i][j];
        }
        match leave {
            None => at_upper[j] = !at_upper[j],
            Some((r, to_upper)) => {
                let old = basis[r];
                if old < m {
                    at_upper[old] = to_upper;
                }
                let entering_value = if at_upper[j] { upper - step } else { step };
                let p = rows[r][j];
                for v in rows[r].iter_mut() {
                    *v /= p;
                }
                let prow = rows[r].clone();
                for (i, row) in rows.iter_mut().enumerate() {
                    if i != r {
                        let f = row[j];
                        if f != T::zero() {
                            for (v, &pv) in row.iter_mut().zip(&prow) {
                                *v -= f * pv;
                            }
                        }
                    }
                }
                let f = cost[j];
                for (v, &pv) in cost.iter_mut().zip(&prow) {
                    *v -= f * pv;
                }
                basis[r] = j;
                value[r] = entering_value;
                at_upper[j] = false;
            }
        }
    }
    false
}

impl<T: Real> BoundarySample<T> for Zonotope<T> {
    /// Vertices reached by maximizing sampled directions.
    fn boundary_samples(&self, count: usize) -> Vec<Vec<T>> {
        sphere_directions::<T>(count, self.dim())
            .into_iter()
            .map(|d| self.vertex(&d))
            .collect()
    }
}
