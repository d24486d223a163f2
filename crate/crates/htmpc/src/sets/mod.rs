//! Balls, axis-aligned boxes, ellipsoids and zonotopes with the Minkowski and
//! Pontryagin operations used for constraint tightening.

mod mrpi;
mod sampling;
mod zonotope;

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{cholesky, inverse, vec, Matrix};
use crate::scalar::Real;

pub use mrpi::{mrpi_outer, MrpiApprox, MRPI_STEP_CAP};
pub use sampling::{halton, halton_point, sphere_directions};
pub use zonotope::Zonotope;

/// Relative tolerance applied on set boundaries by `contains`.
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Sets that can be over-approximated by their tightest enclosing axis-aligned box.
pub trait BoxBound<T: Real> {
    fn dim(&self) -> usize;
    fn bounding_box(&self) -> AxisBox<T>;
}

/// Point membership with boundary tolerance [`MEMBERSHIP_TOL`].
pub trait Contains<T: Real> {
    fn contains(&self, x: &[T]) -> bool;
}

/// Deterministic points on the boundary of a set, spread by a Halton sequence.
pub trait BoundarySample<T: Real> {
    fn boundary_samples(&self, count: usize) -> Vec<Vec<T>>;
}

fn boundary_tol<T: Real>(scale: T) -> T {
    T::tol(MEMBERSHIP_TOL) * (T::one() + scale.abs())
}

fn check_dim(context: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(dim_err(
            context,
            format!("expected dimension {expected}, got {got}"),
        ))
    }
}

/// Euclidean ball `{x : ‖x − c‖ ≤ r}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ball<T> {
    pub center: Vec<T>,
    pub radius: T,
}

impl<T: Real> Ball<T> {
    pub fn new(center: Vec<T>, radius: T) -> Result<Self> {
        if !(radius >= T::zero()) || !radius.is_finite() {
            return Err(Error::Invalid(format!(
                "ball radius must be finite and nonnegative, got {radius}"
            )));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::Invalid("ball center must be finite".into()));
        }
        Ok(Ball { center, radius })
    }

    /// Ball of radius `r` around the origin of `R^n`.
    pub fn origin(n: usize, radius: T) -> Result<Self> {
        Self::new(vec![T::zero(); n], radius)
    }
}

impl<T: Real> BoxBound<T> for Ball<T> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn bounding_box(&self) -> AxisBox<T> {
        AxisBox {
            lower: self.center.iter().map(|&c| c - self.radius).collect(),
            upper: self.center.iter().map(|&c| c + self.radius).collect(),
        }
    }
}

impl<T: Real> Contains<T> for Ball<T> {
    fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && vec::norm2(&vec::sub(x, &self.center)) <= self.radius + boundary_tol(self.radius)
    }
}

impl<T: Real> BoundarySample<T> for Ball<T> {
    fn boundary_samples(&self, count: usize) -> Vec<Vec<T>> {
        sphere_directions::<T>(count, self.dim())
            .into_iter()
            .map(|d| vec::add(&self.center, &vec::scale(&d, self.radius)))
            .collect()
    }
}

/// Axis-aligned box `{x : lower ≤ x ≤ upper}`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AxisBox<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> AxisBox<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        check_dim("AxisBox::new", lower.len(), upper.len())?;
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::Invalid("box bounds must be finite".into()));
        }
        if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
            return Err(Error::EmptySet(format!(
                "box coordinate {i}: lower {} exceeds upper {}",
                lower[i], upper[i]
            )));
        }
        Ok(AxisBox { lower, upper })
    }

    /// Box `center ± radii`.
    pub fn symmetric(center: &[T], radii: &[T]) -> Result<Self> {
        check_dim("AxisBox::symmetric", center.len(), radii.len())?;
        Self::new(vec::sub(center, radii), vec::add(center, radii))
    }

    /// Origin-centered box with the given half-widths.
    pub fn from_radii(radii: &[T]) -> Result<Self> {
        Self::symmetric(&vec![T::zero(); radii.len()], radii)
    }

    pub fn point(x: &[T]) -> Self {
        AxisBox {
            lower: x.to_vec(),
            upper: x.to_vec(),
        }
    }

    pub fn center(&self) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (l + u) * T::lit(0.5))
            .collect()
    }

    pub fn radii(&self) -> Vec<T> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&l, &u)| (u - l) * T::lit(0.5))
            .collect()
    }

    pub fn translate(&self, v: &[T]) -> Self {
        AxisBox {
            lower: vec::add(&self.lower, v),
            upper: vec::add(&self.upper, v),
        }
    }

    /// Signed distance to the nearest face: positive inside, negative outside.
    pub fn margin(&self, x: &[T]) -> T {
        let mut m = T::infinity();
        for i in 0..x.len() {
            m = m.min(x[i] - self.lower[i]).min(self.upper[i] - x[i]);
        }
        m
    }

    /// The `2^n` corners, in binary order of the upper-bound choices.
    pub fn vertices(&self) -> Vec<Vec<T>> {
        let n = self.lower.len();
        (0..1usize << n)
            .map(|mask| {
                (0..n)
                    .map(|i| {
                        if mask >> i & 1 == 1 {
                            self.upper[i]
                        } else {
                            self.lower[i]
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// `true` when `other ⊆ self` up to the boundary tolerance.
    pub fn includes(&self, other: &AxisBox<T>) -> bool {
        self.lower.len() == other.lower.len()
            && (0..self.lower.len()).all(|i| {
                other.lower[i] >= self.lower[i] - boundary_tol(self.lower[i])
                    && other.upper[i] <= self.upper[i] + boundary_tol(self.upper[i])
            })
    }
}

impl<T: Real> BoxBound<T> for AxisBox<T> {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn bounding_box(&self) -> AxisBox<T> {
        self.clone()
    }
}

impl<T: Real> Contains<T> for AxisBox<T> {
    fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim()
            && (0..x.len()).all(|i| {
                x[i] >= self.lower[i] - boundary_tol(self.lower[i])
                    && x[i] <= self.upper[i] + boundary_tol(self.upper[i])
            })
    }
}

impl<T: Real> BoundarySample<T> for AxisBox<T> {
    fn boundary_samples(&self, count: usize) -> Vec<Vec<T>> {
        let c = self.center();
        let r = self.radii();
        sphere_directions::<T>(count, self.dim())
            .into_iter()
            .map(|d| {
                let t = (0..d.len())
                    .filter(|&i| d[i] != T::zero())
                    .map(|i| r[i] / d[i].abs())
                    .fold(T::infinity(), T::min);
                let t = if t.is_finite() { t } else { T::zero() };
                vec::add(&c, &vec::scale(&d, t))
            })
            .collect()
    }
}

/// Ellipsoid `{x : (x − c)ᵀ P (x − c) ≤ level}` with `P` symmetric positive definite.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Ellipsoid<T> {
    pub center: Vec<T>,
    pub shape: Matrix<T>,
    pub level: T,
}

impl<T: Real> Ellipsoid<T> {
    pub fn new(center: Vec<T>, shape: Matrix<T>, level: T) -> Result<Self> {
        if shape.shape() != (center.len(), center.len()) {
            return Err(dim_err(
                "Ellipsoid::new",
                format!(
                    "center of length {} with shape {:?}",
                    center.len(),
                    shape.shape()
                ),
            ));
        }
        let asym = shape.max_abs_diff(&shape.transpose());
        if asym > T::tol(1e-12) * shape.max_abs().max(T::one()) {
            return Err(Error::Invalid(format!(
                "ellipsoid shape is not symmetric (asymmetry {asym:e})"
            )));
        }
        if !(level > T::zero()) {
            return Err(Error::Invalid(format!(
                "ellipsoid level must be positive, got {level}"
            )));
        }
        if !center.is_empty() && cholesky(&shape).is_none() {
            return Err(Error::Invalid(
                "ellipsoid shape is not positive definite".into(),
            ));
        }
        Ok(Ellipsoid {
            center,
            shape,
            level,
        })
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        let d = vec::sub(x, &self.center);
        vec::dot(&d, &self.shape.mul_vec(&d))
    }

    /// Intersection of the boundary with the ray from the center along `d`.
    pub fn boundary_point(&self, d: &[T]) -> Vec<T> {
        let q = vec::dot(d, &self.shape.mul_vec(d));
        if q <= T::zero() {
            return self.center.clone();
        }
        vec::add(&self.center, &vec::scale(d, (self.level / q).sqrt()))
    }

    /// Support function `max_{x ∈ E} dᵀx`.
    pub fn support(&self, d: &[T]) -> Result<T> {
        let pinv = inverse(&self.shape)?;
        let q = vec::dot(d, &pinv.mul_vec(d)).max(T::zero());
        Ok(vec::dot(d, &self.center) + (self.level * q).sqrt())
    }
}

impl<T: Real> BoxBound<T> for Ellipsoid<T> {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn bounding_box(&self) -> AxisBox<T> {
        let pinv = inverse(&self.shape).expect("ellipsoid shape is positive definite");
        let r: Vec<T> = (0..self.dim())
            .map(|i| (self.level * pinv[(i, i)].max(T::zero())).sqrt())
            .collect();
        AxisBox {
            lower: vec::sub(&self.center, &r),
            upper: vec::add(&self.center, &r),
        }
    }
}

impl<T: Real> Contains<T> for Ellipsoid<T> {
    fn contains(&self, x: &[T]) -> bool {
        x.len() == self.dim() && self.quad_form(x) <= self.level + boundary_tol(self.level)
    }
}

impl<T: Real> BoundarySample<T> for Ellipsoid<T> {
    fn boundary_samples(&self, count: usize) -> Vec<Vec<T>> {
        sphere_directions::<T>(count, self.dim())
            .into_iter()
            .map(|d| self.boundary_point(&d))
            .collect()
    }
}

/// Tightest box containing `a ⊕ b`; balls enter through their circumscribing box.
pub fn minkowski_sum<T: Real, A: BoxBound<T>, B: BoxBound<T>>(a: &A, b: &B) -> Result<AxisBox<T>> {
    check_dim("minkowski_sum", a.dim(), b.dim())?;
    let (a, b) = (a.bounding_box(), b.bounding_box());
    Ok(AxisBox {
        lower: vec::add(&a.lower, &b.lower),
        upper: vec::add(&a.upper, &b.upper),
    })
}

/// Box `a ⊖ b`. A ball subtrahend is replaced by its circumscribing box, which shrinks
/// more than necessary.
pub fn pontryagin_diff<T: Real, B: BoxBound<T>>(a: &AxisBox<T>, b: &B) -> Result<AxisBox<T>> {
    check_dim("pontryagin_diff", a.dim(), b.dim())?;
    let b = b.bounding_box();
    let lower = vec::sub(&a.lower, &b.lower);
    let upper = vec::sub(&a.upper, &b.upper);
    if let Some(i) = (0..lower.len()).find(|&i| lower[i] > upper[i]) {
        return Err(Error::EmptySet(format!(
            "Pontryagin difference is empty in coordinate {i} ({} > {})",
            lower[i], upper[i]
        )));
    }
    Ok(AxisBox { lower, upper })
}
