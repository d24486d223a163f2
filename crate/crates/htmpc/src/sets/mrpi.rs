use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{inverse, require_schur, vec, Matrix};
use crate::scalar::Real;
use crate::sets::{AxisBox, BoxBound, Zonotope};

pub const MRPI_STEP_CAP: usize = 10_000;

/// Outer approximation of the minimal robust positively invariant set of
/// `z⁺ = Fz + w`, `w ∈ W`.
#[derive(Clone, Debug, Serialize)]
pub struct MrpiApprox<T> {
    /// `(1 − α)⁻¹ (W ⊕ FW ⊕ … ⊕ F^{s−1}W)`, invariant by construction.
    pub set: Zonotope<T>,
    /// Tightest box containing `set`.
    pub hull: AxisBox<T>,
    pub steps: usize,
    pub alpha: T,
    /// Whether `hull` is itself invariant, i.e. `|F|·r_Z + r_W ≤ r_Z`.
    pub box_invariant: bool,
}

impl<T: Real> MrpiApprox<T> {
    /// The invariant set used for tubes: the hull when it is invariant, otherwise the zonotope.
    pub fn tube_set(&self) -> Zonotope<T> {
        if self.box_invariant {
            Zonotope::from_box(&self.hull)
        } else {
            self.set.clone()
        }
    }
}

/// Raković-style outer approximation: the smallest `s` with `F^s W ⊆ αW`,
/// `α ≤ eps/(1+eps)`, then `Z = (1−α)⁻¹ ⊕_{j<s} F^j W`.
///
/// `W` is replaced by its bounding box; zero half-widths are inflated to `1e-9·max r`
/// so that the scaling test is well posed.
pub fn mrpi_outer<T: Real, W: BoxBound<T>>(f: &Matrix<T>, w: &W, eps: T) -> Result<MrpiApprox<T>> {
    let n = f.rows();
    if !f.is_square() || w.dim() != n {
        return Err(dim_err(
            "mrpi_outer",
            format!("F is {:?}, W has dimension {}", f.shape(), w.dim()),
        ));
    }
    if !(eps > T::zero()) {
        return Err(Error::Invalid(format!(
            "mrpi_outer: eps must be positive, got {eps}"
        )));
    }
    require_schur(f, "mrpi_outer")?;
    let wb = w.bounding_box();
    let offset = {
        let ci = inverse(&(&Matrix::identity(n) - f))?;
        ci.mul_vec(&wb.center())
    };
    let r = wb.radii();
    let rmax = vec::norm_inf(&r);
    if rmax == T::zero() {
        return Ok(MrpiApprox {
            set: Zonotope::point(&offset),
            hull: AxisBox::point(&offset),
            steps: 0,
            alpha: T::zero(),
            box_invariant: true,
        });
    }
    let floor = T::lit(1e-9) * rmax;
    let r: Vec<T> = r.iter().map(|&v| v.max(floor)).collect();
    let target = eps / (T::one() + eps);
    let wgen = Matrix::from_diag(&r);

    let mut blocks = vec![wgen.clone()];
    let mut power = f.clone();
    let mut alpha = T::zero();
    let mut steps = 0;
    for s in 1..=MRPI_STEP_CAP {
        let image = power.abs().mul_vec(&r);
        alpha = (0..n).map(|i| image[i] / r[i]).fold(T::zero(), T::max);
        if alpha <= target {
            steps = s;
            break;
        }
        blocks.push(power.matmul(&wgen));
        power = f.matmul(&power);
    }
    if steps == 0 {
        return Err(Error::NoConvergence {
            what: "mRPI truncation (F^s W ⊆ αW)",
            iterations: MRPI_STEP_CAP,
        });
    }
    let scale = T::one() / (T::one() - alpha);
    let refs: Vec<&Matrix<T>> = blocks.iter().collect();
    let all = Matrix::hstack(&refs).scale(scale);
    let keep: Vec<usize> = (0..all.cols())
        .filter(|&j| vec::norm_inf(&all.col(j)) > T::zero())
        .collect();
    let set = Zonotope::new(offset.clone(), all.select_cols(&keep))?;
    let hull = set.bounding_box();
    let rz = hull.radii();
    let grown = vec::add(&f.abs().mul_vec(&rz), &r);
    let box_invariant = (0..n).all(|i| grown[i] <= rz[i] * (T::one() + T::tol(1e-12)));
    Ok(MrpiApprox {
        set,
        hull,
        steps,
        alpha,
        box_invariant,
    })
}
