//! Projections `β_i` onto reduced coordinates and the reduced-order model
//! `x̄⁺ = A_H x̄ + B_H u`, `y = C_H x̄` matched to the plant in steady state.

use std::ops::Range;

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{
    inverse, min_singular_value, null_space, range_basis, rank, reachability_matrix, require_schur,
    singular_values, solve, spectral_radius, symmetric_eigen, Lu, Matrix, DEFAULT_SCHUR_TOL,
};
use crate::plant::{Check, LargeScaleSystem, Subsystem, RANK_RTOL};
use crate::scalar::Real;

fn rtol<T: Real>() -> Option<T> {
    Some(T::lit(RANK_RTOL))
}

/// Orthonormal basis of `Im a ∩ Im b` for orthonormal `a`, `b`.
fn intersect<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let n = a.rows();
    if a.cols() == 0 || b.cols() == 0 {
        return Matrix::zeros(n, 0);
    }
    let stacked = Matrix::hstack(&[a, &(-b)]);
    let coeffs = null_space(&stacked, rtol());
    if coeffs.cols() == 0 {
        return Matrix::zeros(n, 0);
    }
    let xa = coeffs.block(0, 0, a.cols(), coeffs.cols());
    range_basis(&a.matmul(&xa), rtol())
}

/// `(I − A)⁻¹ G`.
fn dc_gain<T: Real>(a: &Matrix<T>, g: &Matrix<T>, context: &'static str) -> Result<Matrix<T>> {
    let lu =
        Lu::factor(&(&Matrix::identity(a.rows()) - a)).map_err(|_| Error::Singular(context))?;
    Ok(lu.solve(g))
}

/// Flips each row so that its largest-magnitude entry is positive.
fn normalize_signs<T: Real>(m: &mut Matrix<T>) {
    for i in 0..m.rows() {
        let row = m.row(i);
        let k = (0..row.len()).fold(0, |best, j| {
            if row[j].abs() > row[best].abs() {
                j
            } else {
                best
            }
        });
        if !row.is_empty() && row[k] < T::zero() {
            for j in 0..m.cols() {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Projection `β_i` (`n̄_i × n_i`) with `Ker β_i ⊆ Ker C_ii` and `Ker β_i ∩ 𝒵_ii = {0}`,
/// `𝒵_ii = Im G̃_ii(1) ∩ Ker C_ii`.
///
/// `G̃_ii(1) = (I − A_ii)⁻¹ [B_ii E_i]`, or `(I − A_ii)⁻¹ B_ii` when `less_conservative`
/// is set, in which case the collective condition must be checked afterwards with
/// [`kernel_condition`]. Among admissible kernels, the directions least aligned with
/// `Im G̃_ii(1)` are discarded. The returned rows are orthonormal.
pub fn build_beta<T: Real>(
    sub: &Subsystem<T>,
    n_bar: usize,
    less_conservative: bool,
) -> Result<Matrix<T>> {
    let (n, p) = (sub.n(), sub.p());
    if n_bar > n {
        return Err(Error::Reduction(format!(
            "n̄ = {n_bar} exceeds the subsystem order {n}"
        )));
    }
    if n_bar < p {
        return Err(Error::Reduction(format!(
            "n̄ = {n_bar} is below the output dimension {p}, so C_H β = C_L is impossible"
        )));
    }
    if n_bar == n {
        return Ok(Matrix::identity(n));
    }
    let g = if less_conservative {
        sub.b.clone()
    } else {
        Matrix::hstack(&[&sub.b, &sub.e])
    };
    let gt = dc_gain(&sub.a, &g, "build_beta: I − A_ii")?;
    let im_g = range_basis(&gt, rtol());
    let ker_c = null_space(&sub.c, rtol());
    let z = intersect(&im_g, &ker_c);
    let admissible = null_space(&Matrix::vstack(&[&sub.c, &z.transpose()]), rtol());
    let k = n - n_bar;
    if admissible.cols() < k {
        return Err(Error::Reduction(format!(
            "a kernel of dimension {k} inside Ker C avoiding Im G̃(1) ∩ Ker C does not exist \
             (only {} admissible directions); increase n̄",
            admissible.cols()
        )));
    }
    let kernel = if im_g.cols() == 0 {
        admissible.select_cols(&(0..k).collect::<Vec<_>>())
    } else {
        let overlap = im_g.tr_matmul(&admissible);
        let (_, vecs) = symmetric_eigen(&overlap.tr_matmul(&overlap))?;
        admissible.matmul(&vecs.select_cols(&(0..k).collect::<Vec<_>>()))
    };
    let complement = null_space(&kernel.transpose(), rtol());
    if complement.cols() != n_bar {
        return Err(Error::Reduction(format!(
            "basis completion produced {} vectors, expected {n_bar}",
            complement.cols()
        )));
    }
    let mut beta = complement.transpose();
    normalize_signs(&mut beta);
    Ok(beta)
}

/// `β_i` for every subsystem; with `less_conservative` the collective kernel condition
/// is enforced before returning.
pub fn build_betas<T: Real>(
    sys: &LargeScaleSystem<T>,
    n_bars: &[usize],
    less_conservative: bool,
) -> Result<Vec<Matrix<T>>> {
    if n_bars.len() != sys.num_subsystems() {
        return Err(dim_err(
            "build_betas",
            format!(
                "{} reduced orders for {} subsystems",
                n_bars.len(),
                sys.num_subsystems()
            ),
        ));
    }
    let betas = sys
        .subsystems
        .iter()
        .zip(n_bars)
        .map(|(s, &nb)| build_beta(s, nb, less_conservative))
        .collect::<Result<Vec<_>>>()?;
    if less_conservative {
        let check = kernel_condition(sys, &betas)?;
        if !check.pass {
            return Err(Error::Reduction(format!(
                "collective kernel condition failed: {}",
                check.detail
            )));
        }
    }
    Ok(betas)
}

/// Whether `(Im G_L^x ∩ Ker C_L) ∩ ∏ Ker β_i = {0}`; the witness is the dimension
/// of the intersection.
pub fn kernel_condition<T: Real>(sys: &LargeScaleSystem<T>, betas: &[Matrix<T>]) -> Result<Check> {
    let beta = Matrix::block_diag(betas);
    if beta.cols() != sys.n() {
        return Err(dim_err(
            "kernel_condition",
            format!("β has {} columns, n = {}", beta.cols(), sys.n()),
        ));
    }
    let gx = dc_gain(&sys.a_l, &sys.b_l, "kernel_condition: I − A_L")?;
    let z = intersect(&range_basis(&gx, rtol()), &null_space(&sys.c_l, rtol()));
    let kb = null_space(&beta, rtol());
    let dim = intersect(&z, &kb).cols();
    Ok(Check::new(
        dim == 0,
        dim as f64,
        format!("dim(𝒵 ∩ Ker β) = {dim}"),
    ))
}

/// Reduced model with block-diagonal `β` and `C_H`.
#[derive(Clone, Debug, Serialize)]
pub struct ReducedModel<T> {
    pub beta_blocks: Vec<Matrix<T>>,
    pub beta: Matrix<T>,
    pub a_h: Matrix<T>,
    pub b_h: Matrix<T>,
    pub c_h_blocks: Vec<Matrix<T>>,
    pub c_h: Matrix<T>,
}

impl<T: Real> ReducedModel<T> {
    pub fn n_bar(&self) -> usize {
        self.beta.rows()
    }

    pub fn reduced_range(&self, i: usize) -> Range<usize> {
        let start: usize = self.beta_blocks[..i].iter().map(Matrix::rows).sum();
        start..start + self.beta_blocks[i].rows()
    }

    /// `x̄ = βx`.
    pub fn project(&self, x: &[T]) -> Vec<T> {
        self.beta.mul_vec(x)
    }

    /// `G_H(1) = (I − A_H)⁻¹ B_H`.
    pub fn gain(&self) -> Result<Matrix<T>> {
        dc_gain(&self.a_h, &self.b_h, "ReducedModel::gain: I − A_H")
    }
}

/// `B_H = (I − A_H) β (I − A_L)⁻¹ B_L` and `C_H^{ii}` from `C_H^{ii} β_i = C_ii`.
pub fn build_reduced_model<T: Real>(
    sys: &LargeScaleSystem<T>,
    betas: Vec<Matrix<T>>,
    a_h: Matrix<T>,
) -> Result<ReducedModel<T>> {
    if betas.len() != sys.num_subsystems() {
        return Err(dim_err(
            "build_reduced_model",
            format!(
                "{} projections for {} subsystems",
                betas.len(),
                sys.num_subsystems()
            ),
        ));
    }
    for (i, (b, s)) in betas.iter().zip(&sys.subsystems).enumerate() {
        if b.cols() != s.n() || b.rows() > s.n() {
            return Err(dim_err(
                "build_reduced_model",
                format!(
                    "β_{i} is {:?} for a subsystem of order {}",
                    b.shape(),
                    s.n()
                ),
            ));
        }
    }
    let beta = Matrix::block_diag(&betas);
    if a_h.shape() != (beta.rows(), beta.rows()) {
        return Err(dim_err(
            "build_reduced_model",
            format!(
                "A_H is {:?}, expected {n}x{n}",
                a_h.shape(),
                n = beta.rows()
            ),
        ));
    }
    require_schur(&a_h, "build_reduced_model: A_H")?;
    let gx = dc_gain(&sys.a_l, &sys.b_l, "build_reduced_model: I − A_L")?;
    let b_h = (&Matrix::identity(a_h.rows()) - &a_h).matmul(&beta.matmul(&gx));
    let mut c_h_blocks = Vec::with_capacity(betas.len());
    for (i, (b, s)) in betas.iter().zip(&sys.subsystems).enumerate() {
        let gram = b.matmul(&b.transpose());
        let c_h = solve(&gram, &b.matmul(&s.c.transpose()))
            .map_err(|_| Error::Reduction(format!("β_{i} is not full row rank")))?
            .transpose();
        let residual = c_h.matmul(b).max_abs_diff(&s.c);
        if residual > T::lit(1e-9) * (T::one() + s.c.max_abs()) {
            return Err(Error::Reduction(format!(
                "C_{i}{i} is not in the row space of β_{i} (residual {residual:e})"
            )));
        }
        c_h_blocks.push(c_h);
    }
    let c_h = Matrix::block_diag(&c_h_blocks);
    Ok(ReducedModel {
        beta_blocks: betas,
        beta,
        a_h,
        b_h,
        c_h_blocks,
        c_h,
    })
}

/// Diagonal `A_H` from per-coordinate decay rates.
pub fn diagonal_a_h<T: Real>(rates: &[T]) -> Result<Matrix<T>> {
    let a = Matrix::from_diag(rates);
    require_schur(&a, "diagonal_a_h")?;
    Ok(a)
}

/// `β A_L β⁺` with `β⁺ = βᵀ(ββᵀ)⁻¹`; equals `A_L` when `β = I`.
pub fn projected_a_h<T: Real>(sys: &LargeScaleSystem<T>, betas: &[Matrix<T>]) -> Result<Matrix<T>> {
    let beta = Matrix::block_diag(betas);
    if beta.cols() != sys.n() {
        return Err(dim_err(
            "projected_a_h",
            format!("β has {} columns, n = {}", beta.cols(), sys.n()),
        ));
    }
    let pinv = beta
        .transpose()
        .matmul(&inverse(&beta.matmul(&beta.transpose()))?);
    let a = beta.matmul(&sys.a_l).matmul(&pinv);
    require_schur(&a, "projected_a_h")?;
    Ok(a)
}

/// Heuristic decay rates: the `n_bar` largest singular values of the subsystem's
/// `n_i`-step reachability matrix. Fails when any of them is not below one.
pub fn reachability_decay_rates<T: Real>(sub: &Subsystem<T>, n_bar: usize) -> Result<Vec<T>> {
    let s = singular_values(&reachability_matrix(&sub.a, &sub.b, sub.n()));
    if n_bar > s.len() {
        return Err(Error::Reduction(format!(
            "{n_bar} rates requested, {} available",
            s.len()
        )));
    }
    let rates = s[..n_bar].to_vec();
    if rates
        .iter()
        .any(|&r| r >= T::one() - T::lit(DEFAULT_SCHUR_TOL))
    {
        return Err(Error::Reduction(format!(
            "reachability singular values {:?} are not all below one",
            rates.iter().map(|r| r.as_f64()).collect::<Vec<_>>()
        )));
    }
    Ok(rates)
}

/// Items of the reduced-model standing assumption with their residuals.
#[derive(Clone, Debug, Serialize)]
pub struct Assumption2Report {
    pub a_h_schur: Check,
    pub beta_full_rank: Vec<Check>,
    pub output_match: Check,
    pub steady_state_match: Check,
    pub gain_full_rank: Check,
    pub kernel_condition: Check,
}

impl Assumption2Report {
    pub fn passed(&self) -> bool {
        self.a_h_schur.pass
            && self.beta_full_rank.iter().all(|c| c.pass)
            && self.output_match.pass
            && self.steady_state_match.pass
            && self.gain_full_rank.pass
            && self.kernel_condition.pass
    }
}

pub fn validate_assumption2<T: Real>(
    rm: &ReducedModel<T>,
    sys: &LargeScaleSystem<T>,
) -> Result<Assumption2Report> {
    if rm.beta.cols() != sys.n() || rm.b_h.cols() != sys.m() {
        return Err(dim_err(
            "validate_assumption2",
            format!(
                "β {:?} and B_H {:?} against n = {}, m = {}",
                rm.beta.shape(),
                rm.b_h.shape(),
                sys.n(),
                sys.m()
            ),
        ));
    }
    let rho = spectral_radius(&rm.a_h)?.as_f64();
    let a_h_schur = Check::new(rho < 1.0 - DEFAULT_SCHUR_TOL, rho, "spectral radius of A_H");
    let beta_full_rank = rm
        .beta_blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let r = rank(b, rtol());
            Check::new(
                r == b.rows(),
                r as f64,
                format!("rank of β_{i}, required {}", b.rows()),
            )
        })
        .collect();
    let out_res = rm.c_h.matmul(&rm.beta).max_abs_diff(&sys.c_l).as_f64();
    let out_tol = 1e-9 * (1.0 + sys.c_l.max_abs().as_f64());
    let output_match = Check::new(out_res <= out_tol, out_res, "max |C_H β − C_L|");
    let g_hat = rm.beta.matmul(&dc_gain(
        &sys.a_l,
        &sys.b_l,
        "validate_assumption2: I − A_L",
    )?);
    let (steady_state_match, gain_full_rank) = match rm.gain() {
        Ok(g_h) => {
            let res = g_h.max_abs_diff(&g_hat).as_f64();
            let tol = 1e-8 * (1.0 + g_hat.max_abs().as_f64());
            let r = rank(&g_h, rtol());
            let full = g_h.rows().min(g_h.cols());
            (
                Check::new(res <= tol, res, "max |β G_L(1) − G_H(1)|"),
                Check::new(
                    r == full,
                    min_singular_value(&g_h).as_f64(),
                    format!("smallest singular value of G_H(1), rank {r} of {full}"),
                ),
            )
        }
        Err(_) => (
            Check::new(false, f64::INFINITY, "I − A_H is singular"),
            Check::new(false, 0.0, "I − A_H is singular"),
        ),
    };
    let kernel_condition = kernel_condition(sys, &rm.beta_blocks)?;
    Ok(Assumption2Report {
        a_h_schur,
        beta_full_rank,
        output_match,
        steady_state_match,
        gain_full_rank,
        kernel_condition,
    })
}
