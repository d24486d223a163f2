//! Fast decentralized regulators: auxiliary rollout, resampled difference models,
//! terminal-equality QPs and fast input reconstruction.

use serde::Serialize;

use crate::error::{dim_err, Error, Result};
use crate::linalg::{dlqr_gain, matrix_power_sum, require_schur, vec, Matrix};
use crate::plant::LargeScaleSystem;
use crate::qp::{self, QuadProgram, Status};
use crate::reduction::ReducedModel;
use crate::scalar::Real;
use crate::sets::AxisBox;
use crate::tuning::{Mismatch, Timing};

/// Per-subsystem LL cost weights; the LQ gains use `lq_q`/`lq_r` when given.
#[derive(Clone, Debug)]
pub struct LlWeights<T> {
    pub q: Vec<Matrix<T>>,
    pub r: Vec<Matrix<T>>,
    pub lq_q: Option<Vec<Matrix<T>>>,
    pub lq_r: Option<Vec<Matrix<T>>>,
}

impl<T: Real> LlWeights<T> {
    /// Identity weights for every subsystem.
    pub fn identity(sys: &LargeScaleSystem<T>) -> Self {
        LlWeights {
            q: sys
                .subsystems
                .iter()
                .map(|s| Matrix::identity(s.n()))
                .collect(),
            r: sys
                .subsystems
                .iter()
                .map(|s| Matrix::identity(s.m()))
                .collect(),
            lq_q: None,
            lq_r: None,
        }
    }
}

/// Decentralized gains `K = diag(K_i)` and `F_L = A_L + B_L K`.
#[derive(Clone, Debug, Serialize)]
pub struct LlGains<T> {
    pub k_blocks: Vec<Matrix<T>>,
    pub k: Matrix<T>,
    pub f_l: Matrix<T>,
}

/// `K_i` from independent LQ problems on `(A_ii, B_ii)`, then the collective Schur check.
pub fn ll_gains<T: Real>(sys: &LargeScaleSystem<T>, weights: &LlWeights<T>) -> Result<LlGains<T>> {
    let mm = sys.num_subsystems();
    let q = weights.lq_q.as_ref().unwrap_or(&weights.q);
    let r = weights.lq_r.as_ref().unwrap_or(&weights.r);
    if q.len() != mm || r.len() != mm {
        return Err(dim_err(
            "ll_gains",
            format!("{} / {} weights for {mm} subsystems", q.len(), r.len()),
        ));
    }
    let mut blocks = Vec::with_capacity(mm);
    for (i, s) in sys.subsystems.iter().enumerate() {
        let (k, _) = dlqr_gain(&s.a, &s.b, &q[i], &r[i])?;
        blocks.push(k);
    }
    gains_from_blocks(sys, blocks)
}

pub fn gains_from_blocks<T: Real>(
    sys: &LargeScaleSystem<T>,
    k_blocks: Vec<Matrix<T>>,
) -> Result<LlGains<T>> {
    for (i, (k, s)) in k_blocks.iter().zip(&sys.subsystems).enumerate() {
        if k.shape() != (s.m(), s.n()) {
            return Err(dim_err(
                "gains_from_blocks",
                format!("K_{i} is {:?}", k.shape()),
            ));
        }
    }
    let k = Matrix::block_diag(&k_blocks);
    let f_l = &sys.a_l + &sys.b_l.matmul(&k);
    require_schur(&f_l, "F_L = A_L + B_L K")?;
    Ok(LlGains { k_blocks, k, f_l })
}

/// Condensed resampled model of one subsystem over `N_i` steps.
#[derive(Clone, Debug, Serialize)]
pub struct SubsystemLl<T> {
    pub k: Matrix<T>,
    pub a_zeta: Matrix<T>,
    pub b_zeta: Matrix<T>,
    pub q: Matrix<T>,
    pub r: Matrix<T>,
    pub zeta: usize,
    pub n_i: usize,
    /// Half-width `ρ_δû_i/√m_i` of the correction box `Δ𝒰̂_i`.
    pub du_bound: T,
    pub du_box: AxisBox<T>,
    /// `β_i [A_ζ^{N_i−1}B_ζ, …, B_ζ]`, acting on `(δû(0), …, δû(N_i−1))`.
    pub terminal: Matrix<T>,
    /// `H` with cost `vᵀHv` over the stacked corrections.
    pub cost_hessian: Matrix<T>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LlDesign<T> {
    pub subsystems: Vec<SubsystemLl<T>>,
    pub k: Matrix<T>,
    pub f_l: Matrix<T>,
}

pub fn synthesize_ll<T: Real>(
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    gains: &LlGains<T>,
    timing: &Timing,
    weights: &LlWeights<T>,
    rho_delta_u: &[T],
) -> Result<LlDesign<T>> {
    let mm = sys.num_subsystems();
    if weights.q.len() != mm
        || weights.r.len() != mm
        || rho_delta_u.len() != mm
        || timing.zeta.len() != mm
    {
        return Err(dim_err(
            "synthesize_ll",
            format!("inputs are not sized for {mm} subsystems"),
        ));
    }
    let mut subsystems = Vec::with_capacity(mm);
    for (i, s) in sys.subsystems.iter().enumerate() {
        let (n, m) = (s.n(), s.m());
        let (zeta, n_i) = (timing.zeta[i], timing.n_i[i]);
        let (q, r) = (&weights.q[i], &weights.r[i]);
        if q.shape() != (n, n) || r.shape() != (m, m) {
            return Err(dim_err(
                "synthesize_ll",
                format!("Q_{i} {:?}, R_{i} {:?}", q.shape(), r.shape()),
            ));
        }
        let a_zeta = s.a.pow(zeta);
        let b_zeta = matrix_power_sum(&s.a, &s.b, zeta)?;
        let nv = n_i * m;
        // Γ_l maps the stacked corrections to the resampled state at step l.
        let mut gamma = Matrix::zeros(n, nv);
        let mut hessian = Matrix::block_diag(&vec![r.clone(); n_i]);
        for l in 0..n_i {
            hessian += &gamma.tr_matmul(&q.matmul(&gamma));
            let mut next = a_zeta.matmul(&gamma);
            let mut blk = next.block(0, l * m, n, m);
            blk += &b_zeta;
            next.set_block(0, l * m, &blk);
            gamma = next;
        }
        let terminal = rm.beta_blocks[i].matmul(&gamma);
        let du_bound = rho_delta_u[i] / T::from_count(m).sqrt();
        subsystems.push(SubsystemLl {
            k: gains.k_blocks[i].clone(),
            a_zeta,
            b_zeta,
            q: q.clone(),
            r: r.clone(),
            zeta,
            n_i,
            du_bound,
            du_box: AxisBox::from_radii(&vec![du_bound; m])?,
            terminal,
            cost_hessian: hessian.symmetrize(),
        });
    }
    Ok(LlDesign {
        subsystems,
        k: gains.k.clone(),
        f_l: gains.f_l.clone(),
    })
}

/// Coupled rollout of `x̂⁺ = A_L x̂ + B_L ū` from `x̂(0) = x`, returning `N_L + 1` states.
pub fn simulate_hat<T: Real>(
    sys: &LargeScaleSystem<T>,
    x: &[T],
    u_bar: &[T],
    n_l: usize,
) -> Result<Vec<Vec<T>>> {
    if x.len() != sys.n() || u_bar.len() != sys.m() {
        return Err(dim_err(
            "simulate_hat",
            format!("x of length {}, ū of length {}", x.len(), u_bar.len()),
        ));
    }
    let bu = sys.b_l.mul_vec(u_bar);
    let mut out = Vec::with_capacity(n_l + 1);
    out.push(x.to_vec());
    for j in 0..n_l {
        let next = vec::add(&sys.a_l.mul_vec(&out[j]), &bu);
        out.push(next);
    }
    Ok(out)
}

/// `x̄_i(k+1|k) − β_i x̂_i((k+1)N_L)` for each subsystem.
pub fn terminal_rhs<T: Real>(
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    x_bar_next: &[T],
    xhat_end: &[T],
) -> Vec<Vec<T>> {
    (0..sys.num_subsystems())
        .map(|i| {
            let xb = &x_bar_next[rm.reduced_range(i)];
            vec::sub(
                xb,
                &rm.beta_blocks[i].mul_vec(&xhat_end[sys.state_range(i)]),
            )
        })
        .collect()
}

/// The same right-hand side through the mismatch operators:
/// block `i` of `𝒜(N_L)(x − x_S) + ℬ(N_L)(ū − u_S)`.
pub fn terminal_rhs_operator<T: Real>(
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    mismatch: &Mismatch<T>,
    x: &[T],
    x_s: &[T],
    u_bar: &[T],
    u_s: &[T],
) -> Vec<Vec<T>> {
    let full = vec::add(
        &mismatch.a_mis.mul_vec(&vec::sub(x, x_s)),
        &mismatch.b_mis.mul_vec(&vec::sub(u_bar, u_s)),
    );
    (0..sys.num_subsystems())
        .map(|i| full[rm.reduced_range(i)].to_vec())
        .collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct LlSolution<T> {
    /// `N_i` resampled corrections `δû_i^{[ζ_i]}`.
    pub du_hat: Vec<Vec<T>>,
    pub status: Status,
    /// `Σ ‖δx̂‖²_Q + ‖δû‖²_R`.
    pub cost: T,
}

impl<T: Real> LlSolution<T> {
    pub fn feasible(&self) -> bool {
        self.status == Status::Optimal
    }
}

/// Least-cost corrections reaching `β_i δx̂_i(N_i) = rhs` inside `Δ𝒰̂_i`.
pub fn ll_solve<T: Real>(design: &LlDesign<T>, i: usize, rhs: &[T]) -> Result<LlSolution<T>> {
    let sub = design
        .subsystems
        .get(i)
        .ok_or_else(|| Error::Invalid(format!("subsystem index {i} out of range")))?;
    if rhs.len() != sub.terminal.rows() {
        return Err(dim_err(
            "ll_solve",
            format!(
                "rhs of length {} for n̄_i = {}",
                rhs.len(),
                sub.terminal.rows()
            ),
        ));
    }
    let nv = sub.terminal.cols();
    let m = sub.k.rows();
    let mut program = QuadProgram::new(sub.cost_hessian.scale(T::lit(2.0)), vec![T::zero(); nv])
        .with_eq(sub.terminal.clone(), rhs.to_vec());
    if sub.du_bound.is_finite() {
        let a = Matrix::vstack(&[&Matrix::identity(nv), &(-&Matrix::identity(nv))]);
        program = program.with_ineq(a, vec![sub.du_bound; 2 * nv]);
    }
    let sol = qp::solve(&program, T::lit(qp::DEFAULT_TOL))?;
    let x = if sol.is_optimal() {
        sol.x
    } else {
        vec![T::zero(); nv]
    };
    Ok(LlSolution {
        du_hat: x
            .chunks(m.max(1))
            .take(sub.n_i)
            .map(<[T]>::to_vec)
            .collect(),
        status: sol.status,
        cost: sol.objective,
    })
}

/// `δx̂_i` at the fast rate over one slow step (`N_L + 1` states from zero), holding each
/// resampled correction for `ζ_i` fast steps.
pub fn fast_difference_trajectory<T: Real>(
    sys: &LargeScaleSystem<T>,
    i: usize,
    zeta: usize,
    du_hat: &[Vec<T>],
    n_l: usize,
) -> Vec<Vec<T>> {
    let s = &sys.subsystems[i];
    let mut out = Vec::with_capacity(n_l + 1);
    out.push(vec![T::zero(); s.n()]);
    for j in 0..n_l {
        let next = vec::add(&s.a.mul_vec(&out[j]), &s.b.mul_vec(&du_hat[j / zeta]));
        out.push(next);
    }
    out
}

/// Everything the LL layer computes at a slow boundary.
#[derive(Clone, Debug, Serialize)]
pub struct SlowStepPlan<T> {
    pub xhat: Vec<Vec<T>>,
    pub rhs: Vec<Vec<T>>,
    pub solutions: Vec<LlSolution<T>>,
    /// `dxhat[i][j]`: `δx̂_i` at fast offset `j`.
    pub dxhat: Vec<Vec<Vec<T>>>,
}

impl<T: Real> SlowStepPlan<T> {
    pub fn feasible(&self) -> bool {
        self.solutions.iter().all(LlSolution::feasible)
    }

    /// `δû_i` at fast offset `j`.
    pub fn du_hat_at(&self, design: &LlDesign<T>, i: usize, j: usize) -> &[T] {
        &self.solutions[i].du_hat[j / design.subsystems[i].zeta]
    }
}

pub fn plan_slow_step<T: Real>(
    design: &LlDesign<T>,
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    x: &[T],
    u_bar: &[T],
    x_bar_next: &[T],
    n_l: usize,
) -> Result<SlowStepPlan<T>> {
    let xhat = simulate_hat(sys, x, u_bar, n_l)?;
    let rhs = terminal_rhs(sys, rm, x_bar_next, &xhat[n_l]);
    let mut solutions = Vec::with_capacity(rhs.len());
    let mut dxhat = Vec::with_capacity(rhs.len());
    for (i, r) in rhs.iter().enumerate() {
        let sol = ll_solve(design, i, r)?;
        dxhat.push(fast_difference_trajectory(
            sys,
            i,
            design.subsystems[i].zeta,
            &sol.du_hat,
            n_l,
        ));
        solutions.push(sol);
    }
    Ok(SlowStepPlan {
        xhat,
        rhs,
        solutions,
        dxhat,
    })
}

/// `δu_i = δû_i + K_i(δx_i − δx̂_i)` at fast offset `j` of the slow step.
pub fn reconstruct_fast<T: Real>(
    design: &LlDesign<T>,
    plan: &SlowStepPlan<T>,
    i: usize,
    j: usize,
    dx_i: &[T],
) -> Result<Vec<T>> {
    let n_l = plan.xhat.len() - 1;
    if j >= n_l {
        return Err(Error::Invalid(format!(
            "fast offset {j} is outside the slow step of length {n_l}"
        )));
    }
    let sub = &design.subsystems[i];
    let mismatch = vec::sub(dx_i, &plan.dxhat[i][j]);
    Ok(vec::add(
        plan.du_hat_at(design, i, j),
        &sub.k.mul_vec(&mismatch),
    ))
}
