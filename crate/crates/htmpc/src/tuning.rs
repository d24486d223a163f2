//! Offline tuning: mismatch operators, projected reachability, the input budget,
//! fast-state and disturbance bounds, feasibility radii and the small-gain constant.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Error, Result};
use crate::hl::{ancillary_gain, Ancillary};
use crate::linalg::{
    inverse, matrix_power_sum, min_singular_value, rank, reachability_matrix, require_schur,
    spectral_norm, Lu, Matrix,
};
use crate::ll::{synthesize_ll, LlDesign, LlGains, LlWeights};
use crate::plant::{Check, LargeScaleSystem, Subsystem, RANK_RTOL};
use crate::qp::{self, QuadProgram, Status};
use crate::reduction::ReducedModel;
use crate::scalar::Real;

pub const DEFAULT_GAMMA1: f64 = 1.0;
pub const DEFAULT_GAMMA2: f64 = 0.3;
/// Relative margin standing in for the strict budget inequality.
pub const BUDGET_MARGIN: f64 = 1e-6;
pub const SERIES_TAIL_TOL: f64 = 1e-10;
pub const SERIES_CAP: usize = 100_000;

/// Slow period `N_L`, HL horizon `N_H` and per-subsystem resampling `ζ_i`, `N_i = N_L/ζ_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Timing {
    pub n_l: usize,
    pub n_h: usize,
    pub zeta: Vec<usize>,
    pub n_i: Vec<usize>,
}

impl Timing {
    pub fn new(n_l: usize, n_h: usize, zeta: Vec<usize>) -> Result<Self> {
        if n_l == 0 || n_h == 0 {
            return Err(Error::Config(format!(
                "N_L and N_H must be at least 1 (got {n_l}, {n_h})"
            )));
        }
        let mut n_i = Vec::with_capacity(zeta.len());
        for (i, &z) in zeta.iter().enumerate() {
            if z == 0 || n_l % z != 0 {
                return Err(Error::Config(format!(
                    "zeta[{i}] = {z} does not divide N_L = {n_l} \
                     (fast index h = zeta_i * l_i = k * zeta_i * N_i = k * N_L requires N_L = zeta_i * N_i)"
                )));
            }
            n_i.push(n_l / z);
        }
        Ok(Timing {
            n_l,
            n_h,
            zeta,
            n_i,
        })
    }

    /// Same `N_L` for every subsystem (`ζ_i = 1`).
    pub fn uniform(n_l: usize, n_h: usize, subsystems: usize) -> Result<Self> {
        Self::new(n_l, n_h, vec![1; subsystems])
    }
}

/// Admissible deviation `u_i − u_S,i` of one subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputLimit<T> {
    /// `‖u_i − u_S,i‖₂ ≤ r`.
    Ball(T),
    /// `‖u_i − u_S,i‖_∞ ≤ a`.
    InfNorm(T),
}

impl<T: Real> InputLimit<T> {
    /// Radius `ρ_u_i` of the largest centered ball inside the set.
    pub fn inscribed_radius(&self) -> T {
        match *self {
            InputLimit::Ball(r) | InputLimit::InfNorm(r) => r,
        }
    }

    /// Radius of the smallest centered ball containing the set in dimension `m`.
    pub fn circumradius(&self, m: usize) -> T {
        match *self {
            InputLimit::Ball(r) => r,
            InputLimit::InfNorm(a) => a * T::from_count(m).sqrt(),
        }
    }

    /// Signed distance of `du` to the boundary in the set's own norm (negative outside).
    pub fn margin(&self, du: &[T]) -> T {
        match *self {
            InputLimit::Ball(r) => r - crate::linalg::vec::norm2(du),
            InputLimit::InfNorm(a) => a - crate::linalg::vec::norm_inf(du),
        }
    }
}

/// `𝒜(N_L) = A_H^{N_L}β − βA_L^{N_L}`, `ℬ(N_L) = B_H^{[N_L]} − βB_L^{[N_L]}`, `κ = ‖ℬ‖`.
#[derive(Clone, Debug, Serialize)]
pub struct Mismatch<T> {
    pub a_mis: Matrix<T>,
    pub b_mis: Matrix<T>,
    pub kappa: T,
}

pub fn mismatch_operators<T: Real>(
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    n_l: usize,
) -> Result<Mismatch<T>> {
    if rm.beta.cols() != sys.n() || rm.b_h.cols() != sys.m() {
        return Err(dim_err(
            "mismatch_operators",
            format!(
                "β {:?}, B_H {:?} for n = {}, m = {}",
                rm.beta.shape(),
                rm.b_h.shape(),
                sys.n(),
                sys.m()
            ),
        ));
    }
    let a_mis = &rm.a_h.pow(n_l).matmul(&rm.beta) - &rm.beta.matmul(&sys.a_l.pow(n_l));
    let b_mis = &matrix_power_sum(&rm.a_h, &rm.b_h, n_l)?
        - &rm.beta.matmul(&matrix_power_sum(&sys.a_l, &sys.b_l, n_l)?);
    let kappa = spectral_norm(&b_mis);
    Ok(Mismatch {
        a_mis,
        b_mis,
        kappa,
    })
}

/// `ℋ_i = β_i [B^{[ζ]}, A^ζ B^{[ζ]}, …, A^{ζ(N_i−1)} B^{[ζ]}]` and its smallest singular value.
///
/// Block `r` multiplies the input applied `r` resampled steps before the end of the horizon.
#[derive(Clone, Debug, Serialize)]
pub struct ReachProjection<T> {
    pub h: Matrix<T>,
    pub sigma_min: T,
    pub full_rank: bool,
}

pub fn reach_projection<T: Real>(
    sub: &Subsystem<T>,
    beta_i: &Matrix<T>,
    zeta: usize,
    n_i: usize,
) -> Result<ReachProjection<T>> {
    if beta_i.cols() != sub.n() {
        return Err(dim_err(
            "reach_projection",
            format!("β_i {:?} for n_i = {}", beta_i.shape(), sub.n()),
        ));
    }
    let a_z = sub.a.pow(zeta);
    let b_z = matrix_power_sum(&sub.a, &sub.b, zeta)?;
    let h = beta_i.matmul(&reachability_matrix(&a_z, &b_z, n_i));
    let full_rank = rank(&h, Some(T::lit(RANK_RTOL))) == h.rows();
    let sigma_min = if full_rank {
        min_singular_value(&h)
    } else {
        T::zero()
    };
    Ok(ReachProjection {
        h,
        sigma_min,
        full_rank,
    })
}

/// `g(q) = Σ_{t<q} ‖A^t B‖` for `q = 0..=len`.
fn partial_gain_sums<T: Real>(a: &Matrix<T>, b: &Matrix<T>, len: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(len + 1);
    out.push(T::zero());
    let mut cur = b.clone();
    for q in 1..=len {
        out.push(out[q - 1] + spectral_norm(&cur));
        cur = a.matmul(&cur);
    }
    out
}

/// `F_L^q (A_L − A_L^D)` for `q = 0..=n_l`.
fn propagated_coupling<T: Real>(
    sys: &LargeScaleSystem<T>,
    f_l: &Matrix<T>,
    n_l: usize,
) -> Vec<Matrix<T>> {
    let mut out = Vec::with_capacity(n_l + 1);
    let mut cur = sys.coupling_part();
    for _ in 0..=n_l {
        let next = f_l.matmul(&cur);
        out.push(cur);
        cur = next;
    }
    out
}

/// `λ_ij = Σ_{r=2}^{N_L−1} ‖K_i I_si F_L^{N_L−r−1}(A_L − A_L^D)‖ Σ_{k=1}^{r−1} ‖A_jj^{r−1−k} B_jj‖`.
pub fn lambda_matrix<T: Real>(
    sys: &LargeScaleSystem<T>,
    k: &Matrix<T>,
    f_l: &Matrix<T>,
    n_l: usize,
) -> Matrix<T> {
    let mm = sys.num_subsystems();
    let prop = propagated_coupling(sys, f_l, n_l);
    let sums: Vec<Vec<T>> = sys
        .subsystems
        .iter()
        .map(|s| partial_gain_sums(&s.a, &s.b, n_l))
        .collect();
    Matrix::from_fn(mm, mm, |i, j| {
        let rows: Vec<usize> = sys.input_range(i).collect();
        let ki = k.select_rows(&rows);
        (2..n_l)
            .map(|r| spectral_norm(&ki.matmul(&prop[n_l - r - 1])) * sums[j][r - 1])
            .sum()
    })
}

/// Bounds on the decentralized fast difference states and on the slow disturbance.
#[derive(Clone, Debug, Serialize)]
pub struct FastStateBounds<T> {
    /// `ρ_δx̂_i(j)` for `j = 0..=N_L`, one row per subsystem.
    pub per_subsystem: Vec<Vec<T>>,
    /// `ρ_δx̂(j) = √Σ_i ρ_δx̂_i(j)²`.
    pub collective: Vec<T>,
    pub rho_w: T,
}

pub fn fast_state_bounds<T: Real>(
    sys: &LargeScaleSystem<T>,
    beta: &Matrix<T>,
    f_l: &Matrix<T>,
    rho_delta_u: &[T],
    n_l: usize,
) -> Result<FastStateBounds<T>> {
    if rho_delta_u.len() != sys.num_subsystems() {
        return Err(dim_err(
            "fast_state_bounds",
            format!(
                "{} radii for {} subsystems",
                rho_delta_u.len(),
                sys.num_subsystems()
            ),
        ));
    }
    let per_subsystem: Vec<Vec<T>> = sys
        .subsystems
        .iter()
        .zip(rho_delta_u)
        .map(|(s, &rho)| {
            partial_gain_sums(&s.a, &s.b, n_l)
                .into_iter()
                .map(|g| rho * g)
                .collect()
        })
        .collect();
    let collective: Vec<T> = (0..=n_l)
        .map(|j| {
            per_subsystem
                .iter()
                .map(|row| row[j] * row[j])
                .sum::<T>()
                .sqrt()
        })
        .collect();
    let prop = propagated_coupling(sys, f_l, n_l);
    let rho_w = (2..=n_l)
        .map(|j| spectral_norm(&beta.matmul(&prop[n_l - j])) * collective[j - 1])
        .sum();
    Ok(FastStateBounds {
        per_subsystem,
        collective,
        rho_w,
    })
}

/// Input budget: `ρ_δû_i` for the LL corrections and `ρ_ū_i` for the HL inputs.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Budget<T> {
    pub rho_delta_u: Vec<T>,
    pub rho_u_bar: Vec<T>,
    pub rho_u: Vec<T>,
    pub rho_u_bar_total: T,
    pub varrho_u: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetWeights {
    #[serde(default = "default_gamma1")]
    pub gamma1: f64,
    #[serde(default = "default_gamma2")]
    pub gamma2: f64,
}

fn default_gamma1() -> f64 {
    DEFAULT_GAMMA1
}

fn default_gamma2() -> f64 {
    DEFAULT_GAMMA2
}

impl Default for BudgetWeights {
    fn default() -> Self {
        BudgetWeights {
            gamma1: DEFAULT_GAMMA1,
            gamma2: DEFAULT_GAMMA2,
        }
    }
}

/// Coefficients `c_i = κ/(√N_i σ̲_i)` of the dominance constraint `ρ_δû_i ≥ c_i Σ_j ρ_ū_j`.
fn dominance_coefficients<T: Real>(kappa: T, sigma_mins: &[T], n_i: &[usize]) -> Option<Vec<T>> {
    sigma_mins
        .iter()
        .zip(n_i)
        .map(|(&s, &n)| {
            if kappa == T::zero() {
                Some(T::zero())
            } else if s > T::zero() {
                Some(kappa / (T::from_count(n).sqrt() * s))
            } else {
                None
            }
        })
        .collect()
}

/// Maximizes `γ₁ 1ᵀρ_δû − ‖ρ_ū − γ₂ρ_u‖²` subject to
/// `ρ_δû_i ≥ κ/(√N_i σ̲_i) Σ_j ρ_ū_j + margin`, `(Λ + I)ρ_δû + ρ_ū ≤ ρ_u` and `ρ ≥ 0`.
pub fn solve_budget_lp<T: Real>(
    rho_u: &[T],
    varrho_u: T,
    lambda: &Matrix<T>,
    kappa: T,
    sigma_mins: &[T],
    n_i: &[usize],
    weights: BudgetWeights,
) -> Result<Budget<T>> {
    let mm = rho_u.len();
    if lambda.shape() != (mm, mm) || sigma_mins.len() != mm || n_i.len() != mm {
        return Err(dim_err(
            "solve_budget_lp",
            format!(
                "{mm} limits, Λ {:?}, {} σ̲, {} N_i",
                lambda.shape(),
                sigma_mins.len(),
                n_i.len()
            ),
        ));
    }
    if rho_u.iter().any(|&r| !(r > T::zero())) {
        return Err(Error::Invalid("input limits must be positive".into()));
    }
    let infeasible = || {
        Error::Infeasible(format!(
            "input budget: κ = {kappa:e} is too large for the available input limits; increase N_L"
        ))
    };
    let c = dominance_coefficients(kappa, sigma_mins, n_i).ok_or_else(infeasible)?;
    let scale = rho_u.iter().copied().fold(T::zero(), T::max);
    let margin = T::lit(BUDGET_MARGIN) * scale;
    let (g1, g2) = (T::lit(weights.gamma1), T::lit(weights.gamma2));

    let n = 2 * mm;
    let h = Matrix::from_fn(n, n, |i, j| {
        if i == j && i >= mm {
            T::lit(2.0)
        } else {
            T::zero()
        }
    });
    let mut g = vec![-g1; mm];
    g.extend(rho_u.iter().map(|&r| -T::lit(2.0) * g2 * r));

    let mut a = Matrix::zeros(2 * mm + n, n);
    let mut b = vec![T::zero(); 2 * mm + n];
    for i in 0..mm {
        a[(i, i)] = -T::one();
        for j in 0..mm {
            a[(i, mm + j)] = c[i];
        }
        b[i] = -margin;
        let row = mm + i;
        for j in 0..mm {
            a[(row, j)] = lambda[(i, j)] + if i == j { T::one() } else { T::zero() };
        }
        a[(row, mm + i)] = T::one();
        b[row] = rho_u[i];
    }
    for v in 0..n {
        a[(2 * mm + v, v)] = -T::one();
    }

    let program = QuadProgram::new(h, g).with_ineq(a, b);
    let sol = qp::solve(&program, T::lit(qp::DEFAULT_TOL))?;
    match sol.status {
        Status::Optimal => {}
        Status::Infeasible => return Err(infeasible()),
        other => {
            return Err(Error::Tuning(format!(
                "input budget solver ended with status {other:?}"
            )))
        }
    }
    let rho_delta_u: Vec<T> = sol.x[..mm].iter().map(|v| v.max(T::zero())).collect();
    let rho_u_bar: Vec<T> = sol.x[mm..].iter().map(|v| v.max(T::zero())).collect();
    let rho_u_bar_total = rho_u_bar.iter().map(|v| *v * *v).sum::<T>().sqrt();
    Ok(Budget {
        rho_delta_u,
        rho_u_bar,
        rho_u: rho_u.to_vec(),
        rho_u_bar_total,
        varrho_u,
    })
}

/// Worst violations of the two budget constraint families at a candidate budget:
/// `(min_i ρ_δû_i − c_i Σρ_ū, max_i ((Λ+I)ρ_δû + ρ_ū − ρ_u)_i)`.
pub fn budget_residuals<T: Real>(
    budget: &Budget<T>,
    lambda: &Matrix<T>,
    kappa: T,
    sigma_mins: &[T],
    n_i: &[usize],
) -> (T, T) {
    let mm = budget.rho_u.len();
    let total: T = budget.rho_u_bar.iter().copied().sum();
    let c = dominance_coefficients(kappa, sigma_mins, n_i);
    let dominance = (0..mm)
        .map(|i| match &c {
            Some(c) => budget.rho_delta_u[i] - c[i] * total,
            None => T::neg_infinity(),
        })
        .fold(T::infinity(), T::min);
    let excess = (0..mm)
        .map(|i| {
            let coupled: T = (0..mm)
                .map(|j| lambda[(i, j)] * budget.rho_delta_u[j])
                .sum();
            coupled + budget.rho_delta_u[i] + budget.rho_u_bar[i] - budget.rho_u[i]
        })
        .fold(T::neg_infinity(), T::max);
    (dominance, excess)
}

fn inclusion_holds<T: Real>(margin: T, rho_u: T) -> bool {
    margin >= -T::from_count(64) * T::epsilon() * rho_u
}

/// `ρ_Δu_i(j)` for `j = 0..N_L−1`, the radii of `Δ𝒰̄_i`, and the inclusion margins.
#[derive(Clone, Debug, Serialize)]
pub struct DeltaUSets<T> {
    pub rho_du: Vec<Vec<T>>,
    /// `ρ_δû_i + ρ_Δu_i(N_L − 1)`.
    pub bar_radius: Vec<T>,
    /// `ρ_u_i − ρ_ū_i − bar_radius_i`.
    pub margin: Vec<T>,
}

impl<T: Real> DeltaUSets<T> {
    /// Inclusion up to rounding in the budget LP, which may leave the margin exactly at zero.
    pub fn included(&self, budget: &Budget<T>) -> bool {
        self.margin
            .iter()
            .zip(&budget.rho_u)
            .all(|(&m, &r)| inclusion_holds(m, r))
    }

    /// Radius of `Δ𝒰_i(j)`.
    pub fn radius(&self, budget: &Budget<T>, i: usize, j: usize) -> T {
        budget.rho_delta_u[i] + self.rho_du[i][j]
    }
}

pub fn delta_u_sets<T: Real>(
    sys: &LargeScaleSystem<T>,
    k: &Matrix<T>,
    f_l: &Matrix<T>,
    bounds: &FastStateBounds<T>,
    budget: &Budget<T>,
    n_l: usize,
) -> DeltaUSets<T> {
    let prop = propagated_coupling(sys, f_l, n_l);
    let mm = sys.num_subsystems();
    let mut rho_du = Vec::with_capacity(mm);
    let mut bar_radius = Vec::with_capacity(mm);
    let mut margin = Vec::with_capacity(mm);
    for i in 0..mm {
        let rows: Vec<usize> = sys.input_range(i).collect();
        let ki = k.select_rows(&rows);
        let gains: Vec<T> = (0..n_l)
            .map(|q| spectral_norm(&ki.matmul(&prop[q])))
            .collect();
        let row: Vec<T> = (0..n_l)
            .map(|j| {
                (2..=j)
                    .map(|r| gains[j - r] * bounds.collective[r - 1])
                    .sum()
            })
            .collect();
        let bar = budget.rho_delta_u[i] + row.last().copied().unwrap_or_else(T::zero);
        bar_radius.push(bar);
        margin.push(budget.rho_u[i] - budget.rho_u_bar[i] - bar);
        rho_du.push(row);
    }
    DeltaUSets {
        rho_du,
        bar_radius,
        margin,
    }
}

/// `χ_i` and the feasibility radii `λ_i` (`None` when `𝒜(N_L) = 0`).
#[derive(Clone, Debug, Serialize)]
pub struct FeasibilityConstants<T> {
    pub chi: Vec<T>,
    pub lambda: Vec<Option<T>>,
    pub a_l_power_norm: T,
    pub reach_norm: T,
    pub a_mis_norm: T,
}

pub fn chi_and_lambda<T: Real>(
    sys: &LargeScaleSystem<T>,
    mismatch: &Mismatch<T>,
    sigma_mins: &[T],
    timing: &Timing,
    budget: &Budget<T>,
) -> Result<FeasibilityConstants<T>> {
    let n_l = timing.n_l;
    let a_l_power_norm = spectral_norm(&sys.a_l.pow(n_l));
    if !(a_l_power_norm < T::one()) {
        return Err(Error::Tuning(format!(
            "‖A_L^N_L‖ = {a_l_power_norm} is not below 1"
        )));
    }
    let reach_norm = spectral_norm(&reachability_matrix(&sys.a_l, &sys.b_l, n_l));
    let a_mis_norm = spectral_norm(&mismatch.a_mis);
    let negligible = T::epsilon() * T::lit(64.0) * (T::one() + spectral_norm(&sys.a_l.pow(n_l)));
    let mut chi = Vec::with_capacity(sigma_mins.len());
    let mut lambda = Vec::with_capacity(sigma_mins.len());
    for (i, &s) in sigma_mins.iter().enumerate() {
        let den = T::from_count(timing.n_i[i]).sqrt() * s * budget.rho_delta_u[i]
            - mismatch.kappa * budget.rho_u_bar_total;
        if !(den > T::zero()) {
            return Err(Error::Tuning(format!(
                "subsystem {i}: √N_i σ̲ ρ_δû_i − κ ρ_ū = {den:e} is not positive; \
                 the LL input budget does not dominate the model mismatch"
            )));
        }
        let num = T::from_count(n_l).sqrt() * budget.varrho_u * reach_norm * a_mis_norm;
        chi.push(num / ((T::one() - a_l_power_norm) * den));
        lambda.push((a_mis_norm > negligible).then(|| den / a_mis_norm));
    }
    Ok(FeasibilityConstants {
        chi,
        lambda,
        a_l_power_norm,
        reach_norm,
        a_mis_norm,
    })
}

/// Constants of the small-gain argument and the convergence radius `ρ_x`.
#[derive(Clone, Debug, Serialize)]
pub struct SmallGain<T> {
    pub kappa_u: T,
    pub kappa_bar: T,
    pub kappa_x: T,
    pub kappa_du: T,
    /// `Σ_{k≥0} ‖(F_L^{[N_L]})^k‖`, including the tail bound.
    pub series: T,
    pub sigma: T,
    pub rho_x: T,
    /// `F_L^{[N_L]} = A_L^{N_L} + B_L^{[N_L]} K̄_H β`.
    pub f_l_nl: Matrix<T>,
}

/// Upper bound of `Σ_{k≥0} ‖F^k‖` accurate to [`SERIES_TAIL_TOL`].
pub fn powered_norm_series<T: Real>(f: &Matrix<T>) -> Result<T> {
    require_schur(f, "powered_norm_series")?;
    let cap_err = Error::NoConvergence {
        what: "powered-norm series",
        iterations: SERIES_CAP,
    };
    let mut norms = vec![T::one()];
    let mut power = Matrix::identity(f.rows());
    let half = T::lit(0.5);
    let (period, q) = loop {
        power = f.matmul(&power);
        let nrm = spectral_norm(&power);
        norms.push(nrm);
        if nrm <= half {
            break (norms.len() - 1, nrm);
        }
        if norms.len() > SERIES_CAP {
            return Err(cap_err);
        }
    };
    let tol = T::lit(SERIES_TAIL_TOL);
    let mut sum: T = norms.iter().copied().sum();
    loop {
        let k = norms.len();
        let window: T = norms[k - period..].iter().copied().sum();
        let tail = window * q / (T::one() - q);
        if tail < tol {
            return Ok(sum + tail);
        }
        if k > SERIES_CAP {
            return Err(cap_err);
        }
        power = f.matmul(&power);
        let nrm = spectral_norm(&power);
        sum += nrm;
        norms.push(nrm);
    }
}

/// `σ(N_L) = κ_u κ̄ ‖𝓑^C‖ ‖𝒜 + ℬK̄_Hβ‖ Σ_k ‖(F_L^{[N_L]})^k‖` and `ρ_x = κ_δu √N_L ‖ρ_δû‖`.
///
/// `κ̄` is the norm of the unconstrained least-cost map from the terminal right-hand
/// side to the fast-rate LL correction sequence.
pub fn small_gain_sigma<T: Real>(
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    mismatch: &Mismatch<T>,
    k_bar_h: &Matrix<T>,
    ll: &LlDesign<T>,
    n_l: usize,
    rho_delta_u: &[T],
) -> Result<SmallGain<T>> {
    let (n, m) = (sys.n(), sys.m());
    let b = &sys.b_l;
    let a_c = sys.coupling_part();

    let mut b_c = Matrix::zeros(n, n_l * m);
    let mut cur = b.clone();
    for blk in (0..n_l).rev() {
        b_c.set_block(0, blk * m, &cur);
        cur = sys.a_l.matmul(&cur);
    }

    // Block (a, b) of I + diag(K) ℱ diag(A_C) 𝓑_L, built column by column through
    // δx̂(c) = A_D^{c−1−b} B and ε(a+1) = F_L ε(a) + A_C δx̂(a).
    let mut u_map = Matrix::identity(n_l * m);
    for col in 0..n_l {
        let mut dxhat = Matrix::zeros(n, m);
        let mut eps = Matrix::zeros(n, m);
        for a in 0..n_l {
            if a > col {
                u_map.set_block(a * m, col * m, &ll.k.matmul(&eps));
            }
            let next_eps = &ll.f_l.matmul(&eps) + &a_c.matmul(&dxhat);
            dxhat = if a == col {
                b.clone()
            } else {
                sys.a_l_d.matmul(&dxhat)
            };
            eps = next_eps;
        }
    }
    let kappa_u = spectral_norm(&u_map);
    let kappa_du = spectral_norm(&b_c.matmul(&u_map));

    let mut kappa_bar = T::zero();
    for (i, sub) in ll.subsystems.iter().enumerate() {
        let hinv = inverse(&sub.cost_hessian)
            .map_err(|_| Error::Singular("small_gain_sigma: LL cost Hessian"))?;
        let ht = hinv.matmul(&sub.terminal.transpose());
        let gram = sub.terminal.matmul(&ht);
        let lu = Lu::factor(&gram).map_err(|_| {
            Error::Tuning(format!(
                "subsystem {i}: projected reachability matrix is rank deficient"
            ))
        })?;
        let map = lu.solve(&ht.transpose()).transpose();
        kappa_bar = kappa_bar.max(T::from_count(sub.zeta).sqrt() * spectral_norm(&map));
    }

    let closed = &mismatch.a_mis + &mismatch.b_mis.matmul(k_bar_h).matmul(&rm.beta);
    let kappa_x = kappa_u * kappa_bar * spectral_norm(&b_c) * spectral_norm(&closed);
    let f_l_nl = &sys.a_l.pow(n_l)
        + &matrix_power_sum(&sys.a_l, b, n_l)?
            .matmul(k_bar_h)
            .matmul(&rm.beta);
    let series = powered_norm_series(&f_l_nl)?;
    let rho_x = kappa_du
        * T::from_count(n_l).sqrt()
        * rho_delta_u.iter().map(|v| *v * *v).sum::<T>().sqrt();
    Ok(SmallGain {
        kappa_u,
        kappa_bar,
        kappa_x,
        kappa_du,
        series,
        sigma: kappa_x * series,
        rho_x,
        f_l_nl,
    })
}

/// Everything the tuning stage needs besides the plant and the reduced model.
#[derive(Clone, Debug)]
pub struct TuningInputs<'a, T> {
    pub timing: &'a Timing,
    pub limits: &'a [InputLimit<T>],
    pub ll_weights: &'a LlWeights<T>,
    pub q_h: &'a Matrix<T>,
    pub r_h: &'a Matrix<T>,
    pub budget_weights: BudgetWeights,
}

/// Pass flags with witnesses for each standing tuning condition.
#[derive(Clone, Debug, Serialize)]
pub struct TuningChecks {
    /// `‖A_L^{N_L}‖ < 1`.
    pub a_l_power: Check,
    /// `σ̲(ℋ_i) > 0`.
    pub projected_rank: Vec<Check>,
    /// `√N_i σ̲_i ρ_δû_i > κ ρ_ū`.
    pub dominance: Vec<Check>,
    /// `χ_i ≤ 1`.
    pub chi: Vec<Check>,
    /// `𝒰̄_S ⊕ ∏Δ𝒰̄_i ⊆ 𝒰_S`.
    pub inclusion: Vec<Check>,
    /// `Δ𝒰̂_i` is realized as an inscribed box; it equals the ball only for scalar inputs.
    pub ball_box: Vec<Check>,
}

impl TuningChecks {
    pub fn passed(&self) -> bool {
        self.a_l_power.pass
            && [
                &self.projected_rank,
                &self.dominance,
                &self.chi,
                &self.inclusion,
            ]
            .iter()
            .all(|v| v.iter().all(|c| c.pass))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TuningReport<T> {
    pub n_l: usize,
    pub kappa: T,
    pub a_mis: Matrix<T>,
    pub b_mis: Matrix<T>,
    pub h_i: Vec<Matrix<T>>,
    pub sigma_min_h: Vec<T>,
    pub chi: Vec<T>,
    pub lambda_feas: Vec<Option<T>>,
    pub lambda: Matrix<T>,
    pub rho_dxhat: Vec<Vec<T>>,
    pub rho_dxhat_total: Vec<T>,
    pub rho_du: Vec<Vec<T>>,
    pub du_bar_radius: Vec<T>,
    pub rho_w: T,
    pub sigma_nl: T,
    pub small_gain: SmallGain<T>,
    pub budget: Budget<T>,
    pub checks: TuningChecks,
    pub passed: bool,
    pub caveats: Vec<String>,
}

/// Result of the tuning stage, with the LL design and HL gain it was computed for.
#[derive(Clone, Debug)]
pub struct Tuned<T> {
    pub report: TuningReport<T>,
    pub ll: LlDesign<T>,
    pub ancillary: Ancillary<T>,
    pub mismatch: Mismatch<T>,
}

/// Runs the whole tuning chain for one `N_L`.
pub fn assumption3_report<T: Real>(
    sys: &LargeScaleSystem<T>,
    rm: &ReducedModel<T>,
    gains: &LlGains<T>,
    inputs: &TuningInputs<'_, T>,
) -> Result<Tuned<T>> {
    let timing = inputs.timing;
    let mm = sys.num_subsystems();
    if inputs.limits.len() != mm || timing.zeta.len() != mm || rm.beta_blocks.len() != mm {
        return Err(dim_err(
            "assumption3_report",
            format!(
                "{mm} subsystems with {} limits, {} resampling factors, {} projections",
                inputs.limits.len(),
                timing.zeta.len(),
                rm.beta_blocks.len()
            ),
        ));
    }
    let n_l = timing.n_l;
    let mismatch = mismatch_operators(sys, rm, n_l)?;
    let mut projections = Vec::with_capacity(mm);
    for i in 0..mm {
        projections.push(reach_projection(
            &sys.subsystems[i],
            &rm.beta_blocks[i],
            timing.zeta[i],
            timing.n_i[i],
        )?);
    }
    let sigma_mins: Vec<T> = projections.iter().map(|p| p.sigma_min).collect();
    let lambda = lambda_matrix(sys, &gains.k, &gains.f_l, n_l);
    let rho_u: Vec<T> = inputs
        .limits
        .iter()
        .map(InputLimit::inscribed_radius)
        .collect();
    let varrho_u = inputs
        .limits
        .iter()
        .zip(&sys.subsystems)
        .map(|(l, s)| {
            let r = l.circumradius(s.m());
            r * r
        })
        .sum::<T>()
        .sqrt();
    let budget = solve_budget_lp(
        &rho_u,
        varrho_u,
        &lambda,
        mismatch.kappa,
        &sigma_mins,
        &timing.n_i,
        inputs.budget_weights,
    )?;
    let bounds = fast_state_bounds(sys, &rm.beta, &gains.f_l, &budget.rho_delta_u, n_l)?;
    let du_sets = delta_u_sets(sys, &gains.k, &gains.f_l, &bounds, &budget, n_l);
    let feas = chi_and_lambda(sys, &mismatch, &sigma_mins, timing, &budget)?;
    let ll = synthesize_ll(
        sys,
        rm,
        gains,
        timing,
        inputs.ll_weights,
        &budget.rho_delta_u,
    )?;
    let ancillary = ancillary_gain(rm, sys, n_l, inputs.q_h, inputs.r_h)?;
    let small_gain = small_gain_sigma(
        sys,
        rm,
        &mismatch,
        &ancillary.k,
        &ll,
        n_l,
        &budget.rho_delta_u,
    )?;

    let checks = TuningChecks {
        a_l_power: Check::new(
            feas.a_l_power_norm < T::one(),
            feas.a_l_power_norm.as_f64(),
            "‖A_L^N_L‖ < 1",
        ),
        projected_rank: projections
            .iter()
            .map(|p| {
                Check::new(
                    p.full_rank && p.sigma_min > T::zero(),
                    p.sigma_min.as_f64(),
                    "σ̲(ℋ_i) > 0",
                )
            })
            .collect(),
        dominance: (0..mm)
            .map(|i| {
                let slack =
                    T::from_count(timing.n_i[i]).sqrt() * sigma_mins[i] * budget.rho_delta_u[i]
                        - mismatch.kappa * budget.rho_u_bar_total;
                Check::new(
                    slack > T::zero(),
                    slack.as_f64(),
                    "√N_i σ̲_i ρ_δû_i − κ ρ_ū > 0",
                )
            })
            .collect(),
        chi: feas
            .chi
            .iter()
            .map(|&c| Check::new(c <= T::one(), c.as_f64(), "χ_i ≤ 1"))
            .collect(),
        inclusion: du_sets
            .margin
            .iter()
            .zip(&budget.rho_u)
            .map(|(&m, &r)| {
                Check::new(
                    inclusion_holds(m, r),
                    m.as_f64(),
                    "ρ_u_i − ρ_ū_i − ρ_δû_i − ρ_Δu_i(N_L−1) ≥ 0",
                )
            })
            .collect(),
        ball_box: sys
            .subsystems
            .iter()
            .map(|s| {
                Check::new(
                    s.m() == 1,
                    s.m() as f64,
                    "LL correction box ±ρ_δû_i/√m_i coincides with the ball only when m_i = 1",
                )
            })
            .collect(),
    };
    let passed = checks.passed();
    let mut caveats = vec![
        "κ̄ uses the unconstrained least-cost map only; the constrained branch has no constructive bound".to_string(),
    ];
    if checks.ball_box.iter().any(|c| !c.pass) {
        caveats.push("some LL correction boxes are strictly inside their budget balls".to_string());
    }
    let report = TuningReport {
        n_l,
        kappa: mismatch.kappa,
        a_mis: mismatch.a_mis.clone(),
        b_mis: mismatch.b_mis.clone(),
        h_i: projections.into_iter().map(|p| p.h).collect(),
        sigma_min_h: sigma_mins,
        chi: feas.chi,
        lambda_feas: feas.lambda,
        lambda,
        rho_dxhat: bounds.per_subsystem,
        rho_dxhat_total: bounds.collective,
        rho_du: du_sets.rho_du,
        du_bar_radius: du_sets.bar_radius,
        rho_w: bounds.rho_w,
        sigma_nl: small_gain.sigma,
        small_gain,
        budget,
        checks,
        passed,
        caveats,
    };
    Ok(Tuned {
        report,
        ll,
        ancillary,
        mismatch,
    })
}
