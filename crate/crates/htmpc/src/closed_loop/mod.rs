//! The online two-layer loop, runtime verification of the closed-loop guarantees,
//! scenario configuration and trace persistence.

mod config;
mod emit;
mod verify;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::hl::{hl_step, synthesize_hl, HlDesign, HlSpec, HlState};
use crate::linalg::{spectral_norm, vec, Matrix};
use crate::ll::{ll_gains, plan_slow_step, reconstruct_fast, terminal_rhs_operator};
use crate::plant::{
    steady_state_from_output, validate_assumption1, Assumption1Report, ReferenceTriple,
};
use crate::reduction::{validate_assumption2, Assumption2Report};
use crate::scalar::Real;
use crate::tuning::{assumption3_report, Tuned, TuningInputs};

pub use config::{
    load_config, parse_config, AhChoice, CouplingConfig, Problem, ReductionConfig, ReferenceEntry,
    Rows, ScenarioConfig, SubsystemConfig, TimingConfig, Tolerances, WeightsConfig,
};
pub use emit::{
    emit, load_trace, Table, TraceFiles, CONFIG_FILE, REPORT_FILE, SLOW_FILE, TRACE_FILE,
};
pub use verify::{verify_trace, ClaimResult, ClaimStatus, Verdict};

/// Offline results shared by every reference of a run.
#[derive(Clone, Debug)]
pub struct Prepared<T> {
    pub assumption1: Assumption1Report,
    pub assumption2: Assumption2Report,
    pub tuned: Tuned<T>,
}

/// Standing-assumption checks and the tuning chain. Fails when any check fails,
/// unless the problem overrides tuning.
pub fn prepare<T: Real>(problem: &Problem<T>) -> Result<Prepared<T>> {
    let assumption1 = validate_assumption1(&problem.sys);
    let assumption2 = validate_assumption2(&problem.rm, &problem.sys)?;
    let gains = ll_gains(&problem.sys, &problem.ll_weights)?;
    let inputs = TuningInputs {
        timing: &problem.timing,
        limits: &problem.limits,
        ll_weights: &problem.ll_weights,
        q_h: &problem.q_h,
        r_h: &problem.r_h,
        budget_weights: problem.budget_weights,
    };
    let tuned = assumption3_report(&problem.sys, &problem.rm, &gains, &inputs)?;
    if !problem.override_tuning {
        if !assumption1.passed() {
            return Err(Error::Tuning("plant assumption checks failed".into()));
        }
        if !assumption2.passed() {
            return Err(Error::Tuning(
                "reduced-model assumption checks failed".into(),
            ));
        }
        if !tuned.report.passed {
            return Err(Error::Tuning("tuning report failed".into()));
        }
    }
    Ok(Prepared {
        assumption1,
        assumption2,
        tuned,
    })
}

/// HL design centered at the steady state of `y_s`.
pub fn design_for_reference<T: Real>(
    problem: &Problem<T>,
    prepared: &Prepared<T>,
    y_s: &[T],
) -> Result<(ReferenceTriple<T>, HlDesign<T>)> {
    let triple = steady_state_from_output(&problem.sys, y_s)?;
    let x_bar_s = problem.rm.project(&triple.x_s);
    let sizes: Vec<usize> = problem.sys.subsystems.iter().map(|s| s.m()).collect();
    let report = &prepared.tuned.report;
    let spec = HlSpec {
        rho_w: report.rho_w,
        rho_u_bar: &report.budget.rho_u_bar,
        input_sizes: &sizes,
        x_bar_s: &x_bar_s,
        u_bar_s: &triple.u_s,
        n_h: problem.timing.n_h,
        mrpi_eps: problem.mrpi_eps,
    };
    let hl = synthesize_hl(&prepared.tuned.ancillary, &spec)?;
    Ok((triple, hl))
}

/// One fast step of the trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FastRecord<T> {
    pub k: usize,
    pub h: usize,
    pub x: Vec<T>,
    pub u: Vec<T>,
    pub du: Vec<T>,
    pub du_hat: Vec<T>,
    /// Per subsystem: distance of `u_i − u_S,i` to the boundary of `𝒰_S,i`.
    pub input_margin: Vec<T>,
    /// Per subsystem: `ρ_δû_i + ρ_Δu_i(j) − ‖δu_i‖`.
    pub du_margin: Vec<T>,
}

/// One slow step of the trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SlowRecord<T> {
    pub k: usize,
    pub reference: usize,
    pub u_bar: Vec<T>,
    pub x_bar_nom: Vec<T>,
    /// `ē(k) = βx(kN_L) − x̄^o(k|k)`.
    pub e_bar: Vec<T>,
    /// `w̄(k)`; empty when the step did not complete.
    pub w_bar: Vec<T>,
    pub w_norm: T,
    pub rho_w: T,
    pub hl_feasible: bool,
    pub ll_feasible: bool,
    pub in_tube: bool,
    pub hl_cost: T,
    pub cuts: usize,
    pub terminal_excess: T,
    /// `‖x(kN_L) − x_S‖`.
    pub state_error: T,
    /// Distance of `βx(kN_L)` to the bounding box of `x̄_S ⊕ 𝒵`.
    pub tube_distance: T,
    /// Distance of `x(kN_L)` to the bounding box of `x_S ⊕ ⊕_h (F_L^{[N_L]})^h ℬ_{ρ_x}`.
    pub limit_distance: T,
    /// Largest gap between the direct and operator forms of the LL terminal right-hand side.
    pub rhs_identity_residual: T,
    /// `‖w̄(k) − βε((k+1)N_L)‖`.
    pub w_identity_residual: T,
    /// Largest `‖β_iδx̂_i(N_L) − rhs_i‖`.
    pub terminal_residual: T,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Failure {
    pub k: usize,
    pub layer: String,
    pub subsystem: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimulationTrace<T> {
    pub n_l: usize,
    pub n: usize,
    pub m: usize,
    pub subsystems: usize,
    pub fast: Vec<FastRecord<T>>,
    pub slow: Vec<SlowRecord<T>>,
    pub references: Vec<ReferenceTriple<T>>,
    pub initial_error: T,
    pub final_error: T,
    pub x_final: Vec<T>,
    pub sigma: T,
    pub rho_w: T,
    pub convergence_tol: T,
    pub check_tol: T,
    pub failure: Option<Failure>,
    pub events: Vec<String>,
}

impl<T: Real> SimulationTrace<T> {
    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    pub fn max_w_norm(&self) -> T {
        self.slow.iter().map(|s| s.w_norm).fold(T::zero(), T::max)
    }

    pub fn min_input_margin(&self) -> T {
        self.fast
            .iter()
            .flat_map(|f| f.input_margin.iter().copied())
            .fold(T::infinity(), T::min)
    }
}

/// Box radii of `⊕_{h≥0} F^h ℬ_1`, summed until the powers vanish.
fn limit_box_radii<T: Real>(f: &Matrix<T>) -> Vec<T> {
    let n = f.rows();
    let mut radii = vec![T::zero(); n];
    let mut power = Matrix::identity(n);
    let ones = vec![T::one(); n];
    for _ in 0..crate::tuning::SERIES_CAP {
        let add = power.abs().mul_vec(&ones);
        vec::axpy(&mut radii, T::one(), &add);
        if spectral_norm(&power) < T::lit(1e-14) {
            break;
        }
        power = f.matmul(&power);
    }
    radii
}

fn box_distance<T: Real>(x: &[T], center: &[T], radii: &[T]) -> T {
    x.iter()
        .zip(center)
        .zip(radii)
        .map(|((&v, &c), &r)| {
            let d = ((v - c).abs() - r).max(T::zero());
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// Runs the hierarchical loop for `slow_steps` slow periods from `x0`.
///
/// Stops at the first infeasible OCP and returns the partial trace with a failure record.
pub fn run<T: Real>(
    problem: &Problem<T>,
    prepared: &Prepared<T>,
    schedule: &[(usize, Vec<T>)],
    x0: &[T],
    slow_steps: usize,
) -> Result<SimulationTrace<T>> {
    let sys = &problem.sys;
    let rm = &problem.rm;
    let n_l = problem.timing.n_l;
    let mm = sys.num_subsystems();
    let report = &prepared.tuned.report;
    let ll = &prepared.tuned.ll;
    let mismatch = &prepared.tuned.mismatch;
    if x0.len() != sys.n() {
        return Err(Error::Invalid(format!(
            "x0 has length {}, n = {}",
            x0.len(),
            sys.n()
        )));
    }
    if schedule.is_empty() || schedule[0].0 != 0 {
        return Err(Error::Invalid(
            "the reference schedule must start at k = 0".into(),
        ));
    }

    let limit_radii: Vec<T> = limit_box_radii(&report.small_gain.f_l_nl)
        .into_iter()
        .map(|r| r * report.small_gain.rho_x)
        .collect();

    let mut events = Vec::new();
    let mut references = Vec::new();
    let (mut triple, mut hl) = design_for_reference(problem, prepared, &schedule[0].1)?;
    references.push(triple.clone());
    events.push(format!(
        "k=0: design for reference 0 ({:?} tube)",
        hl.z_kind
    ));
    let initial_error = vec::norm2(&vec::sub(x0, &triple.x_s));

    let mut x = x0.to_vec();
    let mut warm: Option<HlState<T>> = None;
    let mut fast = Vec::with_capacity(slow_steps * n_l);
    let mut slow = Vec::with_capacity(slow_steps);
    let mut failure = None;
    let mut ref_index = 0;

    for k in 0..slow_steps {
        if ref_index + 1 < schedule.len() && schedule[ref_index + 1].0 == k {
            ref_index += 1;
            let (t, d) = design_for_reference(problem, prepared, &schedule[ref_index].1)?;
            triple = t;
            hl = d;
            warm = None;
            references.push(triple.clone());
            events.push(format!(
                "k={k}: reference switched to {ref_index}, HL design re-synthesized"
            ));
        }
        let hl_out = hl_step(&hl, &rm.beta, &x, warm.as_ref())?;
        let state = hl_out.state;
        let bx = rm.project(&x);
        let e_bar = vec::sub(&bx, &state.x_bar_nom);
        let mut record = SlowRecord {
            k,
            reference: ref_index,
            u_bar: hl_out.u_bar.clone(),
            x_bar_nom: state.x_bar_nom.clone(),
            in_tube: state.feasible && crate::hl::in_tube(&hl, &e_bar),
            e_bar,
            w_bar: Vec::new(),
            w_norm: T::zero(),
            rho_w: report.rho_w,
            hl_feasible: state.feasible,
            ll_feasible: false,
            hl_cost: state.cost,
            cuts: state.cuts,
            terminal_excess: state.terminal_excess,
            state_error: vec::norm2(&vec::sub(&x, &triple.x_s)),
            tube_distance: box_distance(
                &bx,
                &vec::add(&hl.x_bar_s, &hl.z_hull.center()),
                &hl.z_hull.radii(),
            ),
            limit_distance: box_distance(&x, &triple.x_s, &limit_radii),
            rhs_identity_residual: T::zero(),
            w_identity_residual: T::zero(),
            terminal_residual: T::zero(),
        };
        if !state.feasible {
            failure = Some(Failure {
                k,
                layer: "hl".into(),
                subsystem: None,
                detail: state.failure.clone().unwrap_or_default(),
            });
            slow.push(record);
            break;
        }

        let plan = plan_slow_step(ll, sys, rm, &x, &hl_out.u_bar, &state.last_prediction, n_l)?;
        let operator = terminal_rhs_operator(
            sys,
            rm,
            mismatch,
            &x,
            &triple.x_s,
            &hl_out.u_bar,
            &triple.u_s,
        );
        record.rhs_identity_residual = plan
            .rhs
            .iter()
            .zip(&operator)
            .map(|(a, b)| vec::norm_inf(&vec::sub(a, b)))
            .fold(T::zero(), T::max);
        record.ll_feasible = plan.feasible();
        if let Some(i) = plan.solutions.iter().position(|s| !s.feasible()) {
            failure = Some(Failure {
                k,
                layer: "ll".into(),
                subsystem: Some(i),
                detail: format!(
                    "theory violation: terminal equality unreachable within Δ𝒰̂ (status {:?})",
                    plan.solutions[i].status
                ),
            });
            slow.push(record);
            break;
        }
        record.terminal_residual = (0..mm)
            .map(|i| {
                let reached = rm.beta_blocks[i].mul_vec(&plan.dxhat[i][n_l]);
                vec::norm_inf(&vec::sub(&reached, &plan.rhs[i]))
            })
            .fold(T::zero(), T::max);

        for j in 0..n_l {
            let dx = vec::sub(&x, &plan.xhat[j]);
            let mut du = Vec::with_capacity(sys.m());
            let mut du_hat = Vec::with_capacity(sys.m());
            let mut du_margin = Vec::with_capacity(mm);
            for i in 0..mm {
                let di = reconstruct_fast(ll, &plan, i, j, &dx[sys.state_range(i)])?;
                let radius = report.budget.rho_delta_u[i] + report.rho_du[i][j];
                du_margin.push(radius - vec::norm2(&di));
                du.extend(di);
                du_hat.extend_from_slice(plan.du_hat_at(ll, i, j));
            }
            let u = vec::add(&hl_out.u_bar, &du);
            let dev = vec::sub(&u, &triple.u_s);
            let input_margin = (0..mm)
                .map(|i| problem.limits[i].margin(&dev[sys.input_range(i)]))
                .collect();
            let next = vec::add(&sys.a_l.mul_vec(&x), &sys.b_l.mul_vec(&u));
            fast.push(FastRecord {
                k,
                h: k * n_l + j,
                x: std::mem::replace(&mut x, next),
                u,
                du,
                du_hat,
                input_margin,
                du_margin,
            });
        }

        let w_bar = vec::sub(&rm.project(&x), &state.last_prediction);
        let mut eps = vec::sub(&x, &plan.xhat[n_l]);
        for i in 0..mm {
            let r = sys.state_range(i);
            for (v, d) in eps[r].iter_mut().zip(&plan.dxhat[i][n_l]) {
                *v -= *d;
            }
        }
        record.w_identity_residual = vec::norm2(&vec::sub(&w_bar, &rm.project(&eps)));
        record.w_norm = vec::norm2(&w_bar);
        record.w_bar = w_bar;
        slow.push(record);
        warm = Some(state);
    }

    let final_error = vec::norm2(&vec::sub(&x, &triple.x_s));
    Ok(SimulationTrace {
        n_l,
        n: sys.n(),
        m: sys.m(),
        subsystems: mm,
        fast,
        slow,
        references,
        initial_error,
        final_error,
        x_final: x,
        sigma: report.sigma_nl,
        rho_w: report.rho_w,
        convergence_tol: problem.convergence_tol,
        check_tol: problem.check_tol,
        failure,
        events,
    })
}

/// Loads, prepares and runs a whole scenario.
pub fn run_config(
    cfg: &ScenarioConfig,
) -> Result<(Problem<f64>, Prepared<f64>, SimulationTrace<f64>)> {
    let problem = cfg.problem::<f64>()?;
    let prepared = prepare(&problem)?;
    let trace = run(
        &problem,
        &prepared,
        &cfg.schedule(),
        &vec::cast(&cfg.x0),
        cfg.slow_steps,
    )?;
    Ok((problem, prepared, trace))
}
