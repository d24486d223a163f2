mod common;

use approx::assert_relative_eq;
use common::{identity_reduction, scalar_plant};
use htmpc::linalg::vec;
use htmpc::ll::{
    fast_difference_trajectory, gains_from_blocks, ll_gains, ll_solve, plan_slow_step,
    reconstruct_fast, simulate_hat, synthesize_ll, terminal_rhs, terminal_rhs_operator, LlDesign,
    LlWeights,
};
use htmpc::plant::{steady_state_from_output, LargeScaleSystem};
use htmpc::qp::Status;
use htmpc::reduction::ReducedModel;
use htmpc::tuning::{mismatch_operators, Timing};
use htmpc::{Error, Matrix};
use proptest::prelude::*;

fn scalar_design(
    n_l: usize,
    zeta: usize,
    rho: f64,
) -> (LargeScaleSystem<f64>, ReducedModel<f64>, LlDesign<f64>) {
    let sys = scalar_plant(&[0.5], &[1.0], 0.0);
    let rm = identity_reduction(&sys, &[0.3]);
    let weights = LlWeights::identity(&sys);
    let gains = ll_gains(&sys, &weights).unwrap();
    let timing = Timing::new(n_l, 3, vec![zeta]).unwrap();
    let design = synthesize_ll(&sys, &rm, &gains, &timing, &weights, &[rho]).unwrap();
    (sys, rm, design)
}

#[test]
fn coupled_rollout() {
    let sys = scalar_plant(&[0.5, 0.5], &[1.0, 1.0], 0.1);
    let xs = simulate_hat(&sys, &[1.0, 0.0], &[0.0, 0.0], 2).unwrap();
    assert_eq!(xs.len(), 3);
    assert_relative_eq!(xs[1][0], 0.5);
    assert_relative_eq!(xs[1][1], 0.1);
    assert_relative_eq!(xs[2][0], 0.26);
    assert_relative_eq!(xs[2][1], 0.10);
    assert!(simulate_hat(&sys, &[1.0], &[0.0, 0.0], 2).is_err());
}

// Q = R = 1, a = 0.5, N_i = 2: minimize 2v₀² + v₁² subject to 0.5v₀ + v₁ = r,
// giving v = (2r/9, 8r/9) and cost 8r²/9.
#[test]
fn least_cost_corrections_closed_form() {
    let (_, _, design) = scalar_design(2, 1, 10.0);
    let sol = ll_solve(&design, 0, &[1.0]).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert_relative_eq!(sol.du_hat[0][0], 2.0 / 9.0, epsilon = 1e-8);
    assert_relative_eq!(sol.du_hat[1][0], 8.0 / 9.0, epsilon = 1e-8);
    assert_relative_eq!(sol.cost, 8.0 / 9.0, epsilon = 1e-8);
}

#[test]
fn tight_correction_box_is_infeasible() {
    let (_, _, design) = scalar_design(2, 1, 0.1);
    let sol = ll_solve(&design, 0, &[1e6]).unwrap();
    assert!(!sol.feasible());
    assert_eq!(sol.status, Status::Infeasible);
    let ok = ll_solve(&design, 0, &[0.1]).unwrap();
    assert!(ok.feasible());
    assert!(ok.du_hat.iter().all(|v| v[0].abs() <= 0.1 + 1e-9));
}

#[test]
fn resampled_corrections_hold_for_zeta_steps() {
    let (sys, _, design) = scalar_design(4, 2, 10.0);
    assert_eq!(design.subsystems[0].n_i, 2);
    assert_relative_eq!(design.subsystems[0].b_zeta[(0, 0)], 1.5);
    assert_relative_eq!(design.subsystems[0].a_zeta[(0, 0)], 0.25);
    let sol = ll_solve(&design, 0, &[0.7]).unwrap();
    let traj = fast_difference_trajectory(&sys, 0, 2, &sol.du_hat, 4);
    assert_eq!(traj.len(), 5);
    assert_relative_eq!(traj[4][0], 0.7, epsilon = 1e-8);
    // The fast rollout at the resampled instants agrees with the resampled model.
    assert_relative_eq!(traj[2][0], 1.5 * sol.du_hat[0][0], epsilon = 1e-12);
}

#[test]
fn reconstruct_adds_feedback_on_mismatch() {
    let sys = scalar_plant(&[0.5, 0.5], &[1.0, 1.0], 0.1);
    let rm = identity_reduction(&sys, &[0.3, 0.3]);
    let gains = gains_from_blocks(&sys, vec![Matrix::scalar(-0.25), Matrix::scalar(-0.5)]).unwrap();
    let weights = LlWeights::identity(&sys);
    let timing = Timing::new(2, 3, vec![1, 1]).unwrap();
    let design = synthesize_ll(&sys, &rm, &gains, &timing, &weights, &[5.0, 5.0]).unwrap();
    let x = [0.4, -0.2];
    let u_bar = [0.1, 0.0];
    let x_bar_next = [0.3, 0.1];
    let plan = plan_slow_step(&design, &sys, &rm, &x, &u_bar, &x_bar_next, 2).unwrap();
    assert!(plan.feasible());
    let du = reconstruct_fast(&design, &plan, 1, 1, &[0.05]).unwrap();
    let expected = plan.du_hat_at(&design, 1, 1)[0] - 0.5 * (0.05 - plan.dxhat[1][1][0]);
    assert_relative_eq!(du[0], expected, epsilon = 1e-14);
    let err = reconstruct_fast(&design, &plan, 0, 2, &[0.0]).unwrap_err();
    assert!(matches!(err, Error::Invalid(_)));
}

#[test]
fn unstable_collective_gain_rejected() {
    let sys = scalar_plant(&[0.5, 0.5], &[1.0, 1.0], 0.1);
    assert!(gains_from_blocks(&sys, vec![Matrix::scalar(0.6), Matrix::scalar(0.0)]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    // x̄(k+1|k) = A_H^{N_L}βx + B_H^{[N_L]}ū makes the direct right-hand side equal the
    // mismatch-operator form around any steady state.
    #[test]
    fn terminal_rhs_two_forms_agree(
        x in proptest::collection::vec(-2.0f64..2.0, 3),
        u in proptest::collection::vec(-1.0f64..1.0, 3),
        y in proptest::collection::vec(-1.0f64..1.0, 3),
        n_l in 1usize..10,
    ) {
        let sys = scalar_plant(&[0.5, 0.2, 0.35], &[1.0, 0.7, -0.4], 0.06);
        let rm = identity_reduction(&sys, &[0.3, 0.45, 0.6]);
        let mis = mismatch_operators(&sys, &rm, n_l).unwrap();
        let ss = steady_state_from_output(&sys, &y).unwrap();
        let a_nl = rm.a_h.pow(n_l);
        let b_nl = htmpc::linalg::matrix_power_sum(&rm.a_h, &rm.b_h, n_l).unwrap();
        let x_bar_next = vec::add(&a_nl.mul_vec(&rm.project(&x)), &b_nl.mul_vec(&u));
        let xhat = simulate_hat(&sys, &x, &u, n_l).unwrap();
        let direct = terminal_rhs(&sys, &rm, &x_bar_next, &xhat[n_l]);
        let operator = terminal_rhs_operator(&sys, &rm, &mis, &x, &ss.x_s, &u, &ss.u_s);
        for (d, o) in direct.iter().zip(&operator) {
            prop_assert!(vec::norm_inf(&vec::sub(d, o)) <= 1e-8 * (1.0 + vec::norm_inf(d)));
        }
    }

    #[test]
    fn solved_corrections_reach_terminal_target(r in -1.0f64..1.0, zeta in 1usize..3) {
        let (sys, _, design) = scalar_design(4, zeta, 2.0);
        let sol = ll_solve(&design, 0, &[r]).unwrap();
        prop_assert!(sol.feasible());
        let traj = fast_difference_trajectory(&sys, 0, zeta, &sol.du_hat, 4);
        prop_assert!((traj[4][0] - r).abs() < 1e-8);
        prop_assert!(sol.cost >= -1e-12);
    }
}
