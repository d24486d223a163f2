//! Seeded random family of weakly coupled plants that pass every tuning check.

use htmpc::closed_loop::{
    prepare, AhChoice, CouplingConfig, Prepared, Problem, ReductionConfig, ReferenceEntry,
    ScenarioConfig, SubsystemConfig, TimingConfig, Tolerances, WeightsConfig,
};
use htmpc::linalg::vec;
use htmpc::plant::steady_state_from_output;
use htmpc::tuning::{BudgetWeights, InputLimit};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{random_matrix, random_schur};

pub const FAMILY_SIZE: usize = 20;
pub const FAMILY_SEED: u64 = 0x5eed_2024;
pub const N_L: usize = 8;
pub const SLOW_STEPS: usize = 50;

pub struct Member {
    pub config: ScenarioConfig,
    pub problem: Problem<f64>,
    pub prepared: Prepared<f64>,
    pub seed: u64,
}

fn rows(m: &htmpc::Matrix) -> Vec<Vec<f64>> {
    m.to_rows()
}

fn unit_direction<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = vec::norm2(&v);
        if norm > 1e-3 && norm <= 1.0 {
            return vec::scale(&v, 1.0 / norm);
        }
    }
}

/// Random scenario; `x0` is placed later by [`place_initial_state`].
pub fn random_config<R: Rng>(rng: &mut R) -> ScenarioConfig {
    let mm = rng.gen_range(2..=4);
    let mut subsystems = Vec::with_capacity(mm);
    let mut n_bar = Vec::with_capacity(mm);
    let mut zeta = Vec::with_capacity(mm);
    let mut n_total = 0;
    for _ in 0..mm {
        let n = rng.gen_range(1..=4);
        n_total += n;
        let a = random_schur(rng, n, 0.6);
        let mut b = random_matrix(rng, n, 1, 1.0);
        if vec::norm2(b.as_slice()) < 0.3 {
            b = b.scale(0.3 / vec::norm2(b.as_slice()).max(1e-3));
        }
        subsystems.push(SubsystemConfig {
            a: rows(&a),
            b: rows(&b),
            c: rows(&random_matrix(rng, 1, n, 1.0)),
            e: Some(rows(&random_matrix(rng, n, 1, 1.0))),
            cz: Some(rows(&random_matrix(rng, 1, n, 1.0))),
        });
        n_bar.push(if n > 1 { n - 1 } else { 1 });
        zeta.push(rng.gen_range(1..=2));
    }
    let mut coupling = Vec::new();
    for to in 0..mm {
        for from in 0..mm {
            if to != from && rng.gen_bool(0.6) {
                coupling.push(CouplingConfig {
                    from,
                    to,
                    l: vec![vec![rng.gen_range(-0.05..0.05)]],
                });
            }
        }
    }
    let rates = n_bar.iter().flat_map(|&k| (0..k).map(|_| 0.5)).collect();
    ScenarioConfig {
        subsystems,
        coupling,
        reduction: ReductionConfig {
            n_bar,
            a_h: AhChoice::DecayRates(rates),
            less_conservative: false,
        },
        timing: TimingConfig {
            n_l: N_L,
            n_h: 5,
            zeta: Some(zeta),
        },
        weights: WeightsConfig::default(),
        input_limits: (0..mm).map(|_| InputLimit::Ball(2.0)).collect(),
        reference: vec![ReferenceEntry {
            k: 0,
            y_s: (0..mm).map(|_| rng.gen_range(-0.1..0.1)).collect(),
        }],
        x0: vec![0.0; n_total],
        slow_steps: SLOW_STEPS,
        tolerances: Tolerances::default(),
        budget: BudgetWeights::default(),
        seed: 0,
        override_tuning: false,
    }
}

/// `x0 = x_S + 0.9 min_i λ_i d` with `d` uniform on the unit sphere.
pub fn place_initial_state<R: Rng>(rng: &mut R, member: &mut Member) {
    let lambda = member
        .prepared
        .tuned
        .report
        .lambda_feas
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let radius = if lambda.is_finite() {
        0.9 * lambda
    } else {
        0.9
    };
    let y_s = &member.config.reference[0].y_s;
    let x_s = steady_state_from_output(&member.problem.sys, y_s)
        .unwrap()
        .x_s;
    let d = unit_direction(rng, x_s.len());
    member.config.x0 = vec::add(&x_s, &vec::scale(&d, radius));
}

/// First `FAMILY_SIZE` random scenarios that pass the plant, reduced-model and tuning checks.
pub fn family() -> Vec<Member> {
    let mut rng = ChaCha8Rng::seed_from_u64(FAMILY_SEED);
    let mut out = Vec::with_capacity(FAMILY_SIZE);
    let mut attempts = 0;
    while out.len() < FAMILY_SIZE {
        attempts += 1;
        assert!(
            attempts < 2000,
            "family generator rejected too many candidates"
        );
        let seed: u64 = rng.gen();
        let mut local = ChaCha8Rng::seed_from_u64(seed);
        let config = random_config(&mut local);
        let Ok(problem) = config.problem::<f64>() else {
            continue;
        };
        let Ok(prepared) = prepare(&problem) else {
            continue;
        };
        let mut member = Member {
            config,
            problem,
            prepared,
            seed,
        };
        place_initial_state(&mut local, &mut member);
        out.push(member);
    }
    out
}
