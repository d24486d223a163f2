#![allow(dead_code)]

pub mod family;
pub mod oracles;

use htmpc::linalg::spectral_radius;
use htmpc::Matrix;
use rand::Rng;

pub fn random_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Random square matrix rescaled to a spectral radius drawn from `(0.05, rho_max]`.
pub fn random_schur<R: Rng>(rng: &mut R, n: usize, rho_max: f64) -> Matrix {
    loop {
        let a = random_matrix(rng, n, n, 1.0);
        let rho = spectral_radius(&a).unwrap();
        if rho > 1e-3 {
            let target = rng.gen_range(0.05..rho_max);
            return a.scale(target / rho);
        }
    }
}

use htmpc::plant::{assemble, CouplingGraph, LargeScaleSystem, Subsystem};
use htmpc::reduction::{build_reduced_model, diagonal_a_h, ReducedModel};

/// Scalar subsystems `x_i⁺ = a_i x_i + b_i u_i`, `y_i = x_i`, coupled through `L_ij = coupling`
/// between every distinct pair.
pub fn scalar_plant(a: &[f64], b: &[f64], coupling: f64) -> LargeScaleSystem<f64> {
    let one = Matrix::scalar(1.0);
    let subs: Vec<Subsystem<f64>> = a
        .iter()
        .zip(b)
        .map(|(&a, &b)| {
            Subsystem::new(
                Matrix::scalar(a),
                Matrix::scalar(b),
                one.clone(),
                one.clone(),
                one.clone(),
            )
            .unwrap()
        })
        .collect();
    let mut g = CouplingGraph::zero(&subs);
    for i in 0..subs.len() {
        for j in 0..subs.len() {
            if i != j {
                g.set(i, j, Matrix::scalar(coupling));
            }
        }
    }
    assemble(subs, g).unwrap()
}

/// Reduced model with `β = I` and diagonal `A_H`.
pub fn identity_reduction(sys: &LargeScaleSystem<f64>, rates: &[f64]) -> ReducedModel<f64> {
    let betas = sys
        .subsystems
        .iter()
        .map(|s| Matrix::identity(s.n()))
        .collect();
    build_reduced_model(sys, betas, diagonal_a_h(rates).unwrap()).unwrap()
}
