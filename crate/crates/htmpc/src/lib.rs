#![allow(non_snake_case)]

pub mod closed_loop;
pub mod error;
pub mod hl;
pub mod linalg;
pub mod ll;
pub mod plant;
pub mod qp;
pub mod reduction;
pub mod scalar;
pub mod sets;
pub mod tuning;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Matrix = linalg::Matrix<f64>;
pub type LargeScaleSystem = plant::LargeScaleSystem<f64>;
pub type Subsystem = plant::Subsystem<f64>;
pub type ReducedModel = reduction::ReducedModel<f64>;
pub type TuningReport = tuning::TuningReport<f64>;
pub type HlDesign = hl::HlDesign<f64>;
pub type LlDesign = ll::LlDesign<f64>;
pub type Problem = closed_loop::Problem<f64>;
pub type SimulationTrace = closed_loop::SimulationTrace<f64>;
