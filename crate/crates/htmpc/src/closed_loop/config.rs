use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hl::DEFAULT_MRPI_EPS;
use crate::linalg::{vec, Matrix};
use crate::ll::LlWeights;
use crate::plant::{assemble, CouplingGraph, LargeScaleSystem, Subsystem};
use crate::reduction::{
    build_betas, build_reduced_model, diagonal_a_h, projected_a_h, reachability_decay_rates,
    ReducedModel,
};
use crate::scalar::Real;
use crate::tuning::{BudgetWeights, InputLimit, Timing};

/// Row-major nested arrays.
pub type Rows = Vec<Vec<f64>>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubsystemConfig {
    pub a: Rows,
    pub b: Rows,
    pub c: Rows,
    /// Coupling input matrix; absent means no coupling channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e: Option<Rows>,
    /// Coupling output matrix; absent means no coupling channel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cz: Option<Rows>,
}

/// `s_to += L z_from`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingConfig {
    pub from: usize,
    pub to: usize,
    pub l: Rows,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AhChoice {
    /// Diagonal `A_H` with the given entries, subsystem blocks in order.
    DecayRates(Vec<f64>),
    Matrix(Rows),
    /// `β A_L β⁺`.
    Plant,
    /// Largest singular values of each subsystem's reachability matrix.
    Reachability,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReductionConfig {
    pub n_bar: Vec<usize>,
    pub a_h: AhChoice,
    #[serde(default)]
    pub less_conservative: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    pub n_l: usize,
    pub n_h: usize,
    /// Defaults to 1 for every subsystem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zeta: Option<Vec<usize>>,
}

/// Cost and LQ weights; every absent entry is an identity.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_h: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_h: Option<Rows>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq_q: Option<Vec<Rows>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lq_r: Option<Vec<Rows>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceEntry {
    /// First slow step at which `y_s` applies.
    pub k: usize,
    pub y_s: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "default_mrpi_eps")]
    pub mrpi_eps: f64,
    /// Relative final-error threshold for the convergence claim.
    #[serde(default = "default_convergence")]
    pub convergence: f64,
    /// Relative slack on numeric claim checks.
    #[serde(default = "default_check")]
    pub check: f64,
}

fn default_mrpi_eps() -> f64 {
    DEFAULT_MRPI_EPS
}

fn default_convergence() -> f64 {
    1e-6
}

fn default_check() -> f64 {
    1e-9
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            mrpi_eps: default_mrpi_eps(),
            convergence: default_convergence(),
            check: default_check(),
        }
    }
}

/// A complete scenario as read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub subsystems: Vec<SubsystemConfig>,
    #[serde(default)]
    pub coupling: Vec<CouplingConfig>,
    pub reduction: ReductionConfig,
    pub timing: TimingConfig,
    #[serde(default)]
    pub weights: WeightsConfig,
    pub input_limits: Vec<InputLimit<f64>>,
    pub reference: Vec<ReferenceEntry>,
    pub x0: Vec<f64>,
    pub slow_steps: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub budget: BudgetWeights,
    #[serde(default)]
    pub seed: u64,
    /// Run even when the tuning report fails; all checks are still reported.
    #[serde(default)]
    pub override_tuning: bool,
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let cfg: ScenarioConfig = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::Config(format!("at `{}`: {}", e.path(), e.inner())))?;
    cfg.problem::<f64>()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_config(&text)
}

/// The typed plant, reduced model and controller settings of a scenario.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub sys: LargeScaleSystem<T>,
    pub rm: ReducedModel<T>,
    pub timing: Timing,
    pub limits: Vec<InputLimit<T>>,
    pub ll_weights: LlWeights<T>,
    pub q_h: Matrix<T>,
    pub r_h: Matrix<T>,
    pub budget_weights: BudgetWeights,
    pub mrpi_eps: T,
    pub convergence_tol: T,
    pub check_tol: T,
    pub override_tuning: bool,
}

fn mat<T: Real>(rows: &Rows, field: &str) -> Result<Matrix<T>> {
    Matrix::from_f64_rows(rows).map_err(|e| Error::Config(format!("{field}: {e}")))
}

fn mats<T: Real>(
    list: &Option<Vec<Rows>>,
    field: &str,
    count: usize,
) -> Result<Option<Vec<Matrix<T>>>> {
    let Some(list) = list else {
        return Ok(None);
    };
    if list.len() != count {
        return Err(Error::Config(format!(
            "{field}: {} entries for {count} subsystems",
            list.len()
        )));
    }
    list.iter()
        .enumerate()
        .map(|(i, r)| mat(r, &format!("{field}[{i}]")))
        .collect::<Result<Vec<_>>>()
        .map(Some)
}

/// Matrix with `rows` rows and no columns when `rows_data` is absent.
fn optional_mat<T: Real>(
    data: &Option<Rows>,
    field: &str,
    rows: usize,
    cols: usize,
) -> Result<Matrix<T>> {
    match data {
        Some(r) => mat(r, field),
        None => Ok(Matrix::zeros(rows, cols)),
    }
}

impl ScenarioConfig {
    pub fn problem<T: Real>(&self) -> Result<Problem<T>> {
        let mm = self.subsystems.len();
        let mut subs = Vec::with_capacity(mm);
        for (i, s) in self.subsystems.iter().enumerate() {
            let a: Matrix<T> = mat(&s.a, &format!("subsystems[{i}].a"))?;
            let n = a.rows();
            let e = optional_mat(&s.e, &format!("subsystems[{i}].e"), n, 0)?;
            let cz = optional_mat(&s.cz, &format!("subsystems[{i}].cz"), 0, n)?;
            let sub = Subsystem::new(
                a,
                mat(&s.b, &format!("subsystems[{i}].b"))?,
                e,
                mat(&s.c, &format!("subsystems[{i}].c"))?,
                cz,
            )
            .map_err(|e| Error::Config(format!("subsystems[{i}]: {e}")))?;
            subs.push(sub);
        }
        let mut graph = CouplingGraph::zero(&subs);
        for (k, c) in self.coupling.iter().enumerate() {
            if c.from >= mm || c.to >= mm {
                return Err(Error::Config(format!(
                    "coupling[{k}]: subsystem index out of range"
                )));
            }
            graph.set(c.to, c.from, mat(&c.l, &format!("coupling[{k}].l"))?);
        }
        let sys = assemble(subs, graph).map_err(|e| Error::Config(format!("coupling: {e}")))?;

        if self.reduction.n_bar.len() != mm {
            return Err(Error::Config(format!(
                "reduction.n_bar: {} entries for {mm} subsystems",
                self.reduction.n_bar.len()
            )));
        }
        let betas = build_betas(
            &sys,
            &self.reduction.n_bar,
            self.reduction.less_conservative,
        )?;
        let a_h = match &self.reduction.a_h {
            AhChoice::DecayRates(r) => diagonal_a_h(&vec::cast::<T>(r))?,
            AhChoice::Matrix(r) => mat(r, "reduction.a_h.matrix")?,
            AhChoice::Plant => projected_a_h(&sys, &betas)?,
            AhChoice::Reachability => {
                let mut rates = Vec::new();
                for (s, &nb) in sys.subsystems.iter().zip(&self.reduction.n_bar) {
                    rates.extend(reachability_decay_rates(s, nb)?);
                }
                diagonal_a_h(&rates)?
            }
        };
        let rm = build_reduced_model(&sys, betas, a_h)?;

        let zeta = self.timing.zeta.clone().unwrap_or_else(|| vec![1; mm]);
        if zeta.len() != mm {
            return Err(Error::Config(format!(
                "timing.zeta: {} entries for {mm} subsystems",
                zeta.len()
            )));
        }
        let timing = Timing::new(self.timing.n_l, self.timing.n_h, zeta)?;

        if self.input_limits.len() != mm {
            return Err(Error::Config(format!(
                "input_limits: {} entries for {mm} subsystems",
                self.input_limits.len()
            )));
        }
        let limits: Vec<InputLimit<T>> = self
            .input_limits
            .iter()
            .map(|l| match *l {
                InputLimit::Ball(r) => InputLimit::Ball(T::lit(r)),
                InputLimit::InfNorm(a) => InputLimit::InfNorm(T::lit(a)),
            })
            .collect();

        let w = &self.weights;
        let identity_n: Vec<Matrix<T>> = sys
            .subsystems
            .iter()
            .map(|s| Matrix::identity(s.n()))
            .collect();
        let identity_m: Vec<Matrix<T>> = sys
            .subsystems
            .iter()
            .map(|s| Matrix::identity(s.m()))
            .collect();
        let ll_weights = LlWeights {
            q: mats(&w.q, "weights.q", mm)?.unwrap_or(identity_n),
            r: mats(&w.r, "weights.r", mm)?.unwrap_or(identity_m),
            lq_q: mats(&w.lq_q, "weights.lq_q", mm)?,
            lq_r: mats(&w.lq_r, "weights.lq_r", mm)?,
        };
        let q_h = match &w.q_h {
            Some(r) => mat(r, "weights.q_h")?,
            None => Matrix::identity(rm.n_bar()),
        };
        let r_h = match &w.r_h {
            Some(r) => mat(r, "weights.r_h")?,
            None => Matrix::identity(sys.m()),
        };

        if self.x0.len() != sys.n() {
            return Err(Error::Config(format!(
                "x0: length {} for n = {}",
                self.x0.len(),
                sys.n()
            )));
        }
        if self.reference.is_empty() || self.reference[0].k != 0 {
            return Err(Error::Config(
                "reference: the schedule must start at k = 0".into(),
            ));
        }
        for (i, r) in self.reference.iter().enumerate() {
            if r.y_s.len() != sys.p() {
                return Err(Error::Config(format!(
                    "reference[{i}].y_s: length {} for p = {}",
                    r.y_s.len(),
                    sys.p()
                )));
            }
            if i > 0 && r.k <= self.reference[i - 1].k {
                return Err(Error::Config(format!(
                    "reference[{i}].k: switch times must increase"
                )));
            }
        }
        Ok(Problem {
            sys,
            rm,
            timing,
            limits,
            ll_weights,
            q_h,
            r_h,
            budget_weights: self.budget,
            mrpi_eps: T::lit(self.tolerances.mrpi_eps),
            convergence_tol: T::lit(self.tolerances.convergence),
            check_tol: T::lit(self.tolerances.check),
            override_tuning: self.override_tuning,
        })
    }

    /// Reference schedule as `(k, y_S)` pairs.
    pub fn schedule<T: Real>(&self) -> Vec<(usize, Vec<T>)> {
        self.reference
            .iter()
            .map(|r| (r.k, vec::cast(&r.y_s)))
            .collect()
    }
}
