use serde::Serialize;

use crate::scalar::Real;
use crate::tuning::TuningReport;

use super::SimulationTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClaimStatus {
    Pass,
    Fail,
    /// The claim does not hold, but the tuning conditions it rests on were not met either.
    NotGuaranteed,
    NotEvaluated,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClaimResult {
    pub id: &'static str,
    pub description: &'static str,
    pub status: ClaimStatus,
    pub witness: f64,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub claims: Vec<ClaimResult>,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.claims.iter().all(|c| c.status == ClaimStatus::Pass)
    }

    pub fn get(&self, id: &str) -> Option<&ClaimResult> {
        self.claims.iter().find(|c| c.id == id)
    }
}

fn status(holds: bool, guaranteed: bool) -> ClaimStatus {
    match (holds, guaranteed) {
        (true, _) => ClaimStatus::Pass,
        (false, true) => ClaimStatus::Fail,
        (false, false) => ClaimStatus::NotGuaranteed,
    }
}

fn not_evaluated(id: &'static str, description: &'static str, detail: &str) -> ClaimResult {
    ClaimResult {
        id,
        description,
        status: ClaimStatus::NotEvaluated,
        witness: f64::NAN,
        detail: detail.into(),
    }
}

/// Non-expansion of a distance sequence: `d_k ≤ d_0 + tol` everywhere and the second half
/// never exceeds the midpoint value.
fn non_expanding_segment(d: &[f64], tol: f64) -> (bool, f64) {
    if d.is_empty() {
        return (true, 0.0);
    }
    let growth = d.iter().map(|v| v - d[0]).fold(f64::NEG_INFINITY, f64::max);
    let mid = d[d.len() / 2];
    let late = d.last().copied().unwrap_or(0.0) - mid;
    (growth <= tol && late <= tol, growth.max(late))
}

/// [`non_expanding_segment`] on each constant-reference segment of the slow trace.
fn non_expanding<T: Real>(
    trace: &SimulationTrace<T>,
    value: impl Fn(&super::SlowRecord<T>) -> T,
    tol: f64,
) -> (bool, f64) {
    let mut ok = true;
    let mut worst = f64::NEG_INFINITY;
    for seg in trace.slow.chunk_by(|a, b| a.reference == b.reference) {
        let d: Vec<f64> = seg.iter().map(|s| value(s).as_f64()).collect();
        let (o, w) = non_expanding_segment(&d, tol);
        ok &= o;
        worst = worst.max(w);
    }
    (ok, worst)
}

/// Checks the closed-loop claims on a recorded trace.
pub fn verify_trace<T: Real>(trace: &SimulationTrace<T>, report: &TuningReport<T>) -> Verdict {
    let tol = trace.check_tol.as_f64();
    let guaranteed = report.passed;
    let mut claims = Vec::with_capacity(5);

    let (id, desc) = (
        "i",
        "recursive feasibility with the slow disturbance inside its bound",
    );
    let w_excess = trace
        .slow
        .iter()
        .map(|s| s.w_norm.as_f64() - s.rho_w.as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    claims.push(if trace.slow.is_empty() {
        not_evaluated(id, desc, "no slow steps recorded")
    } else {
        let holds = trace.completed() && w_excess <= tol;
        ClaimResult {
            id,
            description: desc,
            status: status(holds, guaranteed),
            witness: w_excess,
            detail: match &trace.failure {
                Some(f) => format!("{} OCP infeasible at k = {}: {}", f.layer, f.k, f.detail),
                None => format!(
                    "max ‖w̄‖ − ρ_w = {w_excess:.3e} over {} steps",
                    trace.slow.len()
                ),
            },
        }
    });

    let (id, desc) = ("ii", "applied inputs satisfy the input constraints");
    let margin = trace.min_input_margin().as_f64();
    claims.push(if trace.fast.is_empty() {
        not_evaluated(id, desc, "no fast steps recorded")
    } else {
        ClaimResult {
            id,
            description: desc,
            status: status(margin >= -tol, guaranteed),
            witness: margin,
            detail: format!("smallest input margin {margin:.3e}"),
        }
    });

    let (id, desc) = (
        "iii",
        "reduced state approaches the tube around the reduced steady state",
    );
    let tube: Vec<f64> = trace
        .slow
        .iter()
        .map(|s| s.tube_distance.as_f64())
        .collect();
    claims.push(if !trace.completed() || tube.len() < 2 {
        not_evaluated(id, desc, "trace incomplete")
    } else {
        let (ok, w) = non_expanding(trace, |s| s.tube_distance, tol);
        ClaimResult {
            id,
            description: desc,
            status: status(ok, guaranteed),
            witness: w,
            detail: format!(
                "tube distance {:.3e} -> {:.3e}",
                tube[0],
                tube[tube.len() - 1]
            ),
        }
    });

    let (id, desc) = (
        "iv",
        "plant state approaches the limit set around the steady state",
    );
    let lim: Vec<f64> = trace
        .slow
        .iter()
        .map(|s| s.limit_distance.as_f64())
        .collect();
    claims.push(if !trace.completed() || lim.len() < 2 {
        not_evaluated(id, desc, "trace incomplete")
    } else {
        let (ok, w) = non_expanding(trace, |s| s.limit_distance, tol);
        ClaimResult {
            id,
            description: desc,
            status: status(ok, guaranteed),
            witness: w,
            detail: format!(
                "limit-set distance {:.3e} -> {:.3e}",
                lim[0],
                lim[lim.len() - 1]
            ),
        }
    });

    let (id, desc) = (
        "v",
        "convergence to the steady state under the small-gain condition",
    );
    let sigma = trace.sigma.as_f64();
    // error at the start of the last reference segment
    let initial = trace
        .slow
        .iter()
        .rev()
        .take_while(|s| Some(s.reference) == trace.slow.last().map(|l| l.reference))
        .last()
        .map_or(trace.initial_error.as_f64(), |s| s.state_error.as_f64());
    let fin = trace.final_error.as_f64();
    let target = trace.convergence_tol.as_f64() * initial.max(f64::MIN_POSITIVE);
    claims.push(if !trace.completed() {
        not_evaluated(id, desc, "trace incomplete")
    } else if sigma >= 1.0 {
        ClaimResult {
            id,
            description: desc,
            status: if fin <= target {
                ClaimStatus::Pass
            } else {
                ClaimStatus::NotGuaranteed
            },
            witness: fin,
            detail: format!("σ = {sigma:.4} ≥ 1, final error {fin:.3e}"),
        }
    } else {
        ClaimResult {
            id,
            description: desc,
            status: status(fin <= target, guaranteed),
            witness: fin,
            detail: format!(
                "σ = {sigma:.4}, error {initial:.3e} -> {fin:.3e} (target {target:.3e})"
            ),
        }
    });

    Verdict { claims }
}
