//! Second-law audit of a completed run.

use serde::Serialize;

use super::runner::{Branch, Geometry, Placement, RunOutput, COALESCE_TOLERANCE, TAU_AUDIT};
use crate::error::Result;
use crate::qcore::DensityState;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClosureVerdict {
    pub closed: bool,
    pub trace_distance: f64,
    pub volumes_match: bool,
}

/// Whether the averaged final state and the chamber geometry are back where they started.
pub fn cycle_closure(
    initial: &DensityState,
    initial_geometry: &Geometry,
    branches: &[Branch],
) -> Result<ClosureVerdict> {
    let parts: Vec<(f64, &DensityState)> =
        branches.iter().map(|b| (b.probability, &b.state)).collect();
    let trace_distance = DensityState::mixture(&parts)?.trace_distance(initial)?;
    let volumes_match = branches.iter().all(|b| {
        b.placement
            .approx_eq(&Placement::Uniform(*initial_geometry))
    });
    Ok(ClosureVerdict {
        closed: trace_distance < COALESCE_TOLERANCE && volumes_match,
        trace_distance,
        volumes_match,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum KelvinPlanck {
    Satisfied,
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepMargin {
    pub cycle: u32,
    pub step_id: usize,
    pub step_kind: String,
    pub margin: f64,
    pub flag: &'static str,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub margins: Vec<StepMargin>,
    pub closure: ClosureVerdict,
    /// Only issued for a closed run.
    pub kelvin_planck: Option<KelvinPlanck>,
    pub net_work: f64,
    pub bath_entropy: f64,
    pub bath_heat: f64,
    pub violations: Vec<String>,
    pub nonphysical: Vec<String>,
    pub seed: u64,
}

impl AuditReport {
    /// 0 clean, 10 on any violation, 11 when only nonphysical steps were found.
    pub fn exit_code(&self) -> i32 {
        if !self.violations.is_empty() {
            10
        } else if !self.nonphysical.is_empty() {
            11
        } else {
            0
        }
    }
}

pub fn audit(run: &RunOutput) -> Result<AuditReport> {
    let mut margins = Vec::new();
    let mut violations = Vec::new();
    let mut nonphysical = Vec::new();
    for row in &run.rows {
        let at = format!(
            "cycle {} step {} ({})",
            row.cycle, row.step_id, row.step_kind
        );
        if row.flags.nonphysical {
            nonphysical.push(format!("{at}: no physical operation implements this step"));
        }
        if row.flags.violation {
            violations.push(format!("{at}: total entropy margin {:.6e}", row.margin));
        }
        margins.push(StepMargin {
            cycle: row.cycle,
            step_id: row.step_id,
            step_kind: row.step_kind.clone(),
            margin: row.margin,
            flag: row.flags.label(),
        });
    }
    let closure = cycle_closure(&run.initial_state, &run.initial_geometry, &run.branches)?;
    let net_work = run.net_work();
    let kelvin_planck = closure.closed.then_some(if net_work > TAU_AUDIT {
        KelvinPlanck::Violation
    } else {
        KelvinPlanck::Satisfied
    });
    if kelvin_planck == Some(KelvinPlanck::Violation) {
        violations.push(format!(
            "Kelvin-Planck: closed run extracted net work {net_work:.6e} from a single bath"
        ));
    }
    Ok(AuditReport {
        margins,
        closure,
        kelvin_planck,
        net_work,
        bath_entropy: run.bath.cumulative_entropy,
        bath_heat: run.bath.cumulative_heat,
        violations,
        nonphysical,
        seed: run.seed,
    })
}
