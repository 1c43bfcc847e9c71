//! Single-bath thermodynamic bookkeeping for a one-particle, two-chamber gas.
//!
//! All quantities here are per particle. Signs: `work > 0` is work delivered
//! to an external store, `heat > 0` is heat drawn from the bath, and the
//! bath entropy changes by `-heat / T`.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::channels::{unitary_reset_feasible, ResetProblem, ResetVerdict};
use crate::entropy::{shannon_entropy, PointerDistribution};
use crate::error::{Error, Result};
use crate::qcore::{gates, hermitian_eigenpairs, CVector, DensityState, TAU_EIG};

/// Occupancy below this counts as an empty chamber; above `1 - OCCUPANCY_TOLERANCE` as certain.
pub const OCCUPANCY_TOLERANCE: f64 = 1e-9;
const VOLUME_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Chamber {
    #[serde(rename = "L")]
    Left,
    #[serde(rename = "R")]
    Right,
}

impl Chamber {
    pub fn index(self) -> usize {
        match self {
            Chamber::Left => 0,
            Chamber::Right => 1,
        }
    }

    pub fn other(self) -> Chamber {
        match self {
            Chamber::Left => Chamber::Right,
            Chamber::Right => Chamber::Left,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Chamber::Left => "L",
            Chamber::Right => "R",
        }
    }

    pub const BOTH: [Chamber; 2] = [Chamber::Left, Chamber::Right];
}

/// Chamber volumes (fractions of the vessel) and where the particle is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeRegister {
    pub partition: bool,
    pub volume: [f64; 2],
    pub occupancy: [f64; 2],
}

impl VolumeRegister {
    pub fn new(partition: bool, volume: [f64; 2], occupancy: [f64; 2]) -> Result<Self> {
        if volume
            .iter()
            .any(|v| !(0.0..=1.0 + VOLUME_TOLERANCE).contains(v))
        {
            return Err(Error::VolumeMismatch(format!(
                "volumes {volume:?} outside [0, 1]"
            )));
        }
        if volume[0] + volume[1] > 1.0 + VOLUME_TOLERANCE {
            return Err(Error::VolumeMismatch(format!(
                "volumes {volume:?} exceed the vessel"
            )));
        }
        if occupancy.iter().any(|o| *o < -OCCUPANCY_TOLERANCE)
            || (occupancy[0] + occupancy[1] - 1.0).abs() > OCCUPANCY_TOLERANCE
        {
            return Err(Error::InvalidDistribution(format!(
                "occupancy {occupancy:?}"
            )));
        }
        Ok(VolumeRegister {
            partition,
            volume,
            occupancy: occupancy.map(|o| o.clamp(0.0, 1.0)),
        })
    }

    pub fn occupied(&self, c: Chamber) -> bool {
        self.occupancy[c.index()] > OCCUPANCY_TOLERANCE
    }

    /// The chamber the particle is certainly in, if any.
    pub fn known_position(&self) -> Option<Chamber> {
        Chamber::BOTH
            .into_iter()
            .find(|c| self.occupancy[c.index()] >= 1.0 - OCCUPANCY_TOLERANCE)
    }

    /// `k_B * sum_c occupancy_c * ln volume_c`, the volume part of the gas entropy.
    pub fn spatial_entropy(&self, kb: f64) -> Result<f64> {
        let mut s = 0.0;
        for c in Chamber::BOTH {
            if !self.occupied(c) {
                continue;
            }
            let v = self.volume[c.index()];
            if v <= 0.0 {
                return Err(Error::Singularity(c.label().into()));
            }
            s += self.occupancy[c.index()] * v.ln();
        }
        Ok(kb * s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BathModel {
    pub temperature: f64,
    pub kb: f64,
    pub cumulative_entropy: f64,
    /// Heat delivered to the bath.
    pub cumulative_heat: f64,
}

impl BathModel {
    pub fn new(temperature: f64, kb: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) || !(kb > 0.0 && kb.is_finite()) {
            return Err(Error::Validation(
                "temperature and k_B must be positive".into(),
            ));
        }
        Ok(BathModel {
            temperature,
            kb,
            cumulative_entropy: 0.0,
            cumulative_heat: 0.0,
        })
    }

    pub fn kt(&self) -> f64 {
        self.kb * self.temperature
    }

    pub fn absorb(&mut self, entry: &WorkEntry) {
        self.cumulative_heat -= entry.heat;
        self.cumulative_entropy += entry.d_s_bath;
    }
}

/// Thermodynamic deltas of one step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct WorkEntry {
    pub work: f64,
    pub heat: f64,
    pub d_s_bath: f64,
    pub d_s_spatial: f64,
}

impl WorkEntry {
    fn isothermal(d_s_spatial: f64, bath: &BathModel) -> Self {
        let heat = bath.temperature * d_s_spatial;
        WorkEntry {
            work: heat,
            heat,
            d_s_bath: -d_s_spatial,
            d_s_spatial,
        }
    }

    pub fn scaled(self, k: f64) -> Self {
        WorkEntry {
            work: k * self.work,
            heat: k * self.heat,
            d_s_bath: k * self.d_s_bath,
            d_s_spatial: k * self.d_s_spatial,
        }
    }

    pub fn plus(self, o: WorkEntry) -> Self {
        WorkEntry {
            work: self.work + o.work,
            heat: self.heat + o.heat,
            d_s_bath: self.d_s_bath + o.d_s_bath,
            d_s_spatial: self.d_s_spatial + o.d_s_spatial,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WorkLedger {
    pub entries: Vec<(String, WorkEntry)>,
    pub cumulative_work: f64,
}

impl WorkLedger {
    pub fn record(&mut self, step: impl Into<String>, entry: WorkEntry) {
        self.cumulative_work += entry.work;
        self.entries.push((step.into(), entry));
    }
}

/// Quasi-static isothermal move of one chamber wall.
pub fn isothermal_volume_change(
    reg: &VolumeRegister,
    chamber: Chamber,
    v_from: f64,
    v_to: f64,
    bath: &BathModel,
) -> Result<(VolumeRegister, WorkEntry)> {
    let i = chamber.index();
    if !reg.occupied(chamber) {
        return Err(Error::EmptyChamber(chamber.label().into()));
    }
    if v_to <= 0.0 {
        return Err(Error::Singularity(chamber.label().into()));
    }
    if (reg.volume[i] - v_from).abs() > VOLUME_TOLERANCE {
        return Err(Error::VolumeMismatch(format!(
            "chamber {} has volume {}, not {v_from}",
            chamber.label(),
            reg.volume[i]
        )));
    }
    let mut volume = reg.volume;
    volume[i] = v_to;
    let next = VolumeRegister::new(reg.partition, volume, reg.occupancy)?;
    let d_s = reg.occupancy[i] * bath.kb * (v_to / v_from).ln();
    Ok((next, WorkEntry::isothermal(d_s, bath)))
}

/// Pushes the wall of an empty chamber to zero volume, at no cost.
pub fn compress_vacuum(
    reg: &VolumeRegister,
    chamber: Chamber,
) -> Result<(VolumeRegister, WorkEntry)> {
    if reg.occupied(chamber) {
        return Err(Error::OccupiedChamber(chamber.label().into()));
    }
    let mut next = *reg;
    next.volume[chamber.index()] = 0.0;
    Ok((next, WorkEntry::default()))
}

/// Lets a particle of known position push the central partition to the far
/// wall: `k_B T ln 2` of work drawn from the bath.
pub fn extract_work_known_position(
    reg: &VolumeRegister,
    bath: &BathModel,
) -> Result<(VolumeRegister, WorkEntry)> {
    let c = reg.known_position().ok_or(Error::UnknownPosition)?;
    if !reg.partition
        || reg
            .volume
            .iter()
            .any(|v| (v - 0.5).abs() > VOLUME_TOLERANCE)
    {
        return Err(Error::VolumeMismatch(
            "work extraction needs the partition at the centre".into(),
        ));
    }
    let mut volume = [0.0; 2];
    volume[c.index()] = 1.0;
    let next = VolumeRegister::new(true, volume, reg.occupancy)?;
    Ok((next, WorkEntry::isothermal(bath.kb * LN_2, bath)))
}

/// Erasure cost of a record with pointer distribution `q`: `k_B T H(q)` of
/// work turned into heat in the bath.
pub fn landauer_cost(q: &PointerDistribution, bath: &BathModel) -> WorkEntry {
    let d_s_bath = bath.kb * shannon_entropy(q);
    let heat = -bath.temperature * d_s_bath;
    WorkEntry {
        work: heat,
        heat,
        d_s_bath,
        d_s_spatial: 0.0,
    }
}

/// Puts `apparatus` into its ready state (pointer index 0), discarding its
/// correlations with everything else.
pub fn reset_to_ready(rho: &DensityState, apparatus: &str) -> Result<DensityState> {
    let layout = rho.layout().restrict(&[apparatus])?;
    let d = layout.total_dimension();
    let ready = DensityState::new_unchecked(layout, gates::ket_bra(d, 0))?;
    rho.replace_factors(&ready)
}

pub fn landauer_reset(
    rho: &DensityState,
    apparatus: &str,
    bath: &BathModel,
) -> Result<(DensityState, WorkEntry)> {
    let q = crate::entropy::pointer_distribution(rho, &[apparatus])?;
    Ok((reset_to_ready(rho, apparatus)?, landauer_cost(&q, bath)))
}

/// Result of trying to return an apparatus to ready with one unitary.
#[derive(Debug, Clone, PartialEq)]
pub struct ResetAttempt {
    pub verdict: ResetVerdict,
    /// The reset went ahead although no unitary implements it.
    pub nonphysical: bool,
    pub states: Vec<DensityState>,
}

/// Distinct pure record states of `apparatus` across `states`: the support
/// eigenvectors of each reduced apparatus state, up to phase.
pub fn record_states(states: &[&DensityState], apparatus: &str) -> Result<Vec<CVector>> {
    let mut records: Vec<CVector> = Vec::new();
    for rho in states {
        let reduced = rho.partial_trace(&[apparatus])?;
        for (w, v) in hermitian_eigenpairs(reduced.matrix())? {
            if w <= TAU_EIG {
                continue;
            }
            let known = records
                .iter()
                .any(|r| (r.dotc(&v).norm() - 1.0).abs() < TAU_EIG);
            if !known {
                records.push(v);
            }
        }
    }
    Ok(records)
}

/// Attempts a zero-cost unitary reset of `apparatus` in every state.
///
/// Feasible exactly when a single pure record is present in all of them, in
/// which case the apparatus factorises and replacing it is that unitary.
pub fn unitary_reset_attempt(
    states: &[&DensityState],
    apparatus: &str,
    permit_infeasible: bool,
) -> Result<ResetAttempt> {
    let first = states
        .first()
        .ok_or_else(|| Error::InvalidState("no state to reset".into()))?;
    let sources = record_states(states, apparatus)?;
    let d = first.layout().get(apparatus)?.dimension();
    let mut ready = CVector::zeros(d);
    ready[0] = gates::c(1.0);
    let targets = vec![ready; sources.len()];
    let verdict = unitary_reset_feasible(&ResetProblem::new(sources, targets)?);
    if !verdict.feasible && !permit_infeasible {
        return Err(Error::ResetInfeasible {
            apparatus: apparatus.to_string(),
            discrepancy: verdict.max_gram_discrepancy,
        });
    }
    let states = states
        .iter()
        .map(|rho| reset_to_ready(rho, apparatus))
        .collect::<Result<_>>()?;
    Ok(ResetAttempt {
        verdict,
        nonphysical: !verdict.feasible,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qcore::{Role, SubsystemSpec, SystemLayout};

    fn bath(t: f64) -> BathModel {
        BathModel::new(t, 1.0).unwrap()
    }

    fn centre(occupancy: [f64; 2]) -> VolumeRegister {
        VolumeRegister::new(true, [0.5, 0.5], occupancy).unwrap()
    }

    #[test]
    fn halving_an_occupied_vessel() {
        let mut b = bath(1.0);
        let reg = VolumeRegister::new(false, [1.0, 0.0], [1.0, 0.0]).unwrap();
        let (next, e) = isothermal_volume_change(&reg, Chamber::Left, 1.0, 0.5, &b).unwrap();
        assert_eq!(next.volume, [0.5, 0.0]);
        assert!((e.d_s_spatial + LN_2).abs() < 1e-15);
        assert!((e.d_s_bath - LN_2).abs() < 1e-15);
        assert!((e.work + LN_2).abs() < 1e-15);
        b.absorb(&e);
        assert!((b.cumulative_entropy * b.temperature - b.cumulative_heat).abs() < TAU_EIG);
    }

    #[test]
    fn identity_move_is_free() {
        let (_, e) =
            isothermal_volume_change(&centre([1.0, 0.0]), Chamber::Left, 0.5, 0.5, &bath(1.0))
                .unwrap();
        assert_eq!(e, WorkEntry::default());
    }

    #[test]
    fn four_particles_compressed_by_half_each() {
        let b = bath(1.0);
        let reg = VolumeRegister::new(true, [0.5, 0.5], [0.5, 0.5]).unwrap();
        let (reg, a) = isothermal_volume_change(&reg, Chamber::Left, 0.5, 0.25, &b).unwrap();
        let (_, c) = isothermal_volume_change(&reg, Chamber::Right, 0.5, 0.25, &b).unwrap();
        let total = a.plus(c).scaled(4.0);
        assert!((total.d_s_bath - 2.772588722239781).abs() < 1e-12);
    }

    #[test]
    fn isothermal_errors() {
        let b = bath(1.0);
        let reg = centre([1.0, 0.0]);
        assert!(matches!(
            isothermal_volume_change(&reg, Chamber::Right, 0.5, 0.25, &b),
            Err(Error::EmptyChamber(_))
        ));
        assert!(matches!(
            isothermal_volume_change(&reg, Chamber::Left, 0.5, 0.0, &b),
            Err(Error::Singularity(_))
        ));
        assert!(matches!(
            isothermal_volume_change(&reg, Chamber::Left, 0.4, 0.2, &b),
            Err(Error::VolumeMismatch(_))
        ));
    }

    #[test]
    fn vacuum_compression() {
        let (next, e) = compress_vacuum(&centre([1.0, 0.0]), Chamber::Right).unwrap();
        assert_eq!(next.volume, [0.5, 0.0]);
        assert_eq!(e, WorkEntry::default());
        let (again, _) = compress_vacuum(&next, Chamber::Right).unwrap();
        assert_eq!(again, next);
        assert!(matches!(
            compress_vacuum(&centre([0.5, 0.5]), Chamber::Right),
            Err(Error::OccupiedChamber(_))
        ));
    }

    #[test]
    fn known_position_work() {
        let (next, e) = extract_work_known_position(&centre([1.0, 0.0]), &bath(1.0)).unwrap();
        assert_eq!(next.volume, [1.0, 0.0]);
        assert!((e.work - LN_2).abs() < 1e-12);
        assert!((e.d_s_bath + LN_2).abs() < 1e-15);
        assert!((e.d_s_spatial - LN_2).abs() < 1e-15);
        let (_, e2) = extract_work_known_position(&centre([0.0, 1.0]), &bath(2.0)).unwrap();
        assert!((e2.work - 2.0 * LN_2).abs() < 1e-15);
        let mut ledger = WorkLedger::default();
        for k in 0..7 {
            ledger.record(format!("cycle {k}"), e);
        }
        assert!((ledger.cumulative_work - 7.0 * LN_2).abs() < 1e-12);
        assert!(matches!(
            extract_work_known_position(&centre([0.5, 0.5]), &bath(1.0)),
            Err(Error::UnknownPosition)
        ));
    }

    fn memory() -> SystemLayout {
        SystemLayout::new(vec![
            SubsystemSpec::new("pos", Role::Position, &["L", "R"]).unwrap(),
            SubsystemSpec::new("M", Role::Apparatus, &["ready", "+", "-"]).unwrap(),
        ])
        .unwrap()
    }

    fn diag(layout: SystemLayout, d: &[f64]) -> DensityState {
        let v = CVector::from_vec(d.iter().map(|x| gates::c(*x)).collect());
        DensityState::new(layout, crate::qcore::CMatrix::from_diagonal(&v)).unwrap()
    }

    #[test]
    fn landauer_costs() {
        let b = bath(1.0);
        // pos L with record + or - at equal odds
        let rho = diag(memory(), &[0.0, 0.5, 0.5, 0.0, 0.0, 0.0]);
        let (after, e) = landauer_reset(&rho, "M", &b).unwrap();
        assert!((e.d_s_bath - LN_2).abs() < 1e-12);
        assert!((e.heat + LN_2).abs() < 1e-12);
        assert_eq!(after.diagonal(), vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let ready = diag(memory(), &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(landauer_reset(&ready, "M", &b).unwrap().1.d_s_bath, 0.0);
        let biased = diag(memory(), &[0.0, 0.75, 0.25, 0.0, 0.0, 0.0]);
        let e = landauer_reset(&biased, "M", &b).unwrap().1;
        assert!((e.d_s_bath - 0.562335144618808).abs() < 1e-12);
        assert!(matches!(
            landauer_reset(&ready, "Q", &b),
            Err(Error::UnknownSubsystem(_))
        ));
    }

    #[test]
    fn unitary_reset_attempts() {
        let plus = diag(memory(), &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let minus = diag(memory(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);
        match unitary_reset_attempt(&[&plus, &minus], "M", false) {
            Err(Error::ResetInfeasible { discrepancy, .. }) => {
                assert!((discrepancy - 1.0).abs() < 1e-12)
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
        let one = unitary_reset_attempt(&[&plus, &plus], "M", false).unwrap();
        assert!(!one.nonphysical);
        assert_eq!(one.states[0].diagonal()[0], 1.0);
        let forced = unitary_reset_attempt(&[&plus, &minus], "M", true).unwrap();
        assert!(forced.nonphysical);
        assert!(forced
            .states
            .iter()
            .all(|s| (s.diagonal()[0] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn spatial_entropy_of_centred_particle() {
        let s = centre([1.0, 0.0]).spatial_entropy(1.0).unwrap();
        assert!((s + LN_2).abs() < 1e-15);
        let collapsed = VolumeRegister::new(true, [0.0, 0.5], [1.0, 0.0]).unwrap();
        assert!(collapsed.spatial_entropy(1.0).is_err());
    }
}
