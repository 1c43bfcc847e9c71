//! Step-by-step execution of a protocol over a weighted set of branches.

use serde::Serialize;

use super::protocol::{prepared_state, Mode, Protocol, ProtocolStep};
use crate::channels::{
    couple_apparatus, nonselective_measure, selective_measure, separation_unitary,
};
use crate::entropy::{classical_conditional_entropy, pointer_distribution, von_neumann_entropy};
use crate::error::{Error, Result};
use crate::qcore::{CMatrix, CVector, DensityState, C64, TAU_TRACE};
use crate::thermo::{
    compress_vacuum, extract_work_known_position, isothermal_volume_change, landauer_cost,
    reset_to_ready, unitary_reset_attempt, BathModel, Chamber, VolumeRegister, WorkEntry,
    WorkLedger, OCCUPANCY_TOLERANCE,
};

/// Branches closer than this in trace distance (with equal geometry) merge.
pub const COALESCE_TOLERANCE: f64 = 1e-9;
/// Entropy margin below which a step counts as a second-law violation.
pub const TAU_AUDIT: f64 = 1e-8;
const SLICE_TOLERANCE: f64 = 1e-12;
const GEOMETRY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Geometry {
    pub partition: bool,
    pub volumes: [f64; 2],
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            partition: true,
            volumes: [0.5, 0.5],
        }
    }
}

impl Geometry {
    pub fn approx_eq(&self, other: &Geometry) -> bool {
        self.partition == other.partition
            && self
                .volumes
                .iter()
                .zip(other.volumes)
                .all(|(a, b)| (a - b).abs() <= GEOMETRY_TOLERANCE)
    }

    fn register(&self, occupancy: [f64; 2]) -> Result<VolumeRegister> {
        VolumeRegister::new(self.partition, self.volumes, occupancy)
    }

    fn of(reg: &VolumeRegister) -> Geometry {
        Geometry {
            partition: reg.partition,
            volumes: reg.volume,
        }
    }
}

/// Chamber geometry of a branch, either shared by the whole branch or keyed
/// by the pointer state of an apparatus that recorded the particle.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Placement {
    Uniform(Geometry),
    Conditioned { on: String, configs: Vec<Geometry> },
}

impl Placement {
    pub fn approx_eq(&self, other: &Placement) -> bool {
        match (self, other) {
            (Placement::Uniform(a), Placement::Uniform(b)) => a.approx_eq(b),
            (
                Placement::Conditioned { on: a, configs: x },
                Placement::Conditioned { on: b, configs: y },
            ) => a == b && x.len() == y.len() && x.iter().zip(y).all(|(g, h)| g.approx_eq(h)),
            _ => false,
        }
    }

    fn normalized(self) -> Placement {
        match self {
            Placement::Conditioned { configs, .. }
                if configs.windows(2).all(|w| w[0].approx_eq(&w[1])) =>
            {
                Placement::Uniform(configs[0])
            }
            p => p,
        }
    }

    pub fn conditioning(&self) -> Option<&str> {
        match self {
            Placement::Uniform(_) => None,
            Placement::Conditioned { on, .. } => Some(on),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub probability: f64,
    pub state: DensityState,
    /// `(step id, outcome label)` for every selective outcome on this branch.
    pub records: Vec<(usize, String)>,
    pub placement: Placement,
}

/// Part of a branch with a definite record of the conditioning apparatus.
struct Slice {
    weight: f64,
    index: Option<usize>,
    state: DensityState,
    geometry: Geometry,
}

type SliceOccupancy = (Option<usize>, Geometry, [f64; 2]);

impl Branch {
    fn slices(&self) -> Result<Vec<Slice>> {
        match &self.placement {
            Placement::Uniform(g) => Ok(vec![Slice {
                weight: 1.0,
                index: None,
                state: self.state.clone(),
                geometry: *g,
            }]),
            Placement::Conditioned { on, configs } => {
                let layout = self.state.layout();
                let d = layout.get(on)?.dimension();
                let pos = layout.position(on)?;
                let record: Vec<usize> = (0..self.state.dimension())
                    .map(|i| layout.digits(i)[pos])
                    .collect();
                let mut out = Vec::new();
                for (r, g) in configs.iter().enumerate().take(d) {
                    let rho = self.state.matrix();
                    let m = CMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| {
                        if record[i] == r && record[j] == r {
                            rho[(i, j)]
                        } else {
                            C64::new(0.0, 0.0)
                        }
                    });
                    let w = m.trace().re;
                    if w > SLICE_TOLERANCE {
                        out.push(Slice {
                            weight: w,
                            index: Some(r),
                            state: DensityState::new_unchecked(
                                layout.clone(),
                                m / C64::new(w, 0.0),
                            )?,
                            geometry: *g,
                        });
                    }
                }
                Ok(out)
            }
        }
    }

    /// Slice weight times chamber occupancy, keyed by slice index.
    fn weighted_occupancy(&self, position: &str) -> Result<Vec<SliceOccupancy>> {
        self.slices()?
            .into_iter()
            .map(|s| {
                let o = occupancy(&s.state, position)?;
                Ok((s.index, s.geometry, [s.weight * o[0], s.weight * o[1]]))
            })
            .collect()
    }

    fn spatial_entropy(&self, position: Option<&str>, kb: f64) -> Result<f64> {
        let Some(pos) = position else { return Ok(0.0) };
        let mut s = 0.0;
        for slice in self.slices()? {
            let reg = slice.geometry.register(occupancy(&slice.state, pos)?)?;
            s += slice.weight * reg.spatial_entropy(kb)?;
        }
        Ok(s)
    }
}

fn occupancy(rho: &DensityState, position: &str) -> Result<[f64; 2]> {
    let q = pointer_distribution(rho, &[position])?;
    let p = q.probabilities();
    Ok([p[0], p[1]])
}

/// A state change that shifts the particle between chambers of unequal
/// volume would change the spatial entropy without any volume work.
fn check_no_transport(before: &Branch, after: &Branch, position: &str) -> Result<()> {
    let old = before.weighted_occupancy(position)?;
    let new = after.weighted_occupancy(position)?;
    for (index, g, o) in &old {
        let unequal = (g.volumes[0] - g.volumes[1]).abs() > OCCUPANCY_TOLERANCE;
        if !unequal {
            continue;
        }
        let n = new
            .iter()
            .find(|(i, _, _)| i == index)
            .map_or([0.0; 2], |(_, _, n)| *n);
        if (n[0] - o[0]).abs() > OCCUPANCY_TOLERANCE || (n[1] - o[1]).abs() > OCCUPANCY_TOLERANCE {
            return Err(Error::VolumeMismatch(format!(
                "step moves the particle between chambers of volumes {} and {}",
                g.volumes[0], g.volumes[1]
            )));
        }
    }
    Ok(())
}

fn strs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct Flags {
    pub nonphysical: bool,
    pub violation: bool,
}

impl Flags {
    pub fn label(&self) -> &'static str {
        if self.nonphysical {
            "NONPHYSICAL"
        } else if self.violation {
            "VIOLATION"
        } else {
            ""
        }
    }
}

/// Entropies of one branch after a step, in units of `k_B` times the particle count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchRow {
    pub branch: usize,
    pub probability: f64,
    pub s_vn_system: f64,
    pub s_vn_joint: f64,
    pub h_cond: f64,
    pub entry: WorkEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub cycle: u32,
    pub step_id: usize,
    pub step_kind: String,
    pub branches: Vec<BranchRow>,
    /// Branch-averaged system entropy.
    pub s_vn_system: f64,
    /// System entropy of the branch mixture.
    pub s_vn_system_mixture: f64,
    /// System-plus-apparatus entropy of the branch mixture.
    pub s_vn_joint: f64,
    pub s_vn_joint_branch_avg: f64,
    /// Entropy of the branch mixture over every register.
    pub s_vn_full: f64,
    pub s_spatial: f64,
    pub h_cond: f64,
    pub entry: WorkEntry,
    /// Change of full, spatial and bath entropy over the step.
    pub margin: f64,
    pub s_total_running: f64,
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Invalid(Error),
    #[error("cycle {cycle}, step {step_id} ({kind}): {source}")]
    Step {
        cycle: u32,
        step_id: usize,
        kind: String,
        source: Error,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub rows: Vec<LedgerRow>,
    pub branches: Vec<Branch>,
    pub initial_state: DensityState,
    pub initial_geometry: Geometry,
    pub bath: BathModel,
    pub work: WorkLedger,
    pub position: Option<String>,
    pub seed: u64,
}

impl RunOutput {
    pub fn net_work(&self) -> f64 {
        self.work.cumulative_work
    }

    pub fn averaged_state(&self) -> Result<DensityState> {
        average(&self.branches)
    }
}

fn average(branches: &[Branch]) -> Result<DensityState> {
    let parts: Vec<(f64, &DensityState)> =
        branches.iter().map(|b| (b.probability, &b.state)).collect();
    DensityState::mixture(&parts)
}

struct Effect {
    branches: Vec<(Branch, WorkEntry)>,
    nonphysical: bool,
    rebaseline: bool,
}

impl Effect {
    fn states(branches: Vec<(Branch, WorkEntry)>) -> Self {
        Effect {
            branches,
            nonphysical: false,
            rebaseline: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Totals {
    full: f64,
    spatial: f64,
}

/// Executes steps one at a time and keeps the ledger.
#[derive(Debug, Clone)]
pub struct Runner {
    protocol: Protocol,
    system: Vec<String>,
    joint: Vec<String>,
    apparatus: Vec<String>,
    position: Option<String>,
    scale: f64,
    bath: BathModel,
    work: WorkLedger,
    branches: Vec<Branch>,
    initial: (DensityState, Geometry),
    baseline: Totals,
    running: f64,
    rows: Vec<LedgerRow>,
    cycle: u32,
}

impl Runner {
    pub fn new(protocol: Protocol) -> Result<Runner> {
        protocol.validate()?;
        let state = prepared_state(&protocol.layout, &[])?;
        let geometry = Geometry::default();
        let system = protocol.system_labels();
        let apparatus = protocol.apparatus_labels();
        let joint = system.iter().chain(&apparatus).cloned().collect();
        let mut runner = Runner {
            bath: BathModel::new(protocol.config.temperature, protocol.config.kb)?,
            scale: protocol.config.particles as f64,
            position: protocol.position_label(),
            system,
            joint,
            apparatus,
            work: WorkLedger::default(),
            branches: vec![Branch {
                probability: 1.0,
                state: state.clone(),
                records: Vec::new(),
                placement: Placement::Uniform(geometry),
            }],
            initial: (state, geometry),
            baseline: Totals {
                full: 0.0,
                spatial: 0.0,
            },
            running: 0.0,
            rows: Vec::new(),
            cycle: 1,
            protocol,
        };
        runner.baseline = runner.totals(&runner.branches)?;
        Ok(runner)
    }

    pub fn protocol(&self) -> &Protocol {
        &self.protocol
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn rows(&self) -> &[LedgerRow] {
        &self.rows
    }

    pub fn bath(&self) -> &BathModel {
        &self.bath
    }

    pub fn set_cycle(&mut self, cycle: u32) {
        self.cycle = cycle;
    }

    pub fn averaged_state(&self) -> Result<DensityState> {
        average(&self.branches)
    }

    fn totals(&self, branches: &[Branch]) -> Result<Totals> {
        let avg = average(branches)?;
        let mut spatial = 0.0;
        for b in branches {
            spatial += b.probability * b.spatial_entropy(self.position.as_deref(), self.bath.kb)?;
        }
        Ok(Totals {
            full: self.scale * self.bath.kb * von_neumann_entropy(&avg)?,
            spatial: self.scale * spatial,
        })
    }

    pub fn finish(self) -> RunOutput {
        RunOutput {
            rows: self.rows,
            branches: self.branches,
            initial_state: self.initial.0,
            initial_geometry: self.initial.1,
            bath: self.bath,
            work: self.work,
            position: self.position,
            seed: self.protocol.config.seed,
        }
    }

    /// Runs one step; on error the runner is left unchanged.
    pub fn execute(&mut self, step_id: usize, step: &ProtocolStep) -> Result<LedgerRow> {
        self.check_conditioning(step)?;
        let effect = self.apply(step_id, step)?;
        let merged = coalesce(effect.branches)?;
        let branches: Vec<Branch> = merged.iter().map(|(b, _)| b.clone()).collect();
        let totals = self.totals(&branches)?;
        let entry = merged
            .iter()
            .fold(WorkEntry::default(), |acc, (b, e)| {
                acc.plus(e.scaled(b.probability))
            })
            .scaled(self.scale);
        let margin = if effect.rebaseline {
            0.0
        } else {
            (totals.full - self.baseline.full)
                + (totals.spatial - self.baseline.spatial)
                + entry.d_s_bath
        };
        let flags = Flags {
            nonphysical: effect.nonphysical,
            violation: !effect.nonphysical && margin < -TAU_AUDIT,
        };
        let mut row = self.row(step_id, step, &merged, totals, entry, margin, flags)?;
        row.s_total_running = self.running + margin;

        if let ProtocolStep::Prepare {
            volumes, partition, ..
        } = step
        {
            if self.cycle == 1 {
                let geometry = Geometry {
                    partition: *partition,
                    volumes: *volumes,
                };
                self.initial = (branches[0].state.clone(), geometry);
            }
        }
        self.branches = branches;
        self.baseline = totals;
        self.running += margin;
        self.bath.absorb(&entry);
        self.work
            .record(format!("{}:{}", self.cycle, step_id), entry);
        self.rows.push(row.clone());
        Ok(row)
    }

    #[allow(clippy::too_many_arguments)]
    fn row(
        &self,
        step_id: usize,
        step: &ProtocolStep,
        merged: &[(Branch, WorkEntry)],
        totals: Totals,
        entry: WorkEntry,
        margin: f64,
        flags: Flags,
    ) -> Result<LedgerRow> {
        let k = self.scale * self.bath.kb;
        let system = strs(&self.system);
        let joint = strs(&self.joint);
        let apparatus = strs(&self.apparatus);
        let h_cond = |rho: &DensityState| -> Result<f64> {
            let dist = pointer_distribution(rho, &joint)?;
            classical_conditional_entropy(&dist, &system, &apparatus)
        };
        let mut branches = Vec::new();
        for (i, (b, e)) in merged.iter().enumerate() {
            branches.push(BranchRow {
                branch: i,
                probability: b.probability,
                s_vn_system: k * von_neumann_entropy(&b.state.partial_trace(&system)?)?,
                s_vn_joint: k * von_neumann_entropy(&b.state.partial_trace(&joint)?)?,
                h_cond: k * h_cond(&b.state)?,
                entry: e.scaled(self.scale),
            });
        }
        let avg = average(&merged.iter().map(|(b, _)| b.clone()).collect::<Vec<_>>())?;
        Ok(LedgerRow {
            cycle: self.cycle,
            step_id,
            step_kind: step.kind().to_string(),
            s_vn_system: branches.iter().map(|r| r.probability * r.s_vn_system).sum(),
            s_vn_joint_branch_avg: branches.iter().map(|r| r.probability * r.s_vn_joint).sum(),
            branches,
            s_vn_system_mixture: k * von_neumann_entropy(&avg.partial_trace(&system)?)?,
            s_vn_joint: k * von_neumann_entropy(&avg.partial_trace(&joint)?)?,
            s_vn_full: totals.full,
            s_spatial: totals.spatial,
            h_cond: k * h_cond(&avg)?,
            entry,
            margin,
            s_total_running: self.running,
            flags,
        })
    }

    fn check_conditioning(&self, step: &ProtocolStep) -> Result<()> {
        let exempt = match step {
            ProtocolStep::Prepare { .. } => return Ok(()),
            ProtocolStep::CompressVacuum { record, .. }
            | ProtocolStep::ExtractWorkKnownPosition { record } => record.as_deref(),
            _ => None,
        };
        for b in &self.branches {
            if let Some(on) = b.placement.conditioning() {
                if Some(on) != exempt && step.labels().contains(&on) {
                    return Err(Error::Validation(format!(
                        "chamber geometry still depends on the record in `{on}`"
                    )));
                }
            }
        }
        Ok(())
    }

    fn unchanged_geometry<F>(&self, mut f: F) -> Result<Effect>
    where
        F: FnMut(&DensityState) -> Result<DensityState>,
    {
        let branches = self
            .branches
            .iter()
            .map(|b| {
                let next = Branch {
                    state: f(&b.state)?,
                    ..b.clone()
                };
                if let Some(pos) = self.position.as_deref() {
                    check_no_transport(b, &next, pos)?;
                }
                Ok((next, WorkEntry::default()))
            })
            .collect::<Result<_>>()?;
        Ok(Effect::states(branches))
    }

    /// Applies `f` to the volume register of every slice, conditioning the
    /// geometry on `record` first when given.
    fn per_slice<F>(&self, record: Option<&str>, mut f: F) -> Result<Effect>
    where
        F: FnMut(&VolumeRegister) -> Result<(VolumeRegister, WorkEntry)>,
    {
        let position = self
            .position
            .as_deref()
            .expect("validated: geometry steps need a position register");
        let mut out = Vec::new();
        for b in &self.branches {
            let mut branch = b.clone();
            if let Some(rec) = record {
                branch.placement = match &b.placement {
                    Placement::Uniform(g) => Placement::Conditioned {
                        on: rec.to_string(),
                        configs: vec![*g; b.state.layout().get(rec)?.dimension()],
                    },
                    Placement::Conditioned { on, .. } if on != rec => {
                        return Err(Error::Validation(format!(
                            "geometry already depends on `{on}`"
                        )))
                    }
                    p => p.clone(),
                };
            }
            let mut entry = WorkEntry::default();
            for slice in branch.slices()? {
                let reg = slice
                    .geometry
                    .register(occupancy(&slice.state, position)?)?;
                let (next, e) = f(&reg)?;
                entry = entry.plus(e.scaled(slice.weight));
                match (&mut branch.placement, slice.index) {
                    (Placement::Uniform(g), _) => *g = Geometry::of(&next),
                    (Placement::Conditioned { configs, .. }, Some(r)) => {
                        configs[r] = Geometry::of(&next)
                    }
                    (Placement::Conditioned { .. }, None) => {
                        unreachable!("conditioned slices carry an index")
                    }
                }
            }
            branch.placement = branch.placement.normalized();
            out.push((branch, entry));
        }
        Ok(Effect::states(out))
    }

    fn apply(&self, step_id: usize, step: &ProtocolStep) -> Result<Effect> {
        let layout = &self.protocol.layout;
        let bath = self.bath;
        match step {
            ProtocolStep::Prepare {
                factors,
                volumes,
                partition,
            } => {
                let state = prepared_state(layout, factors)?;
                let geometry = Geometry {
                    partition: *partition,
                    volumes: *volumes,
                };
                let nonphysical = self.cycle > 1
                    && (self.averaged_state()?.trace_distance(&state)? >= COALESCE_TOLERANCE
                        || self
                            .branches
                            .iter()
                            .any(|b| !b.placement.approx_eq(&Placement::Uniform(geometry))));
                Ok(Effect {
                    branches: vec![(
                        Branch {
                            probability: 1.0,
                            state,
                            records: Vec::new(),
                            placement: Placement::Uniform(geometry),
                        },
                        WorkEntry::default(),
                    )],
                    nonphysical,
                    rebaseline: self.cycle == 1,
                })
            }
            ProtocolStep::ApplyUnitary { gate, .. } => {
                let u = gate.unitary(layout)?;
                self.unchanged_geometry(|s| s.apply_unitary(&u))
            }
            ProtocolStep::NonSelectiveMeasure { target, basis } => {
                let m = basis.measurement(layout, target)?;
                self.unchanged_geometry(|s| nonselective_measure(s, &m))
            }
            ProtocolStep::CoupleApparatus { source, apparatus } => {
                self.unchanged_geometry(|s| couple_apparatus(s, source, apparatus))
            }
            ProtocolStep::Separate { spin, position } => {
                let u = separation_unitary(layout, spin, position)?;
                self.unchanged_geometry(|s| s.apply_unitary(&u))
            }
            ProtocolStep::SelectiveMeasure {
                target,
                apparatus,
                basis,
            } => {
                let m = basis.measurement(layout, target)?;
                let coupled = self.unchanged_geometry(|s| match apparatus {
                    Some(a) => couple_apparatus(s, target, a),
                    None => Ok(s.clone()),
                })?;
                if self.protocol.config.mode == Mode::NoCollapse {
                    return Ok(coupled);
                }
                let mut out = Vec::new();
                for (b, _) in coupled.branches {
                    for o in selective_measure(&b.state, &m)? {
                        let mut records = b.records.clone();
                        records.push((step_id, o.label));
                        out.push((
                            Branch {
                                probability: b.probability * o.probability,
                                state: o.post_state,
                                records,
                                placement: b.placement.clone(),
                            },
                            WorkEntry::default(),
                        ));
                    }
                }
                Ok(Effect::states(out))
            }
            ProtocolStep::IsothermalVolume { moves } => self.per_slice(None, |reg| {
                let mut reg = *reg;
                let mut total = WorkEntry::default();
                for m in moves {
                    let (next, e) =
                        isothermal_volume_change(&reg, m.chamber, m.v_from, m.v_to, &bath)?;
                    reg = next;
                    total = total.plus(e);
                }
                Ok((reg, total))
            }),
            ProtocolStep::CompressVacuum { chamber, record } => {
                self.per_slice(record.as_deref(), |reg| {
                    let c = match chamber {
                        Some(c) => *c,
                        None => Chamber::BOTH
                            .into_iter()
                            .find(|c| !reg.occupied(*c))
                            .ok_or_else(|| Error::OccupiedChamber("L and R".into()))?,
                    };
                    compress_vacuum(reg, c)
                })
            }
            ProtocolStep::ExtractWorkKnownPosition { record } => self
                .per_slice(record.as_deref(), |reg| {
                    extract_work_known_position(reg, &bath)
                }),
            ProtocolStep::InsertPartition {} => self.per_slice(None, |reg| {
                let mut next = *reg;
                next.partition = true;
                for c in Chamber::BOTH {
                    let v = &mut next.volume[c.index()];
                    if !reg.occupied(c) {
                        *v = 0.5;
                    } else if (*v - 0.5).abs() > 1e-9 {
                        return Err(Error::VolumeMismatch(format!(
                            "occupied chamber {} has volume {v}, the partition goes in at 0.5",
                            c.label()
                        )));
                    }
                }
                Ok((next, WorkEntry::default()))
            }),
            ProtocolStep::RemovePartition {} => self.remove_partition(),
            ProtocolStep::LandauerReset { apparatus } => {
                let q = pointer_distribution(&self.averaged_state()?, &[apparatus])?;
                let cost = landauer_cost(&q, &bath);
                let mut effect = self.unchanged_geometry(|s| reset_to_ready(s, apparatus))?;
                for (_, e) in &mut effect.branches {
                    *e = cost;
                }
                Ok(effect)
            }
            ProtocolStep::UnitaryResetAttempt { apparatus } => {
                let states: Vec<&DensityState> = self.branches.iter().map(|b| &b.state).collect();
                let attempt = unitary_reset_attempt(
                    &states,
                    apparatus,
                    self.protocol.config.permit_infeasible_reset,
                )?;
                let branches = self
                    .branches
                    .iter()
                    .zip(attempt.states)
                    .map(|(b, state)| (Branch { state, ..b.clone() }, WorkEntry::default()))
                    .collect();
                Ok(Effect {
                    branches,
                    nonphysical: attempt.nonphysical,
                    rebaseline: false,
                })
            }
        }
    }

    /// Merges the two chambers into one vessel filled from the left wall;
    /// the position register takes the new chamber shares of that vessel.
    fn remove_partition(&self) -> Result<Effect> {
        let position = self
            .position
            .as_deref()
            .expect("validated: geometry steps need a position register");
        let layout = &self.protocol.layout;
        let pos_layout = layout.restrict(&[position])?;
        let merge = |g: &Geometry| -> Result<(Geometry, [f64; 2])> {
            let v = g.volumes[0] + g.volumes[1];
            if v <= 0.0 {
                return Err(Error::VolumeMismatch(
                    "both chambers have zero volume".into(),
                ));
            }
            let volumes = [v.min(0.5), (v - 0.5).max(0.0)];
            Ok((
                Geometry {
                    partition: false,
                    volumes,
                },
                [volumes[0] / v, volumes[1] / v],
            ))
        };
        let spread = |o: [f64; 2]| -> Result<DensityState> {
            let d = CVector::from_vec(vec![C64::new(o[0], 0.0), C64::new(o[1], 0.0)]);
            DensityState::new_unchecked(pos_layout.clone(), CMatrix::from_diagonal(&d))
        };
        let mut out = Vec::new();
        for b in &self.branches {
            let slices = b.slices()?;
            let shares: Vec<[f64; 2]> = slices
                .iter()
                .map(|s| merge(&s.geometry).map(|m| m.1))
                .collect::<Result<_>>()?;
            let uniform = shares
                .windows(2)
                .all(|w| (w[0][0] - w[1][0]).abs() <= GEOMETRY_TOLERANCE);
            let state = if uniform {
                b.state.replace_factors(&spread(shares[0])?)?
            } else {
                let n = b.state.dimension();
                let mut m = CMatrix::zeros(n, n);
                for (s, o) in slices.iter().zip(&shares) {
                    m += s.state.replace_factors(&spread(*o)?)?.matrix() * C64::new(s.weight, 0.0);
                }
                DensityState::new_unchecked(layout.clone(), m)?
            };
            let placement = match &b.placement {
                Placement::Uniform(g) => Placement::Uniform(merge(g)?.0),
                Placement::Conditioned { on, configs } => Placement::Conditioned {
                    on: on.clone(),
                    configs: configs
                        .iter()
                        .map(|g| merge(g).map(|m| m.0))
                        .collect::<Result<_>>()?,
                },
            }
            .normalized();
            out.push((
                Branch {
                    state,
                    placement,
                    ..b.clone()
                },
                WorkEntry::default(),
            ));
        }
        Ok(Effect::states(out))
    }
}

/// Merges branches whose states and geometry coincide.
fn coalesce(branches: Vec<(Branch, WorkEntry)>) -> Result<Vec<(Branch, WorkEntry)>> {
    let total: f64 = branches.iter().map(|(b, _)| b.probability).sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NumericalFailure(format!(
            "branch probabilities sum to {total}"
        )));
    }
    let mut out: Vec<(Branch, WorkEntry)> = Vec::new();
    'next: for (b, e) in branches {
        let b = Branch {
            probability: b.probability / total,
            ..b
        };
        for (kept, ke) in &mut out {
            if kept.placement.approx_eq(&b.placement)
                && kept.state.trace_distance(&b.state)? < COALESCE_TOLERANCE
            {
                let p = kept.probability + b.probability;
                *ke = ke
                    .scaled(kept.probability / p)
                    .plus(e.scaled(b.probability / p));
                let common = kept
                    .records
                    .iter()
                    .zip(&b.records)
                    .take_while(|(x, y)| x == y)
                    .count();
                kept.records.truncate(common);
                kept.probability = p;
                continue 'next;
            }
        }
        if b.probability > TAU_TRACE {
            out.push((b, e));
        }
    }
    Ok(out)
}

/// Runs every cycle of `protocol`.
pub fn run(protocol: &Protocol) -> std::result::Result<RunOutput, RunError> {
    let mut runner = Runner::new(protocol.clone()).map_err(RunError::Invalid)?;
    for cycle in 1..=protocol.config.cycles {
        runner.set_cycle(cycle);
        for (i, step) in protocol.steps.iter().enumerate() {
            runner
                .execute(i + 1, step)
                .map_err(|source| RunError::Step {
                    cycle,
                    step_id: i + 1,
                    kind: step.kind().to_string(),
                    source,
                })?;
        }
    }
    Ok(runner.finish())
}
