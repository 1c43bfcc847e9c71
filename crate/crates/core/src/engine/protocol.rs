use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qcore::{
    embed, gates, CMatrix, CVector, DensityState, ProjectiveMeasurement, Role, SubsystemSpec,
    SystemLayout, UnitaryOp, C64, TAU_EIG,
};
use crate::thermo::Chamber;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Selective measurements split the run into weighted branches.
    #[default]
    Collapse,
    /// Selective measurements only correlate an apparatus; nothing branches.
    NoCollapse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub temperature: f64,
    pub kb: f64,
    pub mode: Mode,
    pub permit_infeasible_reset: bool,
    pub cycles: u32,
    pub seed: u64,
    /// Number of non-interacting particles represented by the simulated one.
    pub particles: u64,
    /// Labels forming the measured system.
    pub system: Vec<String>,
    /// Labels forming the recording apparatus; other factors are environment.
    pub apparatus: Vec<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            temperature: 1.0,
            kb: 1.0,
            mode: Mode::Collapse,
            permit_infeasible_reset: false,
            cycles: 1,
            seed: 42,
            particles: 1,
            system: Vec::new(),
            apparatus: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Basis {
    #[default]
    Pointer,
    /// Eigenbasis of sigma_x on a two-level factor, outcomes `+x` and `-x`.
    X,
}

impl Basis {
    pub fn measurement(self, layout: &SystemLayout, target: &str) -> Result<ProjectiveMeasurement> {
        match self {
            Basis::Pointer => ProjectiveMeasurement::pointer(layout, target),
            Basis::X => {
                if layout.get(target)?.dimension() != 2 {
                    return Err(Error::Validation(format!(
                        "x basis needs a two-level `{target}`"
                    )));
                }
                ProjectiveMeasurement::in_basis(target, &["+x", "-x"], &gates::hadamard())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalGate {
    Identity,
    Hadamard,
    PauliX,
    PauliZ,
    Ry {
        theta: f64,
    },
    /// Exchanges two pointer states by name.
    Swap {
        a: String,
        b: String,
    },
}

impl LocalGate {
    pub fn matrix(&self, spec: &SubsystemSpec) -> Result<CMatrix> {
        let d = spec.dimension();
        let qubit = |m: CMatrix| {
            if d == 2 {
                Ok(m)
            } else {
                Err(Error::Validation(format!(
                    "gate {self:?} needs a two-level `{}`",
                    spec.label
                )))
            }
        };
        match self {
            LocalGate::Identity => Ok(CMatrix::identity(d, d)),
            LocalGate::Hadamard => qubit(gates::hadamard()),
            LocalGate::PauliX => qubit(gates::pauli_x()),
            LocalGate::PauliZ => qubit(gates::pauli_z()),
            LocalGate::Ry { theta } => qubit(gates::ry(*theta)),
            LocalGate::Swap { a, b } => Ok(gates::transposition(
                d,
                spec.pointer_index(a)?,
                spec.pointer_index(b)?,
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalOp {
    pub target: String,
    pub op: LocalGate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlCase {
    pub when: String,
    pub ops: Vec<LocalOp>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum Gate {
    Local {
        target: String,
        op: LocalGate,
    },
    /// Applies the listed ops, in order, on each pointer state of `control`.
    Controlled {
        control: String,
        cases: Vec<ControlCase>,
    },
    /// The apparatus coupling permutation; applying it twice undoes it.
    Couple {
        source: String,
        apparatus: String,
    },
}

fn ops_unitary(layout: &SystemLayout, ops: &[LocalOp]) -> Result<CMatrix> {
    let n = layout.total_dimension();
    let mut u = CMatrix::identity(n, n);
    for op in ops {
        u = embed(layout, &op.target, &op.op.matrix(layout.get(&op.target)?)?)? * u;
    }
    Ok(u)
}

impl Gate {
    pub fn unitary(&self, layout: &SystemLayout) -> Result<UnitaryOp> {
        match self {
            Gate::Local { target, op } => {
                UnitaryOp::local(layout, target, &op.matrix(layout.get(target)?)?)
            }
            Gate::Controlled { control, cases } => {
                let spec = layout.get(control)?;
                let d = spec.dimension();
                let n = layout.total_dimension();
                let mut u = CMatrix::zeros(n, n);
                for k in 0..d {
                    let matching: Vec<&ControlCase> = cases
                        .iter()
                        .filter(|c| c.when == spec.pointer_basis[k])
                        .collect();
                    if matching.len() > 1 {
                        return Err(Error::Validation(format!(
                            "pointer `{}` of `{control}` has several cases",
                            spec.pointer_basis[k]
                        )));
                    }
                    let block = match matching.first() {
                        Some(case) => {
                            if case.ops.iter().any(|o| &o.target == control) {
                                return Err(Error::Validation(format!(
                                    "controlled op acts on its control `{control}`"
                                )));
                            }
                            ops_unitary(layout, &case.ops)?
                        }
                        None => CMatrix::identity(n, n),
                    };
                    u += embed(layout, control, &gates::ket_bra(d, k))? * block;
                }
                for case in cases {
                    spec.pointer_index(&case.when)?;
                }
                UnitaryOp::new(layout.clone(), u)
            }
            Gate::Couple { source, apparatus } => {
                crate::channels::coupling_unitary(layout, source, apparatus)
            }
        }
    }

    /// Labels whose reduced state the gate may change.
    pub fn labels(&self) -> Vec<&str> {
        match self {
            Gate::Local { target, .. } => vec![target],
            Gate::Controlled { control, cases } => std::iter::once(control.as_str())
                .chain(
                    cases
                        .iter()
                        .flat_map(|c| c.ops.iter().map(|o| o.target.as_str())),
                )
                .collect(),
            Gate::Couple { source, apparatus } => vec![source, apparatus],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum LocalState {
    Pointer(String),
    /// Pure state as `[re, im]` pairs in pointer order (normalised on use).
    Amplitudes(Vec<[f64; 2]>),
    /// Diagonal mixture over pointer states.
    Mixture(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FactorPrep {
    pub label: String,
    pub state: LocalState,
}

impl FactorPrep {
    pub fn new(label: &str, state: LocalState) -> Self {
        FactorPrep {
            label: label.to_string(),
            state,
        }
    }

    fn matrix(&self, spec: &SubsystemSpec) -> Result<CMatrix> {
        let d = spec.dimension();
        let bad = |why: &str| Error::Validation(format!("preparation of `{}`: {why}", self.label));
        match &self.state {
            LocalState::Pointer(name) => Ok(gates::ket_bra(d, spec.pointer_index(name)?)),
            LocalState::Amplitudes(a) => {
                if a.len() != d {
                    return Err(bad("wrong number of amplitudes"));
                }
                let v = CVector::from_iterator(d, a.iter().map(|[re, im]| C64::new(*re, *im)));
                let norm = v.norm();
                if !(norm > TAU_EIG && norm.is_finite()) {
                    return Err(bad("zero amplitude vector"));
                }
                let v = v / C64::new(norm, 0.0);
                Ok(&v * v.adjoint())
            }
            LocalState::Mixture(w) => {
                let total: f64 = w.iter().sum();
                if w.len() != d
                    || w.iter().any(|x| *x < 0.0 || !x.is_finite())
                    || (total - 1.0).abs() > 1e-9
                {
                    return Err(bad(
                        "weights must be one non-negative number per pointer state, summing to 1",
                    ));
                }
                Ok(CMatrix::from_diagonal(&CVector::from_iterator(
                    d,
                    w.iter().map(|x| C64::new(*x, 0.0)),
                )))
            }
        }
    }
}

fn half() -> [f64; 2] {
    [0.5, 0.5]
}

fn yes() -> bool {
    true
}

/// One simultaneous, quasi-static wall move.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeMove {
    pub chamber: Chamber,
    pub v_from: f64,
    pub v_to: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProtocolStep {
    /// Sets the state; unlisted factors start in their first pointer state.
    Prepare {
        factors: Vec<FactorPrep>,
        #[serde(default = "half")]
        volumes: [f64; 2],
        #[serde(default = "yes")]
        partition: bool,
    },
    ApplyUnitary {
        name: String,
        gate: Gate,
    },
    NonSelectiveMeasure {
        target: String,
        #[serde(default)]
        basis: Basis,
    },
    SelectiveMeasure {
        target: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        apparatus: Option<String>,
        #[serde(default)]
        basis: Basis,
    },
    CoupleApparatus {
        source: String,
        apparatus: String,
    },
    Separate {
        spin: String,
        position: String,
    },
    IsothermalVolume {
        moves: Vec<VolumeMove>,
    },
    CompressVacuum {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        chamber: Option<Chamber>,
        /// Apparatus whose record selects the chamber in each slice.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record: Option<String>,
    },
    ExtractWorkKnownPosition {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        record: Option<String>,
    },
    LandauerReset {
        apparatus: String,
    },
    UnitaryResetAttempt {
        apparatus: String,
    },
    RemovePartition {},
    InsertPartition {},
}

impl ProtocolStep {
    pub fn kind(&self) -> &'static str {
        match self {
            ProtocolStep::Prepare { .. } => "prepare",
            ProtocolStep::ApplyUnitary { .. } => "apply_unitary",
            ProtocolStep::NonSelectiveMeasure { .. } => "non_selective_measure",
            ProtocolStep::SelectiveMeasure { .. } => "selective_measure",
            ProtocolStep::CoupleApparatus { .. } => "couple_apparatus",
            ProtocolStep::Separate { .. } => "separate",
            ProtocolStep::IsothermalVolume { .. } => "isothermal_volume",
            ProtocolStep::CompressVacuum { .. } => "compress_vacuum",
            ProtocolStep::ExtractWorkKnownPosition { .. } => "extract_work_known_position",
            ProtocolStep::LandauerReset { .. } => "landauer_reset",
            ProtocolStep::UnitaryResetAttempt { .. } => "unitary_reset_attempt",
            ProtocolStep::RemovePartition {} => "remove_partition",
            ProtocolStep::InsertPartition {} => "insert_partition",
        }
    }

    /// Every subsystem label the step names.
    pub fn labels(&self) -> Vec<&str> {
        match self {
            ProtocolStep::Prepare { factors, .. } => {
                factors.iter().map(|f| f.label.as_str()).collect()
            }
            ProtocolStep::ApplyUnitary { gate, .. } => gate.labels(),
            ProtocolStep::NonSelectiveMeasure { target, .. } => vec![target],
            ProtocolStep::SelectiveMeasure {
                target, apparatus, ..
            } => std::iter::once(target.as_str())
                .chain(apparatus.as_deref())
                .collect(),
            ProtocolStep::CoupleApparatus { source, apparatus } => vec![source, apparatus],
            ProtocolStep::Separate { spin, position } => vec![spin, position],
            ProtocolStep::CompressVacuum { record, .. }
            | ProtocolStep::ExtractWorkKnownPosition { record } => {
                record.as_deref().into_iter().collect()
            }
            ProtocolStep::LandauerReset { apparatus }
            | ProtocolStep::UnitaryResetAttempt { apparatus } => {
                vec![apparatus]
            }
            ProtocolStep::IsothermalVolume { .. }
            | ProtocolStep::RemovePartition {}
            | ProtocolStep::InsertPartition {} => Vec::new(),
        }
    }

    fn uses_geometry(&self) -> bool {
        matches!(
            self,
            ProtocolStep::IsothermalVolume { .. }
                | ProtocolStep::CompressVacuum { .. }
                | ProtocolStep::ExtractWorkKnownPosition { .. }
                | ProtocolStep::RemovePartition {}
                | ProtocolStep::InsertPartition {}
        )
    }
}

/// Builds the product state of a preparation step.
pub fn prepared_state(layout: &SystemLayout, factors: &[FactorPrep]) -> Result<DensityState> {
    for f in factors {
        layout.get(&f.label)?;
        if factors.iter().filter(|g| g.label == f.label).count() > 1 {
            return Err(Error::Validation(format!("`{}` prepared twice", f.label)));
        }
    }
    let locals = layout
        .subsystems()
        .iter()
        .map(
            |spec| match factors.iter().find(|f| f.label == spec.label) {
                Some(f) => f.matrix(spec),
                None => Ok(gates::ket_bra(spec.dimension(), 0)),
            },
        )
        .collect::<Result<Vec<_>>>()?;
    DensityState::product(layout.clone(), &locals)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetKind {
    Landauer,
    UnitaryAttempt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Protocol {
    pub name: String,
    #[serde(default)]
    pub config: RunConfig,
    pub layout: SystemLayout,
    #[serde(default)]
    pub steps: Vec<ProtocolStep>,
}

impl Protocol {
    /// The measured-system labels, defaulting to every spin and position factor.
    pub fn system_labels(&self) -> Vec<String> {
        if !self.config.system.is_empty() {
            return self.config.system.clone();
        }
        self.layout
            .subsystems()
            .iter()
            .filter(|s| matches!(s.role, Role::Spin | Role::Position))
            .map(|s| s.label.clone())
            .collect()
    }

    /// The apparatus labels, defaulting to every apparatus factor.
    pub fn apparatus_labels(&self) -> Vec<String> {
        if !self.config.apparatus.is_empty() {
            return self.config.apparatus.clone();
        }
        self.layout
            .subsystems()
            .iter()
            .filter(|s| s.role == Role::Apparatus)
            .map(|s| s.label.clone())
            .collect()
    }

    pub fn position_label(&self) -> Option<String> {
        self.layout
            .find_role(Role::Position)
            .map(|s| s.label.clone())
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.config;
        if !(c.temperature > 0.0 && c.temperature.is_finite()) || !(c.kb > 0.0 && c.kb.is_finite())
        {
            return Err(Error::Validation(
                "temperature and kb must be positive and finite".into(),
            ));
        }
        if c.particles == 0 {
            return Err(Error::Validation("particles must be at least 1".into()));
        }
        let system = self.system_labels();
        let apparatus = self.apparatus_labels();
        for l in system.iter().chain(&apparatus) {
            if !self.layout.contains(l) {
                return Err(Error::Validation(format!(
                    "config names unknown subsystem `{l}`"
                )));
            }
        }
        if system.is_empty() {
            return Err(Error::Validation("no system subsystems".into()));
        }
        if system.iter().any(|l| apparatus.contains(l)) {
            return Err(Error::Validation("system and apparatus overlap".into()));
        }
        let position = self.position_label();
        if let Some(p) = &position {
            if self.layout.get(p)?.dimension() != 2 {
                return Err(Error::Validation(format!(
                    "position register `{p}` must have two chambers"
                )));
            }
        }
        for (i, step) in self.steps.iter().enumerate() {
            self.validate_step(step, position.as_deref()).map_err(|e| {
                Error::Validation(format!("step {} ({}): {}", i + 1, step.kind(), strip(e)))
            })?;
        }
        Ok(())
    }

    fn validate_step(&self, step: &ProtocolStep, position: Option<&str>) -> Result<()> {
        for l in step.labels() {
            if !self.layout.contains(l) {
                return Err(Error::UnknownSubsystem(l.to_string()));
            }
        }
        if step.uses_geometry() && position.is_none() {
            return Err(Error::Validation(
                "no position register in the layout".into(),
            ));
        }
        let fraction = |v: f64| (0.0..=1.0).contains(&v);
        match step {
            ProtocolStep::Prepare {
                factors, volumes, ..
            } => {
                if !volumes.iter().all(|v| fraction(*v)) || volumes[0] + volumes[1] > 1.0 + 1e-12 {
                    return Err(Error::Validation(format!("bad volumes {volumes:?}")));
                }
                prepared_state(&self.layout, factors)?;
            }
            ProtocolStep::ApplyUnitary { gate, .. } => {
                gate.unitary(&self.layout)?;
            }
            ProtocolStep::NonSelectiveMeasure { target, basis } => {
                basis.measurement(&self.layout, target)?;
            }
            ProtocolStep::SelectiveMeasure {
                target,
                apparatus,
                basis,
            } => {
                basis.measurement(&self.layout, target)?;
                match apparatus {
                    Some(a) => {
                        if *basis != Basis::Pointer {
                            return Err(Error::Validation(
                                "apparatus records need the pointer basis".into(),
                            ));
                        }
                        crate::channels::coupling_unitary(&self.layout, target, a)?;
                    }
                    None if self.config.mode == Mode::NoCollapse => {
                        return Err(Error::Validation(
                            "no-collapse mode needs an apparatus to record the outcome".into(),
                        ))
                    }
                    None => {}
                }
            }
            ProtocolStep::CoupleApparatus { source, apparatus } => {
                crate::channels::coupling_unitary(&self.layout, source, apparatus)?;
            }
            ProtocolStep::Separate { spin, position } => {
                crate::channels::separation_unitary(&self.layout, spin, position)?;
            }
            ProtocolStep::IsothermalVolume { moves } => {
                if moves.is_empty() {
                    return Err(Error::Validation("no wall moves".into()));
                }
                for m in moves {
                    if !fraction(m.v_from) || !fraction(m.v_to) {
                        return Err(Error::Validation("volumes are fractions in [0, 1]".into()));
                    }
                    if moves.iter().filter(|n| n.chamber == m.chamber).count() > 1 {
                        return Err(Error::Validation(
                            "a chamber moves twice in one step".into(),
                        ));
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// The first `n` steps only.
    pub fn truncated(mut self, n: usize) -> Self {
        self.steps.truncate(n);
        self
    }

    /// Rewrites every reset step to the given kind.
    pub fn with_reset(mut self, kind: ResetKind) -> Self {
        for step in &mut self.steps {
            let apparatus = match step {
                ProtocolStep::LandauerReset { apparatus }
                | ProtocolStep::UnitaryResetAttempt { apparatus } => apparatus.clone(),
                _ => continue,
            };
            *step = match kind {
                ResetKind::Landauer => ProtocolStep::LandauerReset { apparatus },
                ResetKind::UnitaryAttempt => ProtocolStep::UnitaryResetAttempt { apparatus },
            };
        }
        self
    }
}

fn strip(e: Error) -> String {
    match e {
        Error::Validation(s) => s,
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout() -> SystemLayout {
        SystemLayout::new(vec![
            SubsystemSpec::new("spin", Role::Spin, &["+z", "-z"]).unwrap(),
            SubsystemSpec::new("pos", Role::Position, &["L", "R"]).unwrap(),
            SubsystemSpec::new("M", Role::Apparatus, &["ready", "+", "-"]).unwrap(),
        ])
        .unwrap()
    }

    fn protocol(steps: Vec<ProtocolStep>) -> Protocol {
        Protocol {
            name: "t".into(),
            config: RunConfig::default(),
            layout: layout(),
            steps,
        }
    }

    #[test]
    fn controlled_gate_is_block_diagonal() {
        let g = Gate::Controlled {
            control: "pos".into(),
            cases: vec![ControlCase {
                when: "R".into(),
                ops: vec![LocalOp {
                    target: "spin".into(),
                    op: LocalGate::PauliX,
                }],
            }],
        };
        let l = layout();
        let u = g.unitary(&l).unwrap();
        let s = DensityState::basis_state(l.clone(), &[0, 1, 0]).unwrap();
        let out = s.apply_unitary(&u).unwrap();
        assert_eq!(out.diagonal()[l.index_of(&[1, 1, 0])], 1.0);
        let s = DensityState::basis_state(l.clone(), &[0, 0, 0]).unwrap();
        assert_eq!(s.apply_unitary(&u).unwrap(), s);
    }

    #[test]
    fn validation_catches_bad_references() {
        let bad = protocol(vec![ProtocolStep::LandauerReset {
            apparatus: "Q".into(),
        }]);
        assert!(matches!(bad.validate(), Err(Error::Validation(m)) if m.contains("step 1")));
        let bad_gate = protocol(vec![ProtocolStep::ApplyUnitary {
            name: "h".into(),
            gate: Gate::Local {
                target: "M".into(),
                op: LocalGate::Hadamard,
            },
        }]);
        assert!(bad_gate.validate().is_err());
        let mut nc = protocol(vec![ProtocolStep::SelectiveMeasure {
            target: "pos".into(),
            apparatus: None,
            basis: Basis::Pointer,
        }]);
        assert!(nc.validate().is_ok());
        nc.config.mode = Mode::NoCollapse;
        assert!(nc.validate().is_err());
        let bad_mix = protocol(vec![ProtocolStep::Prepare {
            factors: vec![FactorPrep::new("pos", LocalState::Mixture(vec![0.7, 0.7]))],
            volumes: half(),
            partition: true,
        }]);
        assert!(bad_mix.validate().is_err());
    }

    #[test]
    fn reset_rewrite() {
        let p = protocol(vec![ProtocolStep::LandauerReset {
            apparatus: "M".into(),
        }])
        .with_reset(ResetKind::UnitaryAttempt);
        assert_eq!(
            p.steps[0],
            ProtocolStep::UnitaryResetAttempt {
                apparatus: "M".into()
            }
        );
    }

    #[test]
    fn default_roles() {
        let p = protocol(vec![]);
        assert_eq!(p.system_labels(), vec!["spin", "pos"]);
        assert_eq!(p.apparatus_labels(), vec!["M"]);
        assert_eq!(p.position_label().as_deref(), Some("pos"));
    }
}
