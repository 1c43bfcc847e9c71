//! Ready-made protocols.

use std::f64::consts::FRAC_1_SQRT_2;

use super::protocol::{
    Basis, ControlCase, FactorPrep, Gate, LocalGate, LocalOp, LocalState, Protocol, ProtocolStep,
    RunConfig, VolumeMove,
};
use crate::error::{Error, Result};
use crate::qcore::{Role, SubsystemSpec, SystemLayout};
use crate::thermo::Chamber;

pub const BUILTIN_NAMES: [&str; 4] = ["vn-cycle", "hs-cycle", "amended-cycle", "szilard"];

/// Parameters of the gas cycle; the other builtins take none.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuiltinParams {
    pub w1_squared: f64,
    pub particles: u64,
}

impl Default for BuiltinParams {
    fn default() -> Self {
        BuiltinParams {
            w1_squared: 0.5,
            particles: 1,
        }
    }
}

pub fn builtin(name: &str, params: BuiltinParams) -> Result<Protocol> {
    match name {
        "vn-cycle" => von_neumann_cycle(params.particles, params.w1_squared),
        "hs-cycle" => hs_cycle(),
        "amended-cycle" => amended_cycle(),
        "szilard" => szilard(),
        other => Err(Error::Validation(format!(
            "unknown builtin `{other}`; available: {}",
            BUILTIN_NAMES.join(", ")
        ))),
    }
}

fn spec(label: &str, role: Role, basis: &[&str]) -> SubsystemSpec {
    SubsystemSpec::new(label, role, basis).expect("builtin subsystems are well formed")
}

fn layout(specs: Vec<SubsystemSpec>) -> SystemLayout {
    SystemLayout::new(specs).expect("builtin labels are distinct")
}

fn pointer(label: &str, name: &str) -> FactorPrep {
    FactorPrep::new(label, LocalState::Pointer(name.into()))
}

fn prepare(factors: Vec<FactorPrep>) -> ProtocolStep {
    ProtocolStep::Prepare {
        factors,
        volumes: [0.5, 0.5],
        partition: true,
    }
}

fn op(target: &str, op: LocalGate) -> LocalOp {
    LocalOp {
        target: target.into(),
        op,
    }
}

fn case(when: &str, ops: Vec<LocalOp>) -> ControlCase {
    ControlCase {
        when: when.into(),
        ops,
    }
}

fn controlled(name: &str, control: &str, cases: Vec<ControlCase>) -> ProtocolStep {
    ProtocolStep::ApplyUnitary {
        name: name.into(),
        gate: Gate::Controlled {
            control: control.into(),
            cases,
        },
    }
}

fn labels(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

/// Gas of `particles` spins prepared in `w1|+> + w2|->`, measured, sorted
/// into two vessels, compressed to equal density, rotated back and remixed.
pub fn von_neumann_cycle(particles: u64, w1_squared: f64) -> Result<Protocol> {
    if !(w1_squared > 0.0 && w1_squared <= 1.0) || particles == 0 {
        return Err(Error::Validation(
            "need 0 < w1^2 <= 1 and at least one particle".into(),
        ));
    }
    let w2_squared = 1.0 - w1_squared;
    let (w1, w2) = (w1_squared.sqrt(), w2_squared.sqrt());
    let theta = 2.0 * w2.atan2(w1);
    let mut steps = vec![
        prepare(vec![
            FactorPrep::new("spin", LocalState::Amplitudes(vec![[w1, 0.0], [w2, 0.0]])),
            pointer("pos", "L"),
        ]),
        ProtocolStep::NonSelectiveMeasure {
            target: "spin".into(),
            basis: Basis::Pointer,
        },
        ProtocolStep::Separate {
            spin: "spin".into(),
            position: "pos".into(),
        },
    ];
    let mut moves = vec![VolumeMove {
        chamber: Chamber::Left,
        v_from: 0.5,
        v_to: w1_squared / 2.0,
    }];
    if w2_squared > 0.0 {
        moves.push(VolumeMove {
            chamber: Chamber::Right,
            v_from: 0.5,
            v_to: w2_squared / 2.0,
        });
    }
    steps.push(ProtocolStep::IsothermalVolume { moves });
    if w2_squared == 0.0 {
        steps.push(ProtocolStep::CompressVacuum {
            chamber: Some(Chamber::Right),
            record: None,
        });
    }
    steps.extend([
        controlled(
            "rotate back to the prepared spin state",
            "pos",
            vec![
                case("L", vec![op("spin", LocalGate::Ry { theta })]),
                case(
                    "R",
                    vec![
                        op("spin", LocalGate::PauliX),
                        op("spin", LocalGate::Ry { theta }),
                    ],
                ),
            ],
        ),
        ProtocolStep::RemovePartition {},
        ProtocolStep::InsertPartition {},
    ]);
    Ok(Protocol {
        name: "vn-cycle".into(),
        config: RunConfig {
            particles,
            system: labels(&["spin", "pos"]),
            ..RunConfig::default()
        },
        layout: layout(vec![
            spec("spin", Role::Spin, &["+", "-"]),
            spec("pos", Role::Position, &["L", "R"]),
        ]),
        steps,
    })
}

fn hs_layout() -> SystemLayout {
    layout(vec![
        spec("spin", Role::Spin, &["+z", "-z"]),
        spec("pos", Role::Position, &["L", "R"]),
        spec("M", Role::Apparatus, &["ready", "+", "-"]),
        spec("M2", Role::Apparatus, &["L_m", "R_m"]),
    ])
}

fn hs_config() -> RunConfig {
    RunConfig {
        system: labels(&["spin", "pos"]),
        apparatus: labels(&["M2"]),
        ..RunConfig::default()
    }
}

fn plus_x_left() -> ProtocolStep {
    let s = FRAC_1_SQRT_2;
    prepare(vec![
        FactorPrep::new("spin", LocalState::Amplitudes(vec![[s, 0.0], [s, 0.0]])),
        pointer("pos", "L"),
        pointer("M", "ready"),
        pointer("M2", "L_m"),
    ])
}

fn couple(source: &str, apparatus: &str) -> ProtocolStep {
    ProtocolStep::CoupleApparatus {
        source: source.into(),
        apparatus: apparatus.into(),
    }
}

fn separate() -> ProtocolStep {
    ProtocolStep::Separate {
        spin: "spin".into(),
        position: "pos".into(),
    }
}

fn locate(apparatus: &str) -> ProtocolStep {
    ProtocolStep::SelectiveMeasure {
        target: "pos".into(),
        apparatus: Some(apparatus.into()),
        basis: Basis::Pointer,
    }
}

/// Spin prepared along +x, measured along z by `M`, sorted by a membrane,
/// located by `M2`, the empty side compressed for free, then everything
/// rotated back and `M` reset.
pub fn hs_cycle() -> Result<Protocol> {
    let steps = vec![
        plus_x_left(),
        couple("spin", "M"),
        separate(),
        locate("M2"),
        ProtocolStep::CompressVacuum {
            chamber: None,
            record: Some("M2".into()),
        },
        ProtocolStep::InsertPartition {},
        controlled(
            "return particle and spin",
            "M2",
            vec![
                case("L_m", vec![op("spin", LocalGate::Hadamard)]),
                case(
                    "R_m",
                    vec![
                        op("pos", LocalGate::PauliX),
                        op("spin", LocalGate::PauliX),
                        op("spin", LocalGate::Hadamard),
                    ],
                ),
            ],
        ),
        controlled(
            "clear location record",
            "M",
            vec![case(
                "-",
                vec![op(
                    "M2",
                    LocalGate::Swap {
                        a: "L_m".into(),
                        b: "R_m".into(),
                    },
                )],
            )],
        ),
        ProtocolStep::LandauerReset {
            apparatus: "M".into(),
        },
    ];
    Ok(Protocol {
        name: "hs-cycle".into(),
        config: hs_config(),
        layout: hs_layout(),
        steps,
    })
}

/// The spin cycle without the location apparatus: the vacuum compression
/// reads the chamber off the spin record in `M`.
pub fn hs_record_conditioned_cycle() -> Result<Protocol> {
    let s = FRAC_1_SQRT_2;
    let steps = vec![
        prepare(vec![
            FactorPrep::new("spin", LocalState::Amplitudes(vec![[s, 0.0], [s, 0.0]])),
            pointer("pos", "L"),
            pointer("M", "ready"),
        ]),
        couple("spin", "M"),
        separate(),
        ProtocolStep::CompressVacuum {
            chamber: None,
            record: Some("M".into()),
        },
        ProtocolStep::InsertPartition {},
        controlled(
            "return particle and spin",
            "M",
            vec![
                case("+", vec![op("spin", LocalGate::Hadamard)]),
                case(
                    "-",
                    vec![
                        op("pos", LocalGate::PauliX),
                        op("spin", LocalGate::PauliX),
                        op("spin", LocalGate::Hadamard),
                    ],
                ),
            ],
        ),
        ProtocolStep::LandauerReset {
            apparatus: "M".into(),
        },
    ];
    Ok(Protocol {
        name: "hs-record-conditioned".into(),
        config: RunConfig {
            system: labels(&["spin", "pos"]),
            apparatus: labels(&["M"]),
            ..RunConfig::default()
        },
        layout: layout(vec![
            spec("spin", Role::Spin, &["+z", "-z"]),
            spec("pos", Role::Position, &["L", "R"]),
            spec("M", Role::Apparatus, &["ready", "+", "-"]),
        ]),
        steps,
    })
}

/// Spin cycle where the located particle pushes the partition and does work
/// instead of the free vacuum compression.
pub fn amended_cycle() -> Result<Protocol> {
    let steps = vec![
        prepare(vec![
            FactorPrep::new("spin", LocalState::Mixture(vec![0.5, 0.5])),
            FactorPrep::new("pos", LocalState::Mixture(vec![0.5, 0.5])),
            pointer("M", "ready"),
            pointer("M2", "L_m"),
        ]),
        couple("spin", "M"),
        separate(),
        locate("M2"),
        ProtocolStep::ExtractWorkKnownPosition {
            record: Some("M2".into()),
        },
        ProtocolStep::RemovePartition {},
        ProtocolStep::InsertPartition {},
        ProtocolStep::ApplyUnitary {
            name: "uncouple spin record".into(),
            gate: Gate::Couple {
                source: "spin".into(),
                apparatus: "M".into(),
            },
        },
        ProtocolStep::LandauerReset {
            apparatus: "M2".into(),
        },
    ];
    Ok(Protocol {
        name: "amended-cycle".into(),
        config: hs_config(),
        layout: hs_layout(),
        steps,
    })
}

/// One-particle engine: locate, let the particle do work, reset the memory.
pub fn szilard() -> Result<Protocol> {
    let steps = vec![
        prepare(vec![FactorPrep::new(
            "pos",
            LocalState::Mixture(vec![0.5, 0.5]),
        )]),
        locate("M"),
        ProtocolStep::ExtractWorkKnownPosition {
            record: Some("M".into()),
        },
        ProtocolStep::RemovePartition {},
        ProtocolStep::InsertPartition {},
        ProtocolStep::LandauerReset {
            apparatus: "M".into(),
        },
    ];
    Ok(Protocol {
        name: "szilard".into(),
        config: RunConfig {
            system: labels(&["pos"]),
            apparatus: labels(&["M"]),
            ..RunConfig::default()
        },
        layout: layout(vec![
            spec("pos", Role::Position, &["L", "R"]),
            spec("M", Role::Apparatus, &["L_m", "R_m"]),
        ]),
        steps,
    })
}
