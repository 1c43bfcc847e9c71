//! Seeded random protocols built only from thermodynamically admissible
//! operations, for testing the auditor.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::protocol::{
    Basis, ControlCase, FactorPrep, Gate, LocalGate, LocalOp, LocalState, Protocol, ProtocolStep,
    RunConfig, VolumeMove,
};
use super::runner::{Placement, Runner};
use crate::qcore::{Role, SubsystemSpec, SystemLayout};
use crate::thermo::Chamber;

fn layout() -> SystemLayout {
    SystemLayout::new(vec![
        SubsystemSpec::new("spin", Role::Spin, &["+z", "-z"]).expect("valid"),
        SubsystemSpec::new("pos", Role::Position, &["L", "R"]).expect("valid"),
        SubsystemSpec::new("M", Role::Apparatus, &["ready", "a", "b"]).expect("valid"),
    ])
    .expect("valid")
}

fn qubit_gate(rng: &mut ChaCha8Rng) -> LocalGate {
    match rng.gen_range(0..4) {
        0 => LocalGate::Hadamard,
        1 => LocalGate::PauliX,
        2 => LocalGate::PauliZ,
        _ => LocalGate::Ry {
            theta: rng.gen_range(0.0..std::f64::consts::TAU),
        },
    }
}

fn local_op(rng: &mut ChaCha8Rng, target: &str) -> LocalOp {
    let op = if target == "M" {
        let names = ["ready", "a", "b"];
        let a = rng.gen_range(0..3);
        let b = (a + rng.gen_range(1..3)) % 3;
        LocalGate::Swap {
            a: names[a].into(),
            b: names[b].into(),
        }
    } else {
        qubit_gate(rng)
    };
    LocalOp {
        target: target.into(),
        op,
    }
}

fn candidate(rng: &mut ChaCha8Rng, runner: &Runner) -> ProtocolStep {
    let labels = ["spin", "pos", "M"];
    match rng.gen_range(0..9) {
        0 | 1 => {
            let target = *labels.choose(rng).expect("non-empty");
            let LocalOp { target, op } = local_op(rng, target);
            ProtocolStep::ApplyUnitary {
                name: "random local".into(),
                gate: Gate::Local { target, op },
            }
        }
        2 => {
            let mut pair = labels.to_vec();
            pair.shuffle(rng);
            let names: &[&str] = match pair[0] {
                "spin" => &["+z", "-z"],
                "pos" => &["L", "R"],
                _ => &["ready", "a", "b"],
            };
            ProtocolStep::ApplyUnitary {
                name: "random controlled".into(),
                gate: Gate::Controlled {
                    control: pair[0].into(),
                    cases: vec![ControlCase {
                        when: names.choose(rng).expect("non-empty").to_string(),
                        ops: vec![local_op(rng, pair[1])],
                    }],
                },
            }
        }
        3 => ProtocolStep::CoupleApparatus {
            source: ["spin", "pos"].choose(rng).expect("non-empty").to_string(),
            apparatus: "M".into(),
        },
        4 => {
            let target = *labels.choose(rng).expect("non-empty");
            let basis = if target != "M" && rng.gen_bool(0.5) {
                Basis::X
            } else {
                Basis::Pointer
            };
            ProtocolStep::NonSelectiveMeasure {
                target: target.into(),
                basis,
            }
        }
        5 => ProtocolStep::LandauerReset {
            apparatus: "M".into(),
        },
        6 => {
            let volumes = match runner.branches().first().map(|b| &b.placement) {
                Some(Placement::Uniform(g)) => g.volumes,
                _ => [0.5, 0.5],
            };
            let c = *Chamber::BOTH.choose(rng).expect("non-empty");
            let room = 1.0 - volumes[c.other().index()];
            ProtocolStep::IsothermalVolume {
                moves: vec![VolumeMove {
                    chamber: c,
                    v_from: volumes[c.index()],
                    v_to: rng.gen_range(0.05..room.max(0.06)),
                }],
            }
        }
        7 => ProtocolStep::CompressVacuum {
            chamber: None,
            record: None,
        },
        _ => {
            if rng.gen_bool(0.5) {
                ProtocolStep::RemovePartition {}
            } else {
                ProtocolStep::InsertPartition {}
            }
        }
    }
}

/// A protocol of up to `len` steps after a random preparation; every step is
/// known to execute without error.
pub fn random_sound_protocol(seed: u64, len: usize) -> Protocol {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a: f64 = rng.gen_range(0.0..1.0);
    let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let p: f64 = rng.gen_range(0.0..1.0);
    let prepare = ProtocolStep::Prepare {
        factors: vec![
            FactorPrep::new(
                "spin",
                LocalState::Amplitudes(vec![
                    [a.sqrt(), 0.0],
                    [
                        (1.0 - a).sqrt() * phase.cos(),
                        (1.0 - a).sqrt() * phase.sin(),
                    ],
                ]),
            ),
            FactorPrep::new("pos", LocalState::Mixture(vec![p, 1.0 - p])),
        ],
        volumes: [0.5, 0.5],
        partition: true,
    };
    let mut protocol = Protocol {
        name: format!("random-{seed}"),
        config: RunConfig {
            temperature: rng.gen_range(0.5..2.0),
            seed,
            ..RunConfig::default()
        },
        layout: layout(),
        steps: vec![prepare.clone()],
    };
    let mut runner = Runner::new(protocol.clone()).expect("generated layout is valid");
    runner.execute(1, &prepare).expect("preparation is valid");
    let mut attempts = 0;
    while protocol.steps.len() <= len && attempts < 40 * len {
        attempts += 1;
        let step = candidate(&mut rng, &runner);
        let mut trial = runner.clone();
        if trial.execute(protocol.steps.len() + 1, &step).is_ok() {
            runner = trial;
            protocol.steps.push(step);
        }
    }
    protocol
}
