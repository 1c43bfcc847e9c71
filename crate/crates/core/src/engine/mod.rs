//! Protocols, their branch-aware execution, the entropy ledger and the audit.

pub mod audit;
pub mod builtins;
pub mod protocol;
pub mod random;
pub mod runner;

pub use audit::{audit, cycle_closure, AuditReport, ClosureVerdict, KelvinPlanck};
pub use builtins::{builtin, BuiltinParams, BUILTIN_NAMES};
pub use protocol::{Mode, Protocol, ProtocolStep, ResetKind, RunConfig};
pub use runner::{
    run, Branch, Geometry, LedgerRow, Placement, RunError, RunOutput, Runner, TAU_AUDIT,
};
