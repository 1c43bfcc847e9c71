//! Command-line front end: protocol files, ledger CSV and the
//! `run` / `audit` / `compare` commands.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::engine::{
    audit, builtin, run, AuditReport, BuiltinParams, LedgerRow, Mode, Protocol, ResetKind,
    RunError, RunOutput, BUILTIN_NAMES,
};
use crate::error::Error;

/// Joint-entropy columns must agree this closely for `compare` to pass.
pub const COMPARE_TOLERANCE: f64 = 1e-9;

pub const CSV_COLUMNS: [&str; 13] = [
    "cycle",
    "step_id",
    "step_kind",
    "branch",
    "probability",
    "S_vN_system",
    "S_vN_joint",
    "H_cond_classical",
    "dS_bath",
    "Q",
    "W",
    "S_total_running",
    "flags",
];

pub mod exit {
    pub const OK: i32 = 0;
    pub const DIFFER: i32 = 1;
    pub const PARSE: i32 = 2;
    pub const VALIDATION: i32 = 3;
    pub const STEP: i32 = 4;
    pub const IO: i32 = 2;
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Step(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Parse(_) => exit::PARSE,
            CliError::Validation(_) => exit::VALIDATION,
            CliError::Step(_) => exit::STEP,
            CliError::Io(_) => exit::IO,
        }
    }
}

impl From<RunError> for CliError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Invalid(inner) => CliError::Validation(inner.to_string()),
            step => CliError::Step(step.to_string()),
        }
    }
}

/// Parses a TOML protocol document; does not validate it.
pub fn parse_protocol(text: &str) -> Result<Protocol, Error> {
    toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn protocol_to_toml(p: &Protocol) -> Result<String, Error> {
    toml::to_string(p).map_err(|e| Error::Parse(e.to_string()))
}

/// 12 significant digits; `-0` and sub-1e-13 noise print as zero.
pub fn format_number(x: f64) -> String {
    let x = if x.abs() < 1e-13 { 0.0 } else { x };
    format!("{x:.11e}")
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io(e.to_string())
}

/// One row per branch and one `AVG` row per executed step.
pub fn ledger_csv(rows: &[LedgerRow]) -> Result<String, CliError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(Vec::new());
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    for row in rows {
        let running = format_number(row.s_total_running);
        let flags = row.flags.label();
        let lead = [
            row.cycle.to_string(),
            row.step_id.to_string(),
            row.step_kind.clone(),
        ];
        for b in &row.branches {
            let rest = [
                b.branch.to_string(),
                format_number(b.probability),
                format_number(b.s_vn_system),
                format_number(b.s_vn_joint),
                format_number(b.h_cond),
                format_number(b.entry.d_s_bath),
                format_number(b.entry.heat),
                format_number(b.entry.work),
                running.clone(),
                flags.to_string(),
            ];
            w.write_record(lead.iter().chain(&rest))
                .map_err(csv_error)?;
        }
        let avg = [
            "AVG".to_string(),
            format_number(1.0),
            format_number(row.s_vn_system),
            format_number(row.s_vn_joint),
            format_number(row.h_cond),
            format_number(row.entry.d_s_bath),
            format_number(row.entry.heat),
            format_number(row.entry.work),
            running,
            flags.to_string(),
        ];
        w.write_record(lead.iter().chain(&avg)).map_err(csv_error)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| CliError::Io(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Collapse,
    NoCollapse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ResetArg {
    Landauer,
    UnitaryAttempt,
}

#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Interpretation of selective measurements.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub temperature: Option<f64>,
    /// Boltzmann constant.
    #[arg(long)]
    pub kb: Option<f64>,
    #[arg(long)]
    pub cycles: Option<u32>,
    /// Rewrites every reset step of the protocol.
    #[arg(long, value_enum)]
    pub reset: Option<ResetArg>,
    /// Carry out unitary resets even when no unitary exists (flagged NONPHYSICAL).
    #[arg(long)]
    pub permit_infeasible_reset: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight w1^2 of the first spin state (builtin:vn-cycle only).
    #[arg(long)]
    pub w1sq: Option<f64>,
    /// Number of particles.
    #[arg(long)]
    pub n: Option<u64>,
    /// Keep only the first N steps.
    #[arg(long)]
    pub truncate: Option<usize>,
}

#[derive(Debug, Clone, clap::Args)]
pub struct Target {
    /// Protocol file (TOML) or `builtin:<name>`.
    pub protocol: String,
    #[command(flatten)]
    pub overrides: Overrides,
    /// Write the output here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Execute a protocol and print its ledger as CSV.
    Run(Target),
    /// Execute a protocol and audit it against the second law.
    Audit(Target),
    /// Run in both interpretation modes and diff the ledgers.
    Compare(Target),
}

#[derive(Debug, Parser)]
#[command(
    name = "vnthermo",
    version,
    about = "Measurement-driven thermodynamic cycles over density operators"
)]
pub struct Cli {
    /// List the builtin protocols and exit.
    #[arg(long)]
    pub list: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

/// Resolves `builtin:<name>` or reads a protocol file, then applies overrides.
pub fn load_protocol(spec: &str, o: &Overrides) -> Result<Protocol, CliError> {
    let mut p = if let Some(name) = spec.strip_prefix("builtin:") {
        let mut params = BuiltinParams::default();
        if let Some(w) = o.w1sq {
            if name != "vn-cycle" {
                return Err(CliError::Validation(
                    "--w1sq only applies to builtin:vn-cycle".into(),
                ));
            }
            params.w1_squared = w;
        }
        if let Some(n) = o.n {
            params.particles = n;
        }
        builtin(name, params).map_err(|e| match e {
            Error::Validation(m) if m.starts_with("unknown builtin") => CliError::Parse(m),
            other => CliError::Validation(other.to_string()),
        })?
    } else {
        if o.w1sq.is_some() {
            return Err(CliError::Validation(
                "--w1sq only applies to builtin:vn-cycle".into(),
            ));
        }
        let text =
            std::fs::read_to_string(spec).map_err(|e| CliError::Parse(format!("{spec}: {e}")))?;
        parse_protocol(&text).map_err(|e| CliError::Parse(format!("{spec}: {e}")))?
    };
    let c = &mut p.config;
    if let Some(m) = o.mode {
        c.mode = match m {
            ModeArg::Collapse => Mode::Collapse,
            ModeArg::NoCollapse => Mode::NoCollapse,
        };
    }
    if let Some(t) = o.temperature {
        c.temperature = t;
    }
    if let Some(k) = o.kb {
        c.kb = k;
    }
    if let Some(n) = o.cycles {
        c.cycles = n;
    }
    if let Some(s) = o.seed {
        c.seed = s;
    }
    if let Some(n) = o.n {
        c.particles = n;
    }
    if o.permit_infeasible_reset {
        c.permit_infeasible_reset = true;
    }
    let reset = match (o.reset, o.permit_infeasible_reset) {
        (Some(ResetArg::Landauer), _) => Some(ResetKind::Landauer),
        (Some(ResetArg::UnitaryAttempt), _) | (None, true) => Some(ResetKind::UnitaryAttempt),
        (None, false) => None,
    };
    if let Some(kind) = reset {
        p = p.with_reset(kind);
    }
    if let Some(n) = o.truncate {
        p = p.truncated(n);
    }
    p.validate()
        .map_err(|e| CliError::Validation(e.to_string()))?;
    Ok(p)
}

pub fn render_audit(name: &str, report: &AuditReport) -> Result<String, CliError> {
    let mut s = String::new();
    s.push_str(&format!("protocol: {name}\n"));
    let c = &report.closure;
    s.push_str(&format!(
        "closure: {} (trace distance {}, volumes {})\n",
        if c.closed { "closed" } else { "open" },
        format_number(c.trace_distance),
        if c.volumes_match { "match" } else { "differ" }
    ));
    s.push_str(&format!(
        "net work: {} k_B T units\n",
        format_number(report.net_work)
    ));
    s.push_str(&format!(
        "bath entropy change: {}\n",
        format_number(report.bath_entropy)
    ));
    let kp = match report.kelvin_planck {
        Some(crate::engine::KelvinPlanck::Violation) => "VIOLATION",
        Some(crate::engine::KelvinPlanck::Satisfied) => "satisfied",
        None => "not assessed (cycle not closed)",
    };
    s.push_str(&format!("Kelvin-Planck: {kp}\n"));
    for v in &report.violations {
        s.push_str(&format!("VIOLATION {v}\n"));
    }
    for v in &report.nonphysical {
        s.push_str(&format!("NONPHYSICAL {v}\n"));
    }
    s.push_str("--- json\n");
    s.push_str(&serde_json::to_string_pretty(report).map_err(|e| CliError::Io(e.to_string()))?);
    s.push('\n');
    Ok(s)
}

/// Per-step comparison of collapse and no-collapse runs, and whether the
/// joint-entropy columns agree.
pub fn compare_runs(collapse: &RunOutput, no_collapse: &RunOutput) -> (String, bool) {
    let mut s = String::from(
        "cycle,step_id,step_kind,S_vN_joint_collapse,S_vN_joint_no_collapse,d_joint,S_vN_system_collapse,S_vN_system_no_collapse,H_cond_collapse,H_cond_no_collapse\n",
    );
    let mut agree = collapse.rows.len() == no_collapse.rows.len();
    for (a, b) in collapse.rows.iter().zip(&no_collapse.rows) {
        let d = a.s_vn_joint - b.s_vn_joint;
        agree &= d.abs() <= COMPARE_TOLERANCE;
        let cells = [
            a.cycle.to_string(),
            a.step_id.to_string(),
            a.step_kind.clone(),
            format_number(a.s_vn_joint),
            format_number(b.s_vn_joint),
            format_number(d),
            format_number(a.s_vn_system),
            format_number(b.s_vn_system),
            format_number(a.h_cond),
            format_number(b.h_cond),
        ];
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s.push_str(if agree {
        "joint entropy columns agree\n"
    } else {
        "joint entropy columns DIFFER\n"
    });
    (s, agree)
}

fn execute(command: &Command) -> Result<(String, i32, Option<PathBuf>), CliError> {
    match command {
        Command::Run(t) => {
            let p = load_protocol(&t.protocol, &t.overrides)?;
            let out = run(&p)?;
            Ok((ledger_csv(&out.rows)?, exit::OK, t.out.clone()))
        }
        Command::Audit(t) => {
            let p = load_protocol(&t.protocol, &t.overrides)?;
            let out = run(&p)?;
            let report = audit(&out).map_err(|e| CliError::Step(e.to_string()))?;
            Ok((
                render_audit(&p.name, &report)?,
                report.exit_code(),
                t.out.clone(),
            ))
        }
        Command::Compare(t) => {
            let mut p = load_protocol(&t.protocol, &t.overrides)?;
            p.config.mode = Mode::Collapse;
            let a = run(&p)?;
            p.config.mode = Mode::NoCollapse;
            p.validate()
                .map_err(|e| CliError::Validation(e.to_string()))?;
            let b = run(&p)?;
            let (text, agree) = compare_runs(&a, &b);
            Ok((
                text,
                if agree { exit::OK } else { exit::DIFFER },
                t.out.clone(),
            ))
        }
    }
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return if e.use_stderr() {
                exit::PARSE
            } else {
                exit::OK
            };
        }
    };
    if cli.list {
        for name in BUILTIN_NAMES {
            let _ = writeln!(stdout, "builtin:{name}");
        }
        return exit::OK;
    }
    let Some(command) = cli.command else {
        let _ = writeln!(stderr, "no command given; try --help");
        return exit::PARSE;
    };
    match execute(&command) {
        Ok((text, code, out)) => {
            let written = match out {
                Some(path) => {
                    std::fs::write(&path, text).map_err(|e| format!("{}: {e}", path.display()))
                }
                None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => code,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    exit::IO
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format() {
        assert_eq!(format_number(std::f64::consts::LN_2), "6.93147180560e-1");
        assert_eq!(format_number(-0.0), "0.00000000000e0");
        assert_eq!(format_number(-1e-17), "0.00000000000e0");
        assert_eq!(format_number(1.0), "1.00000000000e0");
        assert_eq!(format_number(-6.534181947936), "-6.53418194794e0");
    }

    #[test]
    fn toml_round_trip_of_builtins() {
        for name in BUILTIN_NAMES {
            let p = builtin(name, BuiltinParams::default()).unwrap();
            let text = protocol_to_toml(&p).unwrap();
            assert_eq!(parse_protocol(&text).unwrap(), p, "{name}\n{text}");
        }
    }

    #[test]
    fn unknown_keys_are_located() {
        let text = "name = \"x\"\nbogus = 1\n[[layout]]\nlabel = \"pos\"\nrole = \"position\"\npointer_basis = [\"L\", \"R\"]\n";
        let err = parse_protocol(text).unwrap_err().to_string();
        assert!(err.contains("bogus") && err.contains("line 2"), "{err}");
        let step = "name = \"x\"\n[[layout]]\nlabel = \"pos\"\nrole = \"position\"\npointer_basis = [\"L\", \"R\"]\n[[steps]]\nkind = \"remove_partition\"\nextra = true\n";
        let err = parse_protocol(step).unwrap_err().to_string();
        assert!(err.contains("extra"), "{err}");
    }
}
