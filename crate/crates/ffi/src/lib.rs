//! C ABI for the vnthermo simulator.
//!
//! Protocols and runs are opaque handles created and released by this
//! library. Every fallible function returns a [`VnStatus`] and writes its
//! result through an out-pointer; on failure [`vn_last_error_message`]
//! describes what went wrong. Strings handed out must be released with
//! [`vn_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use vnthermo::cli::{ledger_csv, parse_protocol, protocol_to_toml};
use vnthermo::engine::{
    audit, builtin, run, BuiltinParams, Mode, Protocol, ResetKind, RunError, RunOutput,
};
use vnthermo::entropy::von_neumann_entropy;
use vnthermo::qcore::{CMatrix, DensityState, Role, SubsystemSpec, SystemLayout, C64};
use vnthermo::Error;

pub const VN_MODE_COLLAPSE: u32 = 0;
pub const VN_MODE_NO_COLLAPSE: u32 = 1;
pub const VN_RESET_LANDAUER: u32 = 0;
pub const VN_RESET_UNITARY_ATTEMPT: u32 = 1;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Step = 5,
    Numerical = 6,
    Panic = 7,
}

/// A protocol ready to run.
pub struct VnProtocol {
    inner: Protocol,
}

/// The ledger and final state of a completed run.
pub struct VnRun {
    inner: RunOutput,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Failure(VnStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::Parse(_) => VnStatus::Parse,
            Error::NumericalFailure(_) => VnStatus::Numerical,
            _ => VnStatus::Validation,
        };
        Failure(status, e.to_string())
    }
}

impl From<RunError> for Failure {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Invalid(inner) => inner.into(),
            step => Failure(VnStatus::Step, step.to_string()),
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(VnStatus::NullPointer, format!("`{what}` is null"))
}

/// Runs `f`, translating errors and panics into a status code.
fn guard<F>(f: F) -> VnStatus
where
    F: FnOnce() -> Result<(), Failure>,
{
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            VnStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(&message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            VnStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(s: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| Failure(VnStatus::InvalidUtf8, format!("`{what}`: {e}")))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

unsafe fn protocol_mut<'a>(p: *mut VnProtocol) -> Result<&'a mut Protocol, Failure> {
    p.as_mut()
        .map(|p| &mut p.inner)
        .ok_or_else(|| null("protocol"))
}

unsafe fn run_ref<'a>(r: *const VnRun) -> Result<&'a RunOutput, Failure> {
    r.as_ref().map(|r| &r.inner).ok_or_else(|| null("run"))
}

fn c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(VnStatus::Validation, "output contains a NUL byte".into()))
}

/// Message of the most recent failure on this thread; empty after a success.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn vn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a named builtin protocol. `w1_squared` only affects `vn-cycle`.
///
/// # Safety
/// `name` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_builtin(
    name: *const c_char,
    w1_squared: f64,
    particles: u64,
    out: *mut *mut VnProtocol,
) -> VnStatus {
    guard(|| {
        let name = read_str(name, "name")?;
        let mut protocol = builtin(
            name,
            BuiltinParams {
                w1_squared,
                particles,
            },
        )?;
        protocol.config.particles = particles;
        protocol.validate()?;
        write_out(
            out,
            Box::into_raw(Box::new(VnProtocol { inner: protocol })),
            "out",
        )
    })
}

/// Parses and validates a TOML protocol document.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_parse(
    text: *const c_char,
    out: *mut *mut VnProtocol,
) -> VnStatus {
    guard(|| {
        let protocol = parse_protocol(read_str(text, "text")?)?;
        protocol.validate()?;
        write_out(
            out,
            Box::into_raw(Box::new(VnProtocol { inner: protocol })),
            "out",
        )
    })
}

/// Serializes a protocol as TOML.
///
/// # Safety
/// `protocol` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_to_toml(
    protocol: *mut VnProtocol,
    out: *mut *mut c_char,
) -> VnStatus {
    guard(|| {
        let text = protocol_to_toml(protocol_mut(protocol)?)?;
        write_out(out, c_string(text)?, "out")
    })
}

/// Applies `change` and keeps it only if the protocol still validates.
unsafe fn update<F>(protocol: *mut VnProtocol, change: F) -> VnStatus
where
    F: FnOnce(&mut Protocol) -> Result<(), Failure>,
{
    guard(|| {
        let p = protocol_mut(protocol)?;
        let mut next = p.clone();
        change(&mut next)?;
        next.validate()?;
        *p = next;
        Ok(())
    })
}

/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_cycles(
    protocol: *mut VnProtocol,
    cycles: u32,
) -> VnStatus {
    update(protocol, |p| {
        p.config.cycles = cycles;
        Ok(())
    })
}

/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_temperature(
    protocol: *mut VnProtocol,
    temperature: f64,
) -> VnStatus {
    update(protocol, |p| {
        p.config.temperature = temperature;
        Ok(())
    })
}

/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_kb(protocol: *mut VnProtocol, kb: f64) -> VnStatus {
    update(protocol, |p| {
        p.config.kb = kb;
        Ok(())
    })
}

/// `mode` is `VN_MODE_COLLAPSE` or `VN_MODE_NO_COLLAPSE`.
///
/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_mode(protocol: *mut VnProtocol, mode: u32) -> VnStatus {
    update(protocol, |p| {
        p.config.mode = match mode {
            VN_MODE_COLLAPSE => Mode::Collapse,
            VN_MODE_NO_COLLAPSE => Mode::NoCollapse,
            other => {
                return Err(Failure(
                    VnStatus::Validation,
                    format!("unknown mode {other}"),
                ))
            }
        };
        Ok(())
    })
}

/// Rewrites every reset step; `kind` is `VN_RESET_LANDAUER` or
/// `VN_RESET_UNITARY_ATTEMPT`.
///
/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_reset(protocol: *mut VnProtocol, kind: u32) -> VnStatus {
    update(protocol, |p| {
        let kind = match kind {
            VN_RESET_LANDAUER => ResetKind::Landauer,
            VN_RESET_UNITARY_ATTEMPT => ResetKind::UnitaryAttempt,
            other => {
                return Err(Failure(
                    VnStatus::Validation,
                    format!("unknown reset kind {other}"),
                ))
            }
        };
        *p = p.clone().with_reset(kind);
        Ok(())
    })
}

/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_permit_infeasible_reset(
    protocol: *mut VnProtocol,
    permit: bool,
) -> VnStatus {
    update(protocol, |p| {
        p.config.permit_infeasible_reset = permit;
        Ok(())
    })
}

/// # Safety
/// `protocol` must come from this library.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_set_seed(protocol: *mut VnProtocol, seed: u64) -> VnStatus {
    update(protocol, |p| {
        p.config.seed = seed;
        Ok(())
    })
}

/// # Safety
/// `protocol` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vn_protocol_free(protocol: *mut VnProtocol) {
    if !protocol.is_null() {
        drop(Box::from_raw(protocol));
    }
}

/// Executes every cycle of the protocol.
///
/// # Safety
/// `protocol` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_run(protocol: *mut VnProtocol, out: *mut *mut VnRun) -> VnStatus {
    guard(|| {
        let output = run(protocol_mut(protocol)?)?;
        write_out(out, Box::into_raw(Box::new(VnRun { inner: output })), "out")
    })
}

/// The ledger in the same CSV layout as the command-line tool.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_run_ledger_csv(run: *const VnRun, out: *mut *mut c_char) -> VnStatus {
    guard(|| {
        let csv = ledger_csv(&run_ref(run)?.rows)
            .map_err(|e| Failure(VnStatus::Validation, e.to_string()))?;
        write_out(out, c_string(csv)?, "out")
    })
}

/// Net work extracted over the whole run, in units of `k_B T`.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_run_net_work(run: *const VnRun, out: *mut f64) -> VnStatus {
    guard(|| write_out(out, run_ref(run)?.net_work(), "out"))
}

/// The second-law audit as JSON.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_run_audit_json(run: *const VnRun, out: *mut *mut c_char) -> VnStatus {
    guard(|| {
        let report = audit(run_ref(run)?)?;
        let json = serde_json::to_string(&report)
            .map_err(|e| Failure(VnStatus::Validation, e.to_string()))?;
        write_out(out, c_string(json)?, "out")
    })
}

/// 0 for a clean audit, 10 on a violation, 11 when only nonphysical steps occurred.
///
/// # Safety
/// `run` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_run_audit_exit_code(run: *const VnRun, out: *mut i32) -> VnStatus {
    guard(|| write_out(out, audit(run_ref(run)?)?.exit_code(), "out"))
}

/// # Safety
/// `run` must come from this library or be null; it must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn vn_run_free(run: *mut VnRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// # Safety
/// `s` must be a string returned by this library or null.
#[no_mangle]
pub unsafe extern "C" fn vn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Von Neumann entropy (natural log) of a `dim`-by-`dim` density matrix
/// given as row-major real and imaginary parts.
///
/// # Safety
/// `re` and `im` must each point to `dim * dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vn_von_neumann_entropy(
    re: *const f64,
    im: *const f64,
    dim: usize,
    out: *mut f64,
) -> VnStatus {
    guard(|| {
        if re.is_null() || im.is_null() {
            return Err(null("matrix"));
        }
        if dim == 0 {
            return Err(Failure(
                VnStatus::Validation,
                "dimension must be positive".into(),
            ));
        }
        let n = dim
            .checked_mul(dim)
            .ok_or_else(|| Failure(VnStatus::Validation, "dimension too large".into()))?;
        let (re, im) = (
            std::slice::from_raw_parts(re, n),
            std::slice::from_raw_parts(im, n),
        );
        let names: Vec<String> = (0..dim).map(|i| i.to_string()).collect();
        let refs: Vec<&str> = names.iter().map(String::as_str).collect();
        let layout = SystemLayout::new(vec![SubsystemSpec::new("x", Role::Ancilla, &refs)?])?;
        let matrix = CMatrix::from_fn(dim, dim, |i, j| C64::new(re[i * dim + j], im[i * dim + j]));
        let s = von_neumann_entropy(&DensityState::new(layout, matrix)?)?;
        write_out(out, s, "out")
    })
}
