use std::ffi::{c_char, CStr, CString};
use std::ptr;

use vnthermo_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(vn_last_error_message()) }
        .to_string_lossy()
        .into_owned()
}

fn take_string(s: *mut c_char) -> String {
    assert!(!s.is_null());
    let out = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { vn_string_free(s) };
    out
}

fn builtin_protocol(name: &str) -> *mut VnProtocol {
    let name = CString::new(name).unwrap();
    let mut p = ptr::null_mut();
    let status = unsafe { vn_protocol_builtin(name.as_ptr(), 0.5, 1, &mut p) };
    assert_eq!(status, VnStatus::Ok, "{}", last_error());
    p
}

#[test]
fn amended_cycle_violation_through_the_abi() {
    let p = builtin_protocol("amended-cycle");
    unsafe {
        assert_eq!(vn_protocol_set_cycles(p, 10), VnStatus::Ok);
        assert_eq!(
            vn_protocol_set_reset(p, VN_RESET_UNITARY_ATTEMPT),
            VnStatus::Ok
        );
        assert_eq!(
            vn_protocol_set_permit_infeasible_reset(p, true),
            VnStatus::Ok
        );
        let mut r = ptr::null_mut();
        assert_eq!(vn_run(p, &mut r), VnStatus::Ok, "{}", last_error());
        let mut w = 0.0;
        assert_eq!(vn_run_net_work(r, &mut w), VnStatus::Ok);
        assert!((w - 10.0 * std::f64::consts::LN_2).abs() < 1e-9);
        let mut code = 0;
        assert_eq!(vn_run_audit_exit_code(r, &mut code), VnStatus::Ok);
        assert_eq!(code, 10);
        let mut json = ptr::null_mut();
        assert_eq!(vn_run_audit_json(r, &mut json), VnStatus::Ok);
        let report: serde_json::Value = serde_json::from_str(&take_string(json)).unwrap();
        assert_eq!(report["kelvin_planck"], "VIOLATION");
        vn_run_free(r);
        vn_protocol_free(p);
    }
}

#[test]
fn ledger_matches_the_command_line_output() {
    let p = builtin_protocol("hs-cycle");
    unsafe {
        let mut r = ptr::null_mut();
        assert_eq!(vn_run(p, &mut r), VnStatus::Ok);
        let mut csv = ptr::null_mut();
        assert_eq!(vn_run_ledger_csv(r, &mut csv), VnStatus::Ok);
        let golden = std::fs::read_to_string(concat!(
            env!("CARGO_MANIFEST_DIR"),
            "/../core/tests/golden/hs-cycle.csv"
        ))
        .unwrap();
        assert_eq!(take_string(csv), golden);
        vn_run_free(r);
        vn_protocol_free(p);
    }
}

#[test]
fn toml_round_trip_and_parse_errors() {
    let p = builtin_protocol("szilard");
    unsafe {
        let mut text = ptr::null_mut();
        assert_eq!(vn_protocol_to_toml(p, &mut text), VnStatus::Ok);
        let text = CString::new(take_string(text)).unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(vn_protocol_parse(text.as_ptr(), &mut q), VnStatus::Ok);
        vn_protocol_free(q);
        vn_protocol_free(p);

        let bad = CString::new("name = 1").unwrap();
        let mut q = ptr::null_mut();
        assert_eq!(vn_protocol_parse(bad.as_ptr(), &mut q), VnStatus::Parse);
        assert!(q.is_null());
        assert!(!last_error().is_empty());

        let invalid = CString::new(
            "name = \"x\"\n[config]\ntemperature = -1.0\n[[layout]]\nlabel = \"pos\"\nrole = \"position\"\npointer_basis = [\"L\", \"R\"]\n",
        )
        .unwrap();
        assert_eq!(
            vn_protocol_parse(invalid.as_ptr(), &mut q),
            VnStatus::Validation
        );
    }
}

#[test]
fn status_codes() {
    unsafe {
        let mut p = ptr::null_mut();
        assert_eq!(
            vn_protocol_builtin(ptr::null(), 0.5, 1, &mut p),
            VnStatus::NullPointer
        );
        let name = CString::new("nope").unwrap();
        assert_eq!(
            vn_protocol_builtin(name.as_ptr(), 0.5, 1, &mut p),
            VnStatus::Validation
        );
        assert!(last_error().contains("unknown builtin"));
        let bytes = [0xffu8, 0];
        assert_eq!(
            vn_protocol_builtin(bytes.as_ptr().cast(), 0.5, 1, &mut p),
            VnStatus::InvalidUtf8
        );
        let vn = CString::new("vn-cycle").unwrap();
        assert_eq!(
            vn_protocol_builtin(vn.as_ptr(), 1.5, 1, &mut p),
            VnStatus::Validation
        );

        let p = builtin_protocol("hs-cycle");
        assert_eq!(vn_protocol_set_temperature(p, -2.0), VnStatus::Validation);
        assert_eq!(vn_protocol_set_mode(p, 7), VnStatus::Validation);
        assert_eq!(vn_protocol_set_mode(p, VN_MODE_COLLAPSE), VnStatus::Ok);
        assert_eq!(
            vn_protocol_set_reset(p, VN_RESET_UNITARY_ATTEMPT),
            VnStatus::Ok
        );
        let mut r = ptr::null_mut();
        assert_eq!(vn_run(p, &mut r), VnStatus::Step);
        assert!(last_error().contains("step 9"), "{}", last_error());
        assert!(r.is_null());
        assert_eq!(vn_run(p, ptr::null_mut()), VnStatus::Step);
        assert_eq!(vn_run(ptr::null_mut(), &mut r), VnStatus::NullPointer);
        assert_eq!(vn_protocol_set_kb(p, 1.0), VnStatus::Ok);
        assert!(last_error().is_empty());
        vn_protocol_free(p);
        vn_protocol_free(ptr::null_mut());
        vn_run_free(ptr::null_mut());
        vn_string_free(ptr::null_mut());
    }
}

#[test]
fn entropy_of_raw_matrices() {
    let mut s = -1.0;
    let re = [0.5, 0.5, 0.5, 0.5];
    let im = [0.0; 4];
    unsafe {
        assert_eq!(
            vn_von_neumann_entropy(re.as_ptr(), im.as_ptr(), 2, &mut s),
            VnStatus::Ok
        );
        assert!(s.abs() < 1e-12);
        let mixed = [0.5, 0.0, 0.0, 0.5];
        assert_eq!(
            vn_von_neumann_entropy(mixed.as_ptr(), im.as_ptr(), 2, &mut s),
            VnStatus::Ok
        );
        assert!((s - std::f64::consts::LN_2).abs() < 1e-12);
        let one = [1.0];
        assert_eq!(
            vn_von_neumann_entropy(one.as_ptr(), [0.0].as_ptr(), 1, &mut s),
            VnStatus::Ok
        );
        assert_eq!(s, 0.0);
        let not_a_state = [1.0, 0.0, 0.0, 1.0];
        assert_eq!(
            vn_von_neumann_entropy(not_a_state.as_ptr(), im.as_ptr(), 2, &mut s),
            VnStatus::Validation
        );
        assert_eq!(
            vn_von_neumann_entropy(ptr::null(), im.as_ptr(), 2, &mut s),
            VnStatus::NullPointer
        );
    }
}

#[test]
fn header_declares_every_export() {
    let header =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/vnthermo.h"))
            .unwrap();
    let source =
        std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .split("extern \"C\" fn ")
        .skip(1)
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 18);
    for name in exports {
        assert!(
            header.contains(&format!("{name}(")),
            "{name} missing from header"
        );
    }
    for status in [
        "VN_STATUS_OK = 0",
        "VN_STATUS_STEP = 5",
        "VN_STATUS_PANIC = 7",
    ] {
        assert!(header.contains(status));
    }
    assert!(header.contains("typedef struct VnProtocol VnProtocol;"));
}

/// Compiles a C client against the generated header and the static library.
#[test]
fn c_client_links_and_runs() {
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping");
        return;
    };
    let target_dir = std::env::current_exe()
        .unwrap()
        .parent()
        .unwrap()
        .parent()
        .unwrap()
        .to_path_buf();
    let lib = target_dir.join("libvnthermo_ffi.a");
    let built = std::process::Command::new(env!("CARGO"))
        .args([
            "build",
            "--quiet",
            "--offline",
            "-p",
            "vnthermo-ffi",
            "--lib",
        ])
        .status()
        .unwrap();
    assert!(
        built.success() && lib.exists(),
        "{} not built",
        lib.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let manifest = env!("CARGO_MANIFEST_DIR");
    let status = std::process::Command::new(cc)
        .arg(format!("{manifest}/tests/c/smoke.c"))
        .arg(format!("-I{manifest}/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = std::process::Command::new(&exe).output().unwrap();
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "2.079441542 10\n");
}

fn which_cc() -> Result<&'static str, ()> {
    ["cc", "gcc", "clang"]
        .into_iter()
        .find(|c| {
            std::process::Command::new(c)
                .arg("--version")
                .output()
                .is_ok()
        })
        .ok_or(())
}
