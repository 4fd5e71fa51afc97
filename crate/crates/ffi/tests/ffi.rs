use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::process::Command;
use std::ptr;

use joinqubo_ffi::*;

const WORKLOAD: &str = include_str!("../../core/tests/fixtures/three_chain.json");

fn parse() -> *mut JqWorkload {
    let json = CString::new(WORKLOAD).unwrap();
    let mut w = ptr::null_mut();
    assert_eq!(unsafe { jq_workload_parse(json.as_ptr(), &mut w) }, JqStatus::JqOk);
    assert!(!w.is_null());
    w
}

fn last_error() -> String {
    let p = jq_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

unsafe fn read(f: unsafe extern "C" fn(*const JqSolution, *mut c_char, usize, *mut usize) -> JqStatus, s: *const JqSolution) -> String {
    let mut needed = 0usize;
    assert_eq!(f(s, ptr::null_mut(), 0, &mut needed), JqStatus::JqBufferTooSmall);
    let mut buf = vec![0u8; needed];
    assert_eq!(f(s, buf.as_mut_ptr().cast(), buf.len(), ptr::null_mut()), JqStatus::JqOk);
    CStr::from_bytes_with_nul(&buf).unwrap().to_str().unwrap().to_string()
}

#[test]
fn parse_solve_and_read_back() {
    let w = parse();
    let mut n = 0usize;
    unsafe {
        assert_eq!(jq_workload_query_count(w, &mut n), JqStatus::JqOk);
        assert_eq!(n, 2);
        let q = CString::new("abc").unwrap();
        let mut sol = ptr::null_mut();
        assert_eq!(jq_solve(w, q.as_ptr(), ptr::null(), &mut sol), JqStatus::JqOk);
        let mut cost = 0.0;
        assert_eq!(jq_solution_cost(sol, &mut cost), JqStatus::JqOk);
        assert_eq!(cost, 1100.0);
        assert_eq!(read(jq_solution_hint, sol), "Leading((b c)a)");
        assert_eq!(read(jq_solution_plan, sol), "((b c) a)");
        let mut degraded = true;
        assert_eq!(jq_solution_degraded(sol, &mut degraded), JqStatus::JqOk);
        assert!(!degraded);
        let mut iters = 0usize;
        assert_eq!(jq_solution_iterations(sol, &mut iters), JqStatus::JqOk);
        assert!(iters >= 1);
        let csv = read(jq_solution_trace_csv, sol);
        assert_eq!(csv.lines().count(), iters + 1);
        let mut tq = 0.0;
        assert_eq!(jq_solution_time_quantum_ms(sol, &mut tq), JqStatus::JqOk);
        assert!(tq > 0.0);
        let mut strategy = JqStrategy::JqStrategyDirect;
        assert_eq!(jq_solution_strategy(sol, &mut strategy), JqStatus::JqOk);
        // three-relation encodings are dense, so auto routing relaxes
        assert_eq!(strategy, JqStrategy::JqStrategyRelax);
        jq_solution_free(sol);
        jq_workload_free(w);
    }
}

#[test]
fn explicit_options_select_strategy_and_are_deterministic() {
    let w = parse();
    let q = CString::new("abc").unwrap();
    let mut opts = jq_solve_options_default();
    opts.mode = JqMode::JqModeDirect as i32;
    opts.seed = 9;
    unsafe {
        let mut texts = Vec::new();
        for _ in 0..2 {
            let mut sol = ptr::null_mut();
            assert_eq!(jq_solve(w, q.as_ptr(), &opts, &mut sol), JqStatus::JqOk);
            let mut strategy = JqStrategy::JqStrategyRelax;
            jq_solution_strategy(sol, &mut strategy);
            assert_eq!(strategy, JqStrategy::JqStrategyDirect);
            texts.push(read(jq_solution_trace_csv, sol));
            jq_solution_free(sol);
        }
        assert_eq!(texts[0], texts[1]);
        jq_workload_free(w);
    }
}

#[test]
fn oracle_matches_known_optimum() {
    let w = parse();
    let q = CString::new("abc").unwrap();
    let mut cost = 0.0;
    let mut buf = [0 as c_char; 64];
    let mut needed = 0;
    unsafe {
        assert_eq!(jq_oracle(w, q.as_ptr(), &mut cost, buf.as_mut_ptr(), buf.len(), &mut needed), JqStatus::JqOk);
        assert_eq!(cost, 1100.0);
        assert_eq!(CStr::from_ptr(buf.as_ptr()).to_str().unwrap(), "Leading((b c)a)");
        assert_eq!(needed, "Leading((b c)a)".len() + 1);
        jq_workload_free(w);
    }
}

#[test]
fn small_buffer_is_reported_without_writing() {
    let w = parse();
    let q = CString::new("ab").unwrap();
    let mut cost = 0.0;
    let mut buf = [b'x' as c_char; 4];
    let mut needed = 0;
    unsafe {
        let st = jq_oracle(w, q.as_ptr(), &mut cost, buf.as_mut_ptr(), buf.len(), &mut needed);
        assert_eq!(st, JqStatus::JqBufferTooSmall);
        assert_eq!(needed, "Leading((a b))".len() + 1);
        assert!(buf.iter().all(|&c| c == b'x' as c_char));
        assert!(last_error().contains("needed"));
        jq_workload_free(w);
    }
}

#[test]
fn errors_map_to_status_codes() {
    unsafe {
        let mut w = ptr::null_mut();
        assert_eq!(jq_workload_parse(ptr::null(), &mut w), JqStatus::JqNullArgument);
        let bad = CString::new("{\"relations\": 3}").unwrap();
        assert_eq!(jq_workload_parse(bad.as_ptr(), &mut w), JqStatus::JqInvalidWorkload);
        assert!(w.is_null());
        assert!(!last_error().is_empty());
        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(jq_workload_parse(invalid.as_ptr().cast(), &mut w), JqStatus::JqInvalidUtf8);

        let w = parse();
        assert!(jq_last_error_message().is_null());
        let mut sol = ptr::null_mut();
        let missing = CString::new("zz").unwrap();
        assert_eq!(jq_solve(w, missing.as_ptr(), ptr::null(), &mut sol), JqStatus::JqUnknownQuery);
        assert!(last_error().contains("zz"));
        assert!(sol.is_null());

        let q = CString::new("ab").unwrap();
        let mut opts = jq_solve_options_default();
        opts.mode = 42;
        assert_eq!(jq_solve(w, q.as_ptr(), &opts, &mut sol), JqStatus::JqInvalidArgument);
        let mut opts = jq_solve_options_default();
        opts.budget_ms = -1.0;
        assert_eq!(jq_solve(w, q.as_ptr(), &opts, &mut sol), JqStatus::JqInvalidArgument);
        let mut opts = jq_solve_options_default();
        opts.num_reads = 0;
        assert_eq!(jq_solve(w, q.as_ptr(), &opts, &mut sol), JqStatus::JqInvalidArgument);

        let mut cost = 0.0;
        assert_eq!(jq_solution_cost(ptr::null(), &mut cost), JqStatus::JqNullArgument);
        assert_eq!(jq_oracle(w, q.as_ptr(), ptr::null_mut(), ptr::null_mut(), 0, ptr::null_mut()), JqStatus::JqNullArgument);
        jq_solution_free(ptr::null_mut());
        jq_workload_free(ptr::null_mut());
        jq_workload_free(w);
    }
}

#[test]
fn version_is_package_version() {
    let v = unsafe { CStr::from_ptr(jq_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/joinqubo.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["jq_workload_parse", "jq_solve", "jq_oracle", "jq_solution_trace_csv", "JQ_BUFFER_TOO_SMALL", "JQ_MODE_DECOMPOSE"] {
        assert!(text.contains(name), "header lacks {name}");
    }
    let dir = tempfile_dir();
    let src = dir.join("use.c");
    std::fs::write(
        &src,
        "#include \"joinqubo.h\"\nint main(void) { JqSolveOptions o = jq_solve_options_default(); o.mode = JQ_MODE_RELAX; return (int)o.mode - 2; }\n",
    )
    .unwrap();
    let Ok(out) = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header.parent().unwrap())
        .arg(&src)
        .output()
    else {
        eprintln!("no C compiler found; skipping syntax check");
        return;
    };
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn tempfile_dir() -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("joinqubo-ffi-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}
