use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/three_chain.json")
}

fn joinqubo(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_joinqubo")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn solve_two_relations_prints_hint() {
    let wl = fixture();
    let out = joinqubo(&["solve", "--workload", wl.to_str().unwrap(), "--query", "ab", "--budget-ms", "1000", "--seed", "3"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("hint: Leading((a b))"), "{text}");
    assert!(text.contains("cost: 1000"), "{text}");
    assert!(text.contains("strategy: "), "{text}");
}

#[test]
fn emit_hint_prints_only_the_hint() {
    let wl = fixture();
    let out = joinqubo(&["solve", "--workload", wl.to_str().unwrap(), "--query", "abc", "--emit-hint"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "Leading((b c)a)\n");
}

#[test]
fn oracle_on_three_chain() {
    let wl = fixture();
    let out = joinqubo(&["oracle", "--workload", wl.to_str().unwrap(), "--query", "abc"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("cost: 1100"), "{text}");
    assert!(text.contains("plan: ((b c) a)"), "{text}");
}

#[test]
fn solve_writes_trace_csv_with_fixed_columns() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("trace.csv");
    let wl = fixture();
    let args = ["solve", "--workload", wl.to_str().unwrap(), "--query", "abc", "--mode", "relax", "--csv", csv.to_str().unwrap()];
    let out = joinqubo(&args);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(
        header,
        [
            "iteration", "ingress_ms", "solve_ms", "egress_ms", "end_to_end_ms", "qpu_programming_ms", "qpu_sampling_ms",
            "qpu_access_ms", "refine_ms", "kl", "best_cost", "violations"
        ]
    );
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert!(!rows.is_empty());
    for row in &rows {
        let f = |i: usize| row[i].parse::<f64>().unwrap();
        assert_eq!(f(4), f(1) + f(2) + f(3));
    }
    let first = std::fs::read(&csv).unwrap();
    assert!(joinqubo(&args).status.success());
    assert_eq!(std::fs::read(&csv).unwrap(), first);
}

#[test]
fn bench_writes_one_row_per_query_and_seed() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bench.csv");
    let wl = fixture();
    let out = joinqubo(&[
        "bench", "--workload", wl.to_str().unwrap(), "--budget-ms", "2000", "--seeds", "3", "--csv", csv.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    let keys: Vec<(String, String)> = rows.iter().map(|r| (r[0].to_string(), r[1].to_string())).collect();
    let want: Vec<(String, String)> =
        ["ab", "abc"].iter().flat_map(|q| (0..3).map(move |s| (q.to_string(), s.to_string()))).collect();
    assert_eq!(keys, want);
    assert!(stdout(&out).contains("median ratio"));
}

#[test]
fn errors_exit_nonzero() {
    let wl = fixture();
    let out = joinqubo(&["solve", "--workload", wl.to_str().unwrap(), "--query", "nope"]);
    assert!(!out.status.success());
    let out = joinqubo(&["solve", "--workload", "/nonexistent.json", "--query", "ab"]);
    assert!(!out.status.success());
    let out = joinqubo(&["solve", "--workload", wl.to_str().unwrap(), "--query", "ab", "--budget-ms", "-5"]);
    assert!(!out.status.success());
}

#[test]
fn tiny_budget_warns_but_succeeds() {
    let wl = fixture();
    let out = joinqubo(&["solve", "--workload", wl.to_str().unwrap(), "--query", "abc", "--budget-ms", "0.001"]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("degraded"));
}
