use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subdist")).args(args).output().unwrap()
}

fn stdout(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn xxz_sector_forms_agree() {
    let by_count = stdout(&["spectrum", "--model", "xxz", "--L", "8", "--sector", "2,3"]);
    let by_magnetization = stdout(&["spectrum", "--model", "xxz", "--L", "8", "--sector", "*,2,1"]);
    assert_eq!(by_count, by_magnetization);
    assert!(by_count.starts_with("L,K,n_down,delta,index,energy\n"));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["spectrum", "--model", "xxz", "--L", "6", "--sector", "*,1,0.5"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--model", "ising", "--L", "6", "--sector", "2,0"]).status.code(), Some(2));
    assert_eq!(run(&["sweep", "--bogus"]).status.code(), Some(2));
    let guard = run(&["sweep", "--model", "ising", "--L", "16", "--metric", "trace", "--ell-min", "14", "--ell-max", "14"]);
    assert_eq!(guard.status.code(), Some(3), "{}", String::from_utf8_lossy(&guard.stderr));
}

#[test]
fn sweep_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("out.csv");
    let path = csv.to_str().unwrap();
    stdout(&["sweep", "--model", "ising", "--L", "8", "--metric", "bures", "--fit", "--out", path]);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 9);
    let meta: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(csv.with_extension("json")).unwrap()).unwrap();
    assert!(meta.get("fit").is_some());
}

#[test]
fn mode_difference_is_reported() {
    let out = stdout(&["mode-diff", "--L", "8"]);
    assert!(out.starts_with("L,h,sector,ordering,mode_difference,pairs\n8,"));
}
