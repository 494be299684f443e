use std::process::{Command, Output};

fn nandwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nandwalk"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn eval_prints_root_value() {
    let o = nandwalk(&["eval", "--depth", "2", "--bits", "1101"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o).trim(), "1");
}

#[test]
fn eval_reads_instance_files() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    std::fs::write(&path, r#"{"depth": 2, "bits": "0000"}"#).unwrap();
    let arg = format!("@{}", path.display());
    let o = nandwalk(&["eval", "--bits", &arg, "--seed", "3"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("0"));
    assert!(lines.next().unwrap().starts_with("queries "));
}

#[test]
fn usage_errors_name_the_token() {
    let o = nandwalk(&["eval", "--depth", "2", "--bits", "1101", "--frobnicate"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--frobnicate"));
    let o = nandwalk(&["eval", "--depth", "2", "--bits", "110"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(nandwalk(&["run", "--help"]).status.code(), Some(0));
}

#[test]
fn refusals_exit_with_two() {
    let o = nandwalk(&["dump-system", "--depth", "15", "--bits", &"0".repeat(1 << 15), "--runway-len", "4"]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
    let o = Command::new(env!("CARGO_BIN_EXE_nandwalk"))
        .env("NANDWALK_DENSE_CAP", "16")
        .args(["run", "--depth", "1", "--bits", "10", "--exact"])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn gadget_verify_reports_exactness() {
    let o = nandwalk(&["gadget-verify", "--depth", "3", "--trials", "20"]);
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert!(report["max_deviation"].as_f64().unwrap() <= 1e-12);
    assert_eq!(report["queries"].as_u64().unwrap(), 2 * report["invocations"].as_u64().unwrap());
}

#[test]
fn dump_system_format() {
    let o = nandwalk(&["dump-system", "--depth", "0", "--bits", "0", "--runway-len", "4", "--attach", "2"]);
    assert_eq!(stdout(&o).trim(), r#"{"dim":6,"h_d_edges":[[0,1],[1,2],[2,3],[1,4]],"h_o_pairs":[]}"#);
}

#[test]
fn sweep_then_fit() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let p = path.to_str().unwrap();
    let o = nandwalk(&["sweep", "--depths", "4..12", "--orders", "1,2,3", "--out", p]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut slopes = Vec::new();
    for k in ["1", "2", "3"] {
        let filter = format!("k={k}");
        let o = nandwalk(&["fit", "--x", "N", "--y", "queries", "--where", &filter, p]);
        assert_eq!(o.status.code(), Some(0));
        let fit: serde_json::Value = serde_json::from_str(stdout(&o).trim()).unwrap();
        slopes.push(fit["slope"].as_f64().unwrap());
    }
    // the bill grows like t^{1+1/2k} with t ∝ √(N ln N)
    assert!(slopes.windows(2).all(|w| w[1] < w[0]), "{slopes:?}");
    assert!(slopes.iter().all(|&s| s > 0.5 && s < 1.0), "{slopes:?}");
    let header = std::fs::read_to_string(&path).unwrap();
    assert!(header.starts_with("# {\"schema_version\":1"));
}

#[test]
fn fit_rejects_bad_columns() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "a,b\n1,2\n2,4\n4,-8\n").unwrap();
    let o = nandwalk(&["fit", "--x", "a", "--y", "b", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let o = nandwalk(&["fit", "--x", "a", "--y", "zzz", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
}

fn body(csv: &str) -> String {
    csv.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn same_seed_same_body() {
    let args = ["run", "--depth", "2", "--trials", "2", "--seed", "17"];
    let a = stdout(&nandwalk(&args));
    let b = stdout(&nandwalk(&args));
    assert!(!body(&a).is_empty());
    assert_eq!(body(&a), body(&b));
    let args = ["trotter-error", "--seed", "5", "--order", "1", "--segments", "2,4,8"];
    assert_eq!(body(&stdout(&nandwalk(&args))), body(&stdout(&nandwalk(&args))));
}

#[test]
fn run_writes_snapshot_and_jsonl() {
    let dir = tempfile::tempdir().unwrap();
    let snap = dir.path().join("s.json");
    let o = nandwalk(&[
        "run", "--depth", "1", "--bits", "01", "--format", "jsonl", "--snapshot", snap.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2);
    let row: serde_json::Value = serde_json::from_str(lines[1]).unwrap();
    assert_eq!(row["bits"], "01");
    assert!(row["queries_total"].as_u64().unwrap() > 0);
    let amps: Vec<[f64; 2]> = serde_json::from_str(&std::fs::read_to_string(&snap).unwrap()).unwrap();
    let norm: f64 = amps.iter().map(|[re, im]| re * re + im * im).sum();
    assert!((norm - 1.0).abs() < 1e-9);
}

#[test]
fn classical_sweep_table() {
    let o = nandwalk(&["classical-sweep", "--max-depth", "24"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    let header: serde_json::Value = serde_json::from_str(out.lines().next().unwrap().trim_start_matches('#')).unwrap();
    let slope = header["fits"][0]["slope"].as_f64().unwrap();
    assert!((slope - 0.7537).abs() < 0.01, "{slope}");
}
