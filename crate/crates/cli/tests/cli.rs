use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn scn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scn"))
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("run scn")
}

fn write(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_string_lossy().into_owned()
}

fn lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().map(String::from).collect()
}

#[test]
fn filter_three_months_gives_one_interval() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "tx.csv", "supplier_id,buyer_id,month,amount\n1,2,2017-01,5\n1,2,2017-03,\n1,2,2017-06,1.5\n");
    let out = tmp.path().join("out");
    let o = scn(&out, &["filter", &input]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out.join("intervals.csv"));
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,2,2017-01,"));
    assert!(out.join("manifest.json").exists());
    assert!(out.join("timeline.csv").exists());
}

#[test]
fn bad_month_is_rejected_with_line_number() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(tmp.path(), "tx.csv", "supplier_id,buyer_id,month\n1,2,2017-01\n1,2,2017-13\n");
    let o = scn(&tmp.path().join("out"), &["filter", &input]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn lenient_mode_skips_bad_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write(
        tmp.path(),
        "tx.csv",
        "supplier_id,buyer_id,month\n1,2,2017-01\n1,2,2017-13\n1,2,2017-02\n1,2,2017-03\n",
    );
    let out = tmp.path().join("out");
    let o = scn(&out, &["--lenient", "filter", &input]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 3"));
    assert_eq!(lines(&out.join("intervals.csv")).len(), 2);
}

#[test]
fn calibrate_on_empty_input_reports_insufficient_data() {
    let tmp = tempfile::tempdir().unwrap();
    let iv = write(tmp.path(), "iv.csv", "supplier_id,buyer_id,entry_month,exit_month\n");
    let firms = write(tmp.path(), "firms.csv", "firm_id,sector\n1,C\n");
    let o = scn(&tmp.path().join("out"), &["calibrate", &iv, &firms]);
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn simulate_writes_ten_snapshots_by_default() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = scn(&out, &["simulate", "--period", "a", "--seed-size", "2000"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let snaps: Vec<_> = fs::read_dir(out.join("snapshots")).unwrap().collect();
    assert_eq!(snaps.len(), 20);
    assert!(out.join("snapshots/step00500_edges.csv").exists());
    assert_eq!(lines(&out.join("steps.csv")).len(), 501);
}

#[test]
fn simulate_with_zero_steps_keeps_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "e.csv", "supplier_id,buyer_id\n1,2\n2,3\n3,1\n");
    let firms = write(tmp.path(), "f.csv", "firm_id,sector\n1,A\n2,C\n3,G\n");
    let out = tmp.path().join("out");
    let o = scn(&out, &["simulate", "--period", "a", "--seed-edges", &edges, "--seed-firms", &firms, "--steps", "0"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(lines(&out.join("steps.csv")).len(), 1);
    assert_eq!(lines(&out.join("snapshots/step00000_edges.csv")).len(), 4);
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = scn(&out, &["--seed", seed, "simulate", "--period", "a", "--seed-size", "1000", "--steps", "60", "--history"]);
        assert!(o.status.success());
        ["steps.csv", "history_intervals.csv", "snapshots/step00050_edges.csv"].map(|f| fs::read(out.join(f)).unwrap())
    };
    let a = run("a", "5");
    assert_eq!(a, run("b", "5"));
    assert_ne!(a, run("c", "6"));
}

#[test]
fn stats_on_triangle() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "e.csv", "supplier_id,buyer_id\n1,2\n2,3\n3,1\n");
    let out = tmp.path().join("out");
    let o = scn(&out, &["stats", &edges]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("N 3 L 3 mean degree 2.000"), "{stdout}");
    let cl = lines(&out.join("clustering.csv"));
    assert_eq!(cl.len(), 2);
    assert!(cl[1].ends_with(",1"));
}

#[test]
fn esri_on_star() {
    let tmp = tempfile::tempdir().unwrap();
    let edges = write(tmp.path(), "e.csv", "supplier_id,buyer_id\n0,1\n0,2\n0,3\n0,4\n");
    let firms = write(tmp.path(), "f.csv", "firm_id,sector\n0,A\n1,C\n2,C\n3,C\n4,C\n");
    let ess = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures/essentialness_default.csv");
    let out = tmp.path().join("out");
    let o = scn(&out, &["esri", &edges, "--firms", &firms, "--essentialness", ess.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = lines(&out.join("esri.csv"));
    assert_eq!(rows[1], "0,1,1");
    assert_eq!(rows.len(), 6);
}

#[test]
fn roundtrip_recovers_all_intervals() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = scn(&out, &["roundtrip", "--pairs", "500", "--firms", "300", "--noise-pairs", "200"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(fs::read(out.join("intervals.csv")).unwrap(), fs::read(out.join("truth_intervals.csv")).unwrap());
}

#[test]
fn calibrated_params_have_model_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    let o = scn(&sim, &["simulate", "--period", "a", "--seed-size", "3000", "--steps", "120", "--history"]);
    assert!(o.status.success());
    let cal = tmp.path().join("cal");
    let iv = sim.join("history_intervals.csv");
    let firms = sim.join("history_firms.csv");
    let o = scn(&cal, &["calibrate", iv.to_str().unwrap(), firms.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let params = fs::read_to_string(cal.join("params.json")).unwrap();
    for key in ["n_entry_mean", "p_node_exit", "alpha0", "alpha", "beta", "p_term", "sector_matrix", "entry_degrees"] {
        assert!(params.contains(&format!("\"{key}\"")), "missing {key}");
    }
}
