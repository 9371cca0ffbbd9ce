use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_cuspeta"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("cuspeta-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

#[test]
fn malformed_spec_exits_2_and_writes_nothing() {
    let spec = scratch("bad.json");
    let out = scratch("bad-report.json");
    std::fs::write(&spec, r#"{"kind": "eta", "model": {"spectrum": {"progression": 0.25}}, "extra": 1}"#).unwrap();
    let o = run(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!out.exists());
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    let o = run(&["run", spec.to_str().unwrap()]);
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_suite_and_bad_flags_are_usage_errors() {
    assert_eq!(run(&["verify", "nope"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "ddtr", "--format", "xml"]).status.code(), Some(2));
    assert_eq!(run(&[]).status.code(), Some(2));
}

#[test]
fn eta_spectrum_experiment() {
    let spec = scratch("eta.json");
    std::fs::write(&spec, r#"{"kind": "eta", "name": "quarter shift", "model": {"spectrum": {"progression": 0.25}}}"#).unwrap();
    let o = run(&["run", spec.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["experiment"], "quarter shift");
    let recs = v["records"].as_array().unwrap();
    assert!(!recs.is_empty());
    for r in recs {
        let x = r["computed"][0].as_f64().unwrap();
        assert!((x - 0.5).abs() < 1e-3, "{r}");
        assert!(r["paper_ref"].as_str().unwrap().len() > 5);
    }
}

#[test]
fn verify_csv_and_reproducible() {
    let a = run(&["verify", "fredholm", "--format", "csv", "--seed", "3"]);
    let b = run(&["verify", "fredholm", "--format", "csv", "--seed", "3"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "name,computed_re,computed_im,expected_re,expected_im,tol,pass");
    assert_eq!(lines.count(), 20);
    let c = run(&["verify", "fredholm", "--format", "csv", "--seed", "4"]);
    assert_ne!(text.as_bytes(), &c.stdout[..]);
}

#[test]
fn failing_check_exits_1() {
    let spec = scratch("tight.json");
    std::fs::write(&spec, r#"{"kind": "trace-defect", "model": {"symbols": {"pair": "classical", "blocks": 16}}, "tolerance": 1e-12}"#).unwrap();
    let out = scratch("tight-report.json");
    let o = run(&["run", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(v["status"], "fail");
}

#[test]
fn list_suites_names_all_twelve() {
    let o = run(&["list-suites"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8(o.stdout).unwrap();
    for s in ["fredholm", "winding", "cartan", "star", "susdet", "trace-defect", "ddtr", "eta-oracles", "eta-multiplicativity", "lifted-det", "trivialize", "periodicity"] {
        assert!(text.lines().any(|l| l.starts_with(s)), "{s}");
    }
}
