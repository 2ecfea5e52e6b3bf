use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn ctxdep(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ctxdep"))
        .args(args)
        .env("CTXDEP_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn gen_circuits_counts() {
    let ihs = data("lgst_ihs.json");
    let o = ctxdep(&["gen-circuits", "--design", p(&ihs), "--mode", "lgst"]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).trim(), "40");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("circuits.json");
    let xy = data("lsgst_xy.json");
    let o = ctxdep(&["gen-circuits", "--design", p(&xy), "--mode", "lsgst", "--out", p(&out)]);
    assert_eq!(stdout(&o).trim(), "1405");
    let list: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(list.as_array().unwrap().len(), 1405);
    assert_eq!(list[0]["spec"], "{}");
    assert_eq!(list[0]["core_length"], 0);
}

#[test]
fn gen_circuits_missing_design() {
    let o = ctxdep(&["gen-circuits", "--design", "/nonexistent/design.json", "--mode", "lgst"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("/nonexistent/design.json"));
}

#[test]
fn simulate_shapes_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    let xy = data("lsgst_xy.json");
    let model = data("drift_model.json");
    for out in [&a, &b] {
        let o = ctxdep(&[
            "simulate", "--design", p(&xy), "--error-model", p(&model), "--shots", "100", "--seed", "11", "--out",
            p(out),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    let ds: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&a).unwrap()).unwrap();
    assert_eq!(ds["circuits"].as_array().unwrap().len(), 1405);
    assert_eq!(ds["contexts"].as_array().unwrap().len(), 5);
    assert_eq!(ds["circuits"][100]["counts"]["t3"].as_array().unwrap().len(), 2);

    let one = dir.path().join("one.json");
    let ihs = data("lgst_ihs.json");
    let null = data("null_abc_model.json");
    let o = ctxdep(&[
        "simulate", "--design", p(&ihs), "--mode", "lgst", "--error-model", p(&null), "--shots", "1", "--out", p(&one),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ds: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&one).unwrap()).unwrap();
    for c in ds["circuits"].as_array().unwrap() {
        for pool in c["counts"].as_object().unwrap().values() {
            let total: u64 = pool.as_array().unwrap().iter().map(|v| v.as_u64().unwrap()).sum();
            assert_eq!(total, 1);
        }
    }
}

#[test]
fn simulate_rejects_bad_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.json");
    std::fs::write(&model, r#"{"a": {"Gh": 0.1}}"#).unwrap();
    let ihs = data("lgst_ihs.json");
    let out = dir.path().join("out.json");
    let o = ctxdep(&[
        "simulate", "--design", p(&ihs), "--mode", "lgst", "--error-model", p(&model), "--out", p(&out),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn analyze_and_summarize_driven_example() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let tables = dir.path().join("tables");
    let driven = data("two_context_driven.json");
    let o = ctxdep(&[
        "analyze", "--data", p(&driven), "--alpha", "0.05", "--out", p(&report), "--tables", p(&tables),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let cmp = &r["comparisons"][0];
    assert_eq!(cmp["alpha_local"], 0.05);
    let q = &cmp["circuits"][0];
    assert!((q["p"].as_f64().unwrap() - 1.2e-3).abs() < 1e-4);
    assert_eq!(q["rejected"], true);
    for key in ["llr", "k", "p", "n_sigma", "n_sigma_threshold", "triggered"] {
        assert!(cmp["aggregate"].get(key).is_some(), "{key}");
    }
    assert!(tables.join("pairwise_matrix.csv").exists());
    assert!(tables.join("jsd_profile_joint.csv").exists());

    let o = ctxdep(&["summarize", "--report", p(&report)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("context dependence detected"));
    assert!(text.contains("\n    Gx\n"), "{text}");
}

#[test]
fn analyze_crosstalk_example() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let ds = data("crosstalk.json");
    let plan = data("crosstalk_plan.json");
    let o = ctxdep(&["analyze", "--data", p(&ds), "--plan", p(&plan), "--out", p(&report)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ab = &r["comparisons"][0];
    assert_eq!(ab["contexts"], serde_json::json!(["a", "b"]));
    assert_eq!(ab["max_sstvd"].as_f64(), Some(0.27734375));
    assert_eq!(ab["alpha_local"], 0.025);
}

#[test]
fn summarize_null_report() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let idle = data("two_context_idle.json");
    let o = ctxdep(&["analyze", "--data", p(&idle), "--out", p(&report)]);
    assert!(o.status.success());
    let r: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(r["comparisons"][0]["circuits"][0]["sstvd"].is_null());
    let o = ctxdep(&["summarize", "--report", p(&report)]);
    assert!(stdout(&o).contains("no context dependence detected"));
}

#[test]
fn invalid_inputs_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let driven = data("two_context_driven.json");
    let o = ctxdep(&["analyze", "--data", p(&driven), "--alpha", "0", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("significance"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"comparisons\": 3}").unwrap();
    let o = ctxdep(&["summarize", "--report", p(&bad)]);
    assert_eq!(o.status.code(), Some(1));

    let o = ctxdep(&["analyze", "--data", p(&driven)]);
    assert_eq!(o.status.code(), Some(1));

    let o = ctxdep(&["analyze", "--data", p(&driven), "--plan", "/nonexistent/plan.json", "--out", p(&report)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_is_byte_stable() {
    let dir = tempfile::tempdir().unwrap();
    let ds = data("crosstalk.json");
    let (a, b) = (dir.path().join("a.json"), dir.path().join("b.json"));
    for out in [&a, &b] {
        assert!(ctxdep(&["analyze", "--data", p(&ds), "--plan", "pairs", "--out", p(out)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
}
