use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const MODEL: &str = r#"{ "K": 2, "horizon": 1.0, "example": "gl_excitatory",
  "params": { "mu": 1.0, "r": 1.0, "b": 1.0 }, "init": { "kind": "constant", "value": 1.0 } }"#;

fn fiap_sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fiap-sim")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    fs::write(dir.join("model.json"), MODEL).unwrap();
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn rmf_sim_emits_logs_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{ "model": "model.json", "M": 4, "n_paths": 50, "seed": 2 }"#);
    let out = tmp.path().join("out");
    let o = fiap_sim(&["rmf-sim", "--config", &cfg, "--out", out.to_str().unwrap(), "--grid", "10"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(&out);
    let names: Vec<&str> = m["files"].as_array().unwrap().iter().map(|f| f["path"].as_str().unwrap()).collect();
    assert_eq!(names, ["events.csv", "results.csv", "trajectory.csv"]);
    // Every listed file hashes to its recorded digest.
    for f in m["files"].as_array().unwrap() {
        let bytes = fs::read(out.join(f["path"].as_str().unwrap())).unwrap();
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
    }
    assert_eq!(m["seed"], 2);
    let traj = fs::read_to_string(out.join("trajectory.csv")).unwrap();
    assert_eq!(traj.lines().count(), 1 + 11 * 4 * 2);
}

#[test]
fn reruns_are_byte_identical_and_seeds_matter() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", r#"{ "model": "model.json", "M_list": [2, 4, 8], "n_paths": 300, "seed": 9, "grid": 20 }"#);
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = fiap_sim(&["compare", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", seed]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
            .unwrap()
            .map(|e| {
                let e = e.unwrap();
                (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
            })
            .collect();
        files.sort();
        files
    };
    let a = run("a", "9");
    let b = run("b", "9");
    let c = run("c", "10");
    assert_eq!(a, b);
    assert_ne!(a, c);
}

#[test]
fn single_node_compare_skips_the_fit() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{ "model": { "K": 1, "horizon": 1.0, "example": "gl_excitatory", "init": { "kind": "uniform", "low": 0.5, "high": 2.0 } },
                    "M_list": [2, 4, 8], "n_paths": 3000, "seed": 1, "grid": 10 }"#;
    let cfg = write_config(tmp.path(), "k1.json", body);
    let out = tmp.path().join("out");
    let o = fiap_sim(&["compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    for f in summary["fits"].as_array().unwrap() {
        assert!(f["skipped"].as_str().unwrap().contains("K = 1"));
    }
    // With one node both sides have the same law: no arrivals at all, and
    // intensity TV at the two-sample floor of 64 bins × 3000 paths (≈ 0.08).
    let results = fs::read_to_string(out.join("results.csv")).unwrap();
    for line in results.lines().filter(|l| l.contains(",tv_")) {
        let value: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        let limit = if line.contains("tv_arrivals") { 0.0 } else { 0.12 };
        assert!(value <= limit, "{line}");
    }
}

#[test]
fn ph_solve_reports_nonconvergence_without_failing() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{ "model": "model.json", "n_paths": 2000, "seed": 1, "grid": 10, "solver": { "tol": 1e-9, "max_iter": 1 } }"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    let out = tmp.path().join("out");
    let o = fiap_sim(&["ph-solve", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(manifest(&out)["converged"], false);
    let rates = fs::read_to_string(out.join("rates.csv")).unwrap();
    assert_eq!(rates.lines().count(), 1 + 2 * 10);
}

#[test]
fn dfiap_validate_passes_on_the_desk_chain() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{ "model": "model.json", "M": 3, "n_paths": 20000, "seed": 5, "dfiap": { "r": [1, 1], "mu": [[0, 1], [1, 0]], "max_state": 8 } }"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    let out = tmp.path().join("out");
    let o = fiap_sim(&["dfiap-validate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("checks: PASS"));
    for f in ["transitions.csv", "mc_report.csv", "chain_trajectory.csv", "generator.csv", "summary.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn bad_configs_fail_with_a_located_message() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "c.json", "{ \"model\": \"model.json\",\n  \"M\": 3,\n  \"n_paths\": -1, \"seed\": 1 }");
    let o = fiap_sim(&["rmf-sim", "--config", &cfg]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3") && err.contains("n_paths"), "{err}");

    let cfg = write_config(tmp.path(), "d.json", r#"{ "model": "model.json", "M_list": [8, 4], "n_paths": 10, "seed": 1 }"#);
    let o = fiap_sim(&["compare", "--config", &cfg]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("strictly increasing"));

    let cfg = write_config(tmp.path(), "e.json", r#"{ "model": "missing.json", "M": 2, "n_paths": 10, "seed": 1 }"#);
    assert!(!fiap_sim(&["rmf-sim", "--config", &cfg]).status.success());

    let cfg = write_config(tmp.path(), "f.json", r#"{ "model": "model.json", "M": 2, "n_paths": 10 }"#);
    let o = fiap_sim(&["rmf-sim", "--config", &cfg]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));

    let o = fiap_sim(&["walk", "--config", &cfg]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown mode"));
}

#[test]
fn exact_budget_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let body = r#"{ "model": "model.json", "M": 30, "n_paths": 10, "seed": 1, "dfiap": { "r": [1, 1], "mu": [[0, 1], [1, 0]] } }"#;
    let cfg = write_config(tmp.path(), "c.json", body);
    let o = fiap_sim(&["dfiap-validate", "--config", &cfg, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}
