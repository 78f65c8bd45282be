use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use fiap_ffi::*;

const DESK: &str = r#"{ "K": 2, "horizon": 1.0, "example": "gl_excitatory",
    "params": { "mu": 1.0, "r": 1.0, "b": 1.0 }, "init": { "kind": "constant", "value": 1.0 } }"#;

fn last_error() -> String {
    let p = fiap_last_error();
    assert!(!p.is_null(), "expected an error message");
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn model() -> *mut FiapModel {
    let json = CString::new(DESK).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fiap_model_from_json(json.as_ptr(), &mut m) }, FiapStatus::Ok);
    assert!(!m.is_null());
    m
}

#[test]
fn model_lifecycle() {
    let m = model();
    assert_eq!(unsafe { fiap_model_nodes(m) }, 2);
    let mut worst = 99;
    assert_eq!(unsafe { fiap_model_validate(m, &mut worst) }, FiapStatus::Ok);
    assert!(worst < 3);
    unsafe { fiap_model_free(m) };
    unsafe { fiap_model_free(ptr::null_mut()) };
    assert_eq!(unsafe { fiap_model_nodes(ptr::null()) }, 0);
}

#[test]
fn config_errors_carry_a_message() {
    fiap_clear_error();
    assert!(fiap_last_error().is_null());
    let json = CString::new(r#"{ "K": "two" }"#).unwrap();
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fiap_model_from_json(json.as_ptr(), &mut m) }, FiapStatus::ErrConfig);
    assert!(m.is_null());
    assert!(last_error().contains("K"));
    let bad = [0xffu8, 0];
    assert_eq!(unsafe { fiap_model_from_json(bad.as_ptr().cast(), &mut m) }, FiapStatus::ErrUtf8);
}

#[test]
fn null_arguments_are_rejected() {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { fiap_model_from_json(ptr::null(), &mut m) }, FiapStatus::ErrNull);
    assert!(last_error().contains("json"));
    let json = CString::new(DESK).unwrap();
    assert_eq!(unsafe { fiap_model_from_json(json.as_ptr(), ptr::null_mut()) }, FiapStatus::ErrNull);
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { fiap_rmf_simulate(ptr::null(), 4, 1.0, 1, &mut run) }, FiapStatus::ErrNull);
}

#[test]
fn rmf_run_queries() {
    let m = model();
    let mut run = ptr::null_mut();
    assert_eq!(unsafe { fiap_rmf_simulate(m, 1, 1.0, 3, &mut run) }, FiapStatus::ErrInvalid);
    assert!(last_error().contains("replicas"));
    assert_eq!(unsafe { fiap_rmf_simulate(m, 4, 1.0, 3, &mut run) }, FiapStatus::Ok);
    let (mut dep, mut arr) = (0, 0);
    assert_eq!(unsafe { fiap_rmf_event_counts(run, &mut dep, &mut arr) }, FiapStatus::Ok);
    // K = 2: every departure sends exactly one arrival.
    assert_eq!(dep, arr);
    let mut total = 0;
    for r in 0..4 {
        for i in 0..2 {
            let mut c = 0;
            assert_eq!(unsafe { fiap_rmf_departures(run, r, i, 1.0, &mut c) }, FiapStatus::Ok);
            total += c;
        }
    }
    assert_eq!(total, dep);
    let mut lam = f64::NAN;
    assert_eq!(unsafe { fiap_rmf_final_intensity(run, 3, 1, &mut lam) }, FiapStatus::Ok);
    assert!(lam.is_finite() && lam >= 0.0);
    assert_eq!(unsafe { fiap_rmf_final_intensity(run, 4, 0, &mut lam) }, FiapStatus::ErrRange);

    let dir = tempfile::tempdir().unwrap();
    let path = CString::new(dir.path().join("events.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fiap_rmf_write_csv(run, path.as_ptr()) }, FiapStatus::Ok);
    let text = std::fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + dep + arr);
    let missing = CString::new(dir.path().join("no/such/dir/e.csv").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { fiap_rmf_write_csv(run, missing.as_ptr()) }, FiapStatus::ErrIo);
    unsafe {
        fiap_rmf_free(run);
        fiap_model_free(m);
    }
}

#[test]
fn fixed_point_and_arrival_law() {
    let m = model();
    let mut rates = ptr::null_mut();
    let mut converged = -1;
    assert_eq!(unsafe { fiap_ph_solve(m, 20, 0.05, 10, 2000, 5, &mut rates, &mut converged) }, FiapStatus::Ok);
    assert_eq!(converged, unsafe { fiap_rates_converged(rates) });
    let mut v = 0.0;
    assert_eq!(unsafe { fiap_rates_at(rates, 0, 0.5, &mut v) }, FiapStatus::Ok);
    assert!(v > 0.5 && v < 3.0, "{v}");
    assert_eq!(unsafe { fiap_rates_at(rates, 2, 0.5, &mut v) }, FiapStatus::ErrRange);

    let (mut offset, mut len) = (0i64, 0usize);
    let status = unsafe { fiap_ph_arrival_pmf(m, rates, 0, 1.0, &mut offset, ptr::null_mut(), 0, &mut len) };
    assert_eq!(status, FiapStatus::ErrBufferTooSmall);
    assert!(len > 1);
    let mut probs = vec![0.0; len];
    let status = unsafe { fiap_ph_arrival_pmf(m, rates, 0, 1.0, &mut offset, probs.as_mut_ptr(), len, &mut len) };
    assert_eq!(status, FiapStatus::Ok);
    assert_eq!(offset, 0);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    // P(A = 0) = exp(-∫ rate of the other node).
    let mut mean = 0.0;
    for c in 0..20 {
        let mut r = 0.0;
        unsafe { fiap_rates_at(rates, 1, (c as f64 + 0.5) / 20.0, &mut r) };
        mean += r / 20.0;
    }
    assert!((probs[0] - (-mean).exp()).abs() < 1e-9);
    unsafe {
        fiap_rates_free(rates);
        fiap_model_free(m);
    }
}

#[test]
fn chain_transition_probabilities() {
    let sigma = CString::new("x").unwrap();
    let (r, mu) = ([1u64, 1], [0u64, 1, 1, 0]);
    let mut chain = ptr::null_mut();
    assert_eq!(unsafe { fiap_chain_new(2, r.as_ptr(), mu.as_ptr(), sigma.as_ptr(), 0.3, &mut chain) }, FiapStatus::Ok);
    // M = K = 2, k = 2 → 1: own reset, no arrival from the other replica's node 1.
    let state = [2u64, 0, 0, 3];
    let mut p = 0.0;
    assert_eq!(unsafe { fiap_chain_transition_prob(chain, state.as_ptr(), 2, 0, 0, 1, &mut p) }, FiapStatus::Ok);
    let own = 1.0 - (-2.0f64 * 0.3).exp();
    let other = 1.0 - (-3.0f64 * 0.3).exp();
    assert!((p - own * (1.0 - other)).abs() < 1e-15);
    assert_eq!(unsafe { fiap_chain_transition_prob(chain, state.as_ptr(), 2, 2, 0, 1, &mut p) }, FiapStatus::ErrRange);

    let big = vec![1u64; 2 * 24];
    assert_eq!(unsafe { fiap_chain_transition_prob(chain, big.as_ptr(), 24, 0, 0, 1, &mut p) }, FiapStatus::ErrBudget);
    assert!(last_error().contains("budget"));
    unsafe { fiap_chain_free(chain) };

    let bad = CString::new("x +").unwrap();
    assert_eq!(unsafe { fiap_chain_new(2, r.as_ptr(), mu.as_ptr(), bad.as_ptr(), 0.3, &mut chain) }, FiapStatus::ErrConfig);
    let zero_reset = [0u64, 1];
    assert_eq!(unsafe { fiap_chain_new(2, zero_reset.as_ptr(), mu.as_ptr(), sigma.as_ptr(), 0.3, &mut chain) }, FiapStatus::ErrInvalid);
}

#[test]
fn experiment_from_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("model.json"), DESK).unwrap();
    let cfg = r#"{ "model": "model.json", "M": 3, "n_paths": 200, "seed": 4, "dfiap": { "r": [1, 1], "mu": [[0, 1], [1, 0]] } }"#;
    std::fs::write(dir.path().join("exp.json"), cfg).unwrap();
    let path = CString::new(dir.path().join("exp.json").to_str().unwrap()).unwrap();
    let out = CString::new(dir.path().join("out").to_str().unwrap()).unwrap();
    let mode = CString::new("dfiap-validate").unwrap();
    assert_eq!(unsafe { fiap_run_experiment(path.as_ptr(), mode.as_ptr(), out.as_ptr()) }, FiapStatus::Ok);
    assert!(dir.path().join("out/manifest.json").exists());
    let mode = CString::new("fly").unwrap();
    assert_eq!(unsafe { fiap_run_experiment(path.as_ptr(), mode.as_ptr(), out.as_ptr()) }, FiapStatus::ErrConfig);
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(fiap_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

const EXPORTS: [&str; 21] = [
    "fiap_last_error",
    "fiap_clear_error",
    "fiap_version",
    "fiap_model_from_json",
    "fiap_model_free",
    "fiap_model_nodes",
    "fiap_model_validate",
    "fiap_rmf_simulate",
    "fiap_rmf_free",
    "fiap_rmf_event_counts",
    "fiap_rmf_departures",
    "fiap_rmf_final_intensity",
    "fiap_rmf_write_csv",
    "fiap_ph_solve",
    "fiap_rates_free",
    "fiap_rates_converged",
    "fiap_rates_at",
    "fiap_ph_arrival_pmf",
    "fiap_chain_new",
    "fiap_chain_free",
    "fiap_chain_transition_prob",
];

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/fiap.h")).unwrap();
    for name in EXPORTS.iter().chain(&["fiap_run_experiment"]) {
        assert!(header.contains(&format!("{name}(")), "{name} missing from fiap.h");
    }
    for t in ["FiapModel", "FiapRmfRun", "FiapRates", "FiapChain", "FIAP_STATUS_ERR_BUDGET"] {
        assert!(header.contains(t), "{t} missing from fiap.h");
    }
}

#[test]
fn header_compiles_as_c() {
    let Ok(cc) = Command::new("cc").arg("--version").output() else {
        eprintln!("no C compiler on PATH; header syntax check not run");
        return;
    };
    assert!(cc.status.success());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"fiap.h\"\nint main(void) { FiapModel *m = 0; FiapStatus s = fiap_model_from_json(\"{}\", &m);\n\
         return s == FIAP_STATUS_OK ? 0 : (int)fiap_model_nodes(m); }\n",
    )
    .unwrap();
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&src)
        .status()
        .unwrap();
    assert!(status.success());
}
