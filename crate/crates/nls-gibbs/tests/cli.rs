use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nls-gibbs"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("nls-gibbs-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout_lines(output: &Output) -> Vec<serde_json::Value> {
    String::from_utf8_lossy(&output.stdout)
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("bad JSON line {l:?}: {e}")))
        .collect()
}

#[test]
fn sample_writes_jsonl_and_reports_partition_ratio() {
    let dir = workdir("sample");
    let out = dir.join("samples.jsonl");
    let output = bin()
        .args(["sample", "--beta", "8", "--n", "2", "--count", "40", "--seed", "3"])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<serde_json::Value> =
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 40);
    for line in &lines {
        let lw = line["log_weight"].as_f64().unwrap();
        assert!(lw <= 0.0 && lw.is_finite());
        assert_eq!(line["state"]["n"].as_i64(), Some(2));
        assert_eq!(line["state"]["beta_hint"].as_f64(), Some(8.0));
    }

    let summary = &stdout_lines(&output)[0];
    let mean = summary["mean"].as_f64().unwrap();
    assert!(mean > 0.0 && mean <= 1.0);
    assert!(summary["stderr"].as_f64().unwrap() >= 0.0);
    assert_eq!(summary["n"].as_u64(), Some(40));
}

#[test]
fn sample_is_deterministic_for_a_seed() {
    let dir = workdir("sample-det");
    let out_a = dir.join("a.jsonl");
    let out_b = dir.join("b.jsonl");
    let run = |out: &PathBuf| {
        bin()
            .args(["sample", "--beta", "16", "--n", "3", "--count", "20", "--seed", "9"])
            .arg("--out")
            .arg(out)
            .output()
            .unwrap()
    };
    let a = run(&out_a);
    let b = run(&out_b);
    assert!(a.status.success() && b.status.success());
    assert_eq!(fs::read(&out_a).unwrap(), fs::read(&out_b).unwrap());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn gaussian_only_sampling_has_unit_weights() {
    let dir = workdir("sample-gauss");
    let out = dir.join("g.jsonl");
    let output = bin()
        .args([
            "sample",
            "--beta",
            "8",
            "--n",
            "2",
            "--count",
            "15",
            "--method",
            "gaussian-only",
        ])
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = fs::read_to_string(&out).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["log_weight"].as_f64(), Some(0.0));
    }
    let summary = &stdout_lines(&output)[0];
    assert_eq!(summary["mean"].as_f64(), Some(1.0));
}

#[test]
fn evolve_writes_trajectory_and_conservation_report() {
    let dir = workdir("evolve");
    let state_path = dir.join("state.json");
    fs::write(&state_path, r#"{"n":2,"modes":[[1,0.4,0.0],[-1,0.1,0.2]]}"#).unwrap();
    let traj = dir.join("traj.csv");
    let output = bin()
        .arg("evolve")
        .arg("--state")
        .arg(&state_path)
        .args(["--t-end", "0.05", "--observe", "10"])
        .arg("--out")
        .arg(&traj)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let text = fs::read_to_string(&traj).unwrap();
    let header = text.lines().next().unwrap();
    assert_eq!(header, "t,H,l2,action_-2,action_-1,action_0,action_1,action_2");
    assert!(text.lines().count() > 2);

    let report = &stdout_lines(&output)[0];
    assert!(report["h_drift_rel"].as_f64().unwrap().abs() < 1e-6);
    assert!(report["l2_drift_rel"].as_f64().unwrap().abs() < 1e-12);
    assert!(report["momentum_drift_abs"].as_f64().unwrap().abs() < 1e-12);
}

#[test]
fn evolve_tracks_corrected_observable_when_asked() {
    let dir = workdir("evolve-phi");
    let state_path = dir.join("state.json");
    fs::write(&state_path, r#"{"n":3,"beta_hint":16.0,"modes":[[0,0.3,0.0],[1,0.2,-0.1]]}"#)
        .unwrap();
    let traj = dir.join("traj.csv");
    let output = bin()
        .arg("evolve")
        .arg("--state")
        .arg(&state_path)
        .args(["--t-end", "0.02", "--observe", "5", "--phi6-tk", "1"])
        .arg("--out")
        .arg(&traj)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let text = fs::read_to_string(&traj).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.ends_with(",phi6_1"), "header: {header}");
}

#[test]
fn evolve_without_beta_cannot_build_the_observable() {
    let dir = workdir("evolve-nobeta");
    let state_path = dir.join("state.json");
    // No beta hint in the file and no --beta flag.
    fs::write(&state_path, r#"{"n":2,"modes":[[1,0.4,0.0]]}"#).unwrap();
    let output = bin()
        .arg("evolve")
        .arg("--state")
        .arg(&state_path)
        .args(["--t-end", "0.01", "--phi6-tk", "1"])
        .arg("--out")
        .arg(dir.join("t.csv"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("beta"), "stderr: {stderr}");
}

#[test]
fn build_then_check_roundtrip() {
    let dir = workdir("nf");
    let pkg = dir.join("pkg.json");
    let output = bin()
        .args(["build-nf", "--beta", "16", "--n", "3", "--tk", "1"])
        .arg("--out")
        .arg(&pkg)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let summary = &stdout_lines(&output)[0];
    assert_eq!(summary["n"].as_i64(), Some(3));
    assert_eq!(summary["tk"].as_i64(), Some(1));
    assert_eq!(summary["beta"].as_f64(), Some(16.0));
    assert!(summary["phi6_terms"].as_u64().unwrap() > 0);

    let check = bin()
        .arg("check-nf")
        .arg(&pkg)
        .args(["--samples", "20", "--seed", "1"])
        .output()
        .unwrap();
    assert!(check.status.success(), "stderr: {}", String::from_utf8_lossy(&check.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&check.stdout)).unwrap();
    assert_eq!(report["pass"].as_bool(), Some(true));
    assert_eq!(report["n"].as_i64(), Some(3));
    assert!(report["checks"].as_array().unwrap().len() >= 8);
}

#[test]
fn check_detects_a_corrupted_package() {
    let dir = workdir("nf-tamper");
    let pkg = dir.join("pkg.json");
    let output = bin()
        .args(["build-nf", "--beta", "16", "--n", "3", "--tk", "1"])
        .arg("--out")
        .arg(&pkg)
        .output()
        .unwrap();
    assert!(output.status.success());

    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&pkg).unwrap()).unwrap();
    let re = v["chi4"]["terms"][0]["re"].as_f64().unwrap();
    v["chi4"]["terms"][0]["re"] = serde_json::json!(re + 0.25);
    fs::write(&pkg, serde_json::to_string(&v).unwrap()).unwrap();

    let check = bin()
        .arg("check-nf")
        .arg(&pkg)
        .args(["--samples", "20"])
        .output()
        .unwrap();
    assert_eq!(check.status.code(), Some(2), "tampered package must fail the identity checks");
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&check.stdout)).unwrap();
    assert_eq!(report["pass"].as_bool(), Some(false));
}

#[test]
fn check_rejects_malformed_package_files() {
    let dir = workdir("nf-malformed");
    let pkg = dir.join("broken.json");
    fs::write(&pkg, "{\"n\": 3").unwrap();
    let check = bin().arg("check-nf").arg(&pkg).output().unwrap();
    assert_eq!(check.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&check.stderr).is_empty());
}

fn write_experiment_toml(path: &PathBuf) {
    let text = r#"
tk_list = [1]
beta_grid = [4.0, 8.0]
horizon_scale = 0.02
norm_samples = 100

[params]
q = 2
c = [1.0]
beta = 4.0
n = 3

[sampler]
seed = 5
n_samples = 400

[integrator]
dt = 1e-3
t_end = 1.0
observe_every = 50
"#;
    fs::write(path, text).unwrap();
}

#[test]
fn drift_runs_an_experiment_config() {
    let dir = workdir("drift");
    let config = dir.join("exp.toml");
    write_experiment_toml(&config);
    let out = dir.join("drift.csv");
    let output = bin()
        .arg("drift")
        .arg("--config")
        .arg(&config)
        .arg("--out")
        .arg(&out)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));

    let text = fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("# beta=4 "));
    assert!(text.contains("sample,k,T,drift_I_normalized,drift_phi_normalized,flags"));

    let summary = &stdout_lines(&output)[0];
    assert_eq!(summary["runs"].as_u64(), Some(2));
    assert_eq!(summary["records"].as_u64(), Some(800));
    assert_eq!(summary["nonfinite_samples"].as_u64(), Some(0));
}

#[test]
fn verify_lemma_emits_a_verdict() {
    let dir = workdir("lemma");
    let config = dir.join("exp.toml");
    write_experiment_toml(&config);
    let output = bin()
        .args(["verify-lemma", "gausemplice", "--config"])
        .arg(&config)
        .output()
        .unwrap();
    assert!(output.status.success(), "stderr: {}", String::from_utf8_lossy(&output.stderr));
    let verdict = &stdout_lines(&output)[0];
    assert_eq!(verdict["lemma"].as_str(), Some("gausemplice"));
    assert_eq!(verdict["bound_or_slope"].as_f64(), Some(3.0));
    assert_eq!(verdict["pass"].as_bool(), Some(true));
    assert!(verdict["estimate"].as_f64().unwrap() >= 0.0);
}

#[test]
fn usage_errors_exit_nonzero() {
    let output = bin().arg("no-such-subcommand").output().unwrap();
    assert!(!output.status.success());

    // Bad model coefficients surface as a runtime error, not a panic.
    let dir = workdir("badc");
    let output = bin()
        .args(["sample", "--beta", "8", "--n", "2", "--c", "one,two"])
        .arg("--out")
        .arg(dir.join("x.jsonl"))
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&output.stderr).contains("error:"));
}
