use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn tiny() -> PathBuf {
    repo().join("models/tiny.json")
}

fn triad(args: &[&str]) -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_triad"));
    c.args(args).env_remove("TRIAD_CONFIG").env("RUST_LOG", "error");
    c
}

fn run(args: &[&str]) -> Output {
    triad(args).output().expect("spawn triad")
}

fn json(args: &[&str]) -> Value {
    let mut all = vec!["--json"];
    all.extend_from_slice(args);
    let out = run(&all);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("json report")
}

fn logits(report: &Value) -> Vec<Vec<i64>> {
    report["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["logits"].as_array().unwrap().iter().map(|v| v.as_i64().unwrap()).collect())
        .collect()
}

#[test]
fn sim_reproduces_golden_logits() {
    let golden: Value = serde_json::from_str(&std::fs::read_to_string(repo().join("models/tiny-golden.json")).unwrap()).unwrap();
    let inputs = repo().join("models/tiny-inputs.bin");
    let report = json(&[
        "--seed",
        &golden["seed"].to_string(),
        "sim",
        "--model",
        tiny().to_str().unwrap(),
        "--input",
        inputs.to_str().unwrap(),
        "--check",
    ]);
    let want: Vec<Vec<i64>> = serde_json::from_value(golden["logits"].clone()).unwrap();
    assert_eq!(logits(&report), want);
    for r in report["reencryptions"].as_object().unwrap().values() {
        assert_eq!(r.as_u64(), Some(1));
    }
    for r in report["results"].as_array().unwrap() {
        assert_eq!(r["argmax"], r["reference_argmax"]);
    }
}

#[test]
fn gc_stats_ratio_at_b10() {
    let r = json(&["gc-stats", "--b", "10"]);
    assert_eq!(r["t_bits"], 19);
    assert!(r["offline_ratio"].as_f64().unwrap() <= 0.35, "{r}");
    assert!(r["online_ratio"].as_f64().unwrap() <= 0.60, "{r}");
    let text = String::from_utf8(run(&["gc-stats", "--b", "10"]).stdout).unwrap();
    assert!(text.contains("mod t") && text.contains("truncated") && text.contains("ratio"));
}

#[test]
fn noise_report_has_budget_on_every_layer() {
    let r = json(&["noise-report", "--model", tiny().to_str().unwrap(), "--trials", "2"]);
    let layers = r["layers"].as_array().unwrap();
    assert_eq!(layers.len(), 2);
    for l in layers {
        assert!(l["budget_bits"].as_f64().unwrap() > 0.0, "{l}");
        assert!(l["measured_budget_bits"].as_f64().unwrap() > 0.0, "{l}");
        assert_eq!(l["correct"], true);
        assert_eq!(l["variant"], "cheetah");
    }
}

#[test]
fn keygen_contrasts_key_modes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let r = json(&["--seed", "3", "keygen", "--preset", "mini", "--out-dir", a.to_str().unwrap()]);
    json(&["--seed", "3", "keygen", "--preset", "mini", "--out-dir", b.to_str().unwrap()]);
    let fp = r["footprint"].as_array().unwrap();
    let keys = |i: usize| fp[i]["keys_per_domain"].as_u64().unwrap();
    assert_eq!(fp[0]["key_mode"], "all-keys");
    assert_eq!(keys(0), 128);
    assert_eq!(keys(1), 8);
    assert!(fp[0]["bytes_per_domain"].as_u64() > fp[1]["bytes_per_domain"].as_u64());
    for f in r["files"].as_array().unwrap() {
        let name = f["file"].as_str().unwrap();
        let bytes = std::fs::read(a.join(name)).unwrap();
        assert_eq!(bytes.len() as u64, f["bytes"].as_u64().unwrap());
        assert_eq!(bytes, std::fs::read(b.join(name)).unwrap(), "{name} differs between runs");
    }
}

#[test]
fn config_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    std::fs::write(&path, "preset = \"mini\"\nseed = 5\n").unwrap();
    let out = triad(&["--json", "keygen", "--out-dir", dir.path().join("k").to_str().unwrap()])
        .env("TRIAD_CONFIG", &path)
        .output()
        .unwrap();
    assert!(out.status.success());
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["n"], 256);
}

#[test]
fn validation_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "preset = \"huge\"\n").unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "gc-stats"]).status.code(), Some(2));
    std::fs::write(&bad, "f = 30\n").unwrap();
    assert_eq!(run(&["--config", bad.to_str().unwrap(), "gc-stats"]).status.code(), Some(2));
    assert_eq!(run(&["sim", "--model", "/no/such/model.json"]).status.code(), Some(2));
    assert_eq!(run(&["gc-stats", "--b", "40"]).status.code(), Some(2));
}

#[test]
fn tampered_tables_exit_4() {
    let out = run(&["sim", "--model", tiny().to_str().unwrap(), "--tamper-gc"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("integrity"));
}

#[test]
fn exhausted_noise_is_detected() {
    let out = run(&["sim", "--model", tiny().to_str().unwrap(), "--exhaust-noise", "--check"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not match"));
}

fn free_port() -> String {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().to_string()
}

#[test]
fn roles_over_tcp_match_sim() {
    let model = tiny();
    let m = model.to_str().unwrap();
    let (c, l, p) = (free_port(), free_port(), free_port());
    let peers = ["--client", &c, "--cloud", &l, "--proxy", &p];
    let spawn = |role: &str| {
        let mut args = vec!["--json", "role", role, "--model", m];
        args.extend_from_slice(&peers);
        triad(&args).stdout(Stdio::piped()).stderr(Stdio::piped()).spawn().unwrap()
    };
    let cloud = spawn("cloud");
    let proxy = spawn("proxy");
    let mut args = vec!["--json", "role", "client", "--model", m, "--random", "2", "--check"];
    args.extend_from_slice(&peers);
    let client = run(&args);
    let (cloud, proxy) = (cloud.wait_with_output().unwrap(), proxy.wait_with_output().unwrap());
    assert!(client.status.success(), "{}", String::from_utf8_lossy(&client.stderr));
    assert!(cloud.status.success(), "{}", String::from_utf8_lossy(&cloud.stderr));
    assert!(proxy.status.success(), "{}", String::from_utf8_lossy(&proxy.stderr));
    let net: Value = serde_json::from_slice(&client.stdout).unwrap();
    let sim = json(&["sim", "--model", m, "--random", "2"]);
    assert_eq!(logits(&net), logits(&sim));
    let cloud: Value = serde_json::from_slice(&cloud.stdout).unwrap();
    assert_eq!(cloud["ops"], sim["ops"]);
}
