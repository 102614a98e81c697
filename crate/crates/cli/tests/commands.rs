use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cadmm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cadmm"))
        .args(args)
        .output()
        .expect("spawn cadmm")
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

fn stdout_value(out: &Output, key: &str) -> f64 {
    let text = String::from_utf8_lossy(&out.stdout);
    text.lines()
        .find_map(|l| l.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key} in {text}"))
        .parse()
        .unwrap()
}

#[test]
fn rate_centralized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "c.json",
        r#"{"topology":{"kind":"centralized","n":4},
            "objective":{"kind":"curvature","sigma2":16},"rho":16}"#,
    );
    let report = dir.path().join("r.json");
    let out = cadmm(&[
        "rate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!((stdout_value(&out, "alpha") - 0.5).abs() < 1e-12);
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report).unwrap()).unwrap();
    assert!((json["alpha"].as_f64().unwrap() - 0.5).abs() < 1e-12);
}

#[test]
fn rate_ring_four() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "r.json",
        r#"{"topology":{"kind":"ring","n":4},
            "objective":{"kind":"curvature","sigma2":16},"rho":8}"#,
    );
    let out = cadmm(&["rate", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!((stdout_value(&out, "alpha") - 0.5).abs() < 1e-8);
}

#[test]
fn disconnected_topology_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "d.json",
        r#"{"topology":{"kind":"components","n":4,"components":[[1,2],[3,4]]},
            "objective":{"kind":"curvature","sigma2":16},"rho":8}"#,
    );
    let out = cadmm(&["rate", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("connected=false"));
}

#[test]
fn missing_config_exits_with_2() {
    let out = cadmm(&["rate", "--config", "/nonexistent/cfg.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_writes_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "s.json",
        r#"{"topology":{"kind":"centralized","n":3},
            "objective":{"kind":"curvature","sigma2":16},
            "rho_grid":{"lo":1,"hi":256,"points":9}}"#,
    );
    let csv = dir.path().join("s.csv");
    let out = cadmm(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        csv.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("rho,alpha_general,alpha_closed_form,regime")
    );
    assert_eq!(lines.count(), 9);
}

#[test]
fn optimal_rho_centralized() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "o.json",
        r#"{"topology":{"kind":"centralized","n":3},
            "objective":{"kind":"curvature","sigma2":16},"rho_range":[1,256]}"#,
    );
    let out = cadmm(&["optimal-rho", "--config", cfg.to_str().unwrap()]);
    assert!(out.status.success());
    assert!((stdout_value(&out, "rho_opt") / 16.0 - 1.0).abs() < 1e-4);
    assert!((stdout_value(&out, "alpha_opt") - 0.5).abs() < 1e-6);
}

#[test]
fn run_and_seed_override_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "q.json",
        r#"{"topology":{"kind":"ring","n":6},
            "objective":{"kind":"random_quadratic"},
            "rho":10,"max_iters":300,
            "init":{"kind":"random","seed":1}}"#,
    );
    let traj = dir.path().join("t.csv");
    let args = [
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "9",
        "--out",
        traj.to_str().unwrap(),
    ];
    let a = cadmm(&args);
    let first = std::fs::read_to_string(&traj).unwrap();
    let b = cadmm(&args);
    assert!(a.status.success() && b.status.success());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(first, std::fs::read_to_string(&traj).unwrap());
    assert!(first.starts_with("k,err,log_err,rate_est"));
}

#[test]
fn gen_topology_rgg_roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "g.json",
        r#"{"topology":{"kind":"rgg","n":20,"radius":0.2,"seed":4278,"max_retries":1},
            "objective":{"kind":"curvature","sigma2":1}}"#,
    );
    let topo = dir.path().join("topo.json");
    let out = cadmm(&[
        "gen-topology",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        topo.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let cfg2 = write_config(
        dir.path(),
        "g2.json",
        &format!(
            r#"{{"topology":{{"kind":"file","path":{:?}}},
                "objective":{{"kind":"curvature","sigma2":4}},"rho":4}}"#,
            topo.to_str().unwrap()
        ),
    );
    let out = cadmm(&["rate", "--config", cfg2.to_str().unwrap()]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout_value(&out, "alpha") < 1.0);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        consensus_admm::experiments::ExperimentConfig::from_path(&path)
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 5);
}
