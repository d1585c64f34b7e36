use std::process::Command;

use hybrid_bell::config::ExperimentConfig;
use hybrid_bell::scenario::{self, ScenarioResult};

const BIN: &str = env!("CARGO_BIN_EXE_hybrid-bell");

fn run_cli(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(BIN).args(args).output().expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn small() -> ExperimentConfig {
    ExperimentConfig { pulses: 5_000_000, bootstrap_resamples: 50, ..ExperimentConfig::default() }
}

fn all_scenarios(cfg: &ExperimentConfig) -> Vec<ScenarioResult> {
    vec![
        scenario::run_hom_scan(cfg, cfg.hom_tau_min_um, cfg.hom_tau_max_um, cfg.hom_points).unwrap(),
        scenario::run_bell_test(cfg, &cfg.chsh_settings()).unwrap(),
        scenario::run_tomography(cfg).unwrap(),
        scenario::run_rates(cfg).unwrap(),
        scenario::run_budget(cfg).unwrap(),
        scenario::replay(cfg, &scenario::bundled_table1()).unwrap(),
    ]
}

#[test]
fn scenarios_are_deterministic_for_fixed_seed() {
    let cfg = small();
    let a: Vec<String> = all_scenarios(&cfg).iter().map(ScenarioResult::to_json).collect();
    let b: Vec<String> = all_scenarios(&cfg).iter().map(ScenarioResult::to_json).collect();
    assert_eq!(a, b);
    let other = ExperimentConfig { seed: cfg.seed + 1, ..cfg.clone() };
    let c = scenario::run_bell_test(&other, &other.chsh_settings()).unwrap();
    assert_ne!(c.tables["model"], serde_json::from_str::<ScenarioResult>(&a[1]).unwrap().tables["model"]);
}

#[test]
fn cli_output_is_byte_identical_across_runs() {
    let args = ["bell-test", "--pulses", "2000000", "--seed", "7"];
    let (code1, out1, _) = run_cli(&args);
    let (code2, out2, _) = run_cli(&args);
    assert_eq!((code1, code2), (0, 0));
    assert_eq!(out1, out2);
}

#[test]
fn echoed_config_round_trips_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    std::fs::write(&path, "nu = 0.015\ntransmittance_v = 0.47\nfiber2_phase_deg = 3.5\n").unwrap();
    let p = path.to_str().unwrap();
    let (code, echo, _) = run_cli(&["config", "--config", p, "--set", "seed=99", "--pulses", "123"]);
    assert_eq!(code, 0);
    let parsed = ExperimentConfig::parse(&echo).unwrap();
    assert_eq!(parsed.nu, 0.015);
    assert_eq!(parsed.transmittance_v, 0.47);
    assert_eq!((parsed.seed, parsed.pulses), (99, 123));
    let echo_path = dir.path().join("echo.cfg");
    std::fs::write(&echo_path, &echo).unwrap();
    let (_, again, _) = run_cli(&["config", "--config", echo_path.to_str().unwrap()]);
    assert_eq!(again, echo);
}

#[test]
fn exit_codes() {
    assert_eq!(run_cli(&["budget", "--set", "no_such_key=1"]).0, 2);
    assert_eq!(run_cli(&["budget", "--set", "eta=1.5"]).0, 2);
    assert_eq!(run_cli(&["rates", "--config", "/nonexistent/cfg"]).0, 2);
    let dir = tempfile::tempdir().unwrap();
    let rec = dir.path().join("partial.csv");
    std::fs::write(&rec, "theta1_deg,theta2_deg,delay_um,pulses,c3_counts\n45,22.5,0,0,945\n90,22.5,0,0,960\n").unwrap();
    let (code, _, err) = run_cli(&["replay", rec.to_str().unwrap()]);
    assert_eq!(code, 3);
    assert!(err.contains("(135, 112.5)"), "{err}");
    let tomo = dir.path().join("tomo.csv");
    std::fs::write(&tomo, "theta1_deg,theta2_deg,delay_um,pulses,c3_counts\nH,H,0,0,10\nH,V,0,0,500\n").unwrap();
    assert_eq!(run_cli(&["replay", tomo.to_str().unwrap()]).0, 3);
    assert_eq!(run_cli(&["budget", "--analytic-only"]).0, 0);
}

#[test]
fn out_directory_holds_summary_and_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let (code, stdout, _) = run_cli(&["hom-scan", "--analytic-only", "--format", "csv", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(stdout.starts_with("tau_um,zeta_sq,probability,expected_counts,counts"));
    let doc: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("hom-scan.json")).unwrap()).unwrap();
    assert!(doc["timestamp_unix"].is_u64());
    let result: ScenarioResult = serde_json::from_value(doc["result"].clone()).unwrap();
    assert_eq!(result.scenario, "hom-scan");
    assert_eq!(result.config_hash, result.config.hash());
    assert!(out.join("hom-scan_scan.csv").exists());
    assert!(out.join("hom-scan_model.csv").exists());
}

#[test]
fn replay_of_bundled_grid_matches_cli() {
    let (code, stdout, _) = run_cli(&["replay", "--analytic-only"]);
    assert_eq!(code, 0);
    let r: ScenarioResult = serde_json::from_str(&stdout).unwrap();
    let s = r.summary["s"]["value"].as_f64().unwrap();
    assert!((s - 2.2347).abs() < 1e-3);
}

#[test]
fn degenerate_inputs_are_reported() {
    let cfg = ExperimentConfig { pulses: 0, ..ExperimentConfig::default() };
    assert!(scenario::run_hom_scan(&cfg, 10.0, 10.0, 11).is_err());
    assert!(scenario::run_hom_scan(&cfg, -10.0, 10.0, 4).is_err());
    let flat = ExperimentConfig { zeta0_sq: 0.0, ..cfg.clone() };
    let scan = scenario::run_hom_scan(&flat, -150.0, 150.0, 31).unwrap();
    let v = scan.summary.get("visibility_analytic").and_then(|v| v.as_f64()).unwrap_or(0.0);
    assert!(v.abs() < 1e-6, "V = {v}");
    let dark = ExperimentConfig { nu: 0.0, ..cfg };
    let budget = scenario::run_budget(&dark).unwrap();
    assert!(budget.summary["f_est"].is_null());
    assert!(!budget.warnings.is_empty());
}
