use std::fs;
use std::path::{Path, PathBuf};

use ris_secrecy::cli::{run_command, EXIT_CONFIG, EXIT_OK};
use ris_secrecy::config::ScenarioConfig;
use serde_json::Value;

const SMALL: &str = r#"{
  "bs_array": { "n_vertical": 2, "n_horizontal": 2 },
  "ris_array": { "n_vertical": 3, "n_horizontal": 4, "spacing_ratio": 0.5 },
  "rx_area": { "center_x": -15.0, "center_y": 30.0, "width": 24.0, "length": 15.0, "z": 1.5 },
  "eve_area": { "center_x": 15.0, "center_y": 27.5, "width": 24.0, "length": 15.0, "z": 1.5 },
  "power_grid_dbm": [20.0, 30.0],
  "quadrature": { "nx": 8, "ny": 6 },
  "eval_grid": { "nx": 4, "ny": 3 },
  "monte_carlo": { "n_trials": 2, "base_seed": 5 }
}"#;

fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn run(args: &[&str]) -> i32 {
    let mut argv = vec!["ris-secrecy"];
    argv.extend_from_slice(args);
    run_command(&argv)
}

fn run_in(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> i32 {
    let mut args = vec![cmd, "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn csv_rows(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    assert_eq!(run(&["frobnicate"]), EXIT_CONFIG);
    assert_eq!(run(&["optimize"]), EXIT_CONFIG);
}

#[test]
fn overlapping_areas_rejected_before_any_output() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("\"center_x\": 15.0", "\"center_x\": 0.0");
    let cfg = write_config(dir.path(), "overlap.json", &text);
    let out = dir.path().join("out");
    assert_eq!(run_in("optimize", &cfg, &out, &[]), EXIT_CONFIG);
    assert!(!out.exists());
    let err = ScenarioConfig::parse(&text).and_then(|c| c.validate()).unwrap_err();
    assert!(err.to_string().contains("areas must be disjoint"));
}

#[test]
fn missing_area_names_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let mut v: Value = serde_json::from_str(SMALL).unwrap();
    v.as_object_mut().unwrap().remove("eve_area");
    let text = v.to_string();
    let cfg = write_config(dir.path(), "missing.json", &text);
    assert_eq!(run_in("sweep-power", &cfg, &dir.path().join("o"), &[]), EXIT_CONFIG);
    let err = ScenarioConfig::parse(&text).unwrap_err();
    assert!(err.to_string().contains("eve_area"));
}

#[test]
fn unreadable_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    assert_eq!(run_in("optimize", &missing, &dir.path().join("o"), &[]), EXIT_CONFIG);
    let cfg = write_config(dir.path(), "bad.json", "{ not json");
    assert_eq!(run_in("optimize", &cfg, &dir.path().join("o"), &[]), EXIT_CONFIG);
}

#[test]
fn optimize_is_reproducible_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run_in("optimize", &cfg, &a, &["--seed", "7", "--dump-j"]), EXIT_OK);
    assert_eq!(run_in("optimize", &cfg, &b, &["--seed", "7", "--dump-j"]), EXIT_OK);
    for name in ["precoder.csv", "phases.csv", "trace.csv", "j_rx.csv", "j_eve.csv"] {
        let x = fs::read(a.join(name)).unwrap();
        assert!(!x.is_empty(), "{name}");
        assert_eq!(x, fs::read(b.join(name)).unwrap(), "{name}");
    }
    assert_eq!(csv_rows(&a.join("phases.csv")).len(), 12);
    assert_eq!(csv_rows(&a.join("precoder.csv")).len(), 4);
}

#[test]
fn sweep_writes_one_row_per_scheme_and_power() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = dir.path().join("sweep");
    assert_eq!(run_in("sweep-power", &cfg, &out, &[]), EXIT_OK);
    let rows = csv_rows(&out.join("power_sweep.csv"));
    assert_eq!(rows.len(), 3 * 2);
    assert!(rows[0].starts_with("20,proposed,"));
    assert!(rows[5].starts_with("30,random,"));

    let single = dir.path().join("single");
    assert_eq!(run_in("sweep-power", &cfg, &single, &["--scheme", "rx_only"]), EXIT_OK);
    assert_eq!(csv_rows(&single.join("power_sweep.csv")).len(), 2);
}

#[test]
fn heatmap_outputs_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = dir.path().join("heat");
    assert_eq!(run_in("heatmap", &cfg, &out, &["--scheme", "rx_only"]), EXIT_OK);
    for name in ["heatmap_rx_rx_only.csv", "heatmap_eve_rx_only.csv"] {
        assert_eq!(csv_rows(&out.join(name)).len(), 12, "{name}");
    }
    let report: Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["command"], "heatmap");
    // defaults are echoed back in full
    assert_eq!(report["config"]["rician_k"], 13.2);
    assert_eq!(report["config"]["ao"]["max_outer"], 200);
    assert_eq!(report["outputs"].as_array().unwrap().len(), 3);

    let gains = dir.path().join("gain");
    let args = ["--scheme", "proposed", "--baseline", "random"];
    assert_eq!(run_in("heatmap", &cfg, &gains, &args), EXIT_OK);
    assert_eq!(csv_rows(&gains.join("gain_rx_proposed_vs_random.csv")).len(), 12);
    assert_eq!(csv_rows(&gains.join("gain_eve_proposed_vs_random.csv")).len(), 12);
}

#[test]
fn unknown_scheme_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "small.json", SMALL);
    let out = dir.path().join("o");
    assert_eq!(run_in("heatmap", &cfg, &out, &["--scheme", "greedy"]), EXIT_CONFIG);
}

#[test]
fn config_round_trips_through_json() {
    let cfg = ScenarioConfig::parse(SMALL).unwrap();
    let again = ScenarioConfig::parse(&cfg.to_json()).unwrap();
    assert_eq!(cfg, again);
    let paper = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.json");
    let paper = ScenarioConfig::parse(&fs::read_to_string(paper).unwrap()).unwrap();
    paper.validate().unwrap();
}

#[test]
fn selftest_passes() {
    assert_eq!(run(&["selftest"]), EXIT_OK);
}
