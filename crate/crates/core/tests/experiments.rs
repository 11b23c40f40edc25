use std::fs;

use stereogap::experiment::{load_config, parse_config, run, ExperimentConfig, RunStatus};

fn load(name: &str) -> ExperimentConfig {
    load_config(format!("{}/configs/{name}", env!("CARGO_MANIFEST_DIR")).as_ref()).unwrap()
}

#[test]
fn toy_tables_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let m = run(&load("toy_tables.toml"), dir.path()).unwrap();
    assert_eq!(m.status, RunStatus::Ok);
    let table = fs::read_to_string(dir.path().join("stereotype_table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("delta,t_stereotype,k_stereotype"));
    assert_eq!(lines.next(), Some("0.01,5.245859,525"));
    let catchup = fs::read_to_string(dir.path().join("catchup_table.csv")).unwrap();
    assert!(catchup.contains("0.01,0.001,684"));
    assert!(catchup.contains("0.001,0.001,690"));
}

#[test]
fn gap_analysis_certifies_double_well() {
    let dir = tempfile::tempdir().unwrap();
    run(&load("double_well_gap.toml"), dir.path()).unwrap();
    let v: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("gap_report.json")).unwrap()).unwrap();
    assert_eq!(v["report"]["certified"], true);
    assert_eq!(v["report"]["pairs"].as_array().unwrap().len(), 3);
    assert!(v["report"]["hausdorff"].as_f64().unwrap() <= v["report"]["bound"].as_f64().unwrap());
}

#[test]
fn zone_map_covers_region() {
    let dir = tempfile::tempdir().unwrap();
    run(&load("toy_zones.toml"), dir.path()).unwrap();
    let csv = fs::read_to_string(dir.path().join("zone_map.csv")).unwrap();
    assert_eq!(csv.lines().count(), 402);
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("zone_summary.json")).unwrap()).unwrap();
    assert_eq!(v["cover"]["violations"].as_array().unwrap().len(), 0);
    assert_eq!(v["boundary"]["all_witnessed"], true);
}

#[test]
fn flow_timing_bounds_hold() {
    let dir = tempfile::tempdir().unwrap();
    run(&load("toy_flow_timing.toml"), dir.path()).unwrap();
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("timing_report.json")).unwrap()).unwrap();
    assert_eq!(v["timing"]["stereotype_bound_satisfied"], true);
    for c in v["timing"]["catchup"].as_array().unwrap() {
        assert_eq!(c["bound_satisfied"], true);
    }
    assert_eq!(v["lyapunov"]["ok"], true);
    assert_eq!(v["minority_catchup"]["strictly_increasing"], true);
    let header = fs::read_to_string(dir.path().join("trajectory.csv")).unwrap();
    assert!(header.starts_with("time,theta_0,L,L1,L0,grad_norm,zone_maj,zone_min"));
}

#[test]
fn debias_config_within_bound() {
    let dir = tempfile::tempdir().unwrap();
    run(&load("ridge_debias.toml"), dir.path()).unwrap();
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("debias_report.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "converged");
    assert_eq!(v["within_gap_bound"], true);
}

#[test]
fn small_training_run_writes_per_run_csv() {
    let text = r#"
kind = "train-overcost"
seed = 3
[model]
type = "mlp"
hidden = 8
[model.dataset]
kind = "gaussian-blobs"
dim = 4
classes = 4
reference = 40
imbalance = 0.25
[training]
epochs = 30
kappas = [0.9]
seeds = [3, 4]
[training.optimizer]
kind = "gd"
lr = 0.5
"#;
    let dir = tempfile::tempdir().unwrap();
    let m = run(&parse_config(text).unwrap(), dir.path()).unwrap();
    let names: Vec<&str> = m.files.iter().map(|f| f.path.as_str()).collect();
    assert!(names.contains(&"training_zeta0.25_seed3.csv"), "{names:?}");
    assert!(names.contains(&"training_zeta0.25_seed4.csv"));
    assert!(names.contains(&"overcost.json"));
}

#[test]
fn resolved_config_round_trips() {
    let cfg = load("blobs_overcost.toml").resolved();
    let json = serde_json::to_string(&cfg).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, cfg);
    let toml_text = toml::to_string(&cfg).unwrap();
    assert_eq!(parse_config(&toml_text).unwrap(), cfg);
}

#[test]
fn incompatible_model_is_a_config_error() {
    let text = "kind = \"linear-bounds\"\nseed = 0\n[model]\ntype = \"toy\"\ndelta = 0.1\n";
    let d = parse_config(text).unwrap().validate();
    assert!(d.iter().any(|d| d.field == "model.type"), "{d:?}");
}

#[test]
fn unstable_gd_rate_is_a_config_error() {
    let text = r#"
kind = "debias-protocol"
seed = 0
[model]
type = "quadratic"
[model.dataset]
kind = "linear-regression-synthetic"
dim = 2
majority_size = 20
imbalance = 0.2
coefficients_majority = [1.0, 0.0]
coefficients_minority = [0.0, 1.0]
[training]
epochs = 10
[training.optimizer]
kind = "gd"
lr = 1000.0
"#;
    let d = parse_config(text).unwrap().validate();
    assert!(d.iter().any(|d| d.field == "training.optimizer.lr"), "{d:?}");
}

#[test]
fn csv_dataset_resolves_next_to_config() {
    let dir = tempfile::tempdir().unwrap();
    let csv = "x_0,x_1,y,a\n1,0,1,1\n0,1,1,1\n1,1,2,1\n2,1,3,1\n1,2,2.5,0\n";
    fs::write(dir.path().join("data.csv"), csv).unwrap();
    let cfg_path = dir.path().join("gap.toml");
    fs::write(
        &cfg_path,
        "kind = \"linear-bounds\"\nseed = 0\n[model]\ntype = \"quadratic\"\ncsv = \"data.csv\"\ngamma = 0.1\n",
    )
    .unwrap();
    let cfg = load_config(&cfg_path).unwrap();
    let m = run(&cfg, &dir.path().join("out")).unwrap();
    assert_eq!(m.status, RunStatus::Ok);
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("out/linear_bounds.json")).unwrap()).unwrap();
    assert_eq!(v["gap"]["holds"], true);
}
