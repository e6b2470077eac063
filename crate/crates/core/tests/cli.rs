use std::fs;
use std::path::Path;
use std::process::Command;

use schwarz_lab::cli::{print_summary, run_experiment, ExperimentConfig, EXIT_BOUND_FAILED, EXIT_ERROR, EXIT_OK};

const BIN: &str = env!("CARGO_BIN_EXE_schwarz-lab");

fn config_json(methods: &str, extra: &str) -> String {
    format!(
        "{{\n  \"dim\": 1,\n  \"cells_per_side\": 16,\n  \"blocks_per_side\": 2,\n  \"overlap_layers\": 2,\n  \"methods\": [{methods}],\n  \"epsilon\": [0.1, 0.02]{extra}\n}}\n"
    )
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path
}

fn run_bin(args: &[&str]) -> std::process::Output {
    Command::new(BIN).args(args).output().unwrap()
}

#[test]
fn as_only_run_has_passing_lions_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::from_json(&config_json("\"AS\"", "")).unwrap();
    config.output = tmp.path().join("out");
    let mut manifest = run_experiment(&config).unwrap();
    assert_eq!(manifest.exit_code(), EXIT_OK);
    manifest.failed_bounds = 1;
    assert_eq!(manifest.exit_code(), EXIT_BOUND_FAILED);
    let bounds = fs::read_to_string(config.output.join("bounds.csv")).unwrap();
    for name in ["lions_lower", "lions_upper"] {
        let row = bounds.lines().find(|l| l.contains(&format!(",AS,{name},"))).unwrap();
        assert!(row.ends_with(",pass"), "{row}");
    }
    let summary = print_summary(&config.output.join("manifest.json")).unwrap();
    let lines: Vec<_> = summary.lines().collect();
    assert_eq!(lines.len(), 2);
    let slack: f64 = lines[1].split_whitespace().nth(3).unwrap().parse().unwrap();
    assert!(slack >= 1.0);
}

#[test]
fn solver_table_has_one_row_per_method_and_solver() {
    let tmp = tempfile::tempdir().unwrap();
    let methods = "\"AS\", \"FE_T\", \"EF_T\", \"RAS_CUT\", \"OBDD_CUT\"";
    let mut config = ExperimentConfig::from_json(&config_json(methods, "")).unwrap();
    config.epsilon = vec![0.1];
    config.output = tmp.path().join("out");
    run_experiment(&config).unwrap();
    let table = fs::read_to_string(config.output.join("solver_table.csv")).unwrap();
    let rows: Vec<_> = table.lines().skip(1).collect();
    // baseline, AS with CG and GMRES, four GMRES rows
    assert_eq!(rows.len(), 1 + 2 + 4);
    assert!(rows[0].contains(",NONE,GMRES,"));
    assert!(rows.iter().all(|r| r.contains(",true,")));
}

#[test]
fn empty_method_list_gives_header_only_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::from_json(&config_json("", "")).unwrap();
    config.output = tmp.path().join("out");
    run_experiment(&config).unwrap();
    let summary = print_summary(&config.output.join("manifest.json")).unwrap();
    assert_eq!(summary.lines().count(), 1);
    assert!(summary.starts_with("method"));
}

#[test]
fn summary_rows_follow_method_order() {
    let tmp = tempfile::tempdir().unwrap();
    let methods = "\"FEPS_T\", \"OBDD_CUT\", \"AS\", \"EF_T\"";
    let mut config = ExperimentConfig::from_json(&config_json(methods, "")).unwrap();
    config.output = tmp.path().join("out");
    run_experiment(&config).unwrap();
    let summary = print_summary(&config.output.join("manifest.json")).unwrap();
    let names: Vec<_> = summary.lines().skip(1).map(|l| l.split_whitespace().next().unwrap().to_string()).collect();
    assert_eq!(names, ["AS", "EF_T", "OBDD_CUT", "FEPS_T(0.1)", "FEPS_T(0.02)"]);
}

#[test]
fn manifest_digests_match_files() {
    use sha2::{Digest, Sha256};
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::from_json(&config_json("\"AS\", \"FEPS_T\"", "")).unwrap();
    config.output = tmp.path().join("out");
    let manifest = run_experiment(&config).unwrap();
    let names: Vec<_> = manifest.files.iter().map(|f| f.name.as_str()).collect();
    for expected in ["constants.json", "bounds.csv", "solver_table.csv", "spectrum_AS.csv", "spectrum_FEPS_T_0.1.csv"] {
        assert!(names.contains(&expected), "{names:?}");
    }
    for f in &manifest.files {
        let body = fs::read(config.output.join(&f.name)).unwrap();
        assert_eq!(hex::encode(Sha256::digest(&body)), f.sha256);
    }
    assert!(config.output.join("manifest.json").exists());
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &config_json("\"AS\", \"FE_T\", \"FEPS_T\"", ", \"seed\": 3"));
    let mut bodies = Vec::new();
    for run in ["a", "b"] {
        let out = tmp.path().join(run);
        let status = run_bin(&["run", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(status.status.code(), Some(EXIT_OK), "{}", String::from_utf8_lossy(&status.stderr));
        let files = ["bounds.csv", "solver_table.csv", "spectrum_FE_T.csv", "constants.json"];
        bodies.push(files.map(|f| fs::read(out.join(f)).unwrap()));
    }
    assert_eq!(bodies[0], bodies[1]);
}

#[test]
fn invalid_config_emits_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let text = config_json("\"AS\"", "").replace("\"blocks_per_side\": 2", "\"blocks_per_side\": 3");
    let path = write_config(tmp.path(), &text);
    let out = tmp.path().join("out");
    for cmd in ["run", "check"] {
        let o = run_bin(&[cmd, path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(EXIT_ERROR));
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains("line 4"), "{err}");
    }
    assert!(!out.exists());
}

#[test]
fn validation_messages() {
    let bad = [
        ("\"dim\": 1", "\"dim\": 3", "dim"),
        ("\"epsilon\": [0.1, 0.02]", "\"epsilon\": [1.0]", "epsilon"),
        ("\"overlap_layers\": 2", "\"overlap_layers\": 0", "overlap"),
    ];
    for (from, to, word) in bad {
        let text = config_json("\"AS\"", "").replace(from, to);
        let err = ExperimentConfig::from_json(&text).unwrap_err().to_string();
        assert!(err.contains(word) && err.contains("line"), "{err}");
    }
    let err = ExperimentConfig::from_json(&config_json("\"XX\"", "")).unwrap_err().to_string();
    assert!(err.contains("XX"), "{err}");
    let err = ExperimentConfig::from_json(&config_json("\"AS\"", ", \"colour\": 1")).unwrap_err().to_string();
    assert!(err.contains("colour"), "{err}");
    let err = ExperimentConfig::from_json(&config_json("\"AS\", \"AS\"", "")).unwrap_err().to_string();
    assert!(err.contains("twice"), "{err}");
}

#[test]
fn check_accepts_valid_config_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let path = write_config(tmp.path(), &config_json("\"AS\"", ""));
    let o = run_bin(&["check", path.to_str().unwrap(), "--seed", "9"]);
    assert_eq!(o.status.code(), Some(EXIT_OK));
    let o = run_bin(&["check", path.to_str().unwrap(), "--dense-cap", "3"]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
}

#[test]
fn stage_failure_names_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::from_json(&config_json("\"AS\"", "")).unwrap();
    config.output = tmp.path().join("out");
    // passes validation but the product space exceeds the cap
    config.dense_cap = 15;
    let err = run_experiment(&config).unwrap_err().to_string();
    assert!(err.contains("stage `model`"), "{err}");
    assert!(!config.output.exists());
}

#[test]
fn exit_codes_are_distinct() {
    assert_ne!(EXIT_BOUND_FAILED, EXIT_OK);
    assert_ne!(EXIT_BOUND_FAILED, EXIT_ERROR);
    let tmp = tempfile::tempdir().unwrap();
    let o = run_bin(&["summary", tmp.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(EXIT_ERROR));
}
