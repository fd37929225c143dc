use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use queuereg::commands::{
    BalkingReport, ExternalitiesReport, RetrialReport, SimulateReport, SolveReport, SweepReport, VerifyReport,
};
use queuereg::report::Envelope;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn queuereg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_queuereg")).args(args).output().expect("binary runs")
}

/// Writes a bundled scenario with shortened runs to a temp file.
fn quick(name: &str, dir: &Path) -> PathBuf {
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario(name)).unwrap()).unwrap();
    cfg["simulation"] = json!({ "horizon": 20000 });
    cfg["externalities"] = json!({ "s": 1.0, "warmup": 1000, "replications": 50 });
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn write(dir: &Path, name: &str, cfg: Value) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, cfg.to_string()).unwrap();
    path
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn round_trip<T: DeserializeOwned + Serialize + PartialEq + std::fmt::Debug>(command: &str, config: &Path) {
    let out = queuereg(&[command, "--config", config.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success(), "{command}: {}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed: Envelope<T> = serde_json::from_str(&text).unwrap_or_else(|e| panic!("{command}: {e}"));
    let again: Envelope<T> = serde_json::from_str(&serde_json::to_string(&parsed).unwrap()).unwrap();
    assert_eq!(parsed, again, "{command}");
    let raw: Value = serde_json::from_str(&text).unwrap();
    assert!(raw["seed"].is_u64() && raw["config"].is_object(), "{command}");
}

#[test]
fn json_reports_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let det = quick("deterministic.json", dir.path());
    round_trip::<SolveReport>("solve", &det);
    round_trip::<SimulateReport>("simulate", &det);
    round_trip::<VerifyReport>("verify", &det);
    round_trip::<SweepReport>("sweep", &det);
    round_trip::<ExternalitiesReport>("externalities", &det);
    round_trip::<RetrialReport>("retrial", &quick("retrial.json", dir.path()));
    round_trip::<BalkingReport>("balking", &quick("balking.json", dir.path()));
}

#[test]
fn csv_has_header_and_report_fields() {
    let out = queuereg(&["solve", "--config", scenario("deterministic.json").to_str().unwrap()]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    let rows: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 1);
    let json = queuereg(&["solve", "--config", scenario("deterministic.json").to_str().unwrap(), "--format", "json"]);
    let report: Value = serde_json::from_slice(&json.stdout).unwrap();
    let fields: Vec<&String> = report.as_object().unwrap().keys().filter(|k| *k != "config").collect();
    assert_eq!(header.iter().collect::<Vec<_>>(), fields);
    let col = |name: &str| rows[0][header.iter().position(|h| h == name).unwrap()].to_string();
    assert_eq!(col("alpha_star"), "1.105572809");
    assert_eq!(col("x_star"), "0.7639320225");
    // 12 significant digits at most
    for cell in rows[0].iter() {
        let digits = cell.split('e').next().unwrap().chars().filter(char::is_ascii_digit).count();
        assert!(digits <= 12 + usize::from(cell.starts_with("0.")), "{cell}");
    }
}

#[test]
fn sweep_csv_has_one_row_per_point() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("exponential.json")).unwrap()).unwrap();
    cfg["sweep"] = json!({ "points": 11 });
    let path = write(dir.path(), "sweep.json", cfg);
    let out_path = dir.path().join("sweep.csv");
    let out = queuereg(&["sweep", "--config", path.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = std::fs::read_to_string(out_path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("seed,alpha,x_alpha,g"));
    assert_eq!(lines.count(), 11);
}

#[test]
fn seed_flag_overrides_config() {
    let out = queuereg(&["solve", "--config", scenario("poisson.json").to_str().unwrap(), "--seed", "99"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("99,"));
}

#[test]
fn nonpositive_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    for lambda in [0.0, -1.0] {
        let path = write(
            dir.path(),
            "bad.json",
            json!({
                "scenario": { "lambda": lambda, "gamma": 1.0 },
                "model": { "type": "poisson_subordinator", "kappa": 2.0, "q": 1.0 }
            }),
        );
        let out = queuereg(&["solve", "--config", path.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1));
        let msg = stderr(&out);
        assert!(msg.contains("scenario") && msg.contains("`lambda`"), "{msg}");
    }
}

#[test]
fn unknown_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "typo.json",
        json!({
            "scenario": { "lamda": 0.5, "gamma": 1.0 },
            "model": { "type": "poisson_subordinator", "kappa": 2.0, "q": 1.0 }
        }),
    );
    let out = queuereg(&["solve", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("unknown field `lamda`"), "{}", stderr(&out));
    let out = queuereg(&["solve", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_blocks_are_config_errors() {
    for command in ["retrial", "balking"] {
        let out = queuereg(&[command, "--config", scenario("deterministic.json").to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(1), "{command}");
    }
}

#[test]
fn unstable_price_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("deterministic.json")).unwrap()).unwrap();
    cfg["price"] = json!({ "pi": 0.0, "linear_coeff": 0.0, "quad_coeff": 0.01 });
    cfg["simulation"] = json!({ "horizon": 100000 });
    let path = write(dir.path(), "unstable.json", cfg);
    let out = queuereg(&["simulate", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("unstable"));
}

#[test]
fn fluid_model_solves_from_sampled_paths() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("mmff.json")).unwrap()).unwrap();
    cfg["monte_carlo_paths"] = json!(5000);
    let path = write(dir.path(), "mmff.json", cfg);
    let out = queuereg(&["solve", "--config", path.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let rep: Envelope<SolveReport> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!rep.body.exact_moments && rep.body.mean_s_se > 0.0);
    assert!(rep.body.alpha_star > 0.0 && rep.body.alpha_star < 2.0);
}
