use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use potgame::fixtures::{default_recharge_game, scalar_instance};
use potgame::{verify_nash_by_deviation, CostSchedule, GameSpec, Mat, NashSolution, Player};
use serde_json::Value;

fn potgame(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_potgame"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_spec(dir: &Path, name: &str, spec: &GameSpec) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, serde_json::to_string(spec).unwrap()).unwrap();
    path
}

fn three_stage() -> GameSpec {
    let one = Mat::identity(1);
    let costs = CostSchedule::new(
        vec![Mat::diag(&[1.0]), Mat::diag(&[4.0])],
        vec![Mat::diag(&[1.0, 0.0]); 2],
        vec![Mat::diag(&[0.0, 1.0]); 2],
    )
    .unwrap();
    GameSpec::new(one.clone(), one.clone(), one, vec![1.0], costs).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().expect("stderr line")).expect("stderr is JSON")
}

#[test]
fn validate_scalar_instance_passes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "scalar.json", &scalar_instance(1.0));
    let out = potgame(&["validate", "--spec", spec.to_str().unwrap(), "--strict"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["overall"], Value::Bool(true));
    assert_eq!(report["entries"].as_array().unwrap().len(), 6);
}

#[test]
fn strict_validation_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let game = default_recharge_game(&[20.0, 30.0], &[40.0, 50.0], &[-20.0, -30.0], [1.0, 1.0]);
    let spec = write_spec(dir.path(), "recharge.json", &game);
    let warn = potgame(&["validate", "--spec", spec.to_str().unwrap()]);
    assert_eq!(warn.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&warn.stdout).unwrap();
    assert_eq!(report["overall"], Value::Bool(false));
    let strict = potgame(&["validate", "--spec", spec.to_str().unwrap(), "--strict"]);
    assert_eq!(strict.status.code(), Some(2));
    assert_eq!(stderr_json(&strict)["code"], "assumption_violated");
}

#[test]
fn solve_output_round_trips_through_the_deviation_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let game = three_stage();
    let spec = write_spec(dir.path(), "g.json", &game);
    let out_path = dir.path().join("nash.json");
    let out = potgame(&["solve", "--spec", spec.to_str().unwrap(), "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let nash: NashSolution = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    for t in 1..=2 {
        for p in Player::BOTH {
            for d in [-0.3, 0.2] {
                let c = verify_nash_by_deviation(&game, &nash, t, p, &[d]).unwrap();
                assert!(c.cost_deviated >= c.cost_at_nash - 1e-12);
            }
        }
    }
}

#[test]
fn full_preview_run_has_zero_pou() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "scalar3.json", &three_stage());
    let out_path = dir.path().join("run.json");
    let out = potgame(&[
        "run",
        "--spec",
        spec.to_str().unwrap(),
        "--preview",
        "2",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let run: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert!(run["pou"].as_f64().unwrap().abs() < 1e-12);
    assert_eq!(run["log_rel_pou"], Value::Null);
    assert_eq!(run["tracking_error"].as_array().unwrap().len(), 2);
}

#[test]
fn run_accepts_a_gain_file_and_rejects_bad_shapes() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "g.json", &three_stage());
    let gain = dir.path().join("gain.json");
    let out_path = dir.path().join("run.json");
    fs::write(&gain, "[[-0.4], [-0.4]]").unwrap();
    let args = |g: &Path| {
        potgame(&[
            "run",
            "--spec",
            spec.to_str().unwrap(),
            "--preview",
            "0",
            "--gain",
            g.to_str().unwrap(),
            "--out",
            out_path.to_str().unwrap(),
        ])
    };
    assert_eq!(args(&gain).status.code(), Some(0));
    let run: Value = serde_json::from_str(&fs::read_to_string(&out_path).unwrap()).unwrap();
    assert_eq!(run["K_tracking"], serde_json::json!([[-0.4], [-0.4]]));
    fs::write(&gain, "[[1.0, 2.0]]").unwrap();
    let bad = args(&gain);
    assert_eq!(bad.status.code(), Some(1));
    assert_eq!(stderr_json(&bad)["code"], "dimension_mismatch");
}

#[test]
fn sweep_and_plot_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"T_range": [8], "W_range": [0, 1, 2], "runs": 50}"#).unwrap();
    let out_dir = dir.path().join("out");
    let out = potgame(&[
        "sweep",
        "--config",
        config.to_str().unwrap(),
        "--out-dir",
        out_dir.to_str().unwrap(),
        "--runs",
        "3",
        "--seed",
        "11",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let rows = fs::read_to_string(out_dir.join("rows.csv")).unwrap();
    let agg = fs::read_to_string(out_dir.join("agg.csv")).unwrap();
    assert!(rows.starts_with("T,W,seed,pou,nash_social_cost,log_rel_pou\n"));
    assert!(agg.starts_with("T,W,mean_pou,mean_nash_cost,log_rel_pou\n"));
    assert_eq!(rows.lines().count(), 1 + 3 * 3);
    assert!(rows.lines().nth(1).unwrap().starts_with("8,0,11,"));

    let svg = dir.path().join("w.svg");
    let out = potgame(&[
        "plot",
        "--in",
        out_dir.join("agg.csv").to_str().unwrap(),
        "--x",
        "W",
        "--out",
        svg.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert!(fs::read_to_string(&svg).unwrap().contains("<polyline"));
}

#[test]
fn numerical_failure_exits_3_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let one = Mat::identity(1);
    let r = Mat::diag(&[-5.0, 1.0]);
    let costs = CostSchedule::new(vec![Mat::identity(1)], vec![r.clone()], vec![r]).unwrap();
    let game = GameSpec::new(one.clone(), one.clone(), one, vec![1.0], costs).unwrap();
    let spec = write_spec(dir.path(), "bad.json", &game);
    let out = potgame(&["solve", "--spec", spec.to_str().unwrap(), "--out", dir.path().join("o.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    let err = stderr_json(&out);
    assert_eq!(err["code"], "theta_not_pd");
    assert_eq!(err["stage"], 1);
}

#[test]
fn usage_errors_exit_1_and_help_exits_0() {
    assert_eq!(potgame(&[]).status.code(), Some(1));
    assert_eq!(potgame(&["solve", "--spec", "x.json"]).status.code(), Some(1));
    assert_eq!(potgame(&["plot", "--in", "a", "--x", "Z", "--out", "b"]).status.code(), Some(1));
    assert_eq!(potgame(&["--help"]).status.code(), Some(0));

    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), "s.json", &scalar_instance(1.0));
    let bad_tol = potgame(&["validate", "--spec", spec.to_str().unwrap(), "--tol", "nonsense=1"]);
    assert_eq!(bad_tol.status.code(), Some(1));
    let ok_tol = potgame(&["validate", "--spec", spec.to_str().unwrap(), "--tol", "pd_pivot=1e-12"]);
    assert_eq!(ok_tol.status.code(), Some(0));
}

#[test]
fn malformed_spec_is_reported_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("broken.json");
    fs::write(&path, r#"{"n": 1}"#).unwrap();
    let out = potgame(&["validate", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stderr_json(&out)["code"], "json");
}
