use std::path::Path;
use std::process::{Command, Output};

use biteuler::cli::{ConvergenceReport, ERROR_TABLE_HEADER};

fn biteuler(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_biteuler")).args(args).env_clear().output().unwrap()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_exits_zero() {
    let out = biteuler(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("convergence"));
}

#[test]
fn missing_model_exits_one() {
    let out = biteuler(&["convergence", "--Ns", "16,32"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--model"));
}

#[test]
fn unknown_command_and_model_exit_one() {
    assert_eq!(biteuler(&["explode"]).status.code(), Some(1));
    assert_eq!(biteuler(&["simulate", "--model", "lorenz"]).status.code(), Some(1));
}

#[test]
fn convergence_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gbm.csv");
    let status = biteuler(&[
        "convergence",
        "--model",
        "gbm",
        "--Ns",
        "16,32,64",
        "--M",
        "100",
        "--seed",
        "1",
        "--output",
        path_str(&out),
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], ERROR_TABLE_HEADER);
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("bit,gbm,2.0,16,100,1,"));
    let side: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("gbm.csv.rate.json")).unwrap()).unwrap();
    for key in ["slope", "intercept", "residual"] {
        assert!(side[key].is_f64(), "{key}");
    }
}

#[test]
fn json_report_roundtrips_and_includes_gridpoint_errors() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let status = biteuler(&[
        "convergence",
        "--model",
        "gbm",
        "--Ns",
        "16,32,64",
        "--M",
        "50",
        "--format",
        "json",
        "--output",
        path_str(&out),
    ]);
    assert_eq!(status.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let report: ConvergenceReport = serde_json::from_str(&text).unwrap();
    assert_eq!(report.table.rows.len(), 3);
    assert_eq!(report.table.rows[2].per_gridpoint_errors.as_ref().unwrap().len(), 65);
    assert!(report.rate_fit.is_some());
    assert_eq!(serde_json::to_string_pretty(&report).unwrap() + "\n", text);
}

#[test]
fn rate_band_violation_exits_two() {
    let out = biteuler(&["convergence", "--model", "gbm", "--Ns", "16,32,64", "--M", "50", "--rate-band", "5,6"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_and_env_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(
        &cfg,
        "[run]\ncommand = \"simulate\"\nN = 64\nseed = 3\n\n[model]\nid = \"ginzburg-landau\"\nx0 = [0.5]\n\n[model.params]\nsigma0 = 0.5\n",
    )
    .unwrap();
    let rows = |extra: &[&str], env: &[(&str, &str)]| -> usize {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_biteuler"));
        cmd.env_clear().arg("--config").arg(&cfg).args(extra);
        for (k, v) in env {
            cmd.env(k, v);
        }
        let out = cmd.output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        String::from_utf8(out.stdout).unwrap().lines().count() - 1
    };
    assert_eq!(rows(&[], &[]), 65);
    assert_eq!(rows(&[], &[("BITEULER_N", "32")]), 33);
    assert_eq!(rows(&["--N", "128"], &[("BITEULER_N", "32")]), 129);
}

#[test]
fn unknown_config_key_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[run]\nstep = 3\n").unwrap();
    let out = biteuler(&["simulate", "--model", "gbm", "--config", path_str(&cfg)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn taming_check_assertion_exit_codes() {
    let pass = biteuler(&["taming-check", "--h", "1", "--m", "5", "--samples", "20000", "--assert"]);
    assert_eq!(pass.status.code(), Some(0), "{}", String::from_utf8_lossy(&pass.stdout));
    let csv = String::from_utf8(pass.stdout).unwrap();
    assert!(csv.starts_with("h,m,samples,seed,quantity,estimate,std_error,bound,pass\n"));
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn divergence_and_conditions_commands() {
    let out = biteuler(&[
        "divergence",
        "--model",
        "ginzburg-landau",
        "--x0",
        "5",
        "--schemes",
        "em,bit",
        "--Ns",
        "1,2,4,8",
        "--M",
        "20",
        "--assert",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 9);

    let out = biteuler(&["check-conditions", "--model", "vdp", "--points", "2000", "--assert", "--format", "json"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["summaries"].as_array().unwrap().len(), 3);

    assert_eq!(biteuler(&["check-conditions", "--model", "gbm"]).status.code(), Some(1));
}

#[test]
fn catalog_lists_models() {
    let out = biteuler(&["catalog", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let ids: Vec<&str> = v.as_array().unwrap().iter().map(|e| e["id"].as_str().unwrap()).collect();
    assert_eq!(ids, ["gbm", "ginzburg-landau", "vdp"]);
}
