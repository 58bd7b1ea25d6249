use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn pfront(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pfront")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = pfront(args);
    assert!(out.status.success(), "pfront {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_owned()
}

fn synth(dir: &Path, n: &str, d: &str) -> (String, String) {
    let (e, m) = (path(dir, "E.csv"), path(dir, "M.csv"));
    ok(&["synth", "--n", n, "--d", d, "--rank", "3", "--noise", "0.01", "--seed", "4", "--out-error", &e, "--out-memory", &m]);
    (e, m)
}

/// Split a matrix CSV into (header + all but the last row, header + last row).
fn split_last_row(src: &str, head: &str, tail: &str) {
    let text = std::fs::read_to_string(src).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let (last, body) = lines[1..].split_last().unwrap();
    std::fs::write(head, [&lines[..1], body].concat().join("\n") + "\n").unwrap();
    std::fs::write(tail, format!("{}\n{last}\n", lines[0])).unwrap();
}

#[test]
fn sample_complete_pareto_chain() {
    let dir = tempfile::tempdir().unwrap();
    let (e, m) = synth(dir.path(), "20", "30");
    let mask = path(dir.path(), "mask.csv");
    ok(&["sample", "--error", &e, "--memory", &m, "--scheme", "nonuniform", "--pmax", "0.4", "--seed", "1", "--out", &mask]);
    let mask_text = std::fs::read_to_string(&mask).unwrap();
    assert!(mask_text.lines().count() > 10);
    // nonuniform masks carry a probability column
    assert!(mask_text.lines().last().unwrap().split(',').count() == 3);

    let completed = path(dir.path(), "Ehat.csv");
    ok(&["complete", "--error", &e, "--mask", &mask, "--weighted", "--lambda", "0.1", "--rank", "3", "--out", &completed]);
    let first = std::fs::read_to_string(&completed).unwrap();
    assert_eq!(first.lines().count(), 21);
    assert!(first.lines().skip(1).all(|l| l.split(',').skip(1).all(|c| !c.is_empty())));

    let front = path(dir.path(), "front.json");
    ok(&["pareto", "--error", &completed, "--memory", &m, "--row", "dataset3", "--mask", &mask, "--out", &front]);
    let entries: Vec<Value> = serde_json::from_str(&std::fs::read_to_string(&front).unwrap()).unwrap();
    assert!(!entries.is_empty());
    let mems: Vec<f64> = entries.iter().map(|p| p["memory_bytes"].as_f64().unwrap()).collect();
    let errs: Vec<f64> = entries.iter().map(|p| p["error"].as_f64().unwrap()).collect();
    assert!(mems.windows(2).all(|w| w[0] < w[1]));
    assert!(errs.windows(2).all(|w| w[0] > w[1]));
    assert!(dir.path().join("front.csv").exists());
}

#[test]
fn select_measures_only_budget_configs() {
    let dir = tempfile::tempdir().unwrap();
    let (e, m) = synth(dir.path(), "15", "25");
    let (train, oracle) = (path(dir.path(), "train.csv"), path(dir.path(), "oracle.csv"));
    let (mtrain, mnew) = (path(dir.path(), "mtrain.csv"), path(dir.path(), "mnew.csv"));
    split_last_row(&e, &train, &oracle);
    split_last_row(&m, &mtrain, &mnew);

    let out = path(dir.path(), "select.json");
    ok(&["select", "--train", &train, "--memory-new", &mnew, "--oracle", &oracle, "--technique", "ed-mf", "--budget", "5", "--out", &out]);
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["selected_configs"].as_array().unwrap().len(), 5);
    let chosen = report["chosen"]["config_id"].as_u64().unwrap();
    assert!(report["frontier"].as_array().unwrap().iter().any(|p| p["config_id"].as_u64() == Some(chosen)));

    // a cap below every configuration's memory is infeasible
    let capped = pfront(&["select", "--train", &train, "--memory-new", &mnew, "--oracle", &oracle, "--mem-cap", "1", "--out", &out]);
    assert!(!capped.status.success());
    assert!(String::from_utf8_lossy(&capped.stderr).starts_with("error:"));
}

#[test]
fn memory_from_config_list() {
    let dir = tempfile::tempdir().unwrap();
    let configs = path(dir.path(), "configs.json");
    let arch = path(dir.path(), "arch.json");
    std::fs::write(
        &configs,
        r#"{"format_a": [{"exponent_bits": 3, "mantissa_bits": 4}], "format_b": [{"exponent_bits": 3, "mantissa_bits": 4}]}"#,
    )
    .unwrap();
    std::fs::write(
        &arch,
        r#"{"weight_count": 1000, "activation_elements_per_sample": 500, "optimizer_state_multiplier": 2.0, "batch_size": 4}"#,
    )
    .unwrap();
    let out = path(dir.path(), "mem.csv");
    ok(&["memory", "--configs", &configs, "--arch", &arch, "--out", &out]);
    let text = std::fs::read_to_string(&out).unwrap();
    let row = text.lines().nth(1).unwrap();
    assert!(row.starts_with("arch0,"));
    let bytes: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
    assert!(bytes > 0.0);
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let (e, m) = synth(dir.path(), "10", "12");
    let out = path(dir.path(), "r.json");
    for args in [
        vec!["loocv", "--error", &e, "--memory", &m, "--setting", "IX", "--out", &out],
        vec!["loocv", "--error", &e, "--memory", &m, "--budgets", "1..2", "--out", &out],
        vec!["pareto", "--error", &e, "--memory", &m, "--row", "nope", "--out", &out],
    ] {
        let res = pfront(&args);
        assert_eq!(res.status.code(), Some(1), "{args:?}");
    }
}
