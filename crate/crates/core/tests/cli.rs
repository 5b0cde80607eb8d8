mod common;

use std::fs;
use std::process::{Command, Output};

use tide_core::model::{parse_run_log, LOG_SCHEMA_VERSION};

use common::sample_path;

fn tide(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tide"))
        .args(args)
        .output()
        .expect("spawn tide")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn sample(name: &str) -> String {
    sample_path(name).display().to_string()
}

#[test]
fn auv_on_fixture() {
    let out = tide(&["auv", &sample("sample.jsonl"), "--t-max", "4"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "AUV 53.1  SR 75.0\n");

    // the header horizon is 4 as well
    assert_eq!(stdout(&tide(&["auv", &sample("sample.jsonl")])), "AUV 53.1  SR 75.0\n");
}

#[test]
fn auv_json_keeps_full_precision() {
    let out = tide(&[
        "auv",
        &sample("sample.jsonl"),
        "--json",
        "--ci",
        "0.9",
        "--resamples",
        "300",
        "--seed",
        "3",
    ]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["auv"], 0.53125);
    assert_eq!(v["sr_final"], 0.75);
    assert!(v["ci_low"].as_f64().unwrap() <= 0.53125);
    let again = tide(&[
        "auv",
        &sample("sample.jsonl"),
        "--json",
        "--ci",
        "0.9",
        "--resamples",
        "300",
        "--seed",
        "3",
    ]);
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn memory_index_of_a_run_with_itself() {
    let log = sample("alpha-blocksworld-full.jsonl");
    let out = tide(&["memory", "mi", "--with", &log, "--without", &log]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out).lines().next(), Some("MI 0.0"));
}

#[test]
fn memory_index_strict_and_intersect() {
    let dir = tempfile::tempdir().unwrap();
    let full = fs::read_to_string(sample_path("alpha-blocksworld-full.jsonl")).unwrap();
    let fewer: Vec<&str> = full.lines().take(30).collect();
    let short = dir.path().join("short.jsonl");
    fs::write(&short, fewer.join("\n") + "\n").unwrap();
    let short = short.display().to_string();
    let log = sample("alpha-blocksworld-none.jsonl");

    let strict = tide(&["memory", "mi", "--with", &short, "--without", &log]);
    assert_eq!(strict.status.code(), Some(1));
    let loose = tide(&[
        "memory",
        "mi",
        "--with",
        &short,
        "--without",
        &log,
        "--align",
        "intersect",
    ]);
    assert_eq!(loose.status.code(), Some(0));
    assert!(stdout(&loose).contains("tasks 29"));
}

#[test]
fn recall_lag_split() {
    let out = tide(&["memory", "lag", &sample("sample.jsonl"), "--split"]);
    let text = stdout(&out);
    assert!(text.starts_with("cohort success  n 1  mean 2.0000\n"));
    assert!(text.contains("cohort all  n 2  mean 2.5000\n"));
}

#[test]
fn loops_with_classes_and_entropy() {
    let dir = tempfile::tempdir().unwrap();
    let classes = dir.path().join("classes.toml");
    fs::write(&classes, "[[rule]]\nclass = \"nav\"\nprefix = \"move\"\n").unwrap();
    let out = tide(&[
        "loops",
        &sample("sample.jsonl"),
        "--classes",
        classes.to_str().unwrap(),
        "--entropy",
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "LR 22.2  loop actions 2/9\nclass nav 100.0\nentropy loop 0.1000 (n 2)  non-loop 0.6571 (n 7)\n"
    );
    let json = tide(&["loops", &sample("sample.jsonl"), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&json.stdout).unwrap();
    assert_eq!(v["loop_action_count"], 2);
    assert_eq!(
        v["trajectories"][3]["mask"],
        serde_json::json!([false, false, true, true])
    );
}

#[test]
fn cosine_mode_rejects_text_states() {
    let out = tide(&["loops", &sample("sample.jsonl"), "--state-identity", "cosine:0.99"]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("sample.jsonl:2: schema-violation"), "{stderr}");
}

#[test]
fn validate_reports_every_finding() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(sample_path("sample.jsonl")).unwrap();
    let broken = text.replacen(r#""success_turn":3"#, r#""success_turn":9"#, 1).replacen(
        r#""task_id":"t4""#,
        r#""task_id":"t1""#,
        1,
    );
    let path = dir.path().join("broken.jsonl");
    fs::write(&path, broken).unwrap();
    let path = path.display().to_string();

    let out = tide(&["validate", &path, &sample("sample.jsonl")]);
    assert_eq!(out.status.code(), Some(1));
    let lines: Vec<String> = stdout(&out).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with(&format!("{path}:4: invariant-violation: success_turn")));
    assert!(lines[1].starts_with(&format!("{path}:5: invariant-violation: rollout_idx")));
    assert!(lines[2].ends_with("sample.jsonl: ok (4 trajectories)"));

    let ok = tide(&["validate", &sample("sample.jsonl")]);
    assert_eq!(ok.status.code(), Some(0));
}

#[test]
fn exit_codes() {
    assert_eq!(tide(&[]).status.code(), Some(2));
    assert_eq!(tide(&["auv"]).status.code(), Some(2));
    assert_eq!(
        tide(&["loops", "x.jsonl", "--state-identity", "cosine:2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(tide(&["auv", "/nonexistent/run.jsonl"]).status.code(), Some(1));
    assert_eq!(
        tide(&[
            "compare",
            &sample("sample.jsonl"),
            "--out",
            "/tmp/x",
            "--radar-floor",
            "0.9",
            "--radar-cap",
            "0.1"
        ])
        .status
        .code(),
        Some(2)
    );

    // a run whose trajectories take no actions has no loop ratio
    let dir = tempfile::tempdir().unwrap();
    let idle = dir.path().join("idle.jsonl");
    fs::write(
        &idle,
        concat!(
            r#"{"type":"run","run_id":"r","model":"m","environment":"e","memory_mode":"full","t_max":3}"#,
            "\n",
            r#"{"type":"trajectory","task_id":"a","rollout_idx":0,"success":false,"success_turn":null,"final_state":{"kind":"text","value":"s"},"steps":[]}"#,
            "\n"
        ),
    )
    .unwrap();
    let out = tide(&["loops", idle.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!out.stderr.is_empty());
}

#[test]
fn help_names_schema_version() {
    for args in [
        vec!["--help"],
        vec!["validate", "--help"],
        vec!["auv", "--help"],
        vec!["loops", "--help"],
        vec!["memory", "--help"],
        vec!["memory", "mi", "--help"],
        vec!["memory", "lag", "--help"],
        vec!["compare", "--help"],
        vec!["synth", "--help"],
    ] {
        let out = tide(&args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(stdout(&out).contains(LOG_SCHEMA_VERSION), "{args:?}");
    }
}

#[test]
fn synth_reproduces_bundled_samples() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["alpha-blocksworld-full", "beta-frozenlake-none"] {
        let spec = sample_path(&format!("specs/{name}.json"));
        let out = dir.path().join(format!("{name}.jsonl"));
        let status = tide(&[
            "synth",
            "--spec",
            spec.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ]);
        assert_eq!(status.status.code(), Some(0));
        let generated = fs::read(&out).unwrap();
        assert_eq!(generated, fs::read(sample_path(&format!("{name}.jsonl"))).unwrap());
        parse_run_log(generated.as_slice()).unwrap();
    }
}

#[test]
fn inputs_are_not_modified() {
    let before = fs::read(sample_path("sample.jsonl")).unwrap();
    let dir = tempfile::tempdir().unwrap();
    tide(&[
        "compare",
        &sample("sample.jsonl"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    tide(&["loops", &sample("sample.jsonl"), "--entropy"]);
    assert_eq!(fs::read(sample_path("sample.jsonl")).unwrap(), before);
}

#[test]
fn compare_bundle_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = tide(&[
        "compare",
        &sample("alpha-blocksworld-full.jsonl"),
        &sample("alpha-blocksworld-none.jsonl"),
        &sample("beta-blocksworld-full.jsonl"),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    for f in [
        "report.json",
        "comparison.csv",
        "curves/blocksworld.csv",
        "curves/blocksworld.svg",
        "radar/blocksworld.json",
    ] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["schema"], LOG_SCHEMA_VERSION);
    assert_eq!(report["config"]["alignment"], "intersect");
    assert_eq!(report["config"]["radar_floor"], 0.05);
    let rows = report["comparison"]["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows[0]["metrics"]["mi"].is_number());
    assert!(rows[1]["metrics"]["mi"].is_null());

    let csv = fs::read_to_string(dir.path().join("comparison.csv")).unwrap();
    assert!(csv.starts_with("model,environment,memory_mode,run_id,t_max,sr,auv,lr,mi,ci_low,ci_high,recall_lag_mean\n"));
    assert!(csv.matches(",NA,").count() >= 2);
    let curve = fs::read_to_string(dir.path().join("curves/blocksworld.csv")).unwrap();
    assert!(curve.starts_with("t,alpha,alpha [none],beta\n0,0.000000,0.000000,0.000000\n"));
    assert_eq!(curve.lines().count(), 14);
}
