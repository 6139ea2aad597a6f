use std::process::{Command, Output};

fn lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_knockout-lab"))
        .args(args)
        .env_remove("KNOCKOUT_LAB_WORKERS")
        .output()
        .unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn flops_exit_only() {
    let out = lab(&["flops", "--frames", "32", "--tokens-per-frame", "196", "--depth", "28", "--exit", "18"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("attention FLOPs: 64.3%"), "{text}");
    assert!(text.contains("cost unit"));
}

#[test]
fn flops_exit_and_window() {
    let out = lab(&["flops", "--spatial-window", "8", "--exit", "18"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("text tokens: 100"), "{text}");
    assert!(text.contains("attention FLOPs: 37.5%"), "{text}");
}

#[test]
fn baseline_run_scores_one_hundred() {
    let out = lab(&["run", "--circuit", "--depth", "4", "--copy-layer", "2", "--schedule", "N N N N"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let headers = rows.headers().unwrap().clone();
    let col = headers.iter().position(|h| h == "performance_ratio").unwrap();
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 1);
    assert_eq!(&records[0][col], "100.0");
}

#[test]
fn circuit_demo_table() {
    let out = lab(&["circuit-demo", "--frames", "8", "--options", "4", "--protocol", "global2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("baseline accuracy 1.00"), "{text}");
    let accuracy = |name: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(name)).unwrap();
        line.split_whitespace().nth(2).unwrap().parse().unwrap()
    };
    assert_eq!(accuracy("LVK"), 0.25);
    assert_eq!(accuracy("VTK"), 1.0);
    assert_eq!(accuracy("VSK"), 1.0);
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("lab.conf");
    std::fs::write(&config, "# small sweep\nframes = 2\ntokens_per_frame = 3\ntext = 3\ndepth = 4\nseed = 5\n").unwrap();
    let mut outputs = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let path = dir.path().join(name);
        let out = lab(&[
            "sweep-global1",
            "--config",
            config.to_str().unwrap(),
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(std::fs::read(&path).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    assert!(!outputs[0].is_empty());
}

#[test]
fn global2_report_has_four_rows() {
    let out = lab(&["sweep-global2", "--depth", "3", "--format", "json"]);
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rows = rows.as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["logit_drift"], 0.0);
}

#[test]
fn window_sweep_counts() {
    let out = lab(&["sweep-window", "--depth", "6", "--knockout", "VTK", "--window", "2"]);
    assert!(out.status.success());
    // Header, baseline, five windows.
    assert_eq!(stdout(&out).lines().count(), 7);
}

#[test]
fn exit_codes() {
    assert_eq!(lab(&["--help"]).status.code(), Some(0));
    assert_eq!(lab(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(lab(&["run", "--depth", "4"]).status.code(), Some(2));
    assert_eq!(lab(&["run", "--depth", "4", "--schedule", "N X N N"]).status.code(), Some(2));
    assert_eq!(lab(&["run", "--depth", "4", "--schedule", "N N N"]).status.code(), Some(2));
    assert_eq!(lab(&["sweep-global2", "--frames", "0"]).status.code(), Some(2));
    assert_eq!(lab(&["sweep-global2", "--heads", "3"]).status.code(), Some(2));
    let bad_out = lab(&["sweep-global2", "--depth", "2", "--out", "/nonexistent/dir/r.csv"]);
    assert_eq!(bad_out.status.code(), Some(1));
    assert!(!bad_out.stderr.is_empty());
}
