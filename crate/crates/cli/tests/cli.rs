use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stablelab"))
        .args(args)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn dir_arg(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

#[test]
fn zero_replicas_is_a_config_error() {
    let o = run(&["simulate", "--replicas", "0"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("replicas"));
}

#[test]
fn budget_refusal_lists_estimates() {
    let t = tempfile::tempdir().unwrap();
    let out = t.path().join("o");
    let o = run(&["simulate", "--budget_draws", "1000", "--output_dir", &dir_arg(&out)]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("n=256") && e.contains("n=65536"), "{e}");
    assert!(!out.exists(), "refusal happens before any output");
}

#[test]
fn malformed_config_names_line_and_key() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.cfg");
    std::fs::write(&cfg, "# run\nalpha = 1\nreplicas = lots\n").unwrap();
    let o = run(&["simulate", "--config", &dir_arg(&cfg)]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("line 3") && e.contains("replicas"), "{e}");
}

#[test]
fn tower_guards() {
    let t = tempfile::tempdir().unwrap();
    let o = run(&["tower", "--alphabet_cap", "1", "--output_dir", &dir_arg(t.path())]);
    assert_eq!(o.status.code(), Some(3));
    let o = run(&["tower", "--stages", "4", "--output_dir", &dir_arg(t.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("128"), "{}", stderr(&o));
}

#[test]
fn flags_override_the_file_and_reruns_are_identical() {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("run.cfg");
    std::fs::write(&cfg, "alpha = 1.5\nn_grid = 256, 4096\nreplicas = 500\nseed = 9\n").unwrap();
    let a = t.path().join("a");
    let b = t.path().join("b");
    for d in [&a, &b] {
        let o = run(&[
            "simulate",
            "--config",
            &dir_arg(&cfg),
            "--alpha",
            "1.0",
            "--output_dir",
            &dir_arg(d),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let report = std::fs::read_to_string(a.join("report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&report).unwrap();
    assert_eq!(v["config"]["alpha"].as_f64(), Some(1.0));
    assert_eq!(v["config"]["replicas"].as_u64(), Some(500));
    assert_eq!(
        v["runs"][1]["sigma_n_alpha"].as_f64().map(|s| (s * 1e5).round()),
        Some(130642.0)
    );
    for f in [
        "samples_256.csv",
        "samples_4096.csv",
        "report.json",
        "qq_4096.csv",
        "ecf_256.csv",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let csv = std::fs::read_to_string(a.join("samples_256.csv")).unwrap();
    assert!(csv.starts_with("replica,total,part_S,part_M,part_L\n"));
}

#[test]
fn gof_reads_simulate_output() {
    let t = tempfile::tempdir().unwrap();
    let sim = t.path().join("sim");
    let o = run(&[
        "simulate",
        "--n",
        "4096",
        "--replicas",
        "2000",
        "--variant",
        "X",
        "--parts",
        "medium",
        "--output_dir",
        &dir_arg(&sim),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let input = sim.join("samples_4096.csv");
    let g = t.path().join("gof");
    let o = run(&[
        "gof",
        "--n",
        "4096",
        "--gof_input",
        &dir_arg(&input),
        "--gof_column",
        "part_M",
        "--output_dir",
        &dir_arg(&g),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(g.join("qq_4096.csv").exists() && g.join("ecf_4096.csv").exists());
    // A badly wrong reference scale fails the verdict.
    let o = run(&[
        "gof",
        "--n",
        "4096",
        "--gof_input",
        &dir_arg(&input),
        "--gof_column",
        "part_M",
        "--gof_sigma",
        "5",
        "--output_dir",
        &dir_arg(&g),
    ]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn bounds_reports_an_injected_off_grid_entry() {
    let t = tempfile::tempdir().unwrap();
    let small = [
        "bounds",
        "--n",
        "256,1024,4096",
        "--replicas",
        "200",
        "--v_replicas",
        "20",
        "--tail_draws",
        "200000",
    ];
    let clean = t.path().join("clean");
    let mut args = small.to_vec();
    let d = dir_arg(&clean);
    args.extend(["--output_dir", &d]);
    run(&args);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(clean.join("report.json")).unwrap()).unwrap();
    assert_eq!(v["hard_violations"].as_u64(), Some(0));

    let bad = t.path().join("bad");
    let mut args = small.to_vec();
    let d = dir_arg(&bad);
    args.extend(["--output_dir", &d, "--test_corrupt_z", "true"]);
    let o = run(&args);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(bad.join("report.json")).unwrap()).unwrap();
    assert!(v["hard_violations"].as_u64().unwrap() > 0);
    assert!(v["runs"][0]["entries"]["gap"].as_u64().unwrap() + v["runs"][0]["entries"]["grid"].as_u64().unwrap() > 0);
}
