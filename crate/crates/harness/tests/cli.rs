use std::process::{Command, Output};

use approachability_harness::import_jsonl;

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_approach-sim")).args(args).output().unwrap()
}

#[test]
fn same_config_twice_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let paths = [dir.path().join("a.jsonl"), dir.path().join("b.jsonl")];
    for p in &paths {
        let out = sim(&["calibrate", "--steps", "1000", "--seed", "7", "--format", "jsonl", "--out", p.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let (a, b) = (std::fs::read(&paths[0]).unwrap(), std::fs::read(&paths[1]).unwrap());
    assert!(!a.is_empty());
    assert_eq!(a, b);
    let trace = import_jsonl(&paths[0]).unwrap();
    assert!(trace.column("calibration_score").is_some());
    assert_eq!(trace.metadata.parameters["seed"], "7");
}

#[test]
fn csv_goes_to_stdout_by_default() {
    let out = sim(&["internal-regret", "--steps", "100", "--log-every", "50"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "n,max_positive_regret,scaled_regret,average_payoff");
    assert_eq!(lines.len(), 3);
    assert!(lines[2].starts_with("100,"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    std::fs::write(&file, "# calibration run\nsteps=400\nseed=3\nlog-every=100\n").unwrap();
    let out = sim(&["calibrate", "--config", file.to_str().unwrap(), "--steps", "200"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let last = text.lines().last().unwrap();
    assert!(last.starts_with("200,"), "{last}");
}

#[test]
fn config_errors_exit_with_two() {
    for args in [
        vec!["partial-monitor", "--scenario", "poker"],
        vec!["calibrate", "--steps", "0"],
        vec!["calibrate", "--adversary", "iid:0.2"],
        vec!["calibrate", "--format", "xml"],
        vec!["halfspace", "--set", "colour=blue"],
        vec!["calibrate", "--config", "/nonexistent/run.conf"],
    ] {
        let out = sim(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = sim(&["partial-monitor", "--scenario", "poker"]);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("label-efficient") && err.contains("matching-pennies-dark"), "{err}");
}

#[test]
fn excludable_target_exits_with_three() {
    let out = sim(&["approach-calibrated", "--set", "target=1", "--mesh", "0.2", "--steps", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8(out.stderr).unwrap().contains("excludable"));
}

#[test]
fn unwritable_output_exits_with_three() {
    let out = sim(&["calibrate", "--steps", "10", "--out", "/nonexistent/dir/trace.csv"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn every_subcommand_runs() {
    for args in [
        vec!["internal-regret", "--scenario", "matching-pennies", "--adversary", "greedy"],
        vec!["approach-blackwell", "--adversary", "periodic:0,0,1"],
        vec!["approach-calibrated", "--epsilon", "0.2", "--mesh", "0.1"],
        vec!["halfspace", "--adversary", "greedy"],
        vec!["partial-monitor", "--scenario", "matching-pennies-dark", "--adversary", "iid:0.5,0.5"],
        vec!["doubling", "--set", "n1=50"],
    ] {
        let mut full = args.clone();
        full.extend(["--steps", "300"]);
        let out = sim(&full);
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
