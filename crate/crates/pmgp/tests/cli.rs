use std::path::PathBuf;
use std::process::{Command, Output};

fn fixture(name: &str) -> String {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name).display().to_string()
}

fn pmgp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pmgp")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn oracle_on_two_point_toy() {
    let out = stdout(&pmgp(&["oracle", "--data", &fixture("toy.csv")]));
    let row: Vec<f64> = out.lines().nth(1).unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert!((row[0] - 0.250_000_000_000_021_76).abs() < 1e-12, "{}", row[0]);
}

#[test]
fn oracle_refuses_large_data() {
    let o = pmgp(&["oracle", "--data", &fixture("pima_tr.csv"), "--kind", "pima"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn argument_errors_exit_with_two() {
    assert_eq!(pmgp(&["fit"]).status.code(), Some(2));
    assert_eq!(pmgp(&["estimate", "--data", &fixture("toy.csv")]).status.code(), Some(2));
    assert_eq!(
        pmgp(&["estimate", "--data", &fixture("toy.csv"), "--theta", "1,1", "--method", "nope"]).status.code(),
        Some(2)
    );
    assert_eq!(pmgp(&["synth", "--n", "4", "--sigma", "-1"]).status.code(), Some(2));
    assert_eq!(pmgp(&["synth", "--n", "4", "--config", "/nonexistent.json"]).status.code(), Some(2));
}

#[test]
fn synth_is_seeded() {
    let a = stdout(&pmgp(&["synth", "--n", "30", "--seed", "5"]));
    let b = stdout(&pmgp(&["synth", "--n", "30", "--seed", "5"]));
    let c = stdout(&pmgp(&["synth", "--n", "30", "--seed", "6"]));
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert!(a.starts_with("# pmgp "));
    assert!(a.contains("# seed: 5\n"));
    assert_eq!(a.lines().filter(|l| !l.starts_with('#')).count(), 31);
}

#[test]
fn fit_output_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.csv");
    stdout(&pmgp(&["synth", "--n", "25", "--seed", "2", "--out", data.to_str().unwrap()]));
    let run = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let args = [
            "fit",
            "--data",
            data.to_str().unwrap(),
            "--kind",
            "synthetic",
            "--chains",
            "2",
            "--iters",
            "60",
            "--burnin",
            "10",
            "--warmup",
            "100",
            "--n-imp",
            "3",
            "--threads",
            threads,
            "--out",
            out.to_str().unwrap(),
        ];
        stdout(&pmgp(&args));
        std::fs::read(out).unwrap()
    };
    let a = run("1", "a.csv");
    let b = run("3", "b.csv");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 1 + 2 * 50);

    let pred = dir.path().join("p.csv");
    let chain = dir.path().join("a.csv");
    let args = [
        "predict",
        "--chain",
        chain.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--kind",
        "synthetic",
        "--test",
        data.to_str().unwrap(),
        "--ess-iters",
        "2",
        "--out",
        pred.to_str().unwrap(),
    ];
    stdout(&pmgp(&args));
    let preds = std::fs::read_to_string(pred).unwrap();
    let body: Vec<&str> = preds.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(body[0], "test_index,mean_prob,mc_std_error");
    assert_eq!(body.len(), 26);
    for row in &body[1..] {
        let p: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"seed": 9, "n": 12, "tau": 0.5}"#).unwrap();
    let a = stdout(&pmgp(&["synth", "--config", cfg.to_str().unwrap()]));
    assert!(a.contains("# seed: 9\n"));
    assert!(a.contains(r#""n":12"#) && a.contains(r#""tau":0.5"#));
    let b = stdout(&pmgp(&["synth", "--config", cfg.to_str().unwrap(), "--n", "7", "--seed", "4"]));
    assert!(b.contains("# seed: 4\n") && b.contains(r#""n":7"#));
    std::fs::write(&cfg, r#"{"sede": 9}"#).unwrap();
    assert_eq!(pmgp(&["synth", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn estimate_reports_spread() {
    let out = stdout(&pmgp(&[
        "estimate",
        "--data",
        &fixture("toy.csv"),
        "--theta",
        "15,0.36787944117144233",
        "--method",
        "ais-approx",
        "--n-imp",
        "10",
        "--reps",
        "4",
    ]));
    let rows: Vec<&str> = out.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5);
    let r: f64 = out.lines().last().unwrap().strip_prefix("# r: ").unwrap().parse().unwrap();
    assert!(r.is_finite() && r > 0.0);
}
