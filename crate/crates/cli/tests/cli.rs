use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn privkde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privkde"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = privkde(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn write_obs(dir: &Path, xs: &[f64]) -> PathBuf {
    let p = dir.join("obs.txt");
    let body: Vec<String> = xs.iter().map(|x| x.to_string()).collect();
    std::fs::write(&p, body.join("\n") + "\n").unwrap();
    p
}

fn normal_sample(n: usize) -> Vec<f64> {
    // Deterministic, roughly bell-shaped values.
    (0..n)
        .map(|i| {
            let u = (i as f64 + 0.5) / n as f64;
            let v = ((i * 7919) % n) as f64 / n as f64 + 0.5 / n as f64;
            (-2.0 * u.ln()).sqrt() * (2.0 * std::f64::consts::PI * v).cos()
        })
        .collect()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn assert_error(out: &Output, code: i32, kind: &str) {
    assert_eq!(out.status.code(), Some(code), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8(out.stderr.clone()).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    assert!(err.starts_with(&format!("error kind={kind} code={code} message=")), "{err}");
}

#[test]
fn three_owners_one_bandwidth_gives_three_rows_per_point() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &[-0.3, 0.1, 0.8]);
    ok(dir.path(), &["release", "--input", "obs.txt", "--alpha", "1", "--h", "0.5", "--points", "-1:1:4", "--out", "c.csv"]);
    let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("owner_id,h,t,z"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 12);
    for t in ["-1", "-0.3333333333333333", "0.3333333333333333", "1"] {
        let t: f64 = t.parse().unwrap();
        let at: Vec<_> = rows.iter().filter(|r| (r[2].parse::<f64>().unwrap() - t).abs() < 1e-12).collect();
        assert_eq!(at.len(), 3);
    }
}

#[test]
fn four_bandwidths_split_alpha_four_ways() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &normal_sample(20));
    ok(dir.path(), &[
        "release", "--input", "obs.txt", "--alpha", "2", "--h", "1,0.5,0.25,0.125", "--points", "0", "--out", "c.csv",
    ]);
    let meta = read_json(&dir.path().join("c.json"));
    assert_eq!(meta["budget"]["alpha_eff"].as_f64().unwrap(), 0.5);
    assert_eq!(meta["budget"]["n_releases"].as_u64().unwrap(), 4);
    let hs: Vec<f64> = meta["bandwidths"].as_array().unwrap().iter().map(|b| b["h"].as_f64().unwrap()).collect();
    assert_eq!(hs, vec![1.0, 0.5, 0.25, 0.125]);
    assert_eq!(meta["run_config"]["bandwidths"]["kind"], "fixed");
}

#[test]
fn fixed_seed_output_is_byte_identical_for_any_thread_count() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &normal_sample(300));
    for (mech, beta, out) in [("laplace", "0", "a"), ("gp", "0.01", "g")] {
        let mut files = Vec::new();
        for jobs in ["1", "4"] {
            let csv = format!("{out}{jobs}.csv");
            ok(dir.path(), &[
                "--jobs", jobs, "release", "--input", "obs.txt", "--mechanism", mech, "--kernel", "gaussian",
                "--alpha", "1", "--beta", beta, "--grid-a", "2", "--h-max", "1", "--points", "-2:2:9",
                "--seed", "7", "--out", &csv,
            ]);
            files.push(std::fs::read(dir.path().join(&csv)).unwrap());
        }
        assert_eq!(files[0], files[1], "{mech}");
    }
}

#[test]
fn emitted_config_replays_the_release() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &normal_sample(50));
    ok(dir.path(), &[
        "release", "--input", "obs.txt", "--alpha", "1.5", "--grid-a", "1.5", "--h-max", "0.9", "--points=-1,0,2",
        "--seed", "3", "--out", "c.csv",
    ]);
    ok(dir.path(), &["release", "--config", "c.cfg", "--out", "d.csv"]);
    let a = std::fs::read(dir.path().join("c.csv")).unwrap();
    let b = std::fs::read(dir.path().join("d.csv")).unwrap();
    assert_eq!(a, b);
    let (ma, mb) = (read_json(&dir.path().join("c.json")), read_json(&dir.path().join("d.json")));
    assert_eq!(ma["budget"], mb["budget"]);
    assert_eq!(ma["run_config"]["bandwidths"], mb["run_config"]["bandwidths"]);
}

#[test]
fn estimate_is_the_mean_of_released_values() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &normal_sample(40));
    ok(dir.path(), &["release", "--input", "obs.txt", "--alpha", "1", "--h", "0.5", "--points", "0,1", "--out", "c.csv"]);
    let text = std::fs::read_to_string(dir.path().join("c.csv")).unwrap();
    let zs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|r| r[2].parse::<f64>().unwrap() == 1.0)
        .map(|r| r[3].parse().unwrap())
        .collect();
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;

    let out = ok(dir.path(), &["estimate", "--data", "c.csv", "--h", "0.5", "--t", "1"]);
    let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
    let est: f64 = row[2].parse().unwrap();
    assert!((est - mean).abs() <= 1e-12 * mean.abs().max(1.0), "{est} vs {mean}");

    let clipped = ok(dir.path(), &["estimate", "--data", "c.csv", "--h", "0.5", "--clip-zero"]);
    let vals: Vec<f64> = clipped.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    assert_eq!(vals.len(), 2);
    assert!(vals.iter().all(|v| *v >= 0.0));
    assert_eq!(vals[1], mean.max(0.0));
}

#[test]
fn adapt_prints_selection_and_writes_trace() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &normal_sample(400));
    ok(dir.path(), &[
        "release", "--input", "obs.txt", "--alpha", "4", "--grid-a", "2", "--h-max", "1", "--points", "-1:1:5",
        "--out", "c.csv",
    ]);
    let meta = read_json(&dir.path().join("c.json"));
    let released: Vec<f64> = meta["bandwidths"].as_array().unwrap().iter().map(|b| b["h"].as_f64().unwrap()).collect();

    let out = ok(dir.path(), &["adapt", "--data", "c.csv", "--t", "0", "--m-bound", "0.4"]);
    let h_hat: f64 = out
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix("h_hat="))
        .expect("h_hat printed")
        .parse()
        .unwrap();
    assert!(released.contains(&h_hat));

    let trace = read_json(&dir.path().join("c.trace.json"));
    assert_eq!(trace["selected_h"].as_f64().unwrap(), h_hat);
    assert_eq!(trace["kappa"].as_f64().unwrap(), 2.0);
    let idx = trace["selected_index"].as_u64().unwrap() as usize;
    assert_eq!(trace["bandwidths"][idx].as_f64().unwrap(), h_hat);
    assert!(trace["admissible"][idx].as_bool().unwrap());

    ok(dir.path(), &["adapt", "--data", "c.csv", "--t", "0", "--m-bound", "0.4", "--kappa-theory", "--trace", "k.json"]);
    assert!(read_json(&dir.path().join("k.json"))["kappa"].as_f64().unwrap() > 2.0);
}

#[test]
fn audit_negative_control_is_a_result_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(dir.path(), &[
        "audit", "--h", "0.5", "--alpha", "1", "--samples", "50000", "--scale-factor", "0.5", "--out", "a.json",
    ]);
    let report: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(report["verdict"], "FAIL");
    assert_eq!(read_json(&dir.path().join("a.json")), report);

    let calibrated: Value = serde_json::from_str(&ok(dir.path(), &["audit", "--h", "0.5", "--alpha", "1", "--samples", "50000"])).unwrap();
    assert_eq!(calibrated["verdict"], "PASS");
}

#[test]
fn simulate_writes_report_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sim.cfg");
    std::fs::write(&cfg, "density=gaussian_std\nrule=rate:0.2\nns=100,200,400,800\nreps=40\nalpha=1\nseed=5\n").unwrap();
    ok(dir.path(), &["simulate", "--config", "sim.cfg", "--out", "s.csv"]);
    let csv = std::fs::read_to_string(dir.path().join("s.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("n,rule,h,mse,mc_se,reps"));
    assert_eq!(csv.lines().count(), 5);
    let summary = read_json(&dir.path().join("s.json"));
    assert_eq!(summary["rule"]["kind"], "rate");
    assert!(summary["fit"]["slope"].as_f64().unwrap() < 0.0);

    ok(dir.path(), &["simulate", "--config", "sim.cfg", "--jobs", "1", "--out", "t.csv"]);
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("t.csv")).unwrap());
}

#[test]
fn bad_configuration_exits_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    write_obs(dir.path(), &[0.0, 1.0]);
    std::fs::write(dir.path().join("bad.cfg"), "alpha 1\n").unwrap();
    assert_error(&privkde(dir.path(), &["release", "--config", "bad.cfg"]), 2, "config");

    std::fs::write(dir.path().join("unknown.cfg"), "colour=blue\n").unwrap();
    assert_error(&privkde(dir.path(), &["release", "--config", "unknown.cfg"]), 2, "config");

    let base = ["release", "--input", "obs.txt", "--points", "0", "--out", "c.csv"];
    let with = |extra: &[&'static str]| [&base[..], extra].concat();
    assert_error(&privkde(dir.path(), &with(&["--alpha", "-1", "--h", "0.5"])), 2, "config");
    assert_error(&privkde(dir.path(), &with(&["--alpha", "1", "--h", "0.5", "--kernel", "cosine"])), 2, "config");
    assert_error(&privkde(dir.path(), &with(&["--alpha", "1"])), 2, "config");
    // A GP release needs β > 0 and a positive-definite kernel.
    assert_error(&privkde(dir.path(), &with(&["--alpha", "1", "--h", "0.5", "--mechanism", "gp"])), 2, "config");
    assert_error(
        &privkde(dir.path(), &with(&["--alpha", "1", "--beta", "0.1", "--h", "0.5", "--mechanism", "gp", "--kernel", "epanechnikov"])),
        2,
        "config",
    );
}

#[test]
fn data_problems_exit_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("obs.txt"), "0.5\n1.5\nnot-a-number\n").unwrap();
    let out = privkde(dir.path(), &["release", "--input", "obs.txt", "--alpha", "1", "--h", "0.5", "--points", "0", "--out", "c.csv"]);
    assert_error(&out, 3, "data");
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));

    write_obs(dir.path(), &[0.0, 1.0]);
    ok(dir.path(), &["release", "--input", "obs.txt", "--alpha", "1", "--h", "0.5", "--points", "0", "--out", "c.csv"]);
    assert_error(&privkde(dir.path(), &["estimate", "--data", "c.csv", "--h", "0.25"]), 3, "data");
    assert_error(&privkde(dir.path(), &["estimate", "--data", "c.csv", "--h", "0.5", "--t", "0.1"]), 3, "data");
    assert_error(&privkde(dir.path(), &["estimate", "--data", "missing.csv", "--h", "0.5"]), 3, "data");
}
