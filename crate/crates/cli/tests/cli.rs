use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn gridshare(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gridshare"))
        .args(args)
        .env_remove("GRIDSHARE_THREADS")
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// A short, light scenario so sweeps finish quickly.
fn small_config(dir: &Path) -> String {
    let path = dir.join("small.cfg");
    fs::write(
        &path,
        "days=8\nwarmup_days=2\nlast_measured_day=6\narrivals_per_day=150\n",
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn simulate_minmax_dt_at_1_05_is_nearly_undelayed() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("run");
    let o = gridshare(&[
        "simulate",
        "--policy",
        "minmax-dt",
        "--sdr",
        "1.05",
        "--seed",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fod = read(&out, "fod.csv");
    let rows: Vec<&str> = fod.lines().skip(1).collect();
    assert_eq!(rows.len(), 1);
    let value: f64 = rows[0].rsplit(',').next().unwrap().parse().unwrap();
    assert!(value < 0.05, "{value}");
    assert!(String::from_utf8_lossy(&o.stdout).contains("minmax-dt sdr=1.05 seed=1"));
    for f in [
        "resolved-config",
        "arrival_profile.txt",
        "load_shape.txt",
        "outcomes.csv",
        "summary.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn sdr_below_one_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let o = gridshare(&[
        "simulate",
        "--sdr",
        "0.9",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("delays will grow indefinitely"));
}

#[test]
fn unknown_flag_prints_usage_and_exits_2() {
    let o = gridshare(&["simulate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn bad_config_line_is_reported() {
    let tmp = TempDir::new().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    fs::write(&cfg, "days=8\nnot_a_key=3\n").unwrap();
    let o = gridshare(&[
        "sweep",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let o = Command::new(env!("CARGO_BIN_EXE_gridshare"))
        .args([
            "sweep",
            "--config",
            &cfg,
            "--out",
            tmp.path().to_str().unwrap(),
        ])
        .env("GRIDSHARE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn full_grid_has_150_cells_in_canonical_order() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("grid");
    let o = gridshare(&[
        "sweep",
        "--config",
        &cfg,
        "--policies",
        "all",
        "--seeds",
        "1,2,3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let fod = read(&out, "fod.csv");
    let rows: Vec<Vec<&str>> = fod
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .filter(|r: &Vec<&str>| r[2] != "mean")
        .collect();
    assert_eq!(rows.len(), 150);
    let policies = ["fcfs", "fdfs", "rr", "minmax-er", "minmax-dt"];
    let grid = [
        "1", "1.05", "1.1", "1.15", "1.2", "1.4", "1.6", "1.8", "2", "3",
    ];
    let mut i = 0;
    for p in policies {
        for s in grid {
            for seed in ["1", "2", "3"] {
                assert_eq!(
                    (rows[i][0], rows[i][1], rows[i][2]),
                    (p, s, seed),
                    "row {i}"
                );
                i += 1;
            }
        }
    }
    let summary_lines = String::from_utf8_lossy(&o.stdout)
        .lines()
        .filter(|l| l.contains(" seed="))
        .count();
    assert_eq!(summary_lines, 150);
}

#[test]
fn sweep_is_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let run = |name: &str, threads: &str| {
        let out = tmp.path().join(name);
        let o = Command::new(env!("CARGO_BIN_EXE_gridshare"))
            .args([
                "sweep",
                "--config",
                &cfg,
                "--policies",
                "fcfs,rr,minmax-dt",
                "--sdr-grid",
                "1.1,1.2,2",
                "--seeds",
                "1,2",
                "--out",
                out.to_str().unwrap(),
            ])
            .env("GRIDSHARE_THREADS", threads)
            .output()
            .unwrap();
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for f in [
        "fod.csv",
        "adfd.csv",
        "delaydist.csv",
        "summary.csv",
        "fig1.svg",
        "fig2.svg",
        "fig3.svg",
        "resolved-config",
    ] {
        assert_eq!(read(&a, f), read(&b, f), "{f}");
    }
    assert!(read(&a, "fig1.svg").matches("<polyline").count() >= 3);
}

#[test]
fn resolved_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let first = tmp.path().join("first");
    let o = gridshare(&[
        "sweep",
        "--config",
        &cfg,
        "--policies",
        "fdfs",
        "--sdr-grid",
        "1.2",
        "--seeds",
        "4",
        "--charger",
        "dryer-220-30",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let echo = first.join("resolved-config");
    let second = tmp.path().join("second");
    let o = gridshare(&[
        "sweep",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        second.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read(&first, "fod.csv"), read(&second, "fod.csv"));
    assert_eq!(
        read(&first, "resolved-config"),
        read(&second, "resolved-config")
    );
}

#[test]
fn missing_distribution_point_warns() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("gap");
    let o = gridshare(&[
        "sweep",
        "--config",
        &cfg,
        "--policies",
        "fcfs",
        "--sdr-grid",
        "1.4,2",
        "--seeds",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning"));
    assert!(out.join("fig3.svg").exists());
}

#[test]
fn engine_trace_audits_clean_and_corruption_is_flagged() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let out = tmp.path().join("traced");
    let o = gridshare(&[
        "simulate",
        "--config",
        &cfg,
        "--policy",
        "minmax-dt",
        "--sdr",
        "1.1",
        "--trace",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let trace = out.join("trace.csv");
    let audit = |path: &Path| {
        gridshare(&[
            "verify",
            "--trace",
            path.to_str().unwrap(),
            "--policy",
            "minmax-dt",
            "--out",
            tmp.path().join("audit").to_str().unwrap(),
        ])
    };
    let o = audit(&trace);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));

    // Swap the selection of the last chosen and first skipped vehicle in
    // the first slot that has both.
    let text = read(&out, "trace.csv");
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let slot_of = |l: &str| l.split(',').next().unwrap().to_string();
    let sel = |l: &str| l.ends_with(",1");
    let mut done = false;
    for i in 2..lines.len() {
        if !done
            && slot_of(&lines[i]) == slot_of(&lines[i - 1])
            && sel(&lines[i - 1])
            && !sel(&lines[i])
        {
            let a = lines[i - 1].trim_end_matches(",1").to_string() + ",0";
            let b = lines[i].trim_end_matches(",0").to_string() + ",1";
            lines[i - 1] = a;
            lines[i] = b;
            done = true;
        }
    }
    assert!(done, "trace has no contended slot");
    let bad = tmp.path().join("bad_trace.csv");
    fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let o = audit(&bad);
    assert_eq!(o.status.code(), Some(3));
    let report = read(&tmp.path().join("audit"), "violations.csv");
    assert_eq!(report.lines().count(), 2, "{report}");
}

#[test]
fn verify_campaign_passes() {
    let tmp = TempDir::new().unwrap();
    let o = gridshare(&[
        "verify",
        "--instances",
        "40",
        "--seed",
        "9",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("instances=40 optimal=40"));
    assert_eq!(read(tmp.path(), "violations.csv").lines().count(), 1);
}

#[test]
fn dump_fleet_writes_csv() {
    let tmp = TempDir::new().unwrap();
    let cfg = small_config(tmp.path());
    let o = gridshare(&[
        "dump-fleet",
        "--config",
        &cfg,
        "--seed",
        "2",
        "--out",
        tmp.path().to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = read(tmp.path(), "fleet.csv");
    assert!(csv.starts_with("id,arrival_slot,departure_slot,required_miles,initial_miles\n"));
    assert!(csv.lines().count() > 1000);
}
