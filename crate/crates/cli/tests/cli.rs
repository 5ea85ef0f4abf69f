use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn fjcap(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fjcap"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env_remove("FJCAP_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn csv_field(csv: &str, column: &str) -> String {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let i = header.iter().position(|h| *h == column).unwrap_or_else(|| panic!("no column {column}"));
    row[i].to_owned()
}

fn assert_same_outputs(a: &Path, b: &Path) {
    let mut names: Vec<_> = fs::read_dir(a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() > 1);
    for name in names {
        if name == "manifest.json" {
            continue;
        }
        let left = fs::read(a.join(&name)).unwrap();
        let right = fs::read(b.join(&name)).unwrap_or_else(|e| panic!("{name:?}: {e}"));
        assert!(left == right, "{name:?} differs after replay");
    }
}

#[test]
fn analyze_reference_column() {
    let dir = TempDir::new().unwrap();
    let o = fjcap(dir.path(), &["analyze", "--preset", "table5-reference", "--lambda", "4", "--format", "csv"]);
    assert!(o.status.success(), "{o:?}");
    let r_upper: f64 = csv_field(&stdout(&o), "r_upper_s").parse().unwrap();
    assert!((r_upper - 0.866).abs() < 0.001, "{r_upper}");
    let file = fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert_eq!(file, stdout(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "analyze");
    assert_eq!(manifest["outputs"][0], "report.csv");
}

#[test]
fn zero_load_gap_is_the_harmonic_excess() {
    let dir = TempDir::new().unwrap();
    let o = fjcap(dir.path(), &["analyze", "--preset", "table4", "--lambda", "0", "--format", "csv"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let get = |c| csv_field(&out, c).parse::<f64>().unwrap();
    let expected = get("r_upper_s") - (get("h_p") - 1.0) * get("s_server_s");
    assert!((get("r_lower_s") - expected).abs() < 1e-5);
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let saturated = fjcap(dir.path(), &["analyze", "--preset", "table4", "--lambda", "31"]);
    assert_eq!(saturated.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&saturated.stderr).contains("index server"));

    let infeasible = fjcap(dir.path(), &["size", "--preset", "table5-reference", "--slo-ms", "300", "--total-rate", "200"]);
    assert_eq!(infeasible.status.code(), Some(3));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[cluster]\np = 0\n").unwrap();
    let malformed = fjcap(dir.path(), &["analyze", "--config", bad.to_str().unwrap(), "--lambda", "1"]);
    assert_eq!(malformed.status.code(), Some(1));

    assert_eq!(fjcap(dir.path(), &["analyze", "--preset", "table9", "--lambda", "1"]).status.code(), Some(1));
    assert_eq!(fjcap(dir.path(), &["analyze", "--bogus-flag"]).status.code(), Some(1));
    assert_eq!(fjcap(dir.path(), &["simulate", "--preset", "table4", "--lambda", "40"]).status.code(), Some(2));
}

#[test]
fn config_file_round_trip() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("cluster.toml");
    fs::write(
        &cfg,
        r#"
[cluster]
p = 100

[params.4x]
s_broker_ms = 3.45
s_hit_ms = 34.68
s_miss_ms = 32.04
s_disk_ms = 26.14
hit = 0.18

[scaling]
profile = "4x"
cpu_speedup = 4
disk_speedup = 4

[slo]
max_ms = 300
total_rate = 200
"#,
    )
    .unwrap();
    let o = fjcap(dir.path(), &["size", "--config", cfg.to_str().unwrap(), "--format", "csv"]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(csv_field(&stdout(&o), "max_rate"), "56");
    assert_eq!(csv_field(&stdout(&o), "replicas"), "4");
}

#[test]
fn case_study_preset() {
    let dir = TempDir::new().unwrap();
    let o = fjcap(dir.path(), &["scenario", "--preset", "paper-case-study", "--jobs", "2"]);
    assert!(o.status.success(), "{o:?}");
    let summary = fs::read_to_string(dir.path().join("case_study.csv")).unwrap();
    let rows: Vec<Vec<&str>> = summary.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 6);
    assert_eq!(rows[0][7], "", "baseline cannot meet the objective");
    assert_eq!(rows[4][7], "56");
    assert_eq!(rows[5][7], "65");
    let gain: f64 = rows[4][6].parse().unwrap();
    assert!((gain - 11.58).abs() < 0.01);
    for f in ["upgrade_grid.csv", "sweep_baseline.csv", "sweep_scenario4.csv"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let grid = fs::read_to_string(dir.path().join("upgrade_grid.csv")).unwrap();
    assert_eq!(grid.lines().count(), 1 + 4 * 10 * 10);
}

#[test]
fn replay_reproduces_outputs() {
    let first = TempDir::new().unwrap();
    let second = TempDir::new().unwrap();
    let o = fjcap(first.path(), &["simulate", "--preset", "table4", "--lambda", "20", "--replications", "3", "--horizon", "5000", "--seed", "9"]);
    assert!(o.status.success(), "{o:?}");
    let manifest = first.path().join("manifest.json");
    let r = fjcap(second.path(), &["--replay", manifest.to_str().unwrap()]);
    assert!(r.status.success(), "{r:?}");
    assert_same_outputs(first.path(), second.path());
    assert_eq!(stdout(&o), stdout(&r));

    let third = TempDir::new().unwrap();
    let o = fjcap(third.path(), &["scenario", "--preset", "table5-4xmem", "--cpu-speedup", "4", "--lambda", "4"]);
    assert!(o.status.success());
    let fourth = TempDir::new().unwrap();
    let manifest = third.path().join("manifest.json");
    assert!(fjcap(fourth.path(), &["--replay", manifest.to_str().unwrap()]).status.success());
    assert_same_outputs(third.path(), fourth.path());
}

#[test]
fn characterize_pipeline() {
    let dir = TempDir::new().unwrap();
    let log = dir.path().join("log.tsv");
    let mut text = String::new();
    // Monday 2003-05-12 00:00 UTC, one query every 1.5 s with a skewed vocabulary.
    let start = 1_052_697_600_000i64;
    for i in 0..6000i64 {
        let q = match i % 10 {
            0..=4 => "brasil".to_owned(),
            5..=7 => "futebol noticias".to_owned(),
            _ => format!("consulta {}", i % 97),
        };
        text.push_str(&format!("{}\t{q}\n", start + i * 1500 + (i * 37) % 400));
    }
    text.push_str("not a record\n");
    fs::write(&log, text).unwrap();

    let out = dir.path().join("out");
    let o = fjcap(&out, &["characterize", "--log", log.to_str().unwrap(), "--window", "1w", "--zipf-cutoff"]);
    assert!(o.status.success(), "{o:?}");
    for f in ["load.csv", "folded.tsv", "fits.csv", "cdf_overlay.csv", "zipf.csv", "stats.csv"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let stats = fs::read_to_string(out.join("stats.csv")).unwrap();
    assert!(stats.contains("records,6000"));
    assert!(stats.contains("malformed_lines,1"));
    let fits = fs::read_to_string(out.join("fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 6);

    let again = dir.path().join("again");
    let manifest = out.join("manifest.json");
    assert!(fjcap(&again, &["--replay", manifest.to_str().unwrap()]).status.success());
    assert_same_outputs(&out, &again);
}

#[test]
fn output_dir_from_environment() {
    let dir = TempDir::new().unwrap();
    let target = dir.path().join("from-env");
    let o = Command::new(env!("CARGO_BIN_EXE_fjcap"))
        .args(["analyze", "--preset", "table4", "--lambda", "10"])
        .env("FJCAP_OUT_DIR", &target)
        .output()
        .unwrap();
    assert!(o.status.success());
    assert!(target.join("report.csv").exists());
}
