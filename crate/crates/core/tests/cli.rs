use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_oriented-walk"))
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    bin()
        .arg("run")
        .args(args)
        .arg("--out")
        .arg(dir)
        .output()
        .expect("binary runs")
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

/// The data rows of a CSV written with a comment header.
fn body(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn oracle_writes_csv_json_and_manifest() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &["Oracle", "--n", "6", "--seed", "1", "--threads", "2"],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(dir.path(), "oracle.csv");
    assert!(csv.starts_with("# oriented-walk "));
    assert!(csv.contains("# seed = 1\n"));
    assert_eq!(body(&csv)[0].split(',').next(), Some("field"));
    assert_eq!(body(&csv).len(), 1 + 7);

    let summary: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "oracle.json")).unwrap();
    for key in [
        "renewal_residual",
        "reversibility_deviation",
        "annealed_new_site_gap",
        "subadditivity_holds",
        "shifted_reversal_gap",
        "new_site_vs_survival",
    ] {
        assert!(summary.get(key).is_some(), "missing {key}");
    }
    assert_eq!(summary["command"], "oracle");
    assert_eq!(summary["subadditivity_holds"], true);

    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert!(manifest["wall_time_seconds"].as_f64().unwrap() >= 0.0);
    assert_eq!(manifest["config"]["threads"], 2);
    let outputs = manifest["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 2);
    for o in outputs {
        let digest = o["sha256"].as_str().unwrap();
        assert_eq!(digest.len(), 64);
    }
}

#[test]
fn llt_series_schema_and_rerun_determinism() {
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    let args = [
        "llt",
        "--envs",
        "4",
        "--N",
        "128",
        "--fit-window",
        "32,128",
        "--seed",
        "9",
    ];
    let first = run_in(a.path(), &[&args[..], &["--threads", "1"]].concat());
    let second = run_in(b.path(), &[&args[..], &["--threads", "3"]].concat());
    // A handful of environments may or may not land in the asserted band.
    assert!(matches!(first.status.code(), Some(0) | Some(1)));
    assert_eq!(first.status.code(), second.status.code());
    let csv = read(a.path(), "llt.csv");
    let rows = body(&csv);
    assert_eq!(rows[0], "n,u,stderr");
    assert_eq!(rows.len(), 1 + 64);
    let first_row: Vec<&str> = rows[1].split(',').collect();
    assert_eq!(first_row[0], "2");
    assert!((first_row[1].parse::<f64>().unwrap() - 2.0 / 9.0).abs() < 1e-15);
    for name in ["llt.csv", "llt.json"] {
        assert_eq!(read(a.path(), name), read(b.path(), name), "{name} differs");
    }
    let summary: serde_json::Value = serde_json::from_str(&read(a.path(), "llt.json")).unwrap();
    for key in [
        "amplitude",
        "alpha",
        "alpha_std_error",
        "residual",
        "num_envs",
    ] {
        assert!(summary[key].is_number(), "missing {key}");
    }
}

#[test]
fn range_series_use_value_stderr_columns() {
    let dir = TempDir::new().unwrap();
    let out = run_in(
        dir.path(),
        &[
            "range",
            "--mode",
            "alternating",
            "--grid",
            "16..64",
            "--samples",
            "200",
            "--truncation",
            "40",
        ],
    );
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
    let csv = read(dir.path(), "range.csv");
    let rows = body(&csv);
    assert_eq!(rows[0], "n,value,stderr");
    let ns: Vec<&str> = rows[1..]
        .iter()
        .map(|r| r.split(',').next().unwrap())
        .collect();
    assert_eq!(ns, ["16", "32", "64"]);
    for r in &rows[1..] {
        let v: f64 = r.split(',').nth(1).unwrap().parse().unwrap();
        assert!(v > 0.0 && v <= 1.0);
    }
}

#[test]
fn explicit_field_file_drives_a_quenched_run() {
    let dir = TempDir::new().unwrap();
    let field = dir.path().join("field.txt");
    let mut table = String::from("# levels -30..=30\n");
    for y in -30..=30 {
        table.push_str(&format!("{y} {}\n", if y % 3 == 0 { "-1" } else { "+1" }));
    }
    std::fs::write(&field, table).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args([
            "run",
            "renewal",
            "--mode",
            "quenched",
            "--n",
            "30",
            "--env-file",
        ])
        .arg(&field)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&out_dir, "renewal-quenched.csv");
    assert!(csv.contains("[env]"));
    assert_eq!(body(&csv)[0], "k,u,gamma");
    assert_eq!(body(&csv).len(), 1 + 31);

    // Too short for a 60-step run.
    let short = bin()
        .args([
            "run",
            "renewal",
            "--mode",
            "quenched",
            "--n",
            "60",
            "--env-file",
        ])
        .arg(&field)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(short.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    let dir = TempDir::new().unwrap();
    for args in [
        &["range", "--grid", "8,4"][..],
        &["green", "--mode", "quenched"],
        &["renewal", "--truncation", "7"],
        &["oracle", "--n", "12"],
        &["nonsense"],
        &["llt", "--mode", "baseline"],
    ] {
        let out = run_in(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn failed_invariant_exits_one_and_names_it() {
    let dir = TempDir::new().unwrap();
    // A tiny truncation puts the fitted tail far off, so duality fails.
    let out = run_in(dir.path(), &["green", "--envs", "2", "--N", "20"]);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert_eq!(out.status.code(), Some(1), "{stderr}");
    assert!(stderr.contains("invariant duality failed"), "{stderr}");
    assert!(dir.path().join("manifest.json").exists());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 4\nn = 20\nenvs = 2\nmode = \"annealed\"\n").unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["run", "renewal", "--n", "12", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = read(&out_dir, "renewal-env1.csv");
    assert!(csv.contains("# seed = 4\n") && csv.contains("# n = 12\n"));
    assert_eq!(body(&csv).len(), 1 + 13);
    assert!(!out_dir.join("renewal-env2.csv").exists());

    std::fs::write(&cfg, "seeed = 4\n").unwrap();
    let bad = bin()
        .args(["run", "renewal", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .args(["run", "oracle", "--n", "3", "--out"])
        .arg(dir.path())
        .env("ORIENT_WALK_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let manifest: serde_json::Value =
        serde_json::from_str(&read(dir.path(), "manifest.json")).unwrap();
    assert_eq!(manifest["config"]["threads"], 3);
}
