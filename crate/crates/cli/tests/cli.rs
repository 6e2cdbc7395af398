//! End-to-end runs of the `oamcavity` binary: exit codes, output files,
//! determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_oamcavity");

fn examples() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples")
}

fn example(name: &str) -> PathBuf {
    examples().join(name)
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a variant of an example config with some keys replaced.
fn variant(dir: &Path, base: &str, edit: impl FnOnce(&mut serde_json::Map<String, Value>)) -> PathBuf {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(example(base)).unwrap()).unwrap();
    edit(v.as_object_mut().unwrap());
    let path = dir.join(format!("variant_{}", base));
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    (header, rows)
}

fn argmin_x(path: &Path) -> f64 {
    let (_, rows) = csv_rows(path);
    rows.iter()
        .map(|r| (r[0].parse::<f64>().unwrap(), r[1].parse::<f64>().unwrap()))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap()
        .0
}

#[test]
fn spectrum_writes_csv_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sp.csv");
    let o = run(&["spectrum", "--config", s(&example("oracle_check.json")), "--x-lo", "-0.1", "--x-hi", "0.1", "--n", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, "x,T");
    assert_eq!(rows.len(), 3);
    let m: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("sp.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "spectrum");
    assert_eq!(m["config"]["charge1"], 50);
    let fp = m["params_fingerprint"].as_str().unwrap();
    assert!(!fp.is_empty() && fp.chars().all(|c| c.is_ascii_hexdigit()), "{fp}");
}

#[test]
fn spectrum_rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for (out, jobs) in [(&a, "1"), (&b, "4")] {
        let o = run(&["--jobs", jobs, "spectrum", "--config", s(&example("valley_shift_l1_plus50_p2_50mw.json")), "--n", "501", "--out", s(out)]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "oracle_check.json", |m| {
        m.insert("finess1".into(), Value::from(1.0));
    });
    let o = run(&["steady", "--config", s(&cfg)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("finess1"), "{}", stderr(&o));
}

#[test]
fn out_of_domain_value_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "oracle_check.json", |m| {
        m.insert("finesse1".into(), Value::from(-5.0));
    });
    let o = run(&["spectrum", "--config", s(&cfg), "--out", s(&dir.path().join("x.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("finesse1"), "{}", stderr(&o));
}

#[test]
fn bad_arguments_exit_with_config_code() {
    assert_eq!(code(&run(&["spectrum"])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["--jobs", "0", "steady"])), 2);
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    assert_eq!(code(&run(&["spectrum", "--x-lo", "0.1", "--x-hi", "-0.1", "--out", s(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn multistable_needs_a_branch() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "oracle_check.json", |m| {
        m.insert("drive2_power_w".into(), Value::from(1e-2));
        m.insert("detuning2".into(), serde_json::json!({ "bare_rad_s": 6e6 }));
    });
    let o = run(&["steady", "--config", s(&cfg)]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    // the report still lists every root
    let report: Value = serde_json::from_slice(&o.stdout).unwrap();
    let roots = report["all_roots"].as_array().unwrap().len();
    assert!(roots >= 2);

    let out = dir.path().join("sp.csv");
    assert_eq!(code(&run(&["spectrum", "--config", s(&cfg), "--n", "5", "--out", s(&out)])), 3);
    assert!(!out.exists());
    let o = run(&["spectrum", "--config", s(&cfg), "--branch", "0", "--n", "5", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bad = roots.to_string();
    assert_eq!(code(&run(&["steady", "--config", s(&cfg), "--branch", &bad])), 2);
}

#[test]
fn calibrate_single_charge_warns_about_fit() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.json");
    let o = run(&["calibrate", "--config", s(&example("high_finesse_250mw.json")), "--l-min", "0", "--l-max", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    let cal: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(cal["entries"].as_array().unwrap().len(), 1);
    assert!(cal["lin_fit"].is_null());
    assert!(dir.path().join("cal.csv").exists());
    assert!(dir.path().join("cal.json.manifest.json").exists());
}

#[test]
fn calibrate_rejects_reversed_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.json");
    let o = run(&["calibrate", "--l-min", "3", "--l-max", "-3", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = run(&["calibrate", "--l-min", "0", "--l-max", "1", "--branch", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn estimate_round_trip_and_failure_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = example("high_finesse_250mw.json");
    let cal = dir.path().join("cal.json");
    let o = run(&["calibrate", "--config", s(&cfg), "--l-min", "-3", "--l-max", "3", "--out", s(&cal)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let curve: Value = serde_json::from_str(&fs::read_to_string(&cal).unwrap()).unwrap();
    let x_of = |l: i64| {
        curve["entries"]
            .as_array()
            .unwrap()
            .iter()
            .find(|e| e["l1"] == l)
            .unwrap()["x_star"]
            .as_f64()
            .unwrap()
    };
    let estimate = |x: f64, extra: &[&str]| {
        let xs = format!("{x:e}");
        let mut args = vec!["estimate", "--calibration", s(&cal), "--x", &xs];
        args.extend_from_slice(extra);
        run(&args)
    };

    let o = estimate(x_of(2), &["--config", s(&cfg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let est: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(est["l_hat"], 2);
    assert!(est["ambiguous_with"].as_array().unwrap().is_empty());

    let mid = 0.5 * (x_of(1) + x_of(2));
    let o = estimate(mid, &["--ambiguity-fraction", "100"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let est: Value = serde_json::from_slice(&o.stdout).unwrap();
    let l_hat = est["l_hat"].as_i64().unwrap();
    assert!(l_hat == 1 || l_hat == 2);
    let other = 3 - l_hat;
    assert!(est["ambiguous_with"].as_array().unwrap().contains(&Value::from(other)), "{est}");

    assert_eq!(code(&estimate(10.0, &[])), 5);

    let elsewhere = example("oracle_check.json");
    assert_eq!(code(&estimate(x_of(0), &["--config", s(&elsewhere)])), 6);
    assert_eq!(code(&estimate(x_of(0), &["--config", s(&elsewhere), "--force"])), 0);

    // a different charge l1 is what is being measured, not a mismatch
    let other_charge = variant(dir.path(), "high_finesse_250mw.json", |m| {
        m.insert("charge1".into(), Value::from(-7));
    });
    assert_eq!(code(&estimate(x_of(0), &["--config", s(&other_charge)])), 0);
}

#[test]
fn sweep_rejects_empty_range() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sw.csv");
    assert_eq!(code(&run(&["sweep", "--axis", "p2", "--from", "0", "--to", "0.1", "--points", "0", "--out", s(&out)])), 2);
    assert_eq!(code(&run(&["sweep", "--axis", "l1", "--from", "3", "--to", "1", "--out", s(&out)])), 2);
    assert!(!out.exists());
}

#[test]
fn shift_sweep_over_cavity2_detuning() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("shift.csv");
    let o = run(&[
        "sweep", "--config", s(&example("high_finesse_250mw.json")), "--axis", "delta2", "--from", "-0.5", "--to", "0.5",
        "--points", "3", "--observable", "shift", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, "d2_over_omega,d,valid");
    assert_eq!(rows.len(), 3);
    let at = |i: usize| rows[i][1].parse::<f64>().unwrap();
    assert_eq!(rows[1][2], "1");
    // the shift is largest with cavity 2 on resonance
    assert!(rows.iter().all(|r| r[2] == "0" || at(1) >= r[1].parse::<f64>().unwrap()));
    assert!(dir.path().join("shift.csv.manifest.json").exists());
}

#[test]
fn detuning_sweep_grows_with_drive2_power() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("det.csv");
    let o = run(&[
        "sweep", "--config", s(&example("valley_shift_l1_plus50_p2_0mw.json")), "--axis", "p2", "--from", "0", "--to", "0.1",
        "--points", "3", "--observable", "detuning", "--out", s(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (_, rows) = csv_rows(&out);
    let d: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(d[0].abs() < 1e-6 && d[1] > 0.0 && d[2] > d[1], "{d:?}");
}

#[test]
fn valley_moves_with_drive2_in_the_direction_of_the_charge() {
    let dir = tempfile::tempdir().unwrap();
    let mut xs = Vec::new();
    for tag in ["plus50", "minus50"] {
        let mut row = Vec::new();
        for p2 in [0, 50, 100] {
            let out = dir.path().join(format!("{tag}_{p2}.csv"));
            let cfg = example(&format!("valley_shift_l1_{tag}_p2_{p2}mw.json"));
            let o = run(&["spectrum", "--config", s(&cfg), "--x-lo", "-1.2", "--x-hi", "1.2", "--n", "2401", "--out", s(&out)]);
            assert_eq!(code(&o), 0, "{}", stderr(&o));
            row.push(argmin_x(&out));
        }
        xs.push(row);
    }
    let (up, dn) = (&xs[0], &xs[1]);
    assert!(up[0].abs() < 2e-3 && dn[0].abs() < 2e-3, "{xs:?}");
    assert!(0.0 < up[1] && up[1] < up[2], "{up:?}");
    assert!(dn[2] < dn[1] && dn[1] < 0.0, "{dn:?}");
    for k in 1..3 {
        assert!((up[k] + dn[k]).abs() < 2e-3, "{xs:?}");
    }
}

#[test]
fn validate_passes_with_weak_probe() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("val.json");
    let o = run(&["validate", "--config", s(&example("oracle_check.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["points"].as_array().unwrap().len(), 5);
    assert!(dir.path().join("val.json.manifest.json").exists());
}

#[test]
fn validate_without_charges_is_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = variant(dir.path(), "oracle_check.json", |m| {
        m.insert("charge1".into(), Value::from(0));
        m.insert("charge2".into(), Value::from(0));
    });
    let o = run(&["validate", "--config", s(&cfg), "--n", "3"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}

#[test]
fn validate_fails_with_strong_probe() {
    let o = run(&["validate", "--config", s(&example("oracle_check.json")), "--n", "3", "--probe-ratio", "0.3"]);
    assert_ne!(code(&o), 0);
}
