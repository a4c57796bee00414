use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use gtpbet::experiment::{run_config, Config};
use gtpbet::Error;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_gtpbet"));
    c.env_remove("GTPBET_SEED");
    c
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, seed: Option<&str>) -> Output {
    let mut c = bin();
    c.arg("run").arg(config);
    if let Some(s) = seed {
        c.env("GTPBET_SEED", s);
    }
    c.output().unwrap()
}

fn prices_csv(dir: &Path, items: usize, days: usize) -> PathBuf {
    let mut text = String::from("date");
    for j in 0..items {
        text.push_str(&format!(",S{}", j + 1));
    }
    text.push('\n');
    for t in 0..days {
        text.push_str(&format!("{t}"));
        for j in 0..items {
            let p = 100.0 * (1.0 + 0.01 * t as f64) + 5.0 * ((t * (j + 2)) as f64).sin();
            text.push_str(&format!(",{p:.4}"));
        }
        text.push('\n');
    }
    let p = dir.join("prices.csv");
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn every_scenario_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    prices_csv(d, 2, 120);
    let configs = [
        ("imaginary", "scenario = imaginary\nrounds = 300\n", vec!["ledger.csv", "series.csv", "summary.json"]),
        ("sos_synthetic", "scenario = sos_synthetic\nmu = 0.2, -0.1\nrounds = 400\nseed = 3\n", vec!["ledger.csv", "series.csv", "summary.json"]),
        ("sos_csv", "scenario = sos_csv\ninput = prices.csv\nc = 0.2\n", vec!["ledger.csv", "series.csv", "summary.json"]),
        ("universal_compare", "scenario = universal_compare\nmu = 0.1\nrounds = 300\nM = 20\n", vec!["compare.csv", "ledger.csv", "series.csv", "summary.json"]),
        ("holder", "scenario = holder\nhurst = 0.6\ngrid_step = 0.0001220703125\ndeltas = 0.05, 0.02\n", vec!["holder.csv", "summary.json"]),
        ("girsanov", "scenario = girsanov\nmu = 0.1\nsigma = 0.3\nhorizon = 2\ndelta = 0.02\n", vec!["summary.json"]),
        ("model_select", "scenario = model_select\nmu = 0.2, 0.0, 0.1\nrounds = 300\n", vec!["report.csv", "summary.json"]),
    ];
    for (name, body, files) in configs {
        let mut outputs = Vec::new();
        for rep in 0..2 {
            let out_dir = d.join(format!("{name}-{rep}"));
            let cfg = write_config(d, &format!("{name}.cfg"), &format!("{body}output = {}\n", out_dir.display()));
            let o = run(&cfg, None);
            assert!(o.status.success(), "{name}: {}", String::from_utf8_lossy(&o.stderr));
            let listed = String::from_utf8(o.stdout).unwrap();
            let contents: Vec<Vec<u8>> = files
                .iter()
                .map(|f| {
                    let p = out_dir.join(f);
                    assert!(listed.contains(&p.display().to_string()), "{name}: {f} not reported");
                    fs::read(p).unwrap()
                })
                .collect();
            outputs.push(contents);
        }
        assert_eq!(outputs[0], outputs[1], "{name} is not reproducible");
        for bytes in &outputs[0] {
            assert!(!bytes.contains(&b'\r'));
        }
    }
}

#[test]
fn ledger_header_and_float_format() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "a.cfg", "scenario = imaginary\nrounds = 50\noutput = out\n");
    assert!(run(&cfg, None).status.success());
    let text = fs::read_to_string(dir.path().join("out/ledger.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,logK_true,logK_hindsight,logK_approx,LD1,LD2,LD3,GR,QR,DR"
    );
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first[0], "1");
    // The first bet is 0 by symmetry of the training, so log K_1 = 0.
    assert_eq!(first[1], "0.0000000000000000e0");
    for f in first.iter().skip(1).filter(|f| **f != "NaN") {
        let mantissa = f.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "{f}");
    }
}

#[test]
fn seed_from_environment_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let body = |seed: u64, out: &str| format!("scenario = sos_synthetic\nmu = 0.1\nrounds = 200\nseed = {seed}\noutput = {out}\n");
    let a = write_config(d, "a.cfg", &body(1, "a"));
    let b = write_config(d, "b.cfg", &body(5, "b"));
    assert!(run(&a, Some("5")).status.success());
    assert!(run(&b, None).status.success());
    let read = |o: &str| fs::read(d.join(o).join("ledger.csv")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert!(run(&a, None).status.success());
    assert_ne!(read("a"), read("b"));
    let o = run(&a, Some("not-a-number"));
    assert!(!o.status.success());
}

#[test]
fn configuration_errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unknown = write_config(d, "u.cfg", "scenario = martingale\n");
    let o = run(&unknown, None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("martingale"));

    let typo = write_config(d, "t.cfg", "scenario = imaginary\nrounds = 10\nrounds_max = 3\n");
    assert!(!run(&typo, None).status.success());

    let missing = write_config(d, "m.cfg", "scenario = sos_csv\ninput = nowhere.csv\n");
    let o = run(&missing, None);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("nowhere.csv"));

    assert!(!run(&d.join("absent.cfg"), None).status.success());

    let cfg = Config::parse("scenario = sos_csv\ninput = nowhere.csv\n", d).unwrap();
    assert!(matches!(run_config(&cfg), Err(Error::Scenario { .. })));
}

#[test]
fn transform_prints_training_then_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let prices = prices_csv(dir.path(), 2, 100);
    let o = bin().arg("transform").arg(&prices).args(["--c", "0.17"]).output().unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<Vec<&str>> = text.lines().map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0], vec!["n", "S1", "S2"]);
    // Four corner training rows, then T - 1 - F outcomes with F = floor(0.17 * 100).
    let n: Vec<i64> = rows[1..].iter().map(|r| r[0].parse().unwrap()).collect();
    assert_eq!(&n[..5], &[-3, -2, -1, 0, 1]);
    assert_eq!(n.len(), 4 + 99 - 17);
    let meta: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(meta["F"], 17);
    assert_eq!(meta["rho"].as_array().unwrap().len(), 2);

    let bad = bin().arg("transform").arg(&prices).args(["--c", "1.5"]).output().unwrap();
    assert!(!bad.status.success());
}

#[test]
fn selftest_passes() {
    let o = bin().arg("selftest").output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(o.status.success(), "{text}");
    assert_eq!(text.lines().count(), 8);
    assert!(text.lines().all(|l| l.starts_with("ok")));
}
