use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn amerput(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_amerput")).args(args).output().expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn report_value(stdout: &[u8], key: &str) -> f64 {
    let text = String::from_utf8_lossy(stdout);
    let line = text.lines().find(|l| l.starts_with(&format!("{key} = "))).unwrap_or_else(|| panic!("no {key} in {text}"));
    line.split(" = ").nth(1).unwrap().parse().unwrap()
}

fn without_runtime(stdout: &[u8]) -> String {
    String::from_utf8_lossy(stdout).lines().filter(|l| !l.starts_with("runtime_seconds")).collect::<Vec<_>>().join("\n")
}

#[test]
fn gbm_price_matches_published_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "gbm.json",
        r#"{"model": "gbm", "params": {"r": 0.0488, "sigma": 0.2},
            "contract": {"strike": 40, "maturity": 0.5833, "spot": 40}, "order": 2, "steps": 100}"#,
    );
    let out = amerput(&["price", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((report_value(&out.stdout, "P") - 1.9906).abs() < 5e-4);
    assert_eq!(report_value(&out.stdout, "N"), 100.0);
    assert_eq!(report_value(&out.stdout, "m"), 2.0);
    let p = report_value(&out.stdout, "p");
    let e = report_value(&out.stdout, "e");
    assert!((p + e - report_value(&out.stdout, "P")).abs() <= 2e-6);
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (name, text) in [
        ("truncated.json", "{\"model\": \"gbm\",\n"),
        ("unknown.json", r#"{"model": "gbm", "volatility": 0.2}"#),
        ("percent.json", r#"{"model": "gbm", "params": {"r": 4.88}}"#),
        ("order.json", r#"{"model": "kou", "order": 3}"#),
    ] {
        let cfg = write_config(dir.path(), name, text);
        let out = amerput(&["price", "--config", &cfg]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("config error"), "{name}");
    }
    let out = amerput(&["price", "--config", dir.path().join("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn parse_error_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", "{\n  \"model\": \"gbm\",\n  \"steps\": \"many\"\n}");
    let out = amerput(&["price", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 3"));
}

#[test]
fn solver_error_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "stiff.json",
        r#"{"model": "nmr", "params": {"a": 1e5}, "steps": 5}"#,
    );
    let out = amerput(&["price", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

#[test]
fn unwritable_output_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("no_such_dir").join("b.csv");
    let out = amerput(&["boundary", "--steps", "10", "--out", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn boundary_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("b.csv");
    let out = amerput(&["boundary", "--model", "gbm", "--steps", "100", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let text = fs::read_to_string(&path).unwrap();
    assert!(!text.contains('\r'));
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step_index,time_years,boundary");
    assert_eq!(lines.len(), 102);
    let value = |l: &str| l.split(',').nth(2).unwrap().parse::<f64>().unwrap();
    assert_eq!(value(lines[101]), 40.0);
    assert!(value(lines[1]) < value(lines[101]));
}

#[test]
fn seeded_runs_are_identical() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let out = amerput(&["boundary", "--steps", "40", "--seed", "7", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let runs: Vec<Output> = (0..2).map(|_| amerput(&["price", "--model", "cev", "--steps", "40"])).collect();
    assert!(runs[0].status.success());
    assert_eq!(without_runtime(&runs[0].stdout), without_runtime(&runs[1].stdout));

    let runs: Vec<Output> = (0..2).map(|_| amerput(&["density-check", "--model", "kou"])).collect();
    assert_eq!(runs[0].stdout, runs[1].stdout);
}

#[test]
fn order_sweep_rows_in_order() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "sweep.json",
        r#"{"model": "gbm", "steps": 20, "oracle": {"binomial_steps": 500},
            "sweep": {"strikes": [10, 35, 40, 45], "orders": [1, 2, 3]}}"#,
    );
    let serial = amerput(&["order-sweep", "--config", &cfg, "--workers", "1"]);
    let parallel = amerput(&["order-sweep", "--config", &cfg, "--workers", "3"]);
    assert!(serial.status.success(), "{}", String::from_utf8_lossy(&serial.stderr));
    assert_eq!(serial.stdout, parallel.stdout);
    let text = String::from_utf8(serial.stdout).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3 * 4);
    assert!(rows[0].starts_with("1,10,") && rows[0].ends_with("NaN"));
    assert!(rows[11].starts_with("3,45,"));
    assert_eq!(text.lines().filter(|l| l.starts_with("# median_relative_error")).count(), 3);

    let out = amerput(&["order-sweep", "--model", "merton"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn density_check_summary() {
    let out = amerput(&["density-check", "--model", "gbm", "--order", "2"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("S_from,S_to,delta_t,m,density\n"));
    let summary = |key: &str| -> f64 {
        let line = text.lines().find(|l| l.starts_with(&format!("# {key} = "))).unwrap();
        line.split(" = ").nth(1).unwrap().parse().unwrap()
    };
    assert!(summary("normalization_error") <= 1e-3);
    assert!(summary("sup_relative_error") <= 1e-3);
    assert_eq!(summary("clamp_count"), 0.0);
}

#[test]
fn zero_intensity_jump_price_matches_diffusion() {
    let dir = tempfile::tempdir().unwrap();
    let contract = r#""contract": {"strike": 40, "maturity": 0.5, "spot": 40}, "steps": 30"#;
    let gbm = write_config(dir.path(), "g.json", &format!(r#"{{"model": "gbm", "params": {{"sigma": 0.2}}, {contract}}}"#));
    let merton =
        write_config(dir.path(), "m.json", &format!(r#"{{"model": "merton", "params": {{"lambda": 0}}, {contract}}}"#));
    let g = amerput(&["price", "--config", &gbm]);
    let m = amerput(&["price", "--config", &merton]);
    assert!(m.status.success(), "{}", String::from_utf8_lossy(&m.stderr));
    assert!((report_value(&g.stdout, "P") - report_value(&m.stdout, "P")).abs() <= 1e-5);
    assert_eq!(report_value(&m.stdout, "g"), 0.0);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        let cfg = amerput_cli::RunConfig::parse(&text, &Default::default())
            .unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert_eq!(amerput_cli::RunConfig::parse(&cfg.to_json(), &Default::default()).unwrap(), cfg);
        seen += 1;
    }
    assert_eq!(seen, 5);
}
