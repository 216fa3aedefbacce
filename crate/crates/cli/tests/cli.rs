use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use proxdiv::{ExperimentReport, MixtureModel, ParamVector, ProximalTrace, StopReason};
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_proxdiv"));
    c.env_remove("PROXDIV_CONFIG").env("RUST_LOG", "warn");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn seeded_data(dir: &TempDir) -> PathBuf {
    let s = MixtureModel::gaussian2()
        .sample_seeded(&ParamVector::new(0.35, -2.0, 1.5), 100, 42)
        .unwrap();
    let mut text = String::from("# 100 draws, seed 42\n");
    for v in &s.values {
        text.push_str(&format!("{v:?}\n"));
    }
    write(dir, "seed42.txt", &text)
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_rows(bytes: &[u8]) -> Vec<csv::StringRecord> {
    csv::Reader::from_reader(bytes).records().map(|r| r.unwrap()).collect()
}

#[test]
fn empty_file_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "empty.txt", "");
    let o = run(&["estimate", p(&f)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn bad_line_reports_its_number() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "bad.txt", "# c\n1.0\n2.0\noops\n");
    let o = run(&["estimate", p(&f)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("line 4"), "{}", stderr(&o));
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["estimate", "/nonexistent/data.txt"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn unknown_flag_and_bad_values_exit_2() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    assert_eq!(code(&run(&["estimate", p(&f), "--no-such-flag"])), 2);
    assert_eq!(code(&run(&["estimate", p(&f), "--divergence", "bogus"])), 2);
    assert_eq!(code(&run(&["estimate", p(&f), "--estimator", "mdpd", "--a", "2"])), 2);
    assert_eq!(code(&run(&["estimate", p(&f), "--start", "1.5,0,1"])), 2);
}

#[test]
fn constant_data_fails_estimation() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "flat.txt", "1\n1\n1\n1\n");
    let o = run(&["estimate", p(&f), "--estimator", "kernel-dual"]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

#[test]
fn kernel_estimate_is_near_reference_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    let a = run(&["estimate", p(&f), "--estimator", "kernel-dual", "--divergence", "hellinger"]);
    let b = run(&["estimate", p(&f), "--estimator", "kernel-dual", "--divergence", "hellinger"]);
    assert_eq!(code(&a), 0, "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);

    let rows = csv_rows(&a.stdout);
    assert_eq!(rows.len(), 1);
    let x: Vec<f64> = (2..5).map(|i| rows[0][i].parse().unwrap()).collect();
    // reference means and 3 standard deviations
    for (v, (m, sd)) in x.iter().zip([(0.349, 0.049), (-1.987, 0.208), (1.520, 0.155)]) {
        assert!((v - m).abs() <= 3.0 * sd, "{x:?}");
    }
}

#[test]
fn json_estimate_has_all_fields() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    let o = run(&["estimate", p(&f), "--estimator", "em", "--format", "json"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    for k in ["lambda", "theta1", "theta2", "objective", "iterations", "stop"] {
        assert!(v.get(k).is_some(), "missing {k}");
    }
    assert!(v["theta1"].as_f64().unwrap() <= v["theta2"].as_f64().unwrap());
}

fn trace_json(args: &[&str]) -> ProximalTrace {
    let o = run(args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    serde_json::from_slice(&o.stdout).unwrap()
}

#[test]
fn dual_traces_are_non_increasing() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    for est in ["kernel-dual", "classical-dual"] {
        let t = trace_json(&["trace", p(&f), "--estimator", est, "--eps-d", "1e-6", "--eps-phi", "1e-4", "--format", "json"]);
        assert!(t.records.len() > 1, "{est}");
        for w in t.records.windows(2) {
            assert!(w[1].log1p_objective <= w[0].log1p_objective + 1e-10, "{est}: {w:?}");
        }
    }
}

#[test]
fn trace_csv_layout() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    let o = run(&["trace", p(&f), "--estimator", "mdpd"]);
    assert_eq!(code(&o), 0);
    let mut r = csv::Reader::from_reader(&o.stdout[..]);
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_owned).collect();
    assert_eq!(header, ["k", "lambda", "mu1", "mu2", "objective", "log1p_objective", "penalty", "step_norm"]);
    let rows = csv_rows(&o.stdout);
    for (i, row) in rows.iter().enumerate() {
        assert_eq!(row[0].parse::<usize>().unwrap(), i);
    }
}

fn last_point(t: &ProximalTrace) -> String {
    let r = t.records.last().unwrap();
    format!("{:?},{:?},{:?}", r.lambda, r.theta1, r.theta2)
}

#[test]
fn fixed_point_start_gives_single_row() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    for est in ["em", "kernel-dual"] {
        let t = trace_json(&["trace", p(&f), "--estimator", est, "--format", "json"]);
        let start = last_point(&t);
        let t = trace_json(&["trace", p(&f), "--estimator", est, "--start", &start, "--eps-phi", "1e-3", "--format", "json"]);
        assert_eq!(t.records.len(), 1, "{est}: {:?}", t.records);
        assert_eq!(t.stop, StopReason::FixedPoint);
    }
}

#[test]
fn config_file_supplies_defaults() {
    let dir = TempDir::new().unwrap();
    let f = seeded_data(&dir);
    let cfg = write(&dir, "cfg.toml", "estimator = \"mdpd\"\na = 0.25\n");
    let o = bin().env("PROXDIV_CONFIG", &cfg).args(["estimate", p(&f)]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(&csv_rows(&o.stdout)[0][1], "mdpd(a=0.25)");
    // flags win over the file
    let o = bin().env("PROXDIV_CONFIG", &cfg).args(["estimate", p(&f), "--a", "0.5"]).output().unwrap();
    assert_eq!(&csv_rows(&o.stdout)[0][1], "mdpd(a=0.5)");

    let bad = write(&dir, "bad.toml", "no_such_key = 1\n");
    let o = run(&["--config", p(&bad), "estimate", p(&f)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn zero_replications_rejected() {
    let o = run(&["simulate", "--plan", "gaussian-table1", "--replications", "0"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("replications"), "{}", stderr(&o));
}

#[test]
fn plan_errors_name_the_field() {
    let dir = TempDir::new().unwrap();
    let plan = write(
        &dir,
        "p.toml",
        "name = \"x\"\nn = 1\nreplications = 1\ntruth = { lambda = 0.35, theta = [-2.0, 1.5] }\n[model]\nname = \"gaussian2\"\n[[estimators]]\nkind = \"em\"\n",
    );
    let o = run(&["simulate", "--plan", p(&plan)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("n:"), "{}", stderr(&o));
}

#[test]
fn simulate_writes_table_and_report_round_trips() {
    let dir = TempDir::new().unwrap();
    let plan = write(
        &dir,
        "small.toml",
        r#"name = "small"
n = 60
replications = 3
seed = 9
scenarios = ["none", "gaussian"]
truth = { lambda = 0.35, theta = [-2.0, 1.5] }
[model]
name = "gaussian2"
[proximal.stop]
eps_d = 1e-6
eps_phi = 1e-4
[[estimators]]
kind = "mdpd"
a = 0.5
[[estimators]]
kind = "em"
"#,
    );
    let prefix = dir.path().join("out");
    let o = run(&["simulate", "--plan", p(&plan), "--jobs", "1", "--out", p(&prefix)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read(prefix.with_extension("csv")).unwrap();
    let rows = csv_rows(&table);
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].len(), 12);

    let json = prefix.with_extension("json");
    let reports: Vec<ExperimentReport> = serde_json::from_slice(&std::fs::read(&json).unwrap()).unwrap();
    assert_eq!(reports.len(), 2);
    assert!(reports.iter().all(|r| r.records.len() == 6));

    let o = run(&["simulate", "--from-report", p(&json)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(o.stdout, table);

    let again = dir.path().join("again");
    run(&["simulate", "--plan", p(&plan), "--jobs", "2", "--out", p(&again)]);
    assert_eq!(std::fs::read(again.with_extension("csv")).unwrap(), table);
}

#[test]
fn broken_report_is_rejected() {
    let dir = TempDir::new().unwrap();
    let f = write(&dir, "r.json", "[{\"name\": 3}]");
    assert_eq!(code(&run(&["simulate", "--from-report", p(&f)])), 2);
}
