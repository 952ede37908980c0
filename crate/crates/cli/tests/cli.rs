//! End-to-end behaviour of the `vesim` binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vesim_core::diagnostics::read_csv;
use vesim_core::snapshot::{load_field, save_field};
use vesim_core::Field;

fn vesim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vesim"))
        .args(args)
        .env_remove("VESIM_THREADS")
        .output()
        .expect("spawn vesim")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_ic_requires_resolution() {
    let o = vesim(&["gen-ic", "--preset", "taylor-green"]);
    assert_eq!(code(&o), 2);
    let o = vesim(&["gen-ic", "--n", "48"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gen_ic_without_transport_gives_zero_strain() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ic");
    let o = vesim(&["gen-ic", "--n", "16", "--preset", "taylor-green", "--s-end", "0", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let e = load_field(&out.join("E0.vesf")).unwrap();
    assert!(e.physical().unwrap().iter().all(|&x| x == 0.0));
    assert!(out.join("v0.json").exists() && out.join("residuals.json").exists());
    let res: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("residuals.json")).unwrap()).unwrap();
    assert_eq!(res["pass"], true);
}

#[test]
fn verify_accepts_manufactured_data_and_rejects_perturbation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ic");
    let o = vesim(&["gen-ic", "--n", "32", "--preset", "small-data", "--seed", "2", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = vesim(&["verify", "--dir", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], true);

    // scaling one strain component breaks det(I+E) = 1 and the curl identity
    let e = load_field(&out.join("E0.vesf")).unwrap();
    let mut data = e.physical().unwrap().to_vec();
    let np = e.grid().points();
    for x in &mut data[..np] {
        *x *= 1.1;
    }
    let bad = dir.path().join("bad_E.vesf");
    save_field(&bad, &Field::from_physical(e.grid(), e.rank(), data)).unwrap();
    let o = vesim(&["verify", "--v", p(&out.join("v0.vesf")), "--e", p(&bad)]);
    assert_eq!(code(&o), 1);
    let report: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["pass"], false);
}

#[test]
fn equilibrium_stays_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = vesim(&["run", "--n", "16", "--ic", "equilibrium", "--t-end", "0.1", "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let file = fs::File::open(out.join("diagnostics.csv")).unwrap();
    let recs = read_csv(std::io::BufReader::new(file)).unwrap();
    assert!(!recs.is_empty());
    assert!(recs.iter().all(|r| r.kinetic == 0.0 && r.elastic == 0.0 && r.dissipation == 0.0));
    assert!(out.join("final_v.vesf").exists() && out.join("summary.json").exists());
}

#[test]
fn large_data_reports_threshold_but_completes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = vesim(&[
        "run", "--n", "64", "--ic", "random", "--mu", "0.01", "--t-end", "0.02", "--out", p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("threshold exceeded"), "{}", stdout(&o));
}

#[test]
fn run_then_audit_plot_and_reproduce() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "run".to_string(), "--n".into(), "16".into(), "--ic".into(), "small-data".into(), "--seed".into(),
            "4".into(), "--steps".into(), "20".into(), "--scheme".into(), "erk4".into(), "--dt".into(),
            "2e-3".into(), "--t-end".into(), "0.2".into(), "--diag-every".into(), "5".into(),
            "--snapshot-every".into(), "50".into(), "--out".into(), out.into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let argv = args(p(out));
        let argv: Vec<&str> = argv.iter().map(String::as_str).collect();
        let o = vesim(&argv);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let csv_a = fs::read(a.join("diagnostics.csv")).unwrap();
    assert_eq!(csv_a, fs::read(b.join("diagnostics.csv")).unwrap());
    assert!(a.join("snapshots").join("step_00000050_v.vesf").exists());

    let csv = a.join("diagnostics.csv");
    assert_eq!(code(&vesim(&["audit", p(&csv)])), 0);

    let svg1 = dir.path().join("1.svg");
    let svg2 = dir.path().join("2.svg");
    for svg in [&svg1, &svg2] {
        let o = vesim(&["plot", p(&csv), "--columns", "kinetic,elastic", "--log", "--out", p(svg)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let bytes = fs::read(&svg1).unwrap();
    assert!(bytes.starts_with(b"<svg") || String::from_utf8_lossy(&bytes).contains("<svg"));
    assert_eq!(bytes, fs::read(&svg2).unwrap());
    let o = vesim(&["plot", p(&csv), "--columns", "nonsense", "--out", p(&svg1)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn configuration_errors_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# bad key\nn = 16\nwobble = 3\n").unwrap();
    let o = vesim(&["run", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("wobble"));

    fs::write(&cfg, "n = 16\nmu = -1\n").unwrap();
    let o = vesim(&["run", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("mu"));

    let o = Command::new(env!("CARGO_BIN_EXE_vesim"))
        .args(["run", "--n", "16", "--t-end", "0.01", "--out", p(&dir.path().join("o"))])
        .env("VESIM_THREADS", "x")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn audit_rejects_broken_energy_law() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = vesim(&[
        "run", "--n", "16", "--ic", "small-data", "--t-end", "0.1", "--dt", "1e-3", "--diag-every", "10", "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0);
    // a per-row residual as large as the initial energy breaks the balance
    let text = fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    let names: Vec<&str> = header.split(',').collect();
    let col = |name: &str| names.iter().position(|c| *c == name).unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    let e0: f64 = rows[0][col("kinetic")].parse::<f64>().unwrap() + rows[0][col("elastic")].parse::<f64>().unwrap();
    let mut edited = vec![header.to_string()];
    for (i, mut cells) in rows.into_iter().enumerate() {
        if i == 3 {
            cells[col("energy_residual")] = format!("{e0:e}");
        }
        edited.push(cells.join(","));
    }
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, edited.join("\n") + "\n").unwrap();
    assert_eq!(code(&vesim(&["audit", p(&bad)])), 1);
}
