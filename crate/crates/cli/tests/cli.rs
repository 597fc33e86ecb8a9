use std::path::Path;
use std::process::{Command, Output};

fn meanfield(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanfield"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn plain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_meanfield")).args(args).output().expect("binary runs")
}

fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let body = r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect();
    (header, body)
}

fn column(header: &[String], name: &str) -> usize {
    header.iter().position(|h| h == name).unwrap_or_else(|| panic!("missing column {name}"))
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(dir)
        .map(|d| d.map(|e| e.unwrap().file_name().into_string().unwrap()).collect())
        .unwrap_or_default();
    v.sort();
    v
}

const SMALL_SEIR: &[&str] = &["transient", "--model", "seir", "--n", "10", "--tmax", "30", "--runs", "300", "--seed", "5"];

#[test]
fn same_seed_gives_identical_csv() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    assert!(meanfield(a.path(), SMALL_SEIR).status.success());
    assert!(meanfield(b.path(), SMALL_SEIR).status.success());
    let name = "transient_seir_N10.csv";
    let x = std::fs::read(a.path().join(name)).unwrap();
    let y = std::fs::read(b.path().join(name)).unwrap();
    assert_eq!(x, y);
    assert!(!x.contains(&b'\r'));
}

#[test]
fn occupancy_columns_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    assert!(meanfield(dir.path(), SMALL_SEIR).status.success());
    let (header, body) = rows(&dir.path().join("transient_seir_N10.csv"));
    let ti = column(&header, "t");
    for name in ["mu", "refined_mean", "sim_mean"] {
        let c = column(&header, name);
        let mut sums = std::collections::BTreeMap::<u64, f64>::new();
        for r in &body {
            *sums.entry(r[ti].parse().unwrap()).or_default() += r[c].parse::<f64>().unwrap();
        }
        assert_eq!(sums.len(), 31);
        for (t, s) in sums {
            assert!((s - 1.0).abs() < 1e-6, "{name} at t={t} sums to {s}");
        }
    }
}

#[test]
fn svg_outputs_are_well_formed() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["transient", "--model", "two-state", "--init", "7,3", "--tmax", "15", "--runs", "200", "--error-curves", "--exact"];
    let out = meanfield(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let svgs: Vec<String> = files(dir.path()).into_iter().filter(|f| f.ends_with(".svg")).collect();
    assert_eq!(svgs, ["transient-error_two-state_N10.svg", "transient_two-state_N10.svg"]);
    for f in svgs {
        let text = std::fs::read_to_string(dir.path().join(&f)).unwrap();
        let mut reader = quick_xml::Reader::from_str(&text);
        let mut depth = 0i32;
        let mut polylines = 0;
        loop {
            match reader.read_event().unwrap_or_else(|e| panic!("{f}: {e}")) {
                quick_xml::events::Event::Start(_) => depth += 1,
                quick_xml::events::Event::End(_) => depth -= 1,
                quick_xml::events::Event::Empty(e) if e.name().as_ref() == b"polyline" => polylines += 1,
                quick_xml::events::Event::Eof => break,
                _ => {}
            }
        }
        assert_eq!(depth, 0, "{f}");
        assert!(polylines > 0, "{f}");
    }
}

#[test]
fn deterministic_kernel_has_no_correction() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "transient", "--model", "constant", "--params", "matrix=0,1,0;0,0,1;1,0,0", "--init", "5,3,2", "--tmax", "12",
        "--runs", "50", "--format", "csv",
    ];
    let out = meanfield(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(files(dir.path()), ["transient_constant_N10.csv"]);
    let (header, body) = rows(&dir.path().join("transient_constant_N10.csv"));
    let (mu, rm, sm, se) =
        (column(&header, "mu"), column(&header, "refined_mean"), column(&header, "sim_mean"), column(&header, "sim_stderr"));
    for r in &body {
        let v: Vec<f64> = [mu, rm, sm, se].iter().map(|&c| r[c].parse().unwrap()).collect();
        assert!((v[0] - v[1]).abs() < 1e-12 && (v[0] - v[2]).abs() < 1e-12, "{r:?}");
        assert!(v[3].abs() < 1e-12);
    }
}

#[test]
fn marginal_fixed_point_reports_unavailable_refinement() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["steady", "--model", "two-state", "--params", "alpha=0.75", "--n", "10", "--tmax", "50", "--runs", "100"];
    let out = meanfield(dir.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (_, fp) = rows(&dir.path().join("steady_two-state_fixed_point.csv"));
    let class = fp.iter().find(|r| r[0] == "classification").unwrap();
    assert_eq!(class[1], "MarginallyStable");
    let (header, body) = rows(&dir.path().join("steady_two-state_N10.csv"));
    let rc = column(&header, "refined");
    assert!(body.iter().all(|r| r[rc] == "unavailable"));
}

#[test]
fn unknown_model_and_bad_params_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        &["transient", "--model", "nope"][..],
        &["transient", "--model", "seir", "--params", "zeta=1"],
        &["transient", "--model", "seir", "--params", "alpha=abc"],
        &["transient", "--model", "seir", "--init", "0.5,0.5"],
        &["frobnicate"],
    ] {
        let out = meanfield(dir.path(), args);
        assert_eq!(out.status.code(), Some(1), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    assert!(files(dir.path()).is_empty());
}

#[test]
fn numeric_failure_exits_two_and_leaves_no_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = meanfield(dir.path(), &["sqrt-fit", "--model", "two-state", "--n", "10"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(files(dir.path()).is_empty());
}

#[test]
fn failure_after_partial_output_removes_files() {
    let dir = tempfile::tempdir().unwrap();
    // N=10 succeeds and is written before the oversized exact chain at N=100000 is refused.
    let args = ["transient", "--model", "seir", "--n", "10,100000", "--tmax", "3", "--runs", "10", "--exact"];
    let out = meanfield(dir.path(), &args);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("wrote"));
    assert!(files(dir.path()).is_empty(), "{:?}", files(dir.path()));
}

#[test]
fn sqrt_fit_writes_coefficients() {
    let dir = tempfile::tempdir().unwrap();
    let out = meanfield(dir.path(), &["sqrt-fit", "--model", "two-state", "--n", "10,20,40,80", "--format", "csv"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let (header, body) = rows(&dir.path().join("sqrt-fit_two-state_coefficients.csv"));
    assert_eq!(header, ["a", "b", "points", "state"]);
    assert_eq!(body[0][2], "4");
    assert!(body[0][0].parse::<f64>().unwrap().is_finite());
}

#[test]
fn list_models_plain_and_json() {
    let out = plain(&["list-models"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("seir") && text.contains("wsn"));

    let out = plain(&["list-models", "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let models = v.as_array().unwrap();
    let wsn = models.iter().find(|m| m["id"] == "wsn").unwrap();
    assert!(!wsn["parameters"].as_array().unwrap().is_empty());
}

#[test]
fn help_exits_zero() {
    assert_eq!(plain(&["--help"]).status.code(), Some(0));
    assert_eq!(plain(&["transient", "--help"]).status.code(), Some(0));
}
