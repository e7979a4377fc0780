use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn ndnb(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ndnb"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("run ndnb")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(
        o.status.success(),
        "exit {:?}\n{}",
        o.status.code(),
        String::from_utf8_lossy(&o.stderr)
    );
}

/// Value printed on a `<key> = <value> ...` line.
fn printed(text: &str, key: &str) -> f64 {
    let line = text
        .lines()
        .find(|l| l.starts_with(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("no `{key}` line in\n{text}"));
    line[key.len() + 3..]
        .split_whitespace()
        .next()
        .unwrap()
        .parse()
        .unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn column(path: &Path, name: &str) -> Vec<Option<f64>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let idx = r.headers().unwrap().iter().position(|h| h == name).unwrap();
    r.records().map(|rec| rec.unwrap()[idx].parse().ok()).collect()
}

#[test]
fn time_course_separates_schemes() {
    let dir = TempDir::new().unwrap();
    let cyc = ndnb(
        &["time-course", "--model", "cyclic", "--horizon", "0.1"],
        &dir.path().join("c"),
    );
    assert_ok(&cyc);
    let rec = ndnb(
        &["time-course", "--model", "reciprocal", "--horizon", "0.1"],
        &dir.path().join("r"),
    );
    assert_ok(&rec);
    let (c, r) = (stdout(&cyc), stdout(&rec));
    assert!(printed(&c, "t_peak") < 1e-3);
    assert!(printed(&c, "final desensitized fraction") < 0.01);
    assert!((1e-2..=1e-1).contains(&printed(&r, "t_peak")));
    assert!(printed(&r, "final desensitized fraction") > 0.01);

    let csv = dir.path().join("c/time_course.csv");
    let open = column(&csv, "open_fraction");
    assert!(open.len() > 100);
    assert!(open.iter().all(|v| v.is_some_and(|v| (0.0..=1.0).contains(&v))));
    for f in ["time_course.csv", "time_course.svg"] {
        let meta = json(&dir.path().join(format!("c/{f}.meta.json")));
        assert_eq!(meta["command"], "time-course");
        assert_eq!(meta["file_sha256"].as_str().unwrap().len(), 64);
    }
}

#[test]
fn in_vitro_time_course_reaches_full_activation() {
    let dir = TempDir::new().unwrap();
    let o = ndnb(&["time-course", "--env", "in-vitro"], dir.path());
    assert_ok(&o);
    assert!(printed(&stdout(&o), "peak open fraction") > 0.95);
}

#[test]
fn bad_configuration_exits_2() {
    let dir = TempDir::new().unwrap();
    let o = ndnb(&["time-course", "--model", "two-site"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("reciprocal") && err.contains("cyclic"), "{err}");

    let o = ndnb(&["curve", "--model", "twosite"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("two-site"));

    let o = ndnb(&["curve", "--drug", "pancuronium"], dir.path());
    assert_eq!(o.status.code(), Some(2));

    let plan = dir.path().join("plan.json");
    fs::write(&plan, r#"{"mu_grid": []}"#).unwrap();
    let o = ndnb(
        &["sweep", "--model", "two-site", "--plan", plan.to_str().unwrap()],
        &dir.path().join("s"),
    );
    assert_eq!(o.status.code(), Some(2));

    fs::write(&plan, r#"{"mu_grdi": [1.0]}"#).unwrap();
    let o = ndnb(
        &["sweep", "--model", "two-site", "--plan", plan.to_str().unwrap()],
        &dir.path().join("s"),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn cyclic_in_vitro_curves_match_reference_potency() {
    let dir = TempDir::new().unwrap();
    let o = ndnb(
        &["curve", "--env", "in-vitro", "--drug", "cisatracurium"],
        &dir.path().join("cis"),
    );
    assert_ok(&o);
    let hill = json(&dir.path().join("cis/hill.json"));
    let ic50 = hill["IC50"].as_f64().unwrap();
    assert!((ic50 - 10e-9).abs() <= 1e-9, "IC50 = {ic50:e}");

    let o = ndnb(
        &["curve", "--env", "in-vitro", "--drug", "rocuronium"],
        &dir.path().join("roc"),
    );
    assert_ok(&o);
    let gamma = json(&dir.path().join("roc/hill.json"))["gamma_I"].as_f64().unwrap();
    assert!((gamma - 0.67).abs() <= 0.1, "gamma_I = {gamma}");

    let d = column(&dir.path().join("roc/curve.csv"), "D_molar");
    assert!(d.windows(2).all(|w| w[0].unwrap() < w[1].unwrap()));
}

#[test]
fn two_site_sweep_keeps_slopes_near_one() {
    let dir = TempDir::new().unwrap();
    let o = ndnb(&["sweep", "--model", "two-site"], dir.path());
    assert_ok(&o);
    let g = column(&dir.path().join("sweep.csv"), "gamma_I");
    assert_eq!(g.len(), 25);
    for v in g {
        let v = v.unwrap();
        assert!((1.0..=1.2).contains(&v), "gamma_I = {v}");
    }
    assert!(dir.path().join("markers.csv.meta.json").exists());
    assert!(dir.path().join("sweep.svg").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    for sub in ["a", "b"] {
        assert_ok(&ndnb(
            &["curve", "--model", "reciprocal", "--drug", "vecuronium"],
            &dir.path().join(sub),
        ));
    }
    let mut names: Vec<_> = fs::read_dir(dir.path().join("a"))
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 6);
    for n in names {
        let a = fs::read(dir.path().join("a").join(&n)).unwrap();
        let b = fs::read(dir.path().join("b").join(&n)).unwrap();
        assert_eq!(a, b, "{n:?}");
    }
}

#[test]
fn two_site_estimate_objective_in_range() {
    let dir = TempDir::new().unwrap();
    let o = ndnb(&["estimate", "--model", "two-site"], dir.path());
    assert_ok(&o);
    let report = json(&dir.path().join("estimate.json"));
    let f = report["F"].as_f64().unwrap();
    assert!((3.9..=5.9).contains(&f), "F = {f}");
    let iters = column(&dir.path().join("trace.csv"), "F");
    assert!(iters.windows(2).all(|w| w[1].unwrap() <= w[0].unwrap()));
    let params = fs::read_to_string(dir.path().join("estimated_params.json")).unwrap();
    assert!(params.contains("cisatracurium"));
}
