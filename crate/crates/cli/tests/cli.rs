use std::path::Path;
use std::process::{Command, Output};

fn lamination(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lamination")).args(args).current_dir(cwd).output().expect("spawn binary")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn write_cfg(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

const SMOKE: &str = "n_list = 1, 2\nhalvings = 0\nrings = 16\nlevels_per_wrap = 16\n";

fn list(dir: &Path, ext: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|x| x == ext) {
                out.push(p.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn verify_metric_passes_for_the_standard_profile() {
    let tmp = tempfile::tempdir().unwrap();
    let o = lamination(&["verify-metric", "--out", "v"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("v/verify_metric.json")).unwrap()).unwrap();
    assert_eq!(report["all_pass"], true);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("scalar curvature: min 0.5"), "{stdout}");
}

#[test]
fn verify_metric_flags_bad_profiles() {
    let tmp = tempfile::tempdir().unwrap();
    // constant warp: the height slice is not strictly stable
    let flat = write_cfg(tmp.path(), "flat.cfg", "profile = cosine\ncosine_coefficients = 1\n");
    assert_ne!(code(&lamination(&["verify-metric", "--config", &flat, "--out", "a"], tmp.path())), 0);
    // inverted profile: minimum at 0 instead of a maximum of curvature
    let inv = write_cfg(tmp.path(), "inv.cfg", "profile = cosine\ncosine_coefficients = 1.25, 0, -0.25\n");
    assert_ne!(code(&lamination(&["verify-metric", "--config", &inv, "--out", "b"], tmp.path())), 0);
}

#[test]
fn invalid_config_exits_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = write_cfg(tmp.path(), "bad.cfg", "eps0 = 2\n");
    let o = lamination(&["run", "--config", &bad], tmp.path());
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("eps0"));
    let unknown = write_cfg(tmp.path(), "unknown.cfg", "speed = 3\n");
    assert_eq!(code(&lamination(&["verify-metric", "--config", &unknown], tmp.path())), 1);
}

#[test]
fn run_export_and_diagnose() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_cfg(tmp.path(), "smoke.cfg", SMOKE);
    let o = lamination(&["run", "--config", &cfg, "--out", "r1"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r1 = tmp.path().join("r1");
    for f in ["manifest.json", "lamination_report.json", "area_histories.csv", "crossing_heights.csv"] {
        assert!(r1.join(f).exists(), "{f}");
    }

    // same config, same manifest apart from out_dir
    assert_eq!(code(&lamination(&["run", "--config", &cfg, "--out", "r2"], tmp.path())), 0);
    let m1 = std::fs::read_to_string(r1.join("manifest.json")).unwrap();
    let m2 = std::fs::read_to_string(tmp.path().join("r2/manifest.json")).unwrap();
    let strip = |s: &str| {
        let mut v: serde_json::Value = serde_json::from_str(s).unwrap();
        v["config"].as_object_mut().unwrap().remove("out_dir");
        v
    };
    assert_eq!(strip(&m1), strip(&m2));

    // one stage per n plus core and assembled
    assert_eq!(code(&lamination(&["export", "r1", "--out", "all"], tmp.path())), 0);
    let objs = list(&tmp.path().join("all"), "obj");
    assert_eq!(objs.len(), 2 * 3, "{objs:?}");
    assert_eq!(list(&tmp.path().join("all"), "json").len(), objs.len() + 2);

    assert_eq!(code(&lamination(&["export", "r1", "--out", "csv", "--format", "csv"], tmp.path())), 0);
    assert!(list(&tmp.path().join("csv"), "obj").is_empty());
    assert!(tmp.path().join("csv/area_histories.csv").exists());

    std::fs::remove_file(r1.join("lamination_report.json")).unwrap();
    let o = lamination(&["diagnose", "r1"], tmp.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(r1.join("lamination_report.json")).unwrap()).unwrap();
    let entries = report["entries"].as_array().unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().all(|e| e["census"]["count"].as_u64().unwrap() >= 2));
}

#[test]
fn export_reports_missing_or_tampered_runs() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::create_dir(tmp.path().join("empty")).unwrap();
    assert_eq!(code(&lamination(&["export", "empty"], tmp.path())), 3);

    let cfg = write_cfg(tmp.path(), "one.cfg", "n_list = 1\nhalvings = 0\nrings = 16\nlevels_per_wrap = 16\n");
    assert_eq!(code(&lamination(&["run", "--config", &cfg, "--out", "r"], tmp.path())), 0);
    let obj = tmp.path().join("r/n1/core.obj");
    let mut text = std::fs::read_to_string(&obj).unwrap();
    text.push_str("# edited\n");
    std::fs::write(&obj, text).unwrap();
    let o = lamination(&["export", "r"], tmp.path());
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("core.obj"));
}
