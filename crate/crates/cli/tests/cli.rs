use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scenes() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenes")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nonholo")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scene(name: &str) -> String {
    scenes().join(name).to_string_lossy().into_owned()
}

/// The golden scene with a different convergence threshold.
fn golden_with_eps(dir: &Path, eps: f64) -> String {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(scenes().join("heisenberg.json")).unwrap()).unwrap();
    v["numerics"]["eps_conv"] = eps.into();
    let path = dir.join("scene.json");
    fs::write(&path, v.to_string()).unwrap();
    path.to_string_lossy().into_owned()
}

fn csv_rows(path: &Path) -> (String, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().to_string();
    (header, lines.map(|l| l.split(',').map(str::to_string).collect()).collect())
}

#[test]
fn check_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let out = out.to_str().unwrap();
    assert_eq!(code(&run(&["check", "--scene", &scene("heisenberg.json"), "--out", out])), 0);
    let bad = run(&["check", "--scene", &scene("integrable.json"), "--out", out]);
    assert_eq!(code(&bad), 1);
    let text = stdout(&bad);
    assert!(text.lines().any(|l| l.starts_with("transversality") && l.contains("FAIL")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("non_holonomic") && l.contains("FAIL")), "{text}");

    let malformed = tmp.path().join("bad.json");
    fs::write(&malformed, "{\"constraint\": ").unwrap();
    assert_eq!(code(&run(&["check", "--scene", malformed.to_str().unwrap(), "--out", out])), 2);
    let unknown = tmp.path().join("unknown.json");
    let text = fs::read_to_string(scenes().join("heisenberg.json")).unwrap().replacen('{', "{\"colour\": 1,", 1);
    fs::write(&unknown, text).unwrap();
    assert_eq!(code(&run(&["check", "--scene", unknown.to_str().unwrap(), "--out", out])), 2);
    assert_eq!(code(&run(&["check", "--scene", "/no/such/scene.json", "--out", out])), 2);
    assert_eq!(code(&run(&["frobnicate"])), 2);
}

#[test]
fn every_command_writes_one_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let golden = scene("heisenberg.json");
    let cases: Vec<(&str, Vec<&str>, &str)> = vec![
        ("check", vec![], "check.json"),
        ("trace", vec![], "path.csv"),
        ("project", vec!["--starts", "3"], "projection.csv"),
        ("lift", vec!["--to", "0.3,0.1"], "lift.csv"),
    ];
    for (cmd, extra, file) in cases {
        let dir = tmp.path().join(cmd);
        let mut args = vec![cmd, "--scene", &golden, "--out", dir.to_str().unwrap()];
        args.extend(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
        let manifest: Value = serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
        assert_eq!(manifest["command"], cmd);
        assert_eq!(manifest["complete"], true);
        assert_eq!(manifest["outputs"][0]["file"], file);
        assert_eq!(manifest["scene_digest"].as_str().unwrap().len(), 64);
        let manifests =
            fs::read_dir(&dir).unwrap().filter(|e| e.as_ref().unwrap().file_name() == "manifest.json").count();
        assert_eq!(manifests, 1);
    }
    let (header, rows) = csv_rows(&tmp.path().join("trace/path.csv"));
    assert_eq!(header, "s,x1,x2,x3");
    assert!(rows.len() > 100);
    let (_, rows) = csv_rows(&tmp.path().join("project/projection.csv"));
    for r in rows {
        let q: Vec<f64> = r[4..7].iter().map(|c| c.parse().unwrap()).collect();
        assert!((q[0].hypot(q[1]) - 1.0).abs() < 1e-9 && q[2].abs() < 1e-9);
    }
}

#[test]
fn simulate_random_starts_converge() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = golden_with_eps(tmp.path(), 1e-3);
    let out = tmp.path().join("sim");
    let o = run(&["simulate", "--scene", &sc, "--out", out.to_str().unwrap(), "--starts", "5", "--max-time", "200"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout(&o).matches("Converged").count(), 5, "{}", stdout(&o));
    for i in 0..5 {
        let (header, rows) = csv_rows(&out.join(format!("traj_{i:03}.csv")));
        assert_eq!(header, "s,x1,x2,x3,H,theta_hat,phi_base,beta_residual");
        let h: Vec<f64> = rows.iter().map(|r| r[4].parse().unwrap()).collect();
        assert!(h.last().unwrap() < &1e-3);
        assert!(h.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        assert!(rows.iter().all(|r| r.len() == 8 && r[7].parse::<f64>().unwrap() < 1e-9));
    }
}

#[test]
fn simulate_on_path_is_stationary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sim");
    let o = run(&[
        "simulate",
        "--scene",
        &scene("heisenberg.json"),
        "--out",
        out.to_str().unwrap(),
        "--starts",
        "1,0,0;0,1,0",
    ]);
    assert_eq!(code(&o), 0);
    for i in 0..2 {
        let (_, rows) = csv_rows(&out.join(format!("traj_{i:03}.csv")));
        assert_eq!(rows.len(), 1);
    }
}

#[test]
fn unwritable_output_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let file = tmp.path().join("plain");
    fs::write(&file, "x").unwrap();
    let out = file.join("sub");
    let o = run(&["simulate", "--scene", &scene("heisenberg.json"), "--out", out.to_str().unwrap(), "--starts", "1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn simulate_is_deterministic_and_resumable() {
    let tmp = tempfile::tempdir().unwrap();
    let sc = scene("heisenberg.json");
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let args = |d: &Path| {
        vec![
            "simulate".to_string(),
            "--scene".into(),
            sc.clone(),
            "--out".into(),
            d.to_string_lossy().into_owned(),
            "--starts".into(),
            "3".into(),
            "--max-time".into(),
            "20".into(),
            "--seed".into(),
            "11".into(),
        ]
    };
    let run_s = |v: Vec<String>| run(&v.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&run_s(args(&a))), 0);
    assert_eq!(code(&run_s(args(&b))), 0);
    for i in 0..3 {
        let name = format!("traj_{i:03}.csv");
        assert_eq!(fs::read(a.join(&name)).unwrap(), fs::read(b.join(&name)).unwrap());
    }

    let mut again = args(&a);
    again.push("--resume".into());
    let o = run_s(again.clone());
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).contains("up to date"));

    // a damaged output is recomputed, the intact ones are kept
    fs::write(a.join("traj_001.csv"), "damaged").unwrap();
    let o = run_s(again);
    let text = stdout(&o);
    assert!(text.contains("traj_000.csv  kept") && text.contains("traj_002.csv  kept"), "{text}");
    assert!(text.contains("traj_001.csv  Budget"), "{text}");
    assert_eq!(fs::read(a.join("traj_001.csv")).unwrap(), fs::read(b.join("traj_001.csv")).unwrap());

    // a different seed is a different configuration
    let mut other = args(&a);
    other[9] = "12".into();
    other.push("--resume".into());
    assert!(!stdout(&run_s(other)).contains("kept"));
}

#[test]
fn simulate_refuses_failing_scene_without_force() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let o = run(&["simulate", "--scene", &scene("integrable.json"), "--out", out.to_str().unwrap(), "--starts", "1"]);
    assert_eq!(code(&o), 1);
}

fn keys(v: &Value, prefix: &str, acc: &mut Vec<String>) {
    match v {
        Value::Object(m) => {
            for (k, x) in m {
                let p = format!("{prefix}.{k}");
                acc.push(p.clone());
                if !matches!(k.as_str(), "measured" | "tolerance") {
                    keys(x, &p, acc);
                }
            }
        }
        Value::Array(a) => a.iter().for_each(|x| keys(x, &format!("{prefix}[]"), acc)),
        _ => {}
    }
}

#[test]
fn verify_golden_and_flipped() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let o = run(&["verify", "--scene", &scene("heisenberg.json"), "--out", a.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stdout(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(a.join("report.json")).unwrap()).unwrap();
    let checks = report["checks"].as_array().unwrap();
    assert!(checks.iter().filter(|c| c["pass"] == true && c["status"] == "pass").count() >= 8);
    for c in checks {
        for field in ["check", "anchor", "pass", "measured", "tolerance", "witness"] {
            assert!(c.get(field).is_some(), "{field} missing in {c}");
        }
    }

    let o = run(&["verify", "--scene", &scene("flipped.json"), "--out", b.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    let flipped: Value = serde_json::from_str(&fs::read_to_string(b.join("report.json")).unwrap()).unwrap();
    let circling = flipped["checks"].as_array().unwrap().iter().find(|c| c["check"] == "circling").unwrap();
    assert_eq!(circling["pass"], false);
    assert!(!circling["witness"].as_array().unwrap().is_empty());

    let (mut ka, mut kb) = (Vec::new(), Vec::new());
    keys(&report, "", &mut ka);
    keys(&flipped, "", &mut kb);
    ka.sort();
    ka.dedup();
    kb.sort();
    kb.dedup();
    assert_eq!(ka, kb);
}

#[test]
fn sweep_trade_off() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("w");
    let o = run(&[
        "sweep",
        "--scene",
        &scene("heisenberg.json"),
        "--out",
        out.to_str().unwrap(),
        "--b-scale",
        "0.5,1,2,0",
        "--starts",
        "2",
        "--max-time",
        "300",
        "--h-target",
        "1e-3",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (header, rows) = csv_rows(&out.join("sweep.csv"));
    assert_eq!(header, "scale,t_target,delta_theta,theta_per_log_h,min_step,status");
    let t: Vec<f64> = rows[..3].iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(t[0] > t[1] && t[1] > t[2], "{t:?}");
    assert!(rows[..3].iter().all(|r| r[3].parse::<f64>().unwrap() > 0.0 && r[5] == "converged"));
    assert_eq!(rows[3][5], "no convergence");
    assert!(rows[3][1].is_empty());
    let script = fs::read_to_string(out.join("sweep.gp")).unwrap();
    assert!(script.contains("splot 'sweep_00.csv'") && out.join("sweep_03.csv").exists());
}

#[test]
fn sweep_rejects_empty_scales() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("w");
    let o = run(&["sweep", "--scene", &scene("heisenberg.json"), "--out", out.to_str().unwrap(), "--b-scale", ""]);
    assert_eq!(code(&o), 2);
    let o = run(&["sweep", "--scene", &scene("heisenberg.json"), "--out", out.to_str().unwrap(), "--b-scale", "1,-1"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn lift_around_the_base_origin() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("l");
    let o = run(&[
        "lift",
        "--scene",
        &scene("heisenberg.json"),
        "--out",
        out.to_str().unwrap(),
        "--starts",
        "1.2,0,0",
        "--turns",
        "1",
    ]);
    assert_eq!(code(&o), 0);
    let (header, rows) = csv_rows(&out.join("lift.csv"));
    assert_eq!(header, "s,x1,x2,x3,f,g,H,beta_residual");
    let h: Vec<f64> = rows.iter().map(|r| r[6].parse().unwrap()).collect();
    assert!(h.iter().all(|v| (v - 0.1936).abs() < 1e-8));
    // a horizontal loop around the base origin picks up holonomy
    let last = rows.last().unwrap();
    let end = (last[1].parse::<f64>().unwrap(), last[2].parse::<f64>().unwrap());
    assert!((end.1.atan2(end.0)).abs() > 0.1);
    let o = run(&["lift", "--scene", &scene("heisenberg.json"), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}
