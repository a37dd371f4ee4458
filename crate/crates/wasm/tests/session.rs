use nonholo_wasm::core_api::{reference_scene, Session};
use nonholo_wasm::MAX_DRAWN;

fn session() -> Session {
    Session::load(&reference_scene()).unwrap()
}

#[test]
fn reference_scene_passes_checks() {
    let s = session();
    let report: serde_json::Value = serde_json::from_str(&s.check()).unwrap();
    assert!(report["checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
    assert_eq!(s.path().len() % 3, 0);
    assert_eq!(s.delta(), 0.5);
}

#[test]
fn start_point_has_requested_base_offset() {
    let p = session().start_point(1.0, 0.2, -0.1).unwrap();
    let f = p[0] * p[0] + p[1] * p[1] - 1.0;
    assert!((f - 0.2).abs() < 1e-10 && (p[2] + 0.1).abs() < 1e-10);
    assert!((p[1].atan2(p[0]) - 1.0).abs() < 0.2);
}

#[test]
fn simulation_is_thinned_and_circles_forward() {
    let s = session();
    let p = s.start_point(0.0, 0.3, 0.1).unwrap();
    let run = s.simulate([p[0], p[1], p[2]], 100.0, 1.0).unwrap();
    let n = run.h.len();
    assert!(n <= 2 * MAX_DRAWN && n > 100);
    assert_eq!(run.points.len(), 3 * n);
    assert!(run.h[n - 1] < 1e-2 * run.h[0]);
    assert!(run.delta_theta > 0.0);
    assert!(run.theta.iter().any(|t| t.is_finite()));
}

#[test]
fn winding_loop_keeps_h_and_advances() {
    let s = session();
    let p = s.start_point(0.0, 0.2, 0.0).unwrap();
    let run = s.winding_loop([p[0], p[1], p[2]]).unwrap();
    let h0 = run.h[0];
    assert!(run.h.iter().all(|h| (h - h0).abs() < 1e-8));
    assert!(run.delta_theta > 0.0);
}

#[test]
fn bad_scene_is_an_error() {
    assert!(Session::load("{}").is_err());
}
