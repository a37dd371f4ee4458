use nonholo::calc3::OneForm;
use nonholo::flow::{simulate_one, IntegratorConfig, Sample, SimOptions, Termination, Trajectory};
use nonholo::gvf::{GuidingField, WeightSpec};
use nonholo::scene::{ImplicitLoop, Numerics, PfaffianConstraint, Scene};
use nonholo::scene_file::SceneFile;
use nonholo::verify::*;
use nonholo::{Expr, Vec3};

fn golden() -> (Scene, Expr) {
    let l = SceneFile::heisenberg().load().unwrap();
    (l.scene, l.chart.unwrap())
}

fn run(gf: &GuidingField, start: Vec3, t: f64) -> Trajectory {
    let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, t);
    simulate_one(gf, start, &cfg, &SimOptions { eps_conv: 1e-8, theta_every: 10 }).unwrap()
}

fn helix_starts(scene: &Scene) -> Vec<Vec3> {
    let node = scene.polyline.node(0);
    [0.0025f64, 0.01, 0.04].iter().map(|h| scene.path.solve_level(&node, [h.sqrt(), 0.0], 1e-13, 30).unwrap()).collect()
}

#[test]
fn convergence_passes_with_reachable_threshold() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let tr = run(&gf, Vec3::new(1.2, 0.0, 0.1), 200.0);
    let c = verify_convergence(&tr, 1e-3);
    assert!(c.pass, "{c:?}");
    // the strict threshold is out of reach in this time
    assert!(!verify_convergence(&tr, 1e-8).pass);
}

#[test]
fn winding_only_fails_on_decrease() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap().winding_only();
    let tr = run(&gf, Vec3::new(1.1, 0.0, 0.05), 5.0);
    let c = verify_convergence(&tr, 1e-3);
    assert!(!c.pass && !c.witness.is_empty());
}

#[test]
fn start_on_path_is_vacuous_pass() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let tr = run(&gf, s.polyline.node(10), 10.0);
    assert!(verify_convergence(&tr, 1e-8).pass);
}

#[test]
fn default_weights_circle() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let tr = run(&gf, Vec3::new(1.2, 0.0, 0.2), 500.0);
    let c = verify_circling(&tr, 0.5).unwrap();
    assert!(c.pass, "{c:?}");
    assert!(c.measured["log_slope"] > 0.1 && c.measured["r2"] > 0.99);
}

#[test]
fn bounded_angle_fails_circling() {
    // a constructed trajectory whose projected angle saturates while H decays
    let samples: Vec<Sample> = (0..400)
        .map(|i| {
            let s = i as f64 * 0.05;
            Sample {
                s,
                p: [1.0, 0.0, 0.0],
                h: 0.1 * (-s).exp(),
                theta_hat: Some(1.0 - (-s).exp()),
                phi_base: 0.0,
                beta_residual: 0.0,
            }
        })
        .collect();
    let tr = Trajectory { samples, termination: Termination::Budget, min_step: 0.05 };
    let c = verify_circling(&tr, 4.0 * std::f64::consts::PI).unwrap();
    assert!(!c.pass);
    assert!(c.measured["delta_theta"] < 1.0);
}

#[test]
fn flipped_sign_fails_circling_with_witness() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::custom("lambda", "H").unwrap()).unwrap();
    let tr = run(&gf, Vec3::new(1.2, 0.0, 0.2), 100.0);
    let c = verify_circling(&tr, 0.5).unwrap();
    assert!(!c.pass);
    assert!(c.measured["delta_theta"] < 0.0);
    assert!(!c.witness.is_empty());
}

#[test]
fn too_few_theta_samples() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let tr = run(&gf, s.polyline.node(0), 1.0);
    assert!(verify_circling(&tr, 0.5).is_err());
}

#[test]
fn helix_positive_and_growing() {
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 1e3);
    let mut starts = helix_starts(&s);
    let c = verify_helix(&gf, &starts, &cfg).unwrap();
    assert!(c.pass, "{c:?}");
    starts.push(s.polyline.node(5));
    let c = verify_helix(&gf, &starts, &cfg).unwrap();
    assert!(c.pass && !c.warnings.is_empty());
}

#[test]
fn mirrored_form_flips_helix() {
    let beta = PfaffianConstraint::new(OneForm::parse(["x2", "-x1", "1"]).unwrap());
    let path = ImplicitLoop {
        f: Expr::parse("x1^2 + x2^2 - 1").unwrap(),
        g: Expr::parse("x3").unwrap(),
        seed: Vec3::new(1.0, 0.0, 0.0),
        tube_radius: 0.5,
    };
    let mirrored = Scene::new(beta, path, Numerics::default()).unwrap();
    let (s, _) = golden();
    let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 1e3);
    let fixed = WeightSpec::custom("-2", "H").unwrap();
    let a = GuidingField::new(&s, &fixed).unwrap();
    let b = GuidingField::new(&mirrored, &fixed).unwrap();
    let start = helix_starts(&s)[1];
    let da = nonholo::flow::winding_flow_period(&a, start, &cfg).unwrap().delta_theta;
    let db = nonholo::flow::winding_flow_period(&b, start, &cfg).unwrap().delta_theta;
    assert!(da > 0.0 && db < 0.0, "{da} {db}");
    assert!(!verify_helix(&b, &helix_starts(&mirrored), &cfg).unwrap().pass);
}

#[test]
fn obstruction_with_analytic_chart() {
    let (s, chart) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let c = verify_obstruction(&gf, Some(&chart), &ObstructionGrid::default()).unwrap();
    assert!(c.pass, "{c:?}");
    assert_eq!(c.measured["points"], 1600.0);
    assert_eq!(c.measured["disks_with_sign_change"], 8.0);
}

#[test]
fn projected_angle_is_tangent_to_constraint_on_path() {
    // radial lifts are horizontal, so the projected angle has d(theta) parallel to beta
    // on the path and cannot serve as the transverse fiber coordinate
    let (s, _) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let grid = ObstructionGrid { disks: 2, rings: 3, spokes: 6, ..ObstructionGrid::default() };
    let c = verify_obstruction(&gf, None, &grid).unwrap();
    assert_eq!(c.status, Status::NotApplicable, "{c:?}");
    assert!(c.measured["min_angle_transversality"] < ANGLE_TRANSVERSALITY_TOL);
    let (_, chart) = golden();
    let c = verify_obstruction(&gf, Some(&chart), &grid).unwrap();
    assert!(c.measured["min_angle_transversality"] > 0.5);
}

#[test]
fn obstruction_gate_and_resolution_warning() {
    let (s, chart) = golden();
    let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
    let c = verify_obstruction(&gf.winding_only(), Some(&chart), &ObstructionGrid::default()).unwrap();
    assert_eq!(c.status, Status::NotApplicable);
    assert!(c.pass);
    let coarse = ObstructionGrid { hole: 0.6, ..ObstructionGrid::default() };
    let c = verify_obstruction(&gf, Some(&chart), &coarse).unwrap();
    assert!(c.warnings.iter().any(|w| w.contains("InsufficientResolution")));
}

#[test]
fn duality_suite() {
    let t = std::time::Instant::now();
    let c = verify_duality(3, 1000);
    assert!(c.pass && t.elapsed().as_secs_f64() < 1.0);
    let bad = verify_duality_with(3, 1000, |a, b| a.cross(b) + Vec3::new(1e-6, 0.0, 0.0));
    assert!(!bad.pass && !bad.witness.is_empty());
    let empty = verify_duality(3, 0);
    assert!(empty.pass && empty.warnings.iter().any(|w| w.contains("weak")));
}

#[test]
fn golden_suite_passes_and_round_trips() {
    let file: SceneFile = SceneFile::from_json(include_str!("../../../scenes/heisenberg.json")).unwrap();
    let l = file.load().unwrap();
    let gf = GuidingField::new(&l.scene, &l.weights).unwrap();
    let cfg = SuiteConfig::from_scene(&l.scene);
    let report = run_suite(&gf, l.chart.as_ref(), &cfg).unwrap();
    let failing: Vec<_> = report.checks.iter().filter(|c| !c.pass).map(|c| &c.check).collect();
    assert!(report.pass, "{failing:?}");
    assert!(report.checks.iter().filter(|c| c.status == Status::Pass).count() >= 8);
    let back = VerificationReport::from_json(&report.to_json()).unwrap();
    assert_eq!(back, report);
    let again = run_suite(&gf, l.chart.as_ref(), &cfg).unwrap();
    assert_eq!(again.to_json(), report.to_json());
}

#[test]
fn integrable_suite_skips_downstream() {
    let mut file = SceneFile::heisenberg();
    file.constraint.beta = ["0".into(), "0".into(), "1".into()];
    file.numerics.tube_samples = 500;
    let l = file.load().unwrap();
    let gf = GuidingField::new(&l.scene, &l.weights).unwrap();
    let report = run_suite(&gf, None, &SuiteConfig::from_scene(&l.scene)).unwrap();
    assert!(!report.pass);
    assert!(!report.get("transversality").unwrap().pass);
    assert!(!report.get("non_holonomic").unwrap().pass);
    assert_eq!(report.get("circling").unwrap().status, Status::Skipped);
    assert_eq!(report.get("duality").unwrap().status, Status::Pass);
}
