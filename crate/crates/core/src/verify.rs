//! Executable checks of the field's guarantees, collected into a report.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calc3::{factor_tau_at, to_array, triple, Vec3};
use crate::connection::{first_return, parallel_project, psi};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flow::{simulate_gvf, winding_flow_period, IntegratorConfig, SimOptions, Trajectory};
use crate::gvf::{linear_fit, GuidingField};
use crate::scene::{wrap_angle, BaseDraw, Diagnostic, Scene, ON_PATH_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
    Skipped,
}

/// One verified property with its measurements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub check: String,
    /// The property being checked, in words.
    pub anchor: String,
    pub pass: bool,
    pub status: Status,
    pub measured: BTreeMap<String, f64>,
    pub tolerance: BTreeMap<String, f64>,
    pub witness: Vec<Vec<f64>>,
    #[serde(default)]
    pub detail: String,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl CheckResult {
    pub fn new(check: &str, anchor: &str) -> Self {
        Self {
            check: check.into(),
            anchor: anchor.into(),
            pass: false,
            status: Status::Fail,
            measured: BTreeMap::new(),
            tolerance: BTreeMap::new(),
            witness: Vec::new(),
            detail: String::new(),
            warnings: Vec::new(),
        }
    }

    /// Records a measurement; non-finite values become warnings so the report
    /// stays valid JSON.
    pub fn measure(&mut self, key: &str, value: f64) -> &mut Self {
        if value.is_finite() {
            self.measured.insert(key.into(), value);
        } else {
            self.warnings.push(format!("{key} is {value}"));
        }
        self
    }

    pub fn tol(&mut self, key: &str, value: f64) -> &mut Self {
        self.tolerance.insert(key.into(), value);
        self
    }

    pub fn verdict(mut self, pass: bool) -> Self {
        self.pass = pass;
        self.status = if pass { Status::Pass } else { Status::Fail };
        self
    }

    fn with_status(mut self, status: Status) -> Self {
        self.status = status;
        self.pass = status != Status::Fail && status != Status::Skipped;
        self
    }

    /// Whether the check counts against the overall verdict.
    pub fn applicable(&self) -> bool {
        matches!(self.status, Status::Pass | Status::Fail)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub version: String,
    pub seed: u64,
    pub pass: bool,
    pub checks: Vec<CheckResult>,
    pub notes: Vec<String>,
}

impl VerificationReport {
    pub fn new(seed: u64, checks: Vec<CheckResult>) -> Self {
        let pass = checks.iter().all(|c| c.status != Status::Fail && c.status != Status::Skipped);
        Self {
            version: env!("CARGO_PKG_VERSION").into(),
            seed,
            pass,
            checks,
            notes: vec!["circling is measured through the angle of the parallel projection on the traced path; \
                 it diverges together with the chart angle but the rates differ by a bounded distortion"
                .into()],
        }
    }

    pub fn get(&self, name: &str) -> Option<&CheckResult> {
        self.checks.iter().find(|c| c.check == name)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Invalid(e.to_string()))
    }
}

/// Slack allowed on the decrease of `H` between samples.
pub const DECREASE_SLACK: f64 = 1e-12;
/// Slack allowed on the increase of the projected angle (projection accuracy).
pub const THETA_SLACK: f64 = 1e-8;

/// `H` strictly decreasing and final `H < eps`.
pub fn verify_convergence(traj: &Trajectory, eps: f64) -> CheckResult {
    let mut c = CheckResult::new("convergence", "H decreases strictly along the trajectory and reaches the path");
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut witness = None;
    for w in traj.samples.windows(2) {
        if w[0].h <= DECREASE_SLACK {
            continue;
        }
        let rise = w[1].h - w[0].h;
        if rise > worst {
            worst = rise;
        }
        if rise >= 0.0 && witness.is_none() {
            witness = Some(vec![w[1].s, w[1].p[0], w[1].p[1], w[1].p[2], w[1].h]);
        }
    }
    let last = traj.last();
    c.measure("h_start", traj.samples[0].h).measure("h_end", last.h).measure("s_end", last.s);
    if worst > f64::NEG_INFINITY {
        c.measure("max_step_change", worst);
    }
    c.tol("eps_conv", eps).tol("decrease_slack", DECREASE_SLACK);
    c.witness.extend(witness.clone());
    let pass = witness.is_none() && last.h < eps;
    c.verdict(pass)
}

/// Projected angle non-decreasing after the first 5% of samples, total
/// advance at least `min_advance`, and a positive fit of the advance against
/// `ln H0 - ln H` with `R^2 > 0.5`.
pub fn verify_circling(traj: &Trajectory, min_advance: f64) -> Result<CheckResult> {
    let pts: Vec<(f64, f64, f64, [f64; 3])> = traj.theta_samples().map(|(s, t)| (s.s, s.h, t, s.p)).collect();
    if pts.len() < 10 {
        return Err(Error::InsufficientSamples { have: pts.len(), need: 10 });
    }
    let mut c = CheckResult::new(
        "circling",
        "projected angle on the path increases without bound, at least logarithmically in 1/H",
    );
    let skip = pts.len() / 20;
    let mut max_drop: f64 = 0.0;
    for w in pts[skip..].windows(2) {
        let drop = w[0].2 - w[1].2;
        if drop > max_drop {
            max_drop = drop;
        }
        if drop > THETA_SLACK && c.witness.is_empty() {
            let p = w[1].3;
            c.witness.push(vec![w[1].0, p[0], p[1], p[2], w[1].2]);
        }
    }
    let total = pts.last().unwrap().2 - pts[0].2;
    let h0 = pts[0].1;
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        pts.iter().filter(|p| p.1 > 0.0).map(|p| ((h0 / p.1).ln(), p.2 - pts[0].2)).unzip();
    let (slope, _, r2) = if xs.len() >= 3 { linear_fit(&xs, &ys) } else { (f64::NAN, 0.0, 0.0) };
    c.measure("delta_theta", total)
        .measure("max_decrease", max_drop)
        .measure("log_slope", slope)
        .measure("r2", r2)
        .measure("ln_h_ratio", xs.last().copied().unwrap_or(0.0));
    c.tol("min_advance", min_advance).tol("decrease_slack", THETA_SLACK).tol("min_r2", 0.5);
    let monotone = max_drop <= THETA_SLACK;
    let pass = monotone && total >= min_advance && slope > 0.0 && r2 > 0.5;
    if !monotone {
        c.warnings.push("projected angle decreases".into());
    }
    Ok(c.verdict(pass))
}

/// Positive projected-angle advance over one base revolution of the winding
/// flow at every start, increasing with the start's `H`.
pub fn verify_helix(gf: &GuidingField, starts: &[Vec3], cfg: &IntegratorConfig) -> Result<CheckResult> {
    let scene = gf.scene();
    let mut c = CheckResult::new(
        "helix",
        "winding flow advances the projected angle over one base revolution, more so farther from the path",
    );
    let mut runs = Vec::new();
    for s in starts {
        let h = scene.lyapunov(s)?;
        if h < ON_PATH_TOL * ON_PATH_TOL {
            c.warnings.push(format!("start {:?} lies on the path and is excluded", to_array(s)));
            continue;
        }
        runs.push((h, winding_flow_period(gf, *s, cfg)?.delta_theta, *s));
    }
    runs.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (i, (h, d, _)) in runs.iter().enumerate() {
        c.measure(&format!("h_{i}"), *h).measure(&format!("delta_theta_{i}"), *d);
    }
    let positive = runs.iter().all(|r| r.1 > 0.0);
    let monotone = runs.windows(2).all(|w| w[1].1 > w[0].1);
    for r in runs.iter().filter(|r| r.1 <= 0.0) {
        c.witness.push(vec![r.2.x, r.2.y, r.2.z, r.1]);
    }
    c.tol("min_delta_theta", 0.0);
    Ok(c.verdict(!runs.is_empty() && positive && monotone))
}

/// Sampling of transverse disks for [`verify_obstruction`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObstructionGrid {
    pub disks: usize,
    pub rings: usize,
    pub spokes: usize,
    /// Inner hole radius as a fraction of `delta`.
    pub hole: f64,
    /// Outer radius as a fraction of `delta`.
    pub outer: f64,
}

impl Default for ObstructionGrid {
    fn default() -> Self {
        Self { disks: 8, rings: 10, spokes: 20, hole: 0.05, outer: 0.95 }
    }
}

enum FiberAngle<'a> {
    Analytic(&'a Expr),
    Projected,
}

impl FiberAngle<'_> {
    fn at(&self, scene: &Scene, p: &Vec3) -> Result<f64> {
        match self {
            FiberAngle::Analytic(e) => Ok(e.eval(to_array(p))?),
            FiberAngle::Projected => scene.theta_on_path(&parallel_project(scene, p)?),
        }
    }
}

/// Smallest accepted `|d theta x beta| / (|d theta| |beta|)` on the path.
pub const ANGLE_TRANSVERSALITY_TOL: f64 = 1e-3;

fn angle_gradient(angle: &FiberAngle, scene: &Scene, p: &Vec3, step: f64) -> Result<Vec3> {
    let mut g = Vec3::zeros();
    for i in 0..3 {
        let mut e = Vec3::zeros();
        e[i] = step;
        g[i] = wrap_angle(angle.at(scene, &(p + e))? - angle.at(scene, &(p - e))?) / (2.0 * step);
    }
    Ok(g)
}

/// Point with base coordinates `z` and analytic fiber angle `angle`.
fn chart_point(scene: &Scene, chart: &Expr, guess: &Vec3, z: [f64; 2], angle: f64) -> Result<Vec3> {
    let mut p = *guess;
    let mut history = Vec::new();
    for _ in 0..50 {
        let jet = scene.path.jet(&p)?;
        let (a, ga) = chart.eval_grad(to_array(&p))?;
        let r = Vec3::new(jet.f - z[0], jet.g - z[1], wrap_angle(a - angle));
        history.push(r.amax());
        if r.amax() < 1e-12 {
            return Ok(p);
        }
        let m =
            nalgebra::Matrix3::from_rows(&[jet.grad_f.transpose(), jet.grad_g.transpose(), Vec3::from(ga).transpose()]);
        let Some(step) = m.lu().solve(&r) else { break };
        p -= step;
    }
    Err(Error::NoConvergence { residuals: history })
}

/// On transverse disks where `dH(X)` has one strict sign, the fiber-angle
/// derivative along `X` must take both signs (or vanish) somewhere.
pub fn verify_obstruction(gf: &GuidingField, chart: Option<&Expr>, grid: &ObstructionGrid) -> Result<CheckResult> {
    let scene = gf.scene();
    let delta = scene.delta();
    let angle = match chart {
        Some(e) => FiberAngle::Analytic(e),
        None => FiberAngle::Projected,
    };
    let mut c = CheckResult::new(
        "obstruction",
        "a constraint-tangent field cannot have sign-definite dH and fiber-angle rate on a transverse disk",
    );
    if grid.hole >= 0.5 {
        c.warnings.push(format!("InsufficientResolution: hole radius {} delta may hide the zero set", grid.hole));
    }
    let step = match angle {
        FiberAngle::Analytic(_) => 1e-6,
        FiberAngle::Projected => 1e-5,
    };
    let mut applicable = true;
    let mut worst_transverse = f64::INFINITY;
    let mut disks_ok = 0usize;
    let mut points = 0usize;
    for k in 0..grid.disks {
        let theta_bar = TAU * k as f64 / grid.disks as f64;
        let mut dh_pos = false;
        let mut dh_neg = false;
        let mut dh_zero = false;
        let mut rates = Vec::with_capacity(grid.rings * grid.spokes);
        let anchor = match angle {
            FiberAngle::Analytic(e) => {
                let mut best = (f64::INFINITY, scene.polyline.node(0));
                for i in 0..scene.polyline.len() {
                    let n = scene.polyline.node(i);
                    let d = wrap_angle(e.eval(to_array(&n))? - theta_bar).abs();
                    if d < best.0 {
                        best = (d, n);
                    }
                }
                best.1
            }
            FiberAngle::Projected => scene.path.find_on_path(&scene.polyline.point_at(theta_bar))?,
        };
        // the fiber angle must be transverse to the constraint on the path
        let grad = angle_gradient(&angle, scene, &anchor, step)?;
        let v = scene.constraint.riesz(&anchor)?;
        let transverse = grad.cross(&v).norm() / (grad.norm() * v.norm()).max(1e-300);
        worst_transverse = worst_transverse.min(transverse);
        for i in 0..grid.rings {
            let r = delta * (grid.hole + (grid.outer - grid.hole) * i as f64 / (grid.rings - 1).max(1) as f64);
            for j in 0..grid.spokes {
                let a = TAU * j as f64 / grid.spokes as f64;
                let z = [r * a.cos(), r * a.sin()];
                let p = match &angle {
                    FiberAngle::Analytic(e) => {
                        let theta = e.eval(to_array(&anchor))?;
                        chart_point(scene, e, &anchor, z, theta_bar + wrap_angle(theta - theta_bar))?
                    }
                    FiberAngle::Projected => psi(scene, &anchor, z, 1.0).map_err(|_| Error::ChartUnavailable)?,
                };
                let e = gf.evaluate(&p)?;
                let dh = gf.dh_along(&p)?;
                if dh > 0.0 {
                    dh_pos = true;
                } else if dh < 0.0 {
                    dh_neg = true;
                } else {
                    dh_zero = true;
                }
                let tau = step / e.x.norm().max(1e-300);
                let plus = angle.at(scene, &(p + e.x * tau))?;
                let minus = angle.at(scene, &(p - e.x * tau))?;
                rates.push(wrap_angle(plus - minus) / (2.0 * tau));
                points += 1;
            }
        }
        if dh_zero || (dh_pos && dh_neg) {
            applicable = false;
        }
        let scale = rates.iter().fold(0.0f64, |m, r| m.max(r.abs()));
        let has_pos = rates.iter().any(|&r| r > 0.0);
        let has_neg = rates.iter().any(|&r| r < 0.0);
        let near_zero = rates.iter().any(|&r| r.abs() < 1e-6 * scale);
        if (has_pos && has_neg) || near_zero {
            disks_ok += 1;
        } else {
            c.witness.push(vec![anchor.x, anchor.y, anchor.z, theta_bar]);
        }
    }
    c.measure("disks", grid.disks as f64)
        .measure("disks_with_sign_change", disks_ok as f64)
        .measure("points", points as f64);
    c.measure("min_angle_transversality", worst_transverse);
    c.tol("near_zero_rate", 1e-6).tol("min_angle_transversality", ANGLE_TRANSVERSALITY_TOL);
    if worst_transverse < ANGLE_TRANSVERSALITY_TOL {
        c.warnings.push("fiber angle differential is parallel to the constraint on the path; the angle is not a valid coordinate for this test".into());
        return Ok(c.with_status(Status::NotApplicable));
    }
    if !applicable {
        c.warnings.push("dH along the field is not sign-definite off the path; nothing to test".into());
        return Ok(c.with_status(Status::NotApplicable));
    }
    Ok(c.verdict(disks_ok == grid.disks))
}

/// [`verify_duality_with`] using the true cross product.
pub fn verify_duality(seed: u64, trials: usize) -> CheckResult {
    verify_duality_with(seed, trials, |a, b| a.cross(b))
}

/// Random-instance check of the wedge/cross duality, tangency of `V x tau`
/// and the factorization round trip, with a pluggable cross product.
pub fn verify_duality_with<C>(seed: u64, trials: usize, cross: C) -> CheckResult
where
    C: Fn(&Vec3, &Vec3) -> Vec3,
{
    let mut c = CheckResult::new(
        "duality",
        "wedge of two 1-forms is dual to their cross product; V x tau is tangent and factors back",
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rand_vec =
        |rng: &mut ChaCha8Rng| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
    let (mut e_dual, mut e_tan, mut e_fact): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..trials {
        let (t1, t2, u, v, vb) =
            (rand_vec(&mut rng), rand_vec(&mut rng), rand_vec(&mut rng), rand_vec(&mut rng), rand_vec(&mut rng));
        let wedge = t1.dot(&u) * t2.dot(&v) - t1.dot(&v) * t2.dot(&u);
        let d = (wedge - triple(&cross(&t1, &t2), &u, &v)).abs() / (t1.norm() * t2.norm() * u.norm() * v.norm());
        let x = cross(&vb, &t1);
        let t = vb.dot(&x).abs() / (vb.norm_squared() * t1.norm());
        let f = match factor_tau_at(&vb, &x, 1e-10) {
            Ok(tau) => (cross(&vb, &tau) - x).norm() / x.norm().max(1e-300),
            Err(_) => f64::INFINITY,
        };
        let worst = d.max(t).max(f);
        if !(worst <= 1e-10) && c.witness.len() < 4 {
            c.witness.push([t1.as_slice(), t2.as_slice(), vb.as_slice()].concat());
        }
        e_dual = e_dual.max(d);
        e_tan = e_tan.max(t);
        e_fact = e_fact.max(f);
    }
    c.measure("trials", trials as f64)
        .measure("max_duality_error", e_dual)
        .measure("max_tangency_error", e_tan)
        .measure("max_factorization_error", e_fact);
    c.tol("relative", 1e-10);
    if trials == 0 {
        c.warnings.push("weak: no trials were run".into());
    }
    let pass = e_dual <= 1e-10 && e_tan <= 1e-10 && e_fact <= 1e-10;
    c.verdict(pass)
}

/// Normalized `|beta(X)|` at random tube points.
pub fn verify_tangency<R: Rng>(gf: &GuidingField, samples: usize, rng: &mut R) -> Result<CheckResult> {
    let mut c = CheckResult::new("tangency", "the field satisfies the constraint at every point");
    let mut worst: f64 = 0.0;
    let pts = gf.scene().sample_tube(rng, samples, BaseDraw::Disk);
    for s in &pts {
        let r = gf.evaluate(&s.p)?.tangency_residual();
        if r > worst {
            worst = r;
            if r > 1e-9 {
                c.witness = vec![to_array(&s.p).to_vec()];
            }
        }
    }
    c.measure("samples", pts.len() as f64).measure("max_residual", worst);
    c.tol("max_residual", 1e-9);
    Ok(c.verdict(worst < 1e-9))
}

fn diagnostic_check(d: &Diagnostic, anchor: &str) -> CheckResult {
    let mut c = CheckResult::new(&d.name, anchor);
    c.measure("value", d.measured);
    c.tol("threshold", d.threshold);
    c.witness = d.witnesses.iter().map(|w| w.to_vec()).collect();
    c.detail = d.detail.clone();
    c.verdict(d.pass)
}

fn assumption_anchor(name: &str) -> &'static str {
    match name {
        "kernel_rank" => "the constraint form never vanishes in the tube",
        "transversality" => "the path is transverse to the constraint distribution",
        "non_holonomic" => "the constraint is completely non-holonomic (lambda_beta keeps one sign, away from 0)",
        "gradient_ratio" => "|grad H|^2 / H stays within finite positive bounds in the tube",
        "regular_level_set" => "the path is a regular level set of (f, g)",
        "weight_sign" => "the winding weight has the circling sign everywhere",
        "b_positive" => "the convergence weight is positive off the path",
        "b_over_h_bounded" => "the convergence weight is bounded by a multiple of H",
        _ => "scene diagnostic",
    }
}

/// Θ idempotence, ψ round trip and a positive first return.
pub fn verify_connection(scene: &Scene, samples: usize, seed: u64) -> Result<CheckResult> {
    let mut c = CheckResult::new(
        "connection",
        "parallel projection is idempotent, inverts psi, and the fiber flow returns to its section",
    );
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idem: f64 = 0.0;
    let mut round: f64 = 0.0;
    for s in scene.sample_tube(&mut rng, samples, BaseDraw::Disk) {
        let q = parallel_project(scene, &s.p)?;
        idem = idem.max((parallel_project(scene, &q)? - q).norm());
        let z = [s.base[0] * 0.9, s.base[1] * 0.9];
        for t in [0.25, 0.5, 1.0] {
            let p = psi(scene, &q, z, t)?;
            round = round.max((parallel_project(scene, &p)? - q).norm());
        }
    }
    let anchor = scene.polyline.node(0);
    let ret = first_return(scene, &anchor, [0.0, 0.0])?;
    let closure = (ret.end - ret.start).norm();
    c.measure("idempotence", idem)
        .measure("psi_round_trip", round)
        .measure("return_time", ret.time)
        .measure("return_gap", closure);
    c.tol("idempotence", 2e-8).tol("psi_round_trip", 1e-7).tol("return_gap", 1e-7);
    Ok(c.verdict(idem < 2e-8 && round < 1e-7 && ret.time > 0.0 && closure < 1e-7))
}

/// Settings for [`run_suite`].
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteConfig {
    pub integrator: IntegratorConfig,
    pub starts: usize,
    pub seed: u64,
    pub duality_trials: usize,
    pub tangency_samples: usize,
    pub weight_samples: usize,
    /// Helix starts at `H = level * delta^2`.
    pub helix_levels: Vec<f64>,
    pub obstruction: ObstructionGrid,
    pub sim: SimOptions,
    pub min_circling_advance: f64,
}

impl SuiteConfig {
    pub fn from_scene(scene: &Scene) -> Self {
        let n = &scene.numerics;
        Self {
            integrator: IntegratorConfig::from_numerics(n),
            starts: n.suite_starts,
            seed: n.rng_seed,
            duality_trials: 1000,
            tangency_samples: 1000,
            weight_samples: n.weight_samples,
            helix_levels: vec![0.01, 0.04, 0.16],
            obstruction: ObstructionGrid::default(),
            sim: SimOptions::from_scene(scene),
            min_circling_advance: n.min_circling_advance,
        }
    }
}

/// Everything in one report. Downstream checks are skipped when the scene
/// fails its assumptions.
pub fn run_suite(gf: &GuidingField, chart: Option<&Expr>, cfg: &SuiteConfig) -> Result<VerificationReport> {
    let scene = gf.scene();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::new();

    let diag = scene.check_assumptions(&mut rng);
    for d in &diag.checks {
        checks.push(diagnostic_check(d, assumption_anchor(&d.name)));
    }
    checks.push(verify_duality(cfg.seed, cfg.duality_trials));

    let downstream = [
        "weight_sign",
        "b_positive",
        "b_over_h_bounded",
        "tangency",
        "convergence",
        "circling",
        "helix",
        "obstruction",
        "connection",
    ];
    if !diag.passed() {
        for name in downstream {
            let mut c = CheckResult::new(name, assumption_anchor(name));
            c.warnings.push("skipped: scene fails its assumptions".into());
            checks.push(c.with_status(Status::Skipped));
        }
        return Ok(VerificationReport::new(cfg.seed, checks));
    }

    let weights = gf.check_weights(cfg.weight_samples, &mut rng);
    for d in &weights.checks {
        checks.push(diagnostic_check(d, assumption_anchor(&d.name)));
    }
    checks.push(verify_tangency(gf, cfg.tangency_samples, &mut rng)?);

    let d2 = scene.delta() * scene.delta();
    let starts: Vec<Vec3> = scene
        .sample_tube(&mut rng, cfg.starts, BaseDraw::Annulus { lo: 0.04 * d2, hi: 0.8 * d2 })
        .iter()
        .map(|s| s.p)
        .collect();
    let mut trajectories = Vec::with_capacity(starts.len());
    for t in simulate_gvf(gf, &starts, &cfg.integrator, &cfg.sim) {
        trajectories.push(t?);
    }
    checks.push(aggregate("convergence", trajectories.iter().map(|t| Ok(verify_convergence(t, cfg.sim.eps_conv))))?);
    checks.push(aggregate("circling", trajectories.iter().map(|t| verify_circling(t, cfg.min_circling_advance)))?);

    let node = scene.polyline.node(0);
    let mut helix_starts = Vec::new();
    for level in &cfg.helix_levels {
        helix_starts.push(scene.path.solve_level(&node, [(level * d2).sqrt(), 0.0], 1e-13, 30)?);
    }
    checks.push(verify_helix(gf, &helix_starts, &cfg.integrator)?);
    checks.push(verify_obstruction(gf, chart, &cfg.obstruction)?);
    checks.push(verify_connection(scene, 8, cfg.seed)?);
    Ok(VerificationReport::new(cfg.seed, checks))
}

/// Combines per-trajectory results: passes when all pass; measurements are
/// prefixed by the trajectory index.
fn aggregate<I>(name: &str, results: I) -> Result<CheckResult>
where
    I: Iterator<Item = Result<CheckResult>>,
{
    let mut out: Option<CheckResult> = None;
    let mut all = true;
    for (i, r) in results.enumerate() {
        let r = r?;
        let o = out.get_or_insert_with(|| {
            let mut c = CheckResult::new(name, &r.anchor);
            c.tolerance = r.tolerance.clone();
            c
        });
        for (k, v) in &r.measured {
            o.measured.insert(format!("{i}.{k}"), *v);
        }
        if !r.pass {
            all = false;
            o.witness.extend(r.witness.iter().cloned());
        }
        o.warnings.extend(r.warnings.iter().map(|w| format!("{i}: {w}")));
    }
    let c = out.unwrap_or_else(|| CheckResult::new(name, "no trajectories"));
    let any = !c.measured.is_empty();
    Ok(c.verdict(all && any))
}
