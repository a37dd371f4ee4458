//! One function per subcommand; each returns the process exit code.

use std::fmt::Write as _;

use nonholo::connection::{horizontal_velocity, lift_path, parallel_project, BaseCurve};
use nonholo::flow::{simulate_gvf, IntegratorConfig, SimOptions, Trajectory};
use nonholo::gvf::{linear_fit, GuidingField};
use nonholo::scene::{BaseDraw, Scene};
use nonholo::scene_file::{LoadedScene, SceneFile};
use nonholo::verify::{run_suite, Status, SuiteConfig};
use nonholo::Vec3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::output::{read, sha256_hex, Csv, Opened, OutDir};
use crate::{CliError, Common, VERSION};

pub const TRAJECTORY_COLUMNS: [&str; 8] = ["s", "x1", "x2", "x3", "H", "theta_hat", "phi_base", "beta_residual"];

/// Random starts are drawn with `H` uniform in this range, as fractions of `delta^2`.
const START_RANGE: (f64, f64) = (0.04, 0.8);

struct Loaded {
    file: SceneFile,
    digest: String,
    scene: LoadedScene,
}

fn load(common: &Common) -> Result<Loaded, CliError> {
    let bytes = read(&common.scene)?;
    let digest = sha256_hex(&bytes);
    let text =
        String::from_utf8(bytes).map_err(|_| CliError::Usage(format!("{}: not UTF-8", common.scene.display())))?;
    let mut file = SceneFile::from_json(&text)?;
    if let Some(seed) = common.seed {
        file.numerics.rng_seed = seed;
    }
    let scene = file.load()?;
    Ok(Loaded { file, digest, scene })
}

fn open(common: &Common, command: &str, params: Value, l: &Loaded) -> Result<Opened, CliError> {
    let config = json!({ "command": command, "params": params, "scene": l.file, "version": VERSION });
    let hash = sha256_hex(config.to_string().as_bytes());
    OutDir::open(&common.out, command, hash, l.digest.clone(), common.resume)
}

macro_rules! open_or_return {
    ($e:expr) => {
        match $e? {
            Opened::Fresh(out) => *out,
            Opened::UpToDate(code) => {
                println!("up to date (manifest digests match)");
                return Ok(code);
            }
        }
    };
}

fn rng(scene: &Scene) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(scene.numerics.rng_seed)
}

/// Prints failed assumptions; `false` when the run should stop.
fn precheck(common: &Common, scene: &Scene) -> bool {
    let report = scene.check_assumptions(&mut rng(scene));
    if report.passed() {
        return true;
    }
    for d in report.checks.iter().filter(|d| !d.pass) {
        eprintln!(
            "assumption failed: {} (measured {:e}, threshold {:e}) {}",
            d.name, d.measured, d.threshold, d.detail
        );
    }
    if common.force {
        eprintln!("continuing because of --force");
        true
    } else {
        eprintln!("scene fails its assumptions; rerun with --force to continue anyway");
        false
    }
}

fn parse_point(text: &str) -> Result<Vec3, CliError> {
    let v: Vec<f64> = text
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad point {text:?}; expected x1,x2,x3")))?;
    match v[..] {
        [a, b, c] if v.iter().all(|x| x.is_finite()) => Ok(Vec3::new(a, b, c)),
        _ => Err(CliError::Usage(format!("bad point {text:?}; expected x1,x2,x3"))),
    }
}

/// `N` random tube points or an explicit `;`-separated list.
fn parse_starts(spec: &str, scene: &Scene) -> Result<Vec<Vec3>, CliError> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Err(CliError::Usage("--starts is empty".into()));
    }
    if let Ok(n) = spec.parse::<usize>() {
        if n == 0 {
            return Err(CliError::Usage("--starts must be positive".into()));
        }
        let d2 = scene.delta() * scene.delta();
        let draw = BaseDraw::Annulus { lo: START_RANGE.0 * d2, hi: START_RANGE.1 * d2 };
        return Ok(scene.sample_tube(&mut rng(scene), n, draw).into_iter().map(|s| s.p).collect());
    }
    spec.split(';').filter(|s| !s.trim().is_empty()).map(parse_point).collect()
}

fn integrator(scene: &Scene, max_time: Option<f64>) -> Result<IntegratorConfig, CliError> {
    let mut cfg = IntegratorConfig::from_numerics(&scene.numerics);
    if let Some(t) = max_time {
        if !(t > 0.0 && t.is_finite()) {
            return Err(CliError::Usage(format!("--max-time must be positive, got {t}")));
        }
        cfg.max_time = t;
    }
    Ok(cfg)
}

pub fn trajectory_csv(t: &Trajectory) -> Vec<u8> {
    let mut csv = Csv::new(&TRAJECTORY_COLUMNS);
    for s in &t.samples {
        csv.row(&[
            Some(s.s),
            Some(s.p[0]),
            Some(s.p[1]),
            Some(s.p[2]),
            Some(s.h),
            s.theta_hat,
            Some(s.phi_base),
            Some(s.beta_residual),
        ]);
    }
    csv.into_bytes()
}

fn theta_advance(t: &Trajectory) -> f64 {
    let mut it = t.theta_samples().map(|(_, th)| th);
    match it.next() {
        Some(first) => it.last().map_or(0.0, |last| last - first),
        None => 0.0,
    }
}

pub fn check(common: &Common) -> Result<i32, CliError> {
    let l = load(common)?;
    let mut out = open_or_return!(open(common, "check", json!({}), &l));
    let scene = &l.scene.scene;
    let report = scene.check_assumptions(&mut rng(scene));
    for d in &report.checks {
        println!(
            "{:<20} {}  measured {:e}  threshold {:e}  {}",
            d.name,
            if d.pass { "PASS" } else { "FAIL" },
            d.measured,
            d.threshold,
            d.detail
        );
    }
    out.write("check.json", serde_json::to_string_pretty(&report).expect("report serializes").as_bytes())?;
    out.finish(if report.passed() { 0 } else { 1 })
}

pub fn trace(common: &Common) -> Result<i32, CliError> {
    let l = load(common)?;
    let mut out = open_or_return!(open(common, "trace", json!({}), &l));
    let poly = &l.scene.scene.polyline;
    let mut csv = Csv::new(&["s", "x1", "x2", "x3"]);
    for i in 0..poly.len() {
        let p = poly.node(i);
        csv.row(&[Some(poly.cumulative[i]), Some(p.x), Some(p.y), Some(p.z)]);
    }
    out.write("path.csv", &csv.into_bytes())?;
    println!(
        "{} nodes, length {}, closure gap {:e}, max sag {:e}, orientation {}",
        poly.len(),
        poly.length,
        poly.closure_gap,
        poly.max_sag,
        l.scene.scene.orientation
    );
    out.finish(0)
}

pub fn simulate(common: &Common, starts: &str, max_time: Option<f64>) -> Result<i32, CliError> {
    let l = load(common)?;
    let scene = &l.scene.scene;
    let cfg = integrator(scene, max_time)?;
    let starts = parse_starts(starts, scene)?;
    let params =
        json!({ "starts": starts.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(), "max_time": cfg.max_time });
    let mut out = open_or_return!(open(common, "simulate", params, &l));
    if !precheck(common, scene) {
        return out.finish(1);
    }
    let gf = GuidingField::new(scene, &l.scene.weights)?;
    let opts = SimOptions::from_scene(scene);
    let names: Vec<String> = (0..starts.len()).map(|i| format!("traj_{i:03}.csv")).collect();
    let pending: Vec<usize> = (0..starts.len()).filter(|&i| !out.done(&names[i])).collect();
    for i in (0..starts.len()).filter(|i| !pending.contains(i)) {
        println!("{}  kept from earlier run", names[i]);
    }
    let mut failure = None;
    // small batches so an interrupted run keeps what it finished
    for batch in pending.chunks(8) {
        let points: Vec<Vec3> = batch.iter().map(|&i| starts[i]).collect();
        for (&i, result) in batch.iter().zip(simulate_gvf(&gf, &points, &cfg, &opts)) {
            match result {
                Ok(t) => {
                    out.write(&names[i], &trajectory_csv(&t))?;
                    let last = t.last();
                    println!(
                        "{}  {:?}  s_end {}  H {:e} -> {:e}  theta advance {}",
                        names[i],
                        t.termination,
                        last.s,
                        t.samples[0].h,
                        last.h,
                        theta_advance(&t)
                    );
                }
                Err(e) => {
                    eprintln!("{}: {e}", names[i]);
                    failure.get_or_insert(e);
                }
            }
        }
    }
    match failure {
        Some(e) => Err(e.into()),
        None => out.finish(0),
    }
}

pub fn project(common: &Common, starts: &str) -> Result<i32, CliError> {
    let l = load(common)?;
    let scene = &l.scene.scene;
    let points = parse_starts(starts, scene)?;
    let params = json!({ "points": points.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>() });
    let mut out = open_or_return!(open(common, "project", params, &l));
    let mut csv = Csv::new(&["x1", "x2", "x3", "H", "q1", "q2", "q3", "theta"]);
    for p in &points {
        let q = parallel_project(scene, p)?;
        let theta = scene.theta_on_path(&q)?;
        csv.row(&[
            Some(p.x),
            Some(p.y),
            Some(p.z),
            Some(scene.lyapunov(p)?),
            Some(q.x),
            Some(q.y),
            Some(q.z),
            Some(theta),
        ]);
    }
    out.write("projection.csv", &csv.into_bytes())?;
    println!("{} points projected", points.len());
    out.finish(0)
}

pub fn lift(common: &Common, start: Option<&str>, to: Option<&str>, turns: Option<f64>) -> Result<i32, CliError> {
    let l = load(common)?;
    let scene = &l.scene.scene;
    let p0 = match start {
        Some(s) => parse_point(s)?,
        None => scene.polyline.node(0),
    };
    let (f0, g0) = scene.path.residual(&p0)?;
    let base = match (to, turns) {
        (Some(t), None) => {
            let v: Vec<f64> =
                t.split(',').map(|c| c.trim().parse::<f64>()).collect::<Result<_, _>>().unwrap_or_default();
            let [f, g] = v[..] else {
                return Err(CliError::Usage(format!("bad --to {t:?}; expected f,g")));
            };
            BaseCurve::Segment { from: [f0, g0], to: [f, g] }
        }
        (None, Some(turns)) => {
            let radius = f0.hypot(g0);
            if radius == 0.0 {
                return Err(CliError::Usage("--turns needs a start off the path (base radius is 0)".into()));
            }
            BaseCurve::Circle { center: [0.0, 0.0], radius, start: g0.atan2(f0), turns }
        }
        _ => return Err(CliError::Usage("lift needs exactly one of --to or --turns".into())),
    };
    let params = json!({ "start": [p0.x, p0.y, p0.z], "base": format!("{base:?}") });
    let mut out = open_or_return!(open(common, "lift", params, &l));
    let lift = lift_path(scene, &base, &p0)?;
    let mut csv = Csv::new(&["s", "x1", "x2", "x3", "f", "g", "H", "beta_residual"]);
    for (t, p) in lift.solution.times.iter().zip(&lift.solution.points) {
        let (f, g) = scene.path.residual(p)?;
        let v = horizontal_velocity(scene, p, base.velocity(*t))?;
        let vb = scene.constraint.riesz(p)?;
        let den = vb.norm() * v.norm();
        let res = if den == 0.0 { 0.0 } else { vb.dot(&v).abs() / den };
        csv.row(&[Some(*t), Some(p.x), Some(p.y), Some(p.z), Some(f), Some(g), Some(f * f + g * g), Some(res)]);
    }
    out.write("lift.csv", &csv.into_bytes())?;
    let end = lift.end();
    println!(
        "lift ends at ({}, {}, {}), tracking error {:e}, constraint residual {:e}, {:?}",
        end.x, end.y, end.z, lift.tracking_error, lift.constraint_residual, lift.solution.termination
    );
    out.finish(0)
}

pub fn verify(common: &Common) -> Result<i32, CliError> {
    let l = load(common)?;
    let mut out = open_or_return!(open(common, "verify", json!({}), &l));
    let scene = &l.scene.scene;
    let gf = GuidingField::new(scene, &l.scene.weights)?;
    let cfg = SuiteConfig::from_scene(scene);
    let report = run_suite(&gf, l.scene.chart.as_ref(), &cfg)?;
    for c in &report.checks {
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
            Status::Skipped => "SKIP",
        };
        println!("{:<24} {:<5} {}", c.check, status, c.anchor);
        for w in &c.warnings {
            println!("{:<24}       warning: {w}", "");
        }
    }
    out.write("report.json", report.to_json().as_bytes())?;
    let passed = report.checks.iter().filter(|c| c.status == Status::Pass).count();
    println!("{passed} of {} checks pass; overall {}", report.checks.len(), if report.pass { "PASS" } else { "FAIL" });
    out.finish(if report.pass { 0 } else { 1 })
}

fn parse_scales(text: &str) -> Result<Vec<f64>, CliError> {
    let scales: Vec<f64> = text
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| CliError::Usage(format!("bad --b-scale {text:?}")))?;
    if scales.is_empty() {
        return Err(CliError::Usage("--b-scale needs at least one value".into()));
    }
    if let Some(s) = scales.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(CliError::Usage(format!("scale {s} must be finite and non-negative")));
    }
    Ok(scales)
}

struct SweepRow {
    t_target: Option<f64>,
    delta_theta: f64,
    theta_per_log_h: f64,
    min_step: f64,
}

fn summarize(trajectories: &[Trajectory], target: f64) -> SweepRow {
    let n = trajectories.len() as f64;
    let times: Vec<Option<f64>> =
        trajectories.iter().map(|t| t.samples.iter().find(|s| s.h < target).map(|s| s.s)).collect();
    let t_target = times.iter().copied().collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n);
    let delta_theta = trajectories.iter().map(theta_advance).sum::<f64>() / n;
    let slopes: Vec<f64> = trajectories
        .iter()
        .filter_map(|t| {
            let h0 = t.samples[0].h;
            let (xs, ys): (Vec<f64>, Vec<f64>) = t.theta_samples().map(|(s, th)| ((h0 / s.h).ln(), th)).unzip();
            let spread = xs.iter().fold(0.0f64, |m, x| m.max(*x)) - xs.iter().fold(f64::INFINITY, |m, x| m.min(*x));
            (xs.len() >= 3 && spread > 1e-6).then(|| linear_fit(&xs, &ys).0)
        })
        .collect();
    let theta_per_log_h = if slopes.is_empty() { f64::NAN } else { slopes.iter().sum::<f64>() / slopes.len() as f64 };
    let min_step = trajectories.iter().map(|t| t.min_step).fold(f64::INFINITY, f64::min);
    SweepRow { t_target, delta_theta, theta_per_log_h, min_step }
}

pub fn sweep(
    common: &Common,
    b_scale: &str,
    starts: &str,
    max_time: Option<f64>,
    h_target: f64,
) -> Result<i32, CliError> {
    let scales = parse_scales(b_scale)?;
    if h_target.is_nan() || h_target <= 0.0 {
        return Err(CliError::Usage(format!("--h-target must be positive, got {h_target}")));
    }
    let l = load(common)?;
    let scene = &l.scene.scene;
    let cfg = integrator(scene, max_time)?;
    let points = parse_starts(starts, scene)?;
    let params = json!({
        "scales": scales,
        "starts": points.iter().map(|p| [p.x, p.y, p.z]).collect::<Vec<_>>(),
        "max_time": cfg.max_time,
        "h_target": h_target,
    });
    let mut out = open_or_return!(open(common, "sweep", params, &l));
    if !precheck(common, scene) {
        return out.finish(1);
    }
    let gf = GuidingField::new(scene, &l.scene.weights)?;
    let opts = SimOptions { eps_conv: h_target, ..SimOptions::from_scene(scene) };
    let mut csv = Csv::new(&["scale", "t_target", "delta_theta", "theta_per_log_h", "min_step", "status"]);
    let mut plot = String::new();
    for (k, &scale) in scales.iter().enumerate() {
        let field = gf.with_b_scale(scale);
        let runs: Vec<Trajectory> = simulate_gvf(&field, &points, &cfg, &opts).into_iter().collect::<Result<_, _>>()?;
        let row = summarize(&runs, h_target);
        let status = if row.t_target.is_some() { "converged" } else { "no convergence" };
        csv.raw(&[
            crate::output::fmt_g(scale),
            row.t_target.map(crate::output::fmt_g).unwrap_or_default(),
            crate::output::fmt_g(row.delta_theta),
            crate::output::fmt_g(row.theta_per_log_h),
            crate::output::fmt_g(row.min_step),
            status.into(),
        ]);
        let name = format!("sweep_{k:02}.csv");
        out.write(&name, &trajectory_csv(&runs[0]))?;
        let _ = writeln!(plot, "'{name}' using 2:3:4 every ::1 with lines title 'b scale {scale}'");
        println!(
            "scale {scale}: {status}, time to H < {h_target:e} {}, theta advance {:.4}, per log H {:.4}",
            row.t_target.map_or("-".into(), |t| format!("{t:.3}")),
            row.delta_theta,
            row.theta_per_log_h
        );
    }
    out.write("sweep.csv", &csv.into_bytes())?;
    out.write("sweep.gp", gnuplot_script(&plot, &scales).as_bytes())?;
    out.finish(0)
}

fn gnuplot_script(series: &str, scales: &[f64]) -> String {
    let splot: Vec<&str> = series.lines().collect();
    let mut s = String::from(
        "# gnuplot sweep.gp\nset datafile separator ','\nset terminal pngcairo size 1200,500\nset output 'sweep.png'\nset multiplot layout 1,2\n",
    );
    let _ = writeln!(s, "set title 'trajectories'\nsplot {}", splot.join(", \\\n      "));
    let h: Vec<String> = scales
        .iter()
        .enumerate()
        .map(|(k, scale)| format!("'sweep_{k:02}.csv' using 1:5 every ::1 with lines title 'b scale {scale}'"))
        .collect();
    let _ = writeln!(s, "set title 'H along the first start'\nset logscale y\nplot {}", h.join(", \\\n     "));
    s.push_str("unset multiplot\n");
    s
}
