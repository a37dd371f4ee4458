//! The constraint and desired-path pair, the traced path polyline, the
//! Lyapunov function `H = f^2 + g^2` and the assumption diagnostics.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::calc3::{to_array, OneForm, Vec3};
use crate::error::{Error, Result};
use crate::expr::Expr;

/// Normalised transversality threshold `|beta(T)| / (|V_beta| |T|)`.
pub const TRANSVERSALITY_TOL: f64 = 1e-3;
/// Residual accepted as "on the path" by the Gauss-Newton projector.
pub const ON_PATH_TOL: f64 = 1e-10;
const GN_MAX_ITER: usize = 50;

/// The Pfaffian constraint `beta(v) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct PfaffianConstraint {
    pub beta: OneForm,
    /// Use `beta / |V_beta|` instead of `beta`; the kernel is unchanged.
    pub normalize: bool,
}

impl PfaffianConstraint {
    pub fn new(beta: OneForm) -> Self {
        Self { beta, normalize: false }
    }

    pub fn riesz(&self, p: &Vec3) -> Result<Vec3> {
        let v = self.beta.riesz(p)?;
        if self.normalize {
            let n = v.norm();
            if n == 0.0 {
                return Err(Error::DegenerateForm { norm: 0.0 });
            }
            Ok(v / n)
        } else {
            Ok(v)
        }
    }

    /// `lambda_beta`; for the normalised form `(h beta) ^ d(h beta) = h^2 beta ^ d beta`.
    pub fn lambda(&self, p: &Vec3) -> Result<f64> {
        let (v, jac) = self.beta.jet(p)?;
        let lambda = crate::calc3::TwoFormAt::from_jacobian(&jac).axial().dot(&v);
        if self.normalize {
            Ok(lambda / v.norm_squared())
        } else {
            Ok(lambda)
        }
    }
}

/// The desired closed path `{f = 0, g = 0}` and its tube `H <= delta^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitLoop {
    pub f: Expr,
    pub g: Expr,
    /// A point near the path, used to start tracing.
    pub seed: Vec3,
    /// Tube radius in the `(f, g)` residual metric.
    pub tube_radius: f64,
}

/// Values and gradients of `f` and `g` at a point.
#[derive(Debug, Clone, Copy)]
pub struct LoopJet {
    pub f: f64,
    pub g: f64,
    pub grad_f: Vec3,
    pub grad_g: Vec3,
}

impl LoopJet {
    pub fn h(&self) -> f64 {
        self.f * self.f + self.g * self.g
    }

    /// `grad H = 2 (f grad f + g grad g)`.
    pub fn grad_h(&self) -> Vec3 {
        2.0 * (self.f * self.grad_f + self.g * self.grad_g)
    }

    /// Unoriented fiber direction `grad f x grad g`.
    pub fn t_raw(&self) -> Vec3 {
        self.grad_f.cross(&self.grad_g)
    }
}

impl ImplicitLoop {
    pub fn jet(&self, p: &Vec3) -> Result<LoopJet> {
        let q = to_array(p);
        let (f, gf) = self.f.eval_grad(q)?;
        let (g, gg) = self.g.eval_grad(q)?;
        Ok(LoopJet { f, g, grad_f: Vec3::from(gf), grad_g: Vec3::from(gg) })
    }

    pub fn residual(&self, p: &Vec3) -> Result<(f64, f64)> {
        let q = to_array(p);
        Ok((self.f.eval(q)?, self.g.eval(q)?))
    }

    /// Gauss-Newton (minimum-norm steps) onto `(f, g) = target`.
    pub fn solve_level(&self, guess: &Vec3, target: [f64; 2], tol: f64, max_iter: usize) -> Result<Vec3> {
        let mut p = *guess;
        let mut history = Vec::new();
        for _ in 0..=max_iter {
            let jet = self.jet(&p)?;
            let r = [jet.f - target[0], jet.g - target[1]];
            let res = r[0].abs().max(r[1].abs());
            history.push(res);
            if res < tol {
                return Ok(p);
            }
            if history.len() > max_iter {
                break;
            }
            let a = jet.grad_f.norm_squared();
            let b = jet.grad_f.dot(&jet.grad_g);
            let c = jet.grad_g.norm_squared();
            let det = a * c - b * b;
            if !(det > 1e-14 * a * c) || a == 0.0 || c == 0.0 {
                return Err(Error::NoConvergence { residuals: history });
            }
            let y0 = (c * r[0] - b * r[1]) / det;
            let y1 = (a * r[1] - b * r[0]) / det;
            let step = jet.grad_f * y0 + jet.grad_g * y1;
            p -= step;
            if !p.iter().all(|v| v.is_finite()) {
                return Err(Error::NoConvergence { residuals: history });
            }
        }
        Err(Error::NoConvergence { residuals: history })
    }

    /// Projects `guess` onto the path: `|f|, |g| < 1e-10` within 50 iterations.
    pub fn find_on_path(&self, guess: &Vec3) -> Result<Vec3> {
        self.solve_level(guess, [0.0, 0.0], ON_PATH_TOL, GN_MAX_ITER)
    }

    /// Newton on `(f, g, n.(x - anchor)) = (target, 0)`.
    pub fn solve_in_plane(
        &self,
        guess: &Vec3,
        target: [f64; 2],
        anchor: &Vec3,
        normal: &Vec3,
        tol: f64,
    ) -> Result<Vec3> {
        let mut p = *guess;
        let mut history = Vec::new();
        for _ in 0..GN_MAX_ITER {
            let jet = self.jet(&p)?;
            let r = Vec3::new(jet.f - target[0], jet.g - target[1], normal.dot(&(p - anchor)));
            let res = r.amax();
            history.push(res);
            if res < tol {
                return Ok(p);
            }
            let m = nalgebra::Matrix3::from_rows(&[jet.grad_f.transpose(), jet.grad_g.transpose(), normal.transpose()]);
            let Some(step) = m.lu().solve(&r) else {
                return Err(Error::NoConvergence { residuals: history });
            };
            p -= step;
        }
        Err(Error::NoConvergence { residuals: history })
    }
}

/// Closed polyline through points of the path, ordered so that `beta(T) > 0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathPolyline {
    pub nodes: Vec<[f64; 3]>,
    /// `cumulative[i]` is the arc length up to node `i`; the last entry is the total length.
    pub cumulative: Vec<f64>,
    pub length: f64,
    pub closure_gap: f64,
    /// Largest distance between a chord midpoint and the path.
    pub max_sag: f64,
    pub step: f64,
}

impl PathPolyline {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, i: usize) -> Vec3 {
        Vec3::from(self.nodes[i % self.nodes.len()])
    }

    /// Nearest chord projection: `(segment, fraction, distance)`.
    pub fn locate(&self, q: &Vec3) -> (usize, f64, f64) {
        let n = self.nodes.len();
        let mut best = (0, 0.0, f64::INFINITY);
        for i in 0..n {
            let a = self.node(i);
            let b = self.node(i + 1);
            let d = b - a;
            let t = ((q - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
            let dist = (a + d * t - q).norm();
            if dist < best.2 {
                best = (i, t, dist);
            }
        }
        best
    }

    pub fn off_path_tolerance(&self) -> f64 {
        1e-6 + 2.0 * self.max_sag
    }

    /// Angle in `[0, 2pi)` proportional to arc length from node 0.
    pub fn theta(&self, q: &Vec3) -> Result<f64> {
        let (i, t, dist) = self.locate(q);
        if dist > self.off_path_tolerance() {
            return Err(Error::OffPath { distance: dist });
        }
        let arc = self.cumulative[i] + t * (self.cumulative[i + 1] - self.cumulative[i]);
        Ok((TAU * arc / self.length).rem_euclid(TAU))
    }

    /// Point at angle `theta` (linear along chords).
    pub fn point_at(&self, theta: f64) -> Vec3 {
        let arc = theta.rem_euclid(TAU) / TAU * self.length;
        let i = self.cumulative.partition_point(|&c| c <= arc).saturating_sub(1).min(self.nodes.len() - 1);
        let seg = self.cumulative[i + 1] - self.cumulative[i];
        let t = if seg > 0.0 { (arc - self.cumulative[i]) / seg } else { 0.0 };
        self.node(i) + (self.node(i + 1) - self.node(i)) * t
    }
}

/// Wraps an angle difference into `(-pi, pi]`.
pub fn wrap_angle(d: f64) -> f64 {
    let w = (d + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// Continuous lift of a stream of angles, choosing the nearest branch each time.
#[derive(Debug, Clone, Copy)]
pub struct Unwrapper {
    last_raw: f64,
    value: f64,
}

impl Unwrapper {
    pub fn new(raw: f64) -> Self {
        Self { last_raw: raw, value: raw }
    }

    pub fn push(&mut self, raw: f64) -> f64 {
        self.value += wrap_angle(raw - self.last_raw);
        self.last_raw = raw;
        self.value
    }

    /// Unwrapped value `raw` would get, without committing it.
    pub fn peek(&self, raw: f64) -> f64 {
        self.value + wrap_angle(raw - self.last_raw)
    }

    pub fn value(&self) -> f64 {
        self.value
    }
}

pub fn unwrap_angles(raw: &[f64]) -> Vec<f64> {
    let Some(&first) = raw.first() else { return Vec::new() };
    let mut u = Unwrapper::new(first);
    std::iter::once(first).chain(raw[1..].iter().map(|&r| u.push(r))).collect()
}

/// Traces the path by predictor-corrector continuation along `grad f x grad g`
/// and orients it so that `beta(T) > 0` on the majority of nodes.
///
/// Returns the polyline and the orientation sign applied to `grad f x grad g`.
pub fn trace_path(
    path: &ImplicitLoop,
    constraint: &PfaffianConstraint,
    step: f64,
    max_steps: usize,
) -> Result<(PathPolyline, f64)> {
    if !(step > 0.0) {
        return Err(Error::Invalid(format!("trace step must be positive, got {step}")));
    }
    let start = path.find_on_path(&path.seed)?;
    let unit_tangent = |p: &Vec3| -> Result<Vec3> {
        let jet = path.jet(p)?;
        let t = jet.t_raw();
        let n = t.norm();
        if !(n > 1e-10 * jet.grad_f.norm() * jet.grad_g.norm()) || n < 1e-300 {
            return Err(Error::TangencyLoss { at: to_array(p) });
        }
        Ok(t / n)
    };
    let t0 = unit_tangent(&start)?;
    let mut nodes = vec![start];
    let mut p = start;
    let mut prev_dir = t0;
    let mut closed = None;
    for k in 1..=max_steps {
        let dir = unit_tangent(&p)?;
        if dir.dot(&prev_dir) < 0.5 {
            return Err(Error::CorrectorFailure { at: to_array(&p) });
        }
        let q = path
            .solve_level(&(p + dir * step), [0.0, 0.0], 1e-12, 20)
            .map_err(|_| Error::CorrectorFailure { at: to_array(&p) })?;
        let chord = q - p;
        let len = chord.norm();
        if !(0.2 * step..=2.0 * step).contains(&len) || chord.dot(&dir) <= 0.0 {
            return Err(Error::CorrectorFailure { at: to_array(&p) });
        }
        let s_p = (p - start).dot(&t0);
        let s_q = (q - start).dot(&t0);
        if k >= 3 && s_p < 0.0 && s_q >= 0.0 && (q - start).norm() < 2.0 * step {
            let c =
                path.solve_in_plane(&p, [0.0, 0.0], &start, &t0, 1e-12).map_err(|_| Error::NotClosed { steps: k })?;
            closed = Some((c - start).norm());
            break;
        }
        nodes.push(q);
        p = q;
        prev_dir = dir;
    }
    let Some(gap) = closed else {
        return Err(Error::NotClosed { steps: max_steps });
    };
    if nodes.len() > 3 && (nodes[nodes.len() - 1] - start).norm() < 0.2 * step {
        nodes.pop();
    }
    if nodes.len() < 3 {
        return Err(Error::NotClosed { steps: nodes.len() });
    }

    let mut votes = 0.0;
    for n in &nodes {
        let b = constraint.riesz(n)?.dot(&path.jet(n)?.t_raw());
        votes += b.signum();
    }
    let orientation = if votes < 0.0 { -1.0 } else { 1.0 };
    if orientation < 0.0 {
        nodes[1..].reverse();
    }

    let mut cumulative = Vec::with_capacity(nodes.len() + 1);
    cumulative.push(0.0);
    let mut max_sag: f64 = 0.0;
    for i in 0..nodes.len() {
        let a = nodes[i];
        let b = nodes[(i + 1) % nodes.len()];
        cumulative.push(cumulative[i] + (b - a).norm());
        let mid = (a + b) * 0.5;
        if let Ok(on) = path.solve_level(&mid, [0.0, 0.0], 1e-12, 20) {
            max_sag = max_sag.max((on - mid).norm());
        }
    }
    let length = *cumulative.last().unwrap();
    if gap > 1e-6 * length {
        return Err(Error::NotClosed { steps: nodes.len() });
    }
    Ok((
        PathPolyline {
            nodes: nodes.iter().map(to_array).collect(),
            cumulative,
            length,
            closure_gap: gap,
            max_sag,
            step,
        },
        orientation,
    ))
}

/// Numerical settings carried by a scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Numerics {
    pub trace_step: f64,
    pub max_trace_steps: usize,
    /// `"rk45"` (adaptive) or `"rk4"` (fixed step).
    pub integrator: String,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub rk4_step: f64,
    pub max_time: f64,
    pub max_steps: usize,
    pub eps_conv: f64,
    /// Compute the projected angle every this many accepted steps.
    pub theta_every: usize,
    pub tube_samples: usize,
    pub weight_samples: usize,
    pub lambda_tol: f64,
    pub min_circling_advance: f64,
    pub suite_starts: usize,
    pub rng_seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self {
            trace_step: 0.02,
            max_trace_steps: 200_000,
            integrator: "rk45".into(),
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            rk4_step: 1e-2,
            max_time: 500.0,
            max_steps: 5_000_000,
            eps_conv: 1e-8,
            theta_every: 10,
            tube_samples: 10_000,
            weight_samples: 2_000,
            lambda_tol: 1e-8,
            min_circling_advance: 4.0 * PI,
            suite_starts: 4,
            rng_seed: 7,
        }
    }
}

/// Geometric quantities of a scene at one point.
#[derive(Debug, Clone, Copy)]
pub struct Frame {
    pub p: Vec3,
    pub jet: LoopJet,
    pub v_beta: Vec3,
    pub h: f64,
    pub grad_h: Vec3,
    /// Oriented fiber direction with `beta(T) > 0` along the path.
    pub t: Vec3,
}

/// A validated constraint/path pair with its traced polyline and frozen orientation.
#[derive(Debug, Clone)]
pub struct Scene {
    pub constraint: PfaffianConstraint,
    pub path: ImplicitLoop,
    pub numerics: Numerics,
    pub polyline: PathPolyline,
    /// Sign applied to `grad f x grad g`.
    pub orientation: f64,
}

/// A point drawn from the tube with its base coordinates `(f, g)`.
#[derive(Debug, Clone, Copy)]
pub struct TubeSample {
    pub p: Vec3,
    pub base: [f64; 2],
}

/// How base offsets are drawn when sampling the tube.
#[derive(Debug, Clone, Copy)]
pub enum BaseDraw {
    /// Area-uniform over the disk of radius `delta`.
    Disk,
    /// `H` uniform in `[lo, hi]`.
    Annulus { lo: f64, hi: f64 },
    /// `ln H` uniform in `[ln lo, ln hi]`.
    LogAnnulus { lo: f64, hi: f64 },
}

impl Scene {
    pub fn new(constraint: PfaffianConstraint, path: ImplicitLoop, numerics: Numerics) -> Result<Self> {
        if !(path.tube_radius > 0.0) {
            return Err(Error::Invalid("tube radius must be positive".into()));
        }
        let (polyline, orientation) = trace_path(&path, &constraint, numerics.trace_step, numerics.max_trace_steps)?;
        Ok(Self { constraint, path, numerics, polyline, orientation })
    }

    pub fn delta(&self) -> f64 {
        self.path.tube_radius
    }

    pub fn lyapunov(&self, p: &Vec3) -> Result<f64> {
        let (f, g) = self.path.residual(p)?;
        Ok(f * f + g * g)
    }

    pub fn grad_lyapunov(&self, p: &Vec3) -> Result<Vec3> {
        Ok(self.path.jet(p)?.grad_h())
    }

    pub fn in_tube(&self, p: &Vec3) -> Result<bool> {
        Ok(self.lyapunov(p)? <= self.delta() * self.delta())
    }

    /// `T = orientation * (grad f x grad g)`.
    pub fn fiber_direction(&self, p: &Vec3) -> Result<Vec3> {
        let jet = self.path.jet(p)?;
        self.oriented(p, &jet)
    }

    fn oriented(&self, p: &Vec3, jet: &LoopJet) -> Result<Vec3> {
        let t = jet.t_raw();
        let scale = jet.grad_f.norm() * jet.grad_g.norm();
        if t.norm() <= 1e-10 * scale || t.norm() < 1e-14 {
            return Err(Error::RankDeficient { at: to_array(p) });
        }
        Ok(t * self.orientation)
    }

    pub fn frame(&self, p: &Vec3) -> Result<Frame> {
        let jet = self.path.jet(p)?;
        let t = self.oriented(p, &jet)?;
        Ok(Frame { p: *p, jet, v_beta: self.constraint.riesz(p)?, h: jet.h(), grad_h: jet.grad_h(), t })
    }

    pub fn lambda(&self, p: &Vec3) -> Result<f64> {
        self.constraint.lambda(p)
    }

    pub fn theta_on_path(&self, q: &Vec3) -> Result<f64> {
        self.polyline.theta(q)
    }

    /// Draws `n` tube points: a random place along the path, a random base offset,
    /// then Gauss-Newton onto that level of `(f, g)`.
    pub fn sample_tube<R: Rng>(&self, rng: &mut R, n: usize, draw: BaseDraw) -> Vec<TubeSample> {
        let delta = self.delta();
        let mut out = Vec::with_capacity(n);
        let mut attempts = 0;
        while out.len() < n && attempts < 20 * n + 100 {
            attempts += 1;
            let along = self.polyline.point_at(rng.gen_range(0.0..TAU));
            let angle = rng.gen_range(0.0..TAU);
            let radius = match draw {
                BaseDraw::Disk => delta * rng.gen_range(0.0f64..1.0).sqrt(),
                BaseDraw::Annulus { lo, hi } => rng.gen_range(lo..=hi).sqrt(),
                BaseDraw::LogAnnulus { lo, hi } => rng.gen_range(lo.ln()..=hi.ln()).exp().sqrt(),
            };
            let base = [radius * angle.cos(), radius * angle.sin()];
            if let Ok(p) = self.path.solve_level(&along, base, 1e-13, 30) {
                out.push(TubeSample { p, base });
            }
        }
        out
    }

    /// The assumption battery; failures are report entries, not errors.
    pub fn check_assumptions<R: Rng>(&self, rng: &mut R) -> DiagnosticsReport {
        check_assumptions(self, rng)
    }
}

/// One diagnostic of [`DiagnosticsReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub name: String,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
    pub witnesses: Vec<[f64; 3]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub checks: Vec<Diagnostic>,
    /// Sampled `[min, max]` of `|grad H|^2 / H`.
    pub gradient_ratio_bounds: [f64; 2],
    pub lambda_range: [f64; 2],
}

impl DiagnosticsReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn get(&self, name: &str) -> Option<&Diagnostic> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const MAX_WITNESSES: usize = 8;

fn check_assumptions<R: Rng>(scene: &Scene, rng: &mut R) -> DiagnosticsReport {
    let samples = scene.sample_tube(rng, scene.numerics.tube_samples, BaseDraw::Disk);
    let nodes: Vec<Vec3> = (0..scene.polyline.len()).map(|i| scene.polyline.node(i)).collect();
    let mut checks = Vec::new();

    // (a) ker beta is two-dimensional
    let mut min_v = f64::INFINITY;
    let mut witnesses = Vec::new();
    let mut eval_errors = 0usize;
    for p in samples.iter().map(|s| &s.p).chain(nodes.iter()) {
        match scene.constraint.riesz(p) {
            Ok(v) => {
                let n = v.norm();
                if n < 1e-8 && witnesses.len() < MAX_WITNESSES {
                    witnesses.push(to_array(p));
                }
                min_v = min_v.min(n);
            }
            Err(_) => eval_errors += 1,
        }
    }
    checks.push(Diagnostic {
        name: "kernel_rank".into(),
        pass: min_v > 1e-8 && eval_errors == 0,
        measured: min_v,
        threshold: 1e-8,
        detail: format!("min |V_beta| over {} tube samples and path nodes", samples.len()),
        witnesses,
    });

    // (b) transversality of the path to ker beta
    let mut min_ratio = f64::INFINITY;
    let mut witnesses = Vec::new();
    let mut signs = Vec::with_capacity(nodes.len());
    for p in &nodes {
        let ratio = scene
            .path
            .jet(p)
            .and_then(|jet| {
                let t = jet.t_raw() * scene.orientation;
                let v = scene.constraint.riesz(p)?;
                Ok(v.dot(&t) / (v.norm() * t.norm()))
            })
            .unwrap_or(f64::NAN);
        signs.push(ratio.signum());
        if !(ratio.abs() > TRANSVERSALITY_TOL) && witnesses.len() < MAX_WITNESSES {
            witnesses.push(to_array(p));
        }
        min_ratio = min_ratio.min(if ratio.is_nan() { 0.0 } else { ratio });
    }
    let mut sign_changes = 0;
    for i in 0..nodes.len() {
        if signs[i] != signs[(i + 1) % nodes.len()] {
            sign_changes += 1;
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(to_array(&((nodes[i] + nodes[(i + 1) % nodes.len()]) * 0.5)));
            }
        }
    }
    checks.push(Diagnostic {
        name: "transversality".into(),
        pass: min_ratio > TRANSVERSALITY_TOL && sign_changes == 0,
        measured: min_ratio,
        threshold: TRANSVERSALITY_TOL,
        detail: format!("min beta(T)/(|V||T|) over {} nodes, {sign_changes} sign changes", nodes.len()),
        witnesses,
    });

    // (c) complete non-holonomicity
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut min_abs = f64::INFINITY;
    let mut witnesses = Vec::new();
    let mut eval_errors = 0usize;
    for p in samples.iter().map(|s| &s.p).chain(nodes.iter()) {
        match scene.lambda(p) {
            Ok(l) => {
                if l.abs() <= scene.numerics.lambda_tol && witnesses.len() < MAX_WITNESSES {
                    witnesses.push(to_array(p));
                }
                lo = lo.min(l);
                hi = hi.max(l);
                min_abs = min_abs.min(l.abs());
            }
            Err(_) => eval_errors += 1,
        }
    }
    let constant_sign = lo > 0.0 || hi < 0.0;
    checks.push(Diagnostic {
        name: "non_holonomic".into(),
        pass: min_abs > scene.numerics.lambda_tol && constant_sign && eval_errors == 0,
        measured: min_abs,
        threshold: scene.numerics.lambda_tol,
        detail: format!("lambda_beta in [{lo:e}, {hi:e}]"),
        witnesses,
    });

    // (d) |grad H|^2 / H bounded above and away from zero
    let mut c1 = f64::INFINITY;
    let mut c2: f64 = 0.0;
    let mut witnesses = Vec::new();
    for s in &samples {
        if let Ok(jet) = scene.path.jet(&s.p) {
            let h = jet.h();
            if h > 1e-14 {
                let r = jet.grad_h().norm_squared() / h;
                if r < c1 && witnesses.len() < MAX_WITNESSES {
                    witnesses.push(to_array(&s.p));
                }
                c1 = c1.min(r);
                c2 = c2.max(r);
            }
        }
    }
    let spread = c2 / c1;
    checks.push(Diagnostic {
        name: "gradient_ratio".into(),
        pass: c1 > 0.0 && c2.is_finite() && spread < 1e4,
        measured: spread,
        threshold: 1e4,
        detail: format!("|grad H|^2/H in [{c1:e}, {c2:e}]"),
        witnesses,
    });

    // regular level set: grad f and grad g independent along the path
    let mut min_sin = f64::INFINITY;
    let mut witnesses = Vec::new();
    for p in &nodes {
        if let Ok(jet) = scene.path.jet(p) {
            let s = jet.t_raw().norm() / (jet.grad_f.norm() * jet.grad_g.norm());
            let s = if s.is_nan() { 0.0 } else { s };
            if s < 1e-6 && witnesses.len() < MAX_WITNESSES {
                witnesses.push(to_array(p));
            }
            min_sin = min_sin.min(s);
        }
    }
    checks.push(Diagnostic {
        name: "regular_level_set".into(),
        pass: min_sin > 1e-6,
        measured: min_sin,
        threshold: 1e-6,
        detail: "min sine of the angle between grad f and grad g on the path".into(),
        witnesses,
    });

    DiagnosticsReport { checks, gradient_ratio_bounds: [c1, c2], lambda_range: [lo, hi] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn circle(beta: [&str; 3]) -> (PfaffianConstraint, ImplicitLoop) {
        (
            PfaffianConstraint::new(OneForm::parse(beta).unwrap()),
            ImplicitLoop {
                f: Expr::parse("x1^2 + x2^2 - 1").unwrap(),
                g: Expr::parse("x3").unwrap(),
                seed: Vec3::new(1.0, 0.0, 0.0),
                tube_radius: 0.5,
            },
        )
    }

    fn heisenberg_scene() -> Scene {
        let (c, l) = circle(["-x2", "x1", "1"]);
        Scene::new(c, l, Numerics { tube_samples: 2_000, ..Numerics::default() }).unwrap()
    }

    #[test]
    fn find_on_path_examples() {
        let (_, l) = circle(["-x2", "x1", "1"]);
        let p = l.find_on_path(&Vec3::new(1.1, 0.0, 0.05)).unwrap();
        assert!((p - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9);

        let on = Vec3::new(0.6, 0.8, 0.0);
        assert!((l.find_on_path(&on).unwrap() - on).norm() < 1e-12);

        assert!(matches!(l.find_on_path(&Vec3::zeros()), Err(Error::NoConvergence { .. })));
    }

    #[test]
    fn traced_circle_has_analytic_length() {
        let (c, l) = circle(["-x2", "x1", "1"]);
        let (poly, _) = trace_path(&l, &c, 0.05, 10_000).unwrap();
        assert!((poly.length - TAU).abs() / TAU < 1e-3);
        assert!(poly.closure_gap < 1e-6 * poly.length);
        for (i, n) in poly.nodes.iter().enumerate() {
            let (f, g) = l.residual(&Vec3::from(*n)).unwrap();
            assert!(f.abs().max(g.abs()) < 1e-8);
            let gap = poly.cumulative[i + 1] - poly.cumulative[i];
            assert!((0.2 * 0.05..=2.0 * 0.05).contains(&gap), "spacing {gap}");
        }
    }

    #[test]
    fn oversized_step_is_reported() {
        let (c, l) = circle(["-x2", "x1", "1"]);
        let err = trace_path(&l, &c, 3.0, 10_000).unwrap_err();
        assert!(matches!(err, Error::NotClosed { .. } | Error::CorrectorFailure { .. }), "{err:?}");
    }

    #[test]
    fn heisenberg_orientation_is_counterclockwise() {
        let s = heisenberg_scene();
        assert_eq!(s.orientation, -1.0);
        let a = s.polyline.node(0);
        let b = s.polyline.node(1);
        // counterclockwise in (x1, x2): positive z-component of a x b
        assert!(a.cross(&b).z > 0.0);
        let t = s.fiber_direction(&a).unwrap();
        assert!((t - Vec3::new(-2.0 * a.y, 2.0 * a.x, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn lyapunov_examples() {
        let s = heisenberg_scene();
        let on = Vec3::new(0.0, 1.0, 0.0);
        assert_eq!(s.lyapunov(&on).unwrap(), 0.0);
        assert_eq!(s.grad_lyapunov(&on).unwrap(), Vec3::zeros());

        let p = Vec3::new(1.1, 0.0, 0.0);
        assert!((s.lyapunov(&p).unwrap() - 0.0441).abs() < 1e-15);
        let g = s.grad_lyapunov(&p).unwrap();
        assert!((g - Vec3::new(0.924, 0.0, 0.0)).norm() < 1e-14);

        let q = Vec3::new(0.9, 0.3, -0.2);
        let h = 1e-5;
        let g = s.grad_lyapunov(&q).unwrap();
        for i in 0..3 {
            let mut a = q;
            let mut b = q;
            a[i] += h;
            b[i] -= h;
            let fd = (s.lyapunov(&a).unwrap() - s.lyapunov(&b).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn fiber_direction_examples() {
        let s = heisenberg_scene();
        let p = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(s.fiber_direction(&p).unwrap(), Vec3::new(0.0, 2.0, 0.0));

        let mut tripled = s.clone();
        tripled.path.f = Expr::parse("3*(x1^2 + x2^2 - 1)").unwrap();
        let t3 = tripled.fiber_direction(&p).unwrap();
        assert_eq!(t3, Vec3::new(0.0, 6.0, 0.0));
        assert!(s.constraint.riesz(&p).unwrap().dot(&t3) > 0.0);

        assert!(matches!(s.fiber_direction(&Vec3::new(0.0, 0.0, 0.3)), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn heisenberg_passes_assumptions() {
        let s = heisenberg_scene();
        let report = s.check_assumptions(&mut ChaCha8Rng::seed_from_u64(1));
        assert!(report.passed(), "{report:#?}");
        assert_eq!(report.lambda_range, [2.0, 2.0]);
    }

    #[test]
    fn integrable_form_fails_transversality_and_nonholonomy() {
        let (c, l) = circle(["0", "0", "1"]);
        let s = Scene::new(c, l, Numerics { tube_samples: 500, ..Numerics::default() }).unwrap();
        let report = s.check_assumptions(&mut ChaCha8Rng::seed_from_u64(1));
        assert!(!report.get("transversality").unwrap().pass);
        assert!(!report.get("non_holonomic").unwrap().pass);
        assert!(report.get("kernel_rank").unwrap().pass);
    }

    #[test]
    fn vertical_circle_loses_transversality_at_two_places() {
        let c = PfaffianConstraint::new(OneForm::parse(["0", "0", "1"]).unwrap());
        let l = ImplicitLoop {
            f: Expr::parse("x1^2 + x3^2 - 1").unwrap(),
            g: Expr::parse("x2").unwrap(),
            seed: Vec3::new(1.0, 0.0, 0.0),
            tube_radius: 0.5,
        };
        let s = Scene::new(c, l, Numerics { tube_samples: 200, ..Numerics::default() }).unwrap();
        let report = s.check_assumptions(&mut ChaCha8Rng::seed_from_u64(1));
        let tr = report.get("transversality").unwrap();
        assert!(!tr.pass);
        assert!(tr.detail.contains("2 sign changes"), "{}", tr.detail);
        assert!(tr.witnesses.iter().all(|w| w[0].abs() < 0.05), "{:?}", tr.witnesses);
    }

    #[test]
    fn shrinking_tube_never_breaks_kernel_or_nonholonomy() {
        // lambda = 2 (0.3 - x3) changes sign inside the wide tube only
        let (c, mut l) = circle(["-(0.3 - x3)*x2", "(0.3 - x3)*x1", "1"]);
        let mut verdicts = Vec::new();
        for delta in [0.5, 0.25, 0.1] {
            l.tube_radius = delta;
            let s = Scene::new(c.clone(), l.clone(), Numerics { tube_samples: 3_000, ..Numerics::default() }).unwrap();
            let r = s.check_assumptions(&mut ChaCha8Rng::seed_from_u64(3));
            verdicts.push((r.get("kernel_rank").unwrap().pass, r.get("non_holonomic").unwrap().pass));
        }
        assert!(!verdicts[0].1);
        for w in verdicts.windows(2) {
            assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1, "{verdicts:?}");
        }
        assert_eq!(verdicts[2], (true, true));
    }

    #[test]
    fn theta_on_path_examples() {
        let s = heisenberg_scene();
        let poly = &s.polyline;
        assert_eq!(poly.theta(&poly.node(0)).unwrap(), 0.0);
        let anti = poly.theta(&Vec3::new(-1.0, 0.0, 0.0)).unwrap();
        assert!((anti - PI).abs() < TAU * poly.step / poly.length, "{anti}");
        assert!(matches!(poly.theta(&Vec3::new(1.2, 0.0, 0.0)), Err(Error::OffPath { .. })));

        let raw = [6.0, 6.2, 0.1, 0.3, 0.2];
        let u = unwrap_angles(&raw);
        assert!((u[2] - (TAU + 0.1)).abs() < 1e-12);
        assert!(u.windows(2).all(|w| (w[1] - w[0]).abs() < PI));
    }

    #[test]
    fn retracing_from_any_node_keeps_length() {
        let s = heisenberg_scene();
        for i in [7usize, 101, 250] {
            let mut l = s.path.clone();
            l.seed = s.polyline.node(i);
            let (poly, _) = trace_path(&l, &s.constraint, s.numerics.trace_step, 100_000).unwrap();
            assert!((poly.length - s.polyline.length).abs() < 1e-6 * s.polyline.length);
        }
    }

    #[test]
    fn gradient_ratio_is_bounded_on_dense_samples() {
        let s = heisenberg_scene();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples = s.sample_tube(&mut rng, 10_000, BaseDraw::Disk);
        let ratios: Vec<f64> = samples
            .iter()
            .filter_map(|t| {
                let jet = s.path.jet(&t.p).unwrap();
                (jet.h() > 1e-14).then(|| jet.grad_h().norm_squared() / jet.h())
            })
            .collect();
        let lo = ratios.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi.is_finite() && hi / lo < 1e4);
    }
}
