//! ODE integration with event detection, and the instrumented simulations of
//! the guiding field.

use std::f64::consts::{FRAC_PI_4, TAU};

use serde::{Deserialize, Serialize};

use crate::calc3::{to_array, Vec3};
use crate::connection::parallel_project;
use crate::error::{Error, Result};
use crate::gvf::GuidingField;
use crate::scene::{wrap_angle, Numerics, Scene, Unwrapper};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Method {
    /// Classical fixed-step RK4.
    Rk4 { step: f64 },
    /// Dormand-Prince 5(4) with embedded error control.
    Dopri5 { abs_tol: f64, rel_tol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub method: Method,
    pub max_time: f64,
    pub max_steps: usize,
    /// Upper bound on any single step.
    pub max_step: f64,
}

impl IntegratorConfig {
    pub fn adaptive(abs_tol: f64, rel_tol: f64, max_time: f64) -> Self {
        Self { method: Method::Dopri5 { abs_tol, rel_tol }, max_time, max_steps: 5_000_000, max_step: f64::INFINITY }
    }

    pub fn fixed(step: f64, max_time: f64) -> Self {
        Self { method: Method::Rk4 { step }, max_time, max_steps: 5_000_000, max_step: f64::INFINITY }
    }

    /// Integrator named by the scene numerics, with their time and step budgets.
    pub fn from_numerics(n: &Numerics) -> Self {
        let method = if n.integrator == "rk4" {
            Self::fixed(n.rk4_step, n.max_time)
        } else {
            Self::adaptive(n.abs_tol, n.rel_tol, n.max_time)
        };
        Self { max_steps: n.max_steps, ..method }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self.method {
            Method::Rk4 { step } => step > 0.0 && step.is_finite(),
            Method::Dopri5 { abs_tol, rel_tol } => abs_tol > 0.0 && rel_tol >= 0.0,
        };
        if !ok || !(self.max_time >= 0.0) || self.max_steps == 0 || !(self.max_step > 0.0) {
            return Err(Error::Invalid(format!("bad integrator configuration {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    TubeExit,
    Budget,
    Event(String),
    Singular,
}

/// A scalar event function; fires when it crosses from negative to non-negative.
pub trait Event {
    fn name(&self) -> &str;
    fn value(&self, t: f64, p: &Vec3) -> f64;
    /// Whether a detected crossing at `p` terminates the run.
    fn accept(&self, _p: &Vec3) -> bool {
        true
    }
    /// Step admissibility, e.g. to bound per-step angle changes.
    fn admissible(&self, _from: &Vec3, _to: &Vec3) -> bool {
        true
    }
    /// Called with every accepted state.
    fn commit(&mut self, _p: &Vec3) {}
    fn termination(&self) -> Termination {
        Termination::Event(self.name().to_string())
    }
}

/// Raw output of [`integrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Solution {
    pub times: Vec<f64>,
    pub points: Vec<Vec3>,
    pub termination: Termination,
    pub rejected: usize,
    pub min_step: f64,
}

impl Solution {
    pub fn end(&self) -> (f64, Vec3) {
        (*self.times.last().unwrap(), *self.points.last().unwrap())
    }
}

const DP_C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
const DP_A: [[f64; 6]; 7] = [
    [0.0; 6],
    [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
const DP_E: [f64; 7] =
    [71.0 / 57600.0, 0.0, -71.0 / 16695.0, 71.0 / 1920.0, -17253.0 / 339200.0, 22.0 / 525.0, -1.0 / 40.0];

fn dopri_step<F>(field: &mut F, t: f64, y: &Vec3, h: f64) -> Result<(Vec3, Vec3)>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
{
    let mut k = [Vec3::zeros(); 7];
    for i in 0..7 {
        let mut yi = *y;
        for j in 0..i {
            yi += k[j] * (h * DP_A[i][j]);
        }
        k[i] = field(t + DP_C[i] * h, &yi)?;
    }
    let mut y5 = *y;
    let mut err = Vec3::zeros();
    for i in 0..7 {
        if i < 6 {
            y5 += k[i] * (h * DP_A[6][i]);
        }
        err += k[i] * (h * DP_E[i]);
    }
    Ok((y5, err))
}

fn rk4_step<F>(field: &mut F, t: f64, y: &Vec3, h: f64) -> Result<Vec3>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
{
    let k1 = field(t, y)?;
    let k2 = field(t + 0.5 * h, &(y + k1 * (0.5 * h)))?;
    let k3 = field(t + 0.5 * h, &(y + k2 * (0.5 * h)))?;
    let k4 = field(t + h, &(y + k3 * h))?;
    Ok(y + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0))
}

fn error_norm(err: &Vec3, y0: &Vec3, y1: &Vec3, atol: f64, rtol: f64) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        let sc = atol + rtol * y0[i].abs().max(y1[i].abs());
        s += (err[i] / sc).powi(2);
    }
    (s / 3.0).sqrt()
}

fn initial_step<F>(field: &mut F, y: &Vec3, f0: &Vec3, atol: f64, rtol: f64) -> Result<f64>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
{
    let sc = |v: &Vec3| {
        let mut s = 0.0;
        for i in 0..3 {
            s += (v[i] / (atol + rtol * y[i].abs())).powi(2);
        }
        (s / 3.0).sqrt()
    };
    let d0 = sc(y);
    let d1 = sc(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let f1 = field(h0, &(y + f0 * h0))?;
    let d2 = sc(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    Ok((100.0 * h0).min(h1))
}

/// Integrates `p' = field(t, p)` from `t = 0` to `cfg.max_time`, stopping at the
/// first accepted event. Event crossings are located by bisection with single
/// re-steps to `1e-9` in time.
pub fn integrate<F>(
    mut field: F,
    start: Vec3,
    cfg: &IntegratorConfig,
    events: &mut [&mut dyn Event],
) -> Result<Solution>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
{
    cfg.validate()?;
    let mut sol = Solution {
        times: vec![0.0],
        points: vec![start],
        termination: Termination::Budget,
        rejected: 0,
        min_step: f64::INFINITY,
    };
    for ev in events.iter_mut() {
        ev.commit(&start);
    }
    if let Some(ev) = events.iter().find(|e| e.value(0.0, &start) >= 0.0 && e.accept(&start)) {
        sol.termination = ev.termination();
        return Ok(sol);
    }
    let f0 = field(0.0, &start)?;
    if f0 == Vec3::zeros() {
        sol.times.push(cfg.max_time);
        sol.points.push(start);
        return Ok(sol);
    }

    let mut t = 0.0;
    let mut y = start;
    let mut h = match cfg.method {
        Method::Rk4 { step } => step,
        Method::Dopri5 { abs_tol, rel_tol } => initial_step(&mut field, &y, &f0, abs_tol, rel_tol)?,
    };
    let mut steps = 0usize;
    let mut last_error: Option<Error> = None;
    loop {
        if steps >= cfg.max_steps || t >= cfg.max_time {
            sol.termination = Termination::Budget;
            return Ok(sol);
        }
        let nominal = match cfg.method {
            Method::Rk4 { step } => step,
            Method::Dopri5 { .. } => h,
        };
        let hs = h.min(nominal).min(cfg.max_time - t).min(cfg.max_step);
        if hs < 1e-14 * t.abs().max(1.0) && cfg.max_time - t > hs {
            return Err(last_error.take().unwrap_or(Error::StepCollapse { t, step: hs }));
        }

        let attempt = match cfg.method {
            Method::Rk4 { .. } => rk4_step(&mut field, t, &y, hs).map(|y1| (y1, 0.0)),
            Method::Dopri5 { abs_tol, rel_tol } => {
                dopri_step(&mut field, t, &y, hs).map(|(y1, err)| (y1, error_norm(&err, &y, &y1, abs_tol, rel_tol)))
            }
        };
        let (y1, err) = match attempt {
            Ok(v) => v,
            Err(e) => {
                last_error = Some(e);
                sol.rejected += 1;
                h = hs * 0.5;
                continue;
            }
        };
        if err > 1.0 || !y1.iter().all(|v| v.is_finite()) {
            sol.rejected += 1;
            h = hs * (0.9 * err.powf(-0.2)).clamp(0.2, 0.9);
            if !err.is_finite() {
                h = hs * 0.2;
            }
            continue;
        }
        if !events.iter().all(|e| e.admissible(&y, &y1)) {
            sol.rejected += 1;
            h = hs * 0.5;
            continue;
        }
        last_error = None;
        steps += 1;
        sol.min_step = sol.min_step.min(hs);

        // earliest accepted event crossing within the step
        let mut hit: Option<(f64, Vec3, usize)> = None;
        for (idx, ev) in events.iter().enumerate() {
            let v0 = ev.value(t, &y);
            let v1 = ev.value(t + hs, &y1);
            if !(v0 < 0.0 && v1 >= 0.0) {
                continue;
            }
            let (mut lo, mut hi) = (0.0, hs);
            let mut y_hi = y1;
            while hi - lo > 1e-9 {
                let mid = 0.5 * (lo + hi);
                let ym = single_step(&mut field, cfg, t, &y, mid)?;
                if ev.value(t + mid, &ym) >= 0.0 {
                    hi = mid;
                    y_hi = ym;
                } else {
                    lo = mid;
                }
            }
            if ev.accept(&y_hi) && hit.is_none_or(|(th, _, _)| hi < th) {
                hit = Some((hi, y_hi, idx));
            }
        }
        if let Some((th, yh, idx)) = hit {
            sol.times.push(t + th);
            sol.points.push(yh);
            for ev in events.iter_mut() {
                ev.commit(&yh);
            }
            sol.termination = events[idx].termination();
            return Ok(sol);
        }

        t += hs;
        y = y1;
        sol.times.push(t);
        sol.points.push(y);
        for ev in events.iter_mut() {
            ev.commit(&y);
        }
        if let Method::Dopri5 { .. } = cfg.method {
            let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h = hs * grow;
        }
    }
}

fn single_step<F>(field: &mut F, cfg: &IntegratorConfig, t: f64, y: &Vec3, h: f64) -> Result<Vec3>
where
    F: FnMut(f64, &Vec3) -> Result<Vec3>,
{
    match cfg.method {
        Method::Rk4 { .. } => rk4_step(field, t, y, h),
        Method::Dopri5 { .. } => Ok(dopri_step(field, t, y, h)?.0),
    }
}

/// Stops when `H < eps`.
pub struct Converged<'s> {
    pub scene: &'s Scene,
    pub eps: f64,
}

impl Event for Converged<'_> {
    fn name(&self) -> &str {
        "converged"
    }
    fn value(&self, _t: f64, p: &Vec3) -> f64 {
        self.scene.lyapunov(p).map_or(f64::NAN, |h| self.eps - h)
    }
    fn termination(&self) -> Termination {
        Termination::Converged
    }
}

/// Stops when `H > delta^2`.
pub struct LeavesTube<'s> {
    pub scene: &'s Scene,
}

impl Event for LeavesTube<'_> {
    fn name(&self) -> &str {
        "tube_exit"
    }
    fn value(&self, _t: f64, p: &Vec3) -> f64 {
        let d = self.scene.delta();
        self.scene.lyapunov(p).map_or(f64::NAN, |h| h - d * d * (1.0 + 1e-9))
    }
    fn termination(&self) -> Termination {
        Termination::TubeExit
    }
}

/// Tracks the unwrapped base angle `atan2(g, f)`; keeps per-step changes below
/// `pi/4` and optionally stops once `|advance| >= target`.
pub struct BaseAngle<'s> {
    scene: &'s Scene,
    unwrap: Option<Unwrapper>,
    start: f64,
    pub target: Option<f64>,
}

impl<'s> BaseAngle<'s> {
    pub fn new(scene: &'s Scene, target: Option<f64>) -> Self {
        Self { scene, unwrap: None, start: 0.0, target }
    }

    fn raw(&self, p: &Vec3) -> f64 {
        self.scene.path.residual(p).map_or(f64::NAN, |(f, g)| g.atan2(f))
    }

    pub fn advance(&self) -> f64 {
        self.unwrap.map_or(0.0, |u| u.value() - self.start)
    }
}

impl Event for BaseAngle<'_> {
    fn name(&self) -> &str {
        "base_revolution"
    }
    fn value(&self, _t: f64, p: &Vec3) -> f64 {
        match (self.target, self.unwrap) {
            (Some(target), Some(u)) => (u.peek(self.raw(p)) - self.start).abs() - target,
            _ => -1.0,
        }
    }
    fn admissible(&self, from: &Vec3, to: &Vec3) -> bool {
        wrap_angle(self.raw(to) - self.raw(from)).abs() < FRAC_PI_4
    }
    fn commit(&mut self, p: &Vec3) {
        let raw = self.raw(p);
        match &mut self.unwrap {
            Some(u) => {
                u.push(raw);
            }
            None => {
                self.unwrap = Some(Unwrapper::new(raw));
                self.start = raw;
            }
        }
    }
}

/// One row of a simulated trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub s: f64,
    pub p: [f64; 3],
    pub h: f64,
    /// Unwrapped angle of the parallel projection on the path.
    pub theta_hat: Option<f64>,
    /// Unwrapped base angle `atan2(g, f)`.
    pub phi_base: f64,
    /// `|beta(X)| / (|V_beta| |X|)`.
    pub beta_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub termination: Termination,
    pub min_step: f64,
}

impl Trajectory {
    pub fn last(&self) -> &Sample {
        self.samples.last().unwrap()
    }

    pub fn theta_samples(&self) -> impl Iterator<Item = (&Sample, f64)> {
        self.samples.iter().filter_map(|s| s.theta_hat.map(|t| (s, t)))
    }
}

/// Options for [`simulate_gvf`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    pub eps_conv: f64,
    /// Project every this many accepted steps; `0` disables projection.
    pub theta_every: usize,
}

impl SimOptions {
    pub fn from_scene(scene: &Scene) -> Self {
        Self { eps_conv: scene.numerics.eps_conv, theta_every: scene.numerics.theta_every }
    }
}

/// Integrates the field from `start`, recording `H`, base angle, constraint
/// residual and (every `theta_every` steps and at the end) the projected angle.
pub fn simulate_one(gf: &GuidingField, start: Vec3, cfg: &IntegratorConfig, opts: &SimOptions) -> Result<Trajectory> {
    let scene = gf.scene();
    let mut conv = Converged { scene, eps: opts.eps_conv };
    let mut exit = LeavesTube { scene };
    let mut angle = BaseAngle::new(scene, None);
    let sol = {
        let mut events: [&mut dyn Event; 3] = [&mut conv, &mut exit, &mut angle];
        integrate(|_, p| gf.eval_field(p), start, cfg, &mut events)?
    };
    instrument(gf, &sol, opts.theta_every)
}

fn instrument(gf: &GuidingField, sol: &Solution, theta_every: usize) -> Result<Trajectory> {
    let scene = gf.scene();
    let n = sol.points.len();
    let mut phi = None::<Unwrapper>;
    let mut samples = Vec::with_capacity(n);
    for (s, p) in sol.times.iter().zip(&sol.points) {
        let (f, g) = scene.path.residual(p)?;
        let raw = g.atan2(f);
        let phi_base = match &mut phi {
            Some(u) => u.push(raw),
            None => {
                phi = Some(Unwrapper::new(raw));
                raw
            }
        };
        let beta_residual = gf.evaluate(p)?.tangency_residual();
        samples.push(Sample { s: *s, p: to_array(p), h: f * f + g * g, theta_hat: None, phi_base, beta_residual });
    }
    if theta_every > 0 {
        fill_theta(scene, &sol.points, &mut samples, theta_every)?;
    }
    let min_step = if sol.min_step.is_finite() { sol.min_step } else { 0.0 };
    Ok(Trajectory { samples, termination: sol.termination.clone(), min_step })
}

/// Projected angle on a stride, refined wherever consecutive values jump by
/// more than `pi/4`, then unwrapped.
fn fill_theta(scene: &Scene, points: &[Vec3], samples: &mut [Sample], every: usize) -> Result<()> {
    let n = points.len();
    let theta_at = |i: usize| -> Result<f64> { scene.theta_on_path(&parallel_project(scene, &points[i])?) };
    let mut idx: Vec<usize> = (0..n).step_by(every).collect();
    if *idx.last().unwrap() != n - 1 {
        idx.push(n - 1);
    }
    let mut raw: Vec<(usize, f64)> = Vec::with_capacity(idx.len());
    for &i in &idx {
        raw.push((i, theta_at(i)?));
    }
    let mut refined: Vec<(usize, f64)> = Vec::with_capacity(raw.len());
    for w in 0..raw.len() {
        if w > 0 {
            let (i0, t0) = raw[w - 1];
            let (i1, t1) = raw[w];
            if wrap_angle(t1 - t0).abs() > FRAC_PI_4 {
                for i in i0 + 1..i1 {
                    refined.push((i, theta_at(i)?));
                }
            }
        }
        refined.push(raw[w]);
    }
    let mut u = Unwrapper::new(refined[0].1);
    for (k, (i, t)) in refined.into_iter().enumerate() {
        samples[i].theta_hat = Some(if k == 0 { t } else { u.push(t) });
    }
    Ok(())
}

/// Simulates every start; trajectories run in parallel when the `parallel`
/// feature is enabled.
pub fn simulate_gvf(
    gf: &GuidingField,
    starts: &[Vec3],
    cfg: &IntegratorConfig,
    opts: &SimOptions,
) -> Vec<Result<Trajectory>> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        starts.par_iter().map(|s| simulate_one(gf, *s, cfg, opts)).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        starts.iter().map(|s| simulate_one(gf, *s, cfg, opts)).collect()
    }
}

/// Result of [`winding_flow_period`].
#[derive(Debug, Clone, PartialEq)]
pub struct WindingPeriod {
    /// Change of the unwrapped projected angle over the revolution.
    pub delta_theta: f64,
    /// Base-angle advance (`±2pi`).
    pub delta_phi: f64,
    pub period: f64,
    pub trajectory: Trajectory,
}

/// Follows the winding term alone for one full revolution of the base angle.
pub fn winding_flow_period(gf: &GuidingField, start: Vec3, cfg: &IntegratorConfig) -> Result<WindingPeriod> {
    let scene = gf.scene();
    let h0 = scene.lyapunov(&start)?;
    if h0 == 0.0 {
        return Err(Error::Precondition("start lies on the path, where the field vanishes".into()));
    }
    let winding = gf.winding_only();
    let mut angle = BaseAngle::new(scene, Some(TAU));
    let sol = {
        let mut events: [&mut dyn Event; 1] = [&mut angle];
        integrate(|_, p| winding.eval_field(p), start, cfg, &mut events)?
    };
    if sol.termination != Termination::Event("base_revolution".into()) {
        return Err(Error::NoReturn);
    }
    let trajectory = instrument(&winding, &sol, 1)?;
    let first = trajectory.samples[0].theta_hat.unwrap();
    let last = trajectory.last();
    Ok(WindingPeriod {
        delta_theta: last.theta_hat.unwrap() - first,
        delta_phi: last.phi_base - trajectory.samples[0].phi_base,
        period: last.s,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_field(_: f64, p: &Vec3) -> Result<Vec3> {
        Ok(*p)
    }

    #[test]
    fn zero_field_is_stationary() {
        let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 3.0);
        let sol = integrate(|_, _| Ok(Vec3::zeros()), Vec3::new(1.0, 2.0, 3.0), &cfg, &mut []).unwrap();
        assert_eq!(sol.points.len(), 2);
        assert_eq!(sol.points[0], sol.points[1]);
        assert_eq!(sol.times, vec![0.0, 3.0]);
    }

    #[test]
    fn adaptive_exponential() {
        let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 1.0);
        let sol = integrate(exp_field, Vec3::new(1.0, 0.0, 0.0), &cfg, &mut []).unwrap();
        let (t, p) = sol.end();
        assert_eq!(t, 1.0);
        assert!((p.x - 1f64.exp()).abs() < 1e-8, "{}", p.x - 1f64.exp());
    }

    #[test]
    fn rk4_is_fourth_order() {
        let err = |h: f64| {
            let sol =
                integrate(exp_field, Vec3::new(1.0, 0.0, 0.0), &IntegratorConfig::fixed(h, 1.0), &mut []).unwrap();
            (sol.end().1.x - 1f64.exp()).abs()
        };
        let ratio = err(0.1) / err(0.05);
        assert!((ratio - 16.0).abs() < 1.5, "{ratio}");
    }

    struct Threshold(f64);
    impl Event for Threshold {
        fn name(&self) -> &str {
            "threshold"
        }
        fn value(&self, _t: f64, p: &Vec3) -> f64 {
            p.x - self.0
        }
    }

    #[test]
    fn event_is_localized() {
        let cfg = IntegratorConfig::adaptive(1e-12, 1e-12, 5.0);
        let mut ev = Threshold(2.0);
        let mut events: [&mut dyn Event; 1] = [&mut ev];
        let sol = integrate(exp_field, Vec3::new(1.0, 0.0, 0.0), &cfg, &mut events).unwrap();
        assert_eq!(sol.termination, Termination::Event("threshold".into()));
        assert!((sol.end().0 - 2f64.ln()).abs() < 2e-9);
    }

    #[test]
    fn step_collapse_is_reported() {
        let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 2.0);
        // blows up at t = 1
        let err =
            integrate(|_, p| Ok(Vec3::new(p.x * p.x, 0.0, 0.0)), Vec3::new(1.0, 0.0, 0.0), &cfg, &mut []).unwrap_err();
        assert!(matches!(err, Error::StepCollapse { .. }), "{err:?}");
    }

    mod golden {
        use super::super::*;
        use crate::calc3::OneForm;
        use crate::expr::Expr;
        use crate::gvf::WeightSpec;
        use crate::scene::{ImplicitLoop, Numerics, PfaffianConstraint};

        fn scene() -> Scene {
            let c = PfaffianConstraint::new(OneForm::parse(["-x2", "x1", "1"]).unwrap());
            let l = ImplicitLoop {
                f: Expr::parse("x1^2 + x2^2 - 1").unwrap(),
                g: Expr::parse("x3").unwrap(),
                seed: Vec3::new(1.0, 0.0, 0.0),
                tube_radius: 0.5,
            };
            Scene::new(c, l, Numerics::default()).unwrap()
        }

        fn opts() -> SimOptions {
            SimOptions { eps_conv: 1e-8, theta_every: 10 }
        }

        #[test]
        fn start_on_path_is_stationary() {
            let s = scene();
            let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
            let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 50.0);
            let tr = simulate_one(&gf, s.polyline.node(3), &cfg, &opts()).unwrap();
            assert_eq!(tr.samples.len(), 1);
            assert_eq!(tr.termination, Termination::Converged);
        }

        #[test]
        fn default_weights_decrease_h_and_circle_forward() {
            let s = scene();
            let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
            let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 100.0);
            let tr = simulate_one(&gf, Vec3::new(1.2, 0.0, 0.1), &cfg, &opts()).unwrap();
            assert_eq!(tr.termination, Termination::Budget);
            assert!(tr.samples.windows(2).all(|w| w[1].h < w[0].h));
            assert!(tr.samples.iter().all(|x| x.beta_residual < 1e-9));
            assert!(tr.last().h < 1e-2 * tr.samples[0].h);
            let thetas: Vec<f64> = tr.theta_samples().map(|(_, t)| t).collect();
            assert!(thetas.last().unwrap() > &thetas[0]);
        }

        #[test]
        fn tighter_tolerance_agrees() {
            let s = scene();
            let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
            let start = Vec3::new(1.2, 0.1, -0.15);
            let o = SimOptions { eps_conv: 1e-8, theta_every: 0 };
            let a = simulate_one(&gf, start, &IntegratorConfig::adaptive(1e-10, 1e-10, 2.0), &o).unwrap();
            let b = simulate_one(&gf, start, &IntegratorConfig::fixed(1e-3, 2.0), &o).unwrap();
            let pa = Vec3::from(a.last().p);
            let pb = Vec3::from(b.last().p);
            assert!((pa - pb).norm() < 1e-9, "{}", (pa - pb).norm());
        }

        #[test]
        fn winding_period_advances_projected_angle() {
            let s = scene();
            let gf = GuidingField::new(&s, &WeightSpec::Default).unwrap();
            let cfg = IntegratorConfig::adaptive(1e-10, 1e-10, 1e3);
            let node = s.polyline.node(0);
            let mut last = 0.0;
            for h in [0.01f64, 0.1] {
                let start = s.path.solve_level(&node, [h.sqrt(), 0.0], 1e-13, 30).unwrap();
                let w = winding_flow_period(&gf, start, &cfg).unwrap();
                assert!(w.delta_theta > last, "{h}: {}", w.delta_theta);
                last = w.delta_theta;
                assert!((w.delta_phi.abs() - TAU).abs() < 1e-6);
                for x in &w.trajectory.samples {
                    assert!((x.h - h).abs() < 1e-9);
                }
                let back = winding_flow_period(&gf.flipped(), start, &cfg).unwrap();
                assert!(back.delta_phi * w.delta_phi < 0.0);
                assert!(back.delta_theta < 0.0);
            }
        }
    }
}
