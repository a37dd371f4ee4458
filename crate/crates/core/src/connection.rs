//! Horizontal lifts of base curves in the `(f, g)` plane, the parallel
//! projection onto the path, and the first-return chart around it.

use std::f64::consts::TAU;

use crate::calc3::{to_array, Vec3};
use crate::error::{Error, Result};
use crate::flow::{integrate, Event, IntegratorConfig, Solution, Termination};
use crate::scene::Scene;

/// Tolerance for all connection ODEs.
pub const LIFT_TOL: f64 = 1e-10;
const SINGULAR_TOL: f64 = 1e-10;

/// The system `df(v) = w1, dg(v) = w2, beta(v) = 0` at a point.
#[derive(Debug, Clone, Copy)]
pub struct HorizontalSolve {
    pub grad_f: Vec3,
    pub grad_g: Vec3,
    pub v_beta: Vec3,
    /// `beta(grad f x grad g)`
    pub det: f64,
    /// `|det| / (|grad f| |grad g| |V_beta|)`, in `[0, 1]`.
    pub condition: f64,
}

impl HorizontalSolve {
    pub fn at(scene: &Scene, p: &Vec3) -> Result<Self> {
        let jet = scene.path.jet(p)?;
        let v = scene.constraint.riesz(p)?;
        let det = v.dot(&jet.grad_f.cross(&jet.grad_g));
        let scale = jet.grad_f.norm() * jet.grad_g.norm() * v.norm();
        let condition = if scale > 0.0 { det.abs() / scale } else { 0.0 };
        if !(condition > SINGULAR_TOL) {
            return Err(Error::TransversalityLost { at: to_array(p) });
        }
        Ok(Self { grad_f: jet.grad_f, grad_g: jet.grad_g, v_beta: v, det, condition })
    }

    /// Unique horizontal vector with base velocity `w`.
    pub fn velocity(&self, w: [f64; 2]) -> Vec3 {
        (self.grad_g.cross(&self.v_beta) * w[0] + self.v_beta.cross(&self.grad_f) * w[1]) / self.det
    }
}

pub fn horizontal_velocity(scene: &Scene, p: &Vec3, w: [f64; 2]) -> Result<Vec3> {
    Ok(HorizontalSolve::at(scene, p)?.velocity(w))
}

/// A curve in the `(f, g)` plane parametrized over `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaseCurve {
    Constant([f64; 2]),
    Segment {
        from: [f64; 2],
        to: [f64; 2],
    },
    /// `center + radius (cos, sin)(start + turns 2pi t)`.
    Circle {
        center: [f64; 2],
        radius: f64,
        start: f64,
        turns: f64,
    },
}

impl BaseCurve {
    pub fn point(&self, t: f64) -> [f64; 2] {
        match *self {
            BaseCurve::Constant(w) => w,
            BaseCurve::Segment { from, to } => [from[0] + (to[0] - from[0]) * t, from[1] + (to[1] - from[1]) * t],
            BaseCurve::Circle { center, radius, start, turns } => {
                let a = start + turns * TAU * t;
                [center[0] + radius * a.cos(), center[1] + radius * a.sin()]
            }
        }
    }

    /// Largest distance from the origin along the curve.
    pub fn max_radius(&self) -> f64 {
        let n = |w: [f64; 2]| w[0].hypot(w[1]);
        match *self {
            BaseCurve::Constant(w) => n(w),
            BaseCurve::Segment { from, to } => n(from).max(n(to)),
            BaseCurve::Circle { center, radius, .. } => n(center) + radius.abs(),
        }
    }

    pub fn velocity(&self, t: f64) -> [f64; 2] {
        match *self {
            BaseCurve::Constant(_) => [0.0, 0.0],
            BaseCurve::Segment { from, to } => [to[0] - from[0], to[1] - from[1]],
            BaseCurve::Circle { radius, start, turns, .. } => {
                let a = start + turns * TAU * t;
                let k = radius * turns * TAU;
                [-k * a.sin(), k * a.cos()]
            }
        }
    }
}

/// Stops when `H > radius^2` (with a small relative margin).
struct LeavesDisk<'s> {
    scene: &'s Scene,
    radius: f64,
}

impl Event for LeavesDisk<'_> {
    fn name(&self) -> &str {
        "tube_exit"
    }
    fn value(&self, _t: f64, p: &Vec3) -> f64 {
        let r2 = self.radius * self.radius;
        self.scene.lyapunov(p).map_or(f64::NAN, |h| h - r2 * (1.0 + 1e-6))
    }
    fn termination(&self) -> Termination {
        Termination::TubeExit
    }
}

/// A horizontal lift with its measured residuals.
#[derive(Debug, Clone, PartialEq)]
pub struct Lift {
    pub solution: Solution,
    /// Max `|(f, g)(lift(t)) - base(t)|` over accepted steps.
    pub tracking_error: f64,
    /// Max `|beta(lift')|` over accepted steps.
    pub constraint_residual: f64,
}

impl Lift {
    pub fn end(&self) -> Vec3 {
        self.solution.end().1
    }
}

/// Integrates the horizontal lift of `base` starting from `start`.
pub fn lift_path(scene: &Scene, base: &BaseCurve, start: &Vec3) -> Result<Lift> {
    let (f0, g0) = scene.path.residual(start)?;
    let b0 = base.point(0.0);
    if (f0 - b0[0]).hypot(g0 - b0[1]) > 1e-8 {
        return Err(Error::Invalid(format!(
            "lift start has (f, g) = ({f0:e}, {g0:e}) but the base curve starts at {b0:?}"
        )));
    }
    let cfg = IntegratorConfig::adaptive(LIFT_TOL, LIFT_TOL, 1.0);
    // the tube bound is the larger of delta and the base curve's own reach
    let reach = base.max_radius().max(scene.delta());
    let mut exit = LeavesDisk { scene, radius: reach };
    let solution = {
        let mut events: [&mut dyn Event; 1] = [&mut exit];
        integrate(|t, p| horizontal_velocity(scene, p, base.velocity(t)), *start, &cfg, &mut events)?
    };
    if solution.termination == Termination::TubeExit {
        return Err(Error::TubeExit { at: to_array(&solution.end().1) });
    }
    let mut tracking_error: f64 = 0.0;
    let mut constraint_residual: f64 = 0.0;
    for (t, p) in solution.times.iter().zip(&solution.points) {
        let (f, g) = scene.path.residual(p)?;
        let b = base.point(*t);
        tracking_error = tracking_error.max((f - b[0]).hypot(g - b[1]));
        let v = horizontal_velocity(scene, p, base.velocity(*t))?;
        constraint_residual = constraint_residual.max(scene.constraint.riesz(p)?.dot(&v).abs());
    }
    Ok(Lift { solution, tracking_error, constraint_residual })
}

/// End point of the lift of the radial segment from `(f, g)(p)` to the origin,
/// polished onto the path.
pub fn parallel_project(scene: &Scene, p: &Vec3) -> Result<Vec3> {
    let (f, g) = scene.path.residual(p)?;
    if f == 0.0 && g == 0.0 {
        return Ok(*p);
    }
    let lift = lift_path(scene, &BaseCurve::Segment { from: [f, g], to: [0.0, 0.0] }, p)?;
    let end = lift.end();
    let (fe, ge) = scene.path.residual(&end)?;
    if fe.abs().max(ge.abs()) < 1e-12 {
        return Ok(end);
    }
    scene.path.solve_level(&end, [0.0, 0.0], 1e-12, 2)
}

/// `psi(q, z, t)`: lift from `q` on the path of the base line `s z`, `s` in `[0, t]`.
pub fn psi(scene: &Scene, q: &Vec3, z: [f64; 2], t: f64) -> Result<Vec3> {
    if t == 0.0 {
        return Ok(*q);
    }
    let lift = lift_path(scene, &BaseCurve::Segment { from: [0.0, 0.0], to: [z[0] * t, z[1] * t] }, q)?;
    Ok(lift.end())
}

/// Crossing of the plane `n.(p - anchor) = 0` in the direction of `T`; armed
/// once the flow has left the plane.
struct SectionCrossing<'s> {
    scene: &'s Scene,
    anchor: Vec3,
    normal: Vec3,
    armed: bool,
}

impl Event for SectionCrossing<'_> {
    fn name(&self) -> &str {
        "section"
    }
    fn value(&self, _t: f64, p: &Vec3) -> f64 {
        if self.armed {
            self.normal.dot(&(p - self.anchor))
        } else {
            -1.0
        }
    }
    fn commit(&mut self, p: &Vec3) {
        if self.normal.dot(&(p - self.anchor)).abs() > 1e-6 {
            self.armed = true;
        }
    }
    fn accept(&self, p: &Vec3) -> bool {
        self.scene.fiber_direction(p).is_ok_and(|t| t.dot(&self.normal) > 0.0)
    }
}

/// Flow of `T / (1 + |T|^2)`, which preserves `(f, g)`.
fn fiber_flow(scene: &Scene, p: &Vec3) -> Result<Vec3> {
    let t = scene.fiber_direction(p)?;
    Ok(t / (1.0 + t.norm_squared()))
}

const RETURN_BUDGET: f64 = 1e4;

#[derive(Debug, Clone, PartialEq)]
pub struct FirstReturn {
    pub time: f64,
    pub start: Vec3,
    pub end: Vec3,
    pub solution: Solution,
}

/// Section point with base coordinates `z` in the plane through `anchor` with
/// normal `T(anchor)`.
pub fn section_point(scene: &Scene, anchor: &Vec3, z: [f64; 2]) -> Result<(Vec3, Vec3)> {
    if z[0].hypot(z[1]) > scene.delta() {
        return Err(Error::SectionDegenerate(format!("base point {z:?} lies outside the tube disk")));
    }
    let t = scene.fiber_direction(anchor).map_err(|e| Error::SectionDegenerate(e.to_string()))?;
    let normal = t / t.norm();
    let start = scene
        .path
        .solve_in_plane(anchor, z, anchor, &normal, 1e-12)
        .map_err(|_| Error::SectionDegenerate(format!("no section point with base {z:?}")))?;
    let ts = scene.fiber_direction(&start).map_err(|e| Error::SectionDegenerate(e.to_string()))?;
    if ts.dot(&normal) <= 1e-3 * ts.norm() {
        return Err(Error::SectionDegenerate(format!("fiber flow is tangent to the section at {start:?}")));
    }
    Ok((start, normal))
}

/// Time for the normalized fiber flow from the section point over `z` to
/// cross the section again in the positive direction.
pub fn first_return(scene: &Scene, anchor: &Vec3, z: [f64; 2]) -> Result<FirstReturn> {
    let (start, normal) = section_point(scene, anchor, z)?;
    let solution = flow_to_section(scene, &start, anchor, &normal)?;
    let (time, end) = solution.end();
    Ok(FirstReturn { time, start, end, solution })
}

fn flow_to_section(scene: &Scene, from: &Vec3, anchor: &Vec3, normal: &Vec3) -> Result<Solution> {
    let cfg = IntegratorConfig::adaptive(LIFT_TOL, LIFT_TOL, RETURN_BUDGET);
    let mut section = SectionCrossing { scene, anchor: *anchor, normal: *normal, armed: false };
    let solution = {
        let mut events: [&mut dyn Event; 1] = [&mut section];
        integrate(|_, p| fiber_flow(scene, p), *from, &cfg, &mut events)?
    };
    if solution.termination != Termination::Event("section".into()) {
        return Err(Error::NoReturn);
    }
    Ok(solution)
}

/// Fiber-angle chart built from return times of the fiber flow.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnChart {
    pub anchor: Vec3,
    pub normal: Vec3,
    /// `(z, return time)` on a polar grid of the base disk, the center first.
    pub return_times: Vec<([f64; 2], f64)>,
}

impl ReturnChart {
    /// Samples return times on `rings x spokes` base points inside `radius`.
    pub fn build(scene: &Scene, anchor: &Vec3, radius: f64, rings: usize, spokes: usize) -> Result<Self> {
        let anchor = scene.path.find_on_path(anchor)?;
        let (_, normal) = section_point(scene, &anchor, [0.0, 0.0])?;
        let mut return_times = vec![([0.0, 0.0], first_return(scene, &anchor, [0.0, 0.0])?.time)];
        for i in 1..=rings {
            let r = radius * i as f64 / rings as f64;
            for j in 0..spokes {
                let a = TAU * j as f64 / spokes as f64;
                let z = [r * a.cos(), r * a.sin()];
                return_times.push((z, first_return(scene, &anchor, z)?.time));
            }
        }
        Ok(Self { anchor, normal, return_times })
    }

    /// Fiber angle in `[0, 2pi)`: elapsed fraction of the return time since the
    /// last crossing of the section.
    pub fn angle(&self, scene: &Scene, p: &Vec3) -> Result<f64> {
        let (f, g) = scene.path.residual(p)?;
        let period = first_return(scene, &self.anchor, [f, g])?.time;
        let to_section = flow_to_section(scene, p, &self.anchor, &self.normal)?.end().0;
        Ok((TAU * (1.0 - to_section / period)).rem_euclid(TAU))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calc3::OneForm;
    use crate::expr::Expr;
    use crate::scene::{ImplicitLoop, Numerics, PfaffianConstraint};
    use std::f64::consts::PI;

    fn golden() -> Scene {
        let c = PfaffianConstraint::new(OneForm::parse(["-x2", "x1", "1"]).unwrap());
        let l = ImplicitLoop {
            f: Expr::parse("x1^2 + x2^2 - 1").unwrap(),
            g: Expr::parse("x3").unwrap(),
            seed: Vec3::new(1.0, 0.0, 0.0),
            tube_radius: 0.5,
        };
        Scene::new(c, l, Numerics::default()).unwrap()
    }

    /// Projected angle for `dx3 + x1 dx2 - x2 dx1` and the unit circle, from the
    /// explicit radial lift.
    fn heisenberg_theta(p: &Vec3) -> f64 {
        let s = p.x * p.x + p.y * p.y;
        let l = if (s - 1.0).abs() < 1e-12 { 1.0 } else { s.ln() / (s - 1.0) };
        p.y.atan2(p.x) + p.z * l
    }

    #[test]
    fn horizontal_velocity_solves_system() {
        let s = golden();
        let p = Vec3::new(1.0, 0.0, 0.0);
        assert_eq!(horizontal_velocity(&s, &p, [0.0, 0.0]).unwrap(), Vec3::zeros());
        for p in [p, Vec3::new(0.8, 0.5, 0.2), Vec3::new(-1.1, 0.3, -0.1)] {
            let hs = HorizontalSolve::at(&s, &p).unwrap();
            for w in [[1.0, 0.0], [0.0, 1.0], [0.3, -0.7]] {
                let v = hs.velocity(w);
                let m = nalgebra::Matrix3::from_rows(&[
                    hs.grad_f.transpose(),
                    hs.grad_g.transpose(),
                    hs.v_beta.transpose(),
                ]);
                let oracle = m.lu().solve(&Vec3::new(w[0], w[1], 0.0)).unwrap();
                assert!((v - oracle).norm() < 1e-12);
                assert!((hs.grad_f.dot(&v) - w[0]).abs() < 1e-12);
                assert!((hs.grad_g.dot(&v) - w[1]).abs() < 1e-12);
                assert!(hs.v_beta.dot(&v).abs() < 1e-12);
            }
            let sum = hs.velocity([1.3, -0.4]);
            assert!((sum - hs.velocity([1.0, 0.0]) * 1.3 - hs.velocity([0.0, 1.0]) * -0.4).norm() < 1e-12);
        }
    }

    #[test]
    fn singular_system_is_transversality_loss() {
        let c = PfaffianConstraint::new(OneForm::parse(["0", "0", "1"]).unwrap());
        let mut s = golden();
        s.constraint = c;
        let err = horizontal_velocity(&s, &Vec3::new(1.0, 0.0, 0.0), [1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::TransversalityLost { .. }));
    }

    #[test]
    fn constant_and_closed_base_curves() {
        let s = golden();
        let p = Vec3::new(1.05, 0.2, 0.03);
        let (f, g) = s.path.residual(&p).unwrap();
        let lift = lift_path(&s, &BaseCurve::Constant([f, g]), &p).unwrap();
        assert_eq!(lift.end(), p);

        let q = Vec3::new(1.0, 0.0, 0.0);
        let circle = BaseCurve::Circle { center: [0.0, 0.0], radius: 0.0, start: 0.0, turns: 1.0 };
        assert_eq!(lift_path(&s, &circle, &q).unwrap().end(), q);
        let p = s.path.solve_level(&q, [0.1, 0.0], 1e-13, 30).unwrap();
        let loop_ = BaseCurve::Circle { center: [0.0, 0.0], radius: 0.1, start: 0.0, turns: 1.0 };
        let lift = lift_path(&s, &loop_, &p).unwrap();
        let (f, g) = s.path.residual(&lift.end()).unwrap();
        assert!((f - 0.1).abs() < 1e-8 && g.abs() < 1e-8);
        assert!(lift.tracking_error < 1e-7 && lift.constraint_residual < 1e-7);
        // holonomy: the end point moved along the fiber
        assert!((lift.end() - p).norm() > 1e-3);
    }

    #[test]
    fn radial_lift_lands_on_path() {
        let s = golden();
        let p = Vec3::new(1.1, 0.0, 0.0);
        let lift = lift_path(&s, &BaseCurve::Segment { from: [0.21, 0.0], to: [0.0, 0.0] }, &p).unwrap();
        let (f, g) = s.path.residual(&lift.end()).unwrap();
        assert!(f.abs().max(g.abs()) < 1e-8);
    }

    #[test]
    fn projection_matches_explicit_lift() {
        let s = golden();
        let q = parallel_project(&s, &Vec3::new(1.1, 0.0, 0.0)).unwrap();
        assert!((q - Vec3::new(1.0, 0.0, 0.0)).norm() < 1e-9, "{q:?}");
        for p in [Vec3::new(1.1, 0.0, 0.1), Vec3::new(0.7, 0.5, -0.3), Vec3::new(-0.2, -1.1, 0.2)] {
            let q = parallel_project(&s, &p).unwrap();
            let angle = q.y.atan2(q.x);
            assert!((q.norm() - 1.0).abs() < 1e-9 && q.z.abs() < 1e-9);
            let diff = crate::scene::wrap_angle(angle - heisenberg_theta(&p));
            assert!(diff.abs() < 1e-8, "{p:?}: {diff}");
        }
        let on = Vec3::new(0.6, -0.8, 0.0);
        assert!((parallel_project(&s, &on).unwrap() - on).norm() < 1e-10);
    }

    #[test]
    fn projection_is_idempotent_and_constant_on_radial_lifts() {
        let s = golden();
        let p = Vec3::new(0.9, 0.45, 0.2);
        let q = parallel_project(&s, &p).unwrap();
        assert!((parallel_project(&s, &q).unwrap() - q).norm() < 2e-8);
        let (f, g) = s.path.residual(&p).unwrap();
        let mid = lift_path(&s, &BaseCurve::Segment { from: [f, g], to: [0.5 * f, 0.5 * g] }, &p).unwrap().end();
        assert!((parallel_project(&s, &mid).unwrap() - q).norm() < 1e-7);
    }

    #[test]
    fn psi_round_trips_through_projection() {
        let s = golden();
        let q = s.polyline.node(40);
        assert_eq!(psi(&s, &q, [0.3, 0.2], 0.0).unwrap(), q);
        for t in [0.25, 0.5, 1.0] {
            let p = psi(&s, &q, [0.3, 0.2], t).unwrap();
            assert!((parallel_project(&s, &p).unwrap() - q).norm() < 1e-7);
        }
        let q2 = s.polyline.node(41);
        for t in [0.25, 0.5, 1.0] {
            let a = psi(&s, &q, [0.3, 0.2], t).unwrap();
            let b = psi(&s, &q2, [0.3, 0.2], t).unwrap();
            assert!((a - b).norm() > 1e-4);
        }
    }

    #[test]
    fn first_return_on_golden_scene() {
        let s = golden();
        let anchor = s.polyline.node(0);
        let r = first_return(&s, &anchor, [0.0, 0.0]).unwrap();
        assert!((r.time - 5.0 * PI).abs() < 1e-6, "{}", r.time - 5.0 * PI);
        assert!((r.end - r.start).norm() < 1e-7);

        let r = first_return(&s, &anchor, [0.05, 0.02]).unwrap();
        assert!((r.end - r.start).norm() < 1e-7);
        assert!(matches!(first_return(&s, &anchor, [0.6, 0.0]), Err(Error::SectionDegenerate(_))));
    }

    #[test]
    fn return_chart_angle_tracks_polar_angle() {
        let s = golden();
        let chart = ReturnChart::build(&s, &Vec3::new(1.0, 0.0, 0.0), 0.05, 2, 4).unwrap();
        let times: Vec<f64> = chart.return_times.iter().map(|r| r.1).collect();
        let lo = times.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = times.iter().cloned().fold(0.0, f64::max);
        assert!(lo > 0.0 && hi / lo < 1.1);
        let a = chart.angle(&s, &Vec3::new(0.0, 1.0, 0.0)).unwrap();
        assert!((a - PI / 2.0).abs() < 1e-6, "{a}");
    }
}
