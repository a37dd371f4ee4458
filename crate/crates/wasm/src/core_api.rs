//! Scene session used by the bindings; plain Rust, no JS types.

use nonholo::flow::{simulate_one, winding_flow_period, IntegratorConfig, SimOptions, Trajectory};
use nonholo::gvf::GuidingField;
use nonholo::scene_file::{LoadedScene, SceneFile};
use nonholo::{Result, Vec3};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::MAX_DRAWN;

/// A trajectory thinned for drawing.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub points: Vec<f64>,
    pub s: Vec<f64>,
    pub h: Vec<f64>,
    pub theta: Vec<f64>,
    pub termination: String,
    /// Advance of the projected angle over the whole run.
    pub delta_theta: f64,
}

impl Run {
    fn from_trajectory(t: &Trajectory, delta_theta: f64) -> Self {
        let n = t.samples.len();
        let stride = n.div_ceil(MAX_DRAWN).max(1);
        let mut run = Run {
            points: Vec::new(),
            s: Vec::new(),
            h: Vec::new(),
            theta: Vec::new(),
            termination: format!("{:?}", t.termination),
            delta_theta,
        };
        for (i, s) in t.samples.iter().enumerate() {
            // keep every stride-th sample, the last one, and every projected angle
            if i % stride == 0 || i + 1 == n || (s.theta_hat.is_some() && i % stride.min(10) == 0) {
                run.points.extend_from_slice(&s.p);
                run.s.push(s.s);
                run.h.push(s.h);
                run.theta.push(s.theta_hat.unwrap_or(f64::NAN));
            }
        }
        run
    }
}

pub struct Session {
    loaded: LoadedScene,
}

pub fn reference_scene() -> String {
    SceneFile::heisenberg().to_json()
}

fn advance(t: &Trajectory) -> f64 {
    let mut it = t.theta_samples().map(|(_, th)| th);
    match it.next() {
        Some(first) => it.last().map_or(0.0, |last| last - first),
        None => 0.0,
    }
}

impl Session {
    pub fn load(json: &str) -> Result<Self> {
        Ok(Session { loaded: SceneFile::from_json(json)?.load()? })
    }

    pub fn delta(&self) -> f64 {
        self.loaded.scene.delta()
    }

    pub fn path(&self) -> Vec<f64> {
        let poly = &self.loaded.scene.polyline;
        (0..poly.len())
            .flat_map(|i| {
                let p = poly.node(i);
                [p.x, p.y, p.z]
            })
            .collect()
    }

    pub fn check(&self) -> String {
        let scene = &self.loaded.scene;
        let report = scene.check_assumptions(&mut ChaCha8Rng::seed_from_u64(scene.numerics.rng_seed));
        serde_json::to_string(&report).expect("report serializes")
    }

    pub fn start_point(&self, theta: f64, f: f64, g: f64) -> Result<Vec<f64>> {
        let scene = &self.loaded.scene;
        let guess = scene.polyline.point_at(theta.rem_euclid(std::f64::consts::TAU));
        let p = scene.path.solve_level(&guess, [f, g], 1e-12, 40)?;
        Ok(vec![p.x, p.y, p.z])
    }

    pub fn simulate(&self, p: [f64; 3], max_time: f64, b_scale: f64) -> Result<Run> {
        let scene = &self.loaded.scene;
        let gf = GuidingField::new(scene, &self.loaded.weights)?.with_b_scale(b_scale);
        let mut cfg = IntegratorConfig::from_numerics(&scene.numerics);
        cfg.max_time = max_time;
        let t = simulate_one(&gf, Vec3::from(p), &cfg, &SimOptions::from_scene(scene))?;
        Ok(Run::from_trajectory(&t, advance(&t)))
    }

    pub fn winding_loop(&self, p: [f64; 3]) -> Result<Run> {
        let scene = &self.loaded.scene;
        let gf = GuidingField::new(scene, &self.loaded.weights)?;
        let cfg = IntegratorConfig::from_numerics(&scene.numerics);
        let w = winding_flow_period(&gf, Vec3::from(p), &cfg)?;
        Ok(Run::from_trajectory(&w.trajectory, w.delta_theta))
    }
}
