//! Browser bindings. [`Demo`] holds one loaded scene; the page picks starts,
//! runs the guiding field or its winding part alone, and draws the results.
//!
//! The plain functions in [`core_api`] carry the logic and are tested
//! natively; the `#[wasm_bindgen]` layer only converts errors.

use wasm_bindgen::prelude::*;

pub mod core_api;

use core_api::{Run, Session};

/// Longest polyline handed to the page; longer runs are thinned evenly.
pub const MAX_DRAWN: usize = 4000;

#[wasm_bindgen]
pub struct Demo {
    session: Session,
}

#[wasm_bindgen]
pub struct RunView {
    run: Run,
}

#[wasm_bindgen]
impl RunView {
    /// Flattened `x1, x2, x3` per drawn sample.
    #[wasm_bindgen(getter)]
    pub fn points(&self) -> Vec<f64> {
        self.run.points.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn s(&self) -> Vec<f64> {
        self.run.s.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn h(&self) -> Vec<f64> {
        self.run.h.clone()
    }
    /// Unwrapped projected angle; NaN where it was not computed.
    #[wasm_bindgen(getter)]
    pub fn theta(&self) -> Vec<f64> {
        self.run.theta.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn termination(&self) -> String {
        self.run.termination.clone()
    }
    #[wasm_bindgen(getter)]
    pub fn delta_theta(&self) -> f64 {
        self.run.delta_theta
    }
}

fn js(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
impl Demo {
    /// Loads a scene from its JSON text.
    #[wasm_bindgen(constructor)]
    pub fn new(scene_json: &str) -> Result<Demo, JsError> {
        Ok(Demo { session: Session::load(scene_json).map_err(js)? })
    }

    /// The built-in reference scene as JSON text.
    pub fn reference_scene() -> String {
        core_api::reference_scene()
    }

    pub fn delta(&self) -> f64 {
        self.session.delta()
    }

    /// Flattened path nodes.
    pub fn path(&self) -> Vec<f64> {
        self.session.path()
    }

    /// Assumption checks as JSON.
    pub fn check(&self) -> String {
        self.session.check()
    }

    /// Tube point at path angle `theta` with base offset `(f, g)`.
    pub fn start_point(&self, theta: f64, f: f64, g: f64) -> Result<Vec<f64>, JsError> {
        self.session.start_point(theta, f, g).map_err(js)
    }

    /// Guiding-field trajectory from `(x1, x2, x3)` with the convergence weight scaled.
    pub fn simulate(&self, x1: f64, x2: f64, x3: f64, max_time: f64, b_scale: f64) -> Result<RunView, JsError> {
        Ok(RunView { run: self.session.simulate([x1, x2, x3], max_time, b_scale).map_err(js)? })
    }

    /// One base revolution of the winding part alone.
    pub fn winding_loop(&self, x1: f64, x2: f64, x3: f64) -> Result<RunView, JsError> {
        Ok(RunView { run: self.session.winding_loop([x1, x2, x3]).map_err(js)? })
    }
}
