//! Guiding vector fields for following a closed curve in R^3 under a
//! non-holonomic Pfaffian velocity constraint `beta(v) = 0`.
//!
//! The desired path is the regular level set `{f = 0, g = 0}`. The guiding
//! field
//!
//! ```text
//! X = a * V_beta x grad H + b * V_beta x (T x grad H),   H = f^2 + g^2,  T = ±(grad f x grad g)
//! ```
//!
//! is tangent to `ker beta` by construction. Its first term winds around the
//! path at constant `H`, the second drives `H` down. The crate builds the
//! field, integrates it, and checks its guarantees numerically through the
//! parallel projection of the tube onto the path.

// `!(x > 0.0)` style tests are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calc3;
pub mod connection;
pub mod dual;
pub mod error;
pub mod expr;
pub mod flow;
pub mod gvf;
pub mod scene;
pub mod scene_file;
pub mod verify;

pub use calc3::{OneForm, TwoFormAt, Vec3};
pub use dual::Dual3;
pub use error::{Error, Result};
pub use expr::{Expr, ExprError};
