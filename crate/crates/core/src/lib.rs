//! Contracting Gauss-curvature-power flows of convex bodies in the sphere,
//! Euclidean space and hyperbolic space, simulated through the support
//! function of the projected body.

pub mod config;
pub mod entropy;
pub mod error;
pub mod flow;
mod interp;
pub mod io;
pub mod normalized;
pub mod reference;
pub mod run;
pub mod spaceform;
pub mod sphere;

pub use error::{FlowError, Result};
