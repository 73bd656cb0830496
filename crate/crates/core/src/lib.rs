//! Numerical construction of compact minimal surfaces in the product of the
//! round 2-sphere with a line or circle.
//!
//! The pipeline: solve the least-area vertical graph spanning a five-sided
//! geodesic polygon, read off first-order boundary data, rebuild the
//! associated mirror contour and its prism, locate construction parameters by
//! one- and two-dimensional shooting, tile the fundamental piece by
//! reflection groups into closed quotient surfaces, and verify their
//! topology.

pub mod assembly;
pub mod conjugation;
pub mod error;
pub mod geom;
pub mod io;
pub mod mesh;
pub mod optim;
pub mod plateau;
pub mod shooting;
pub mod sphtrig;
pub mod surfaces;
pub mod topology;

pub use error::{Error, Result};
