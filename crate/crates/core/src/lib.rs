//! carnot-kit: executable machinery for Carnot groups.
//!
//! Group arithmetic in three families (step-two with a skew tensor Q,
//! filiform of the first type, and the free step-3 rank-2 group),
//! multiexponential maps with submersion and local-openness diagnostics,
//! the constructive step-two chain solver, a numerical sub-Riemannian
//! distance oracle, and harnesses for horizontal convexity and Pansu
//! differentiability of the distance.

pub mod convexity;
pub mod distance;
pub mod error;
pub mod expr;
pub mod groups;
pub mod linalg;
pub mod multiexp;
pub mod pansu;
pub mod scalar;
pub mod steptwo_solver;

pub use error::{CarnotError, Result};
pub use groups::{GroupDescriptor, PointJson};
pub use scalar::{Jet, Rat, Scalar};
