//! Composable energy surrogates for cellular hyperelastic meta-materials.
//!
//! The crate is organised bottom-up:
//!
//! * [`geometry`] builds parametric pore shapes and component meshes,
//! * [`fem`] minimizes neo-Hookean energy under Dirichlet data and exposes the
//!   collapsed energy with its boundary gradient and reduced Hessian,
//! * [`basis`] maps spline control points to boundary displacements,
//! * [`surrogate`] is the learned energy model and its training loop,
//! * [`pipeline`] collects labeled data with HMC and DAgger,
//! * [`composer`] tiles surrogates over a grid and solves the composed problem.
//!
//! Numerical kernels are generic over [`Real`]; the aliases at the crate root
//! fix the scalar to `f64` (or `f32` for the `*F32` variants).

pub mod basis;
pub mod composer;
mod dual;
mod error;
pub mod fem;
pub mod geometry;
pub mod linalg;
pub mod pipeline;
pub mod scalar;
pub mod surrogate;

pub use error::*;
pub use scalar::{Dual, Real};

pub type PoreShape = geometry::PoreShape<f64>;
pub type PoreShapeF32 = geometry::PoreShape<f32>;
pub type Mesh = geometry::Mesh<f64>;
pub type MeshF32 = geometry::Mesh<f32>;
