//! Spline reduced basis on the component boundary, rigid-motion removal, macroscopic
//! strain, and the flip symmetries of the square.

mod layout;
mod procrustes;
mod spline;

pub use layout::{flip, macro_strain, macro_strain_operator, BoundaryVector, ControlLayout, FlipAxis};
pub use procrustes::{procrustes_align, Procrustes, RigidTransform};
pub use spline::{build_spline_map, NotAKnotSpline, SplineMap};
