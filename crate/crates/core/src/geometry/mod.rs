//! Pore shapes and triangulated component domains.

mod mesh;
mod pore;

pub use mesh::{build_component_mesh, build_mesh, pore_polygon_area, Marker, Mesh, MeshResolution};
pub use pore::{is_valid_pore, polygon_area, pore_radius, sample_valid_pore, PoreSampler, PoreShape, THETA_SCAN_POINTS};
