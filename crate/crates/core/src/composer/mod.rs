//! Composed surrogate solves on a grid of components and comparison against full FEA.
mod assembly;
mod lbfgs;
mod reference;

pub use assembly::{build_assembly, composed_energy, Assembly, BoundaryCondition, ComponentEnergy, LoadAxis, LoadMode};
pub use lbfgs::{minimize_lbfgs, solve_composed, LbfgsConfig, SolveResult};
pub use reference::{
    assembly_dirichlet, assembly_mesh, compare, fea_reference, remove_transverse_mean, restrict_to_skeleton, Comparison, FeaReference, ScheduleAttempt,
    ScheduleGrid,
};
