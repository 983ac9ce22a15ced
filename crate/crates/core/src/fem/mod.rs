//! Neo-Hookean finite elements on P1 triangles, Dirichlet solves, and the collapsed
//! energy's boundary derivatives.

mod assemble;
mod collapsed;
mod material;
mod solver;

pub use assemble::{assemble, Assembled, FemModel};
pub use collapsed::{
    collapsed_gradient, read_solution_text, reduced_hessian, reduced_hessian_projected, write_solution_text,
    ReducedHessian,
};
pub use material::{density_derivatives, energy_density, pk1_stress, DefGrad, Material};
pub use solver::{solve_dirichlet, DirichletData, FemSolution, SolveSchedule};
