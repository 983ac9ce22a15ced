use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{ControlLayout, FlipAxis};
use crate::surrogate::{surrogate_energy_grad, SurrogateParams};
use crate::ComposerError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadMode {
    Compression,
    Tension,
}

impl LoadMode {
    pub fn name(self) -> &'static str {
        match self {
            LoadMode::Compression => "compression",
            LoadMode::Tension => "tension",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadAxis {
    X,
    #[default]
    Y,
}

/// Axial strain applied through the two external edges normal to `axis`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCondition {
    pub strain: f64,
    #[serde(default)]
    pub axis: LoadAxis,
    pub mode: LoadMode,
}

impl BoundaryCondition {
    pub fn compression(strain: f64) -> Self {
        Self { strain, axis: LoadAxis::Y, mode: LoadMode::Compression }
    }

    pub fn tension(strain: f64) -> Self {
        Self { strain, axis: LoadAxis::Y, mode: LoadMode::Tension }
    }

    /// Prescribed axial displacement of the edge at the low (`false`) or high (`true`) end of
    /// a domain of length `length`: `±ε·length/2`, inward for compression.
    pub fn edge_displacement(&self, high: bool, length: f64) -> f64 {
        let s = match self.mode {
            LoadMode::Compression => 1.0,
            LoadMode::Tension => -1.0,
        };
        let d = s * self.strain * length / 2.0;
        if high {
            -d
        } else {
            d
        }
    }
}

/// Energy model of a single component in control-point coordinates.
pub trait ComponentEnergy: Sync {
    fn energy_grad(&self, u: &[f64], xi: [f64; 2]) -> (f64, Vec<f64>);
}

impl ComponentEnergy for SurrogateParams<f64> {
    fn energy_grad(&self, u: &[f64], xi: [f64; 2]) -> (f64, Vec<f64>) {
        surrogate_energy_grad(self, u, xi)
    }
}

/// A `g × g` grid of components sharing control points on the skeleton.
///
/// Skeleton points are the lattice sites `(I, J)`, `0 ≤ I, J ≤ g (N − 1)`, lying on a
/// component edge, numbered row by row from the bottom. Global dofs interleave `x, y`.
#[derive(Clone, Debug)]
pub struct Assembly {
    pub grid: usize,
    pub layout: ControlLayout,
    /// Side length of one component.
    pub component_side: f64,
    /// Pore parameters per component, row-major from the bottom row.
    pub xi: Vec<[f64; 2]>,
    pub bc: BoundaryCondition,
    lattice: Vec<(usize, usize)>,
    index: Vec<Option<usize>>,
    /// Global dof of each local dof, per component.
    pub gather: Vec<Vec<usize>>,
    pub fixed: Vec<bool>,
    /// Prescribed values on fixed dofs, zero elsewhere.
    pub prescribed: Vec<f64>,
}

/// Builds the skeleton numbering, gather maps and Dirichlet data.
pub fn build_assembly(xi: Vec<[f64; 2]>, grid: usize, per_edge: usize, component_side: f64, bc: BoundaryCondition) -> Result<Assembly, ComposerError> {
    if grid == 0 {
        return Err(ComposerError::Assembly("grid must be at least 1×1".into()));
    }
    if xi.len() != grid * grid {
        return Err(ComposerError::Assembly(format!("{} pore shapes for a {grid}×{grid} grid", xi.len())));
    }
    if !(component_side > 0.0) || !bc.strain.is_finite() || bc.strain < 0.0 {
        return Err(ComposerError::Assembly("component side must be positive and strain finite and non-negative".into()));
    }
    let layout = ControlLayout::new(per_edge)?;
    let m = per_edge - 1;
    let side = grid * m + 1;
    let mut lattice = Vec::new();
    let mut index = vec![None; side * side];
    for j in 0..side {
        for i in 0..side {
            if i % m == 0 || j % m == 0 {
                index[j * side + i] = Some(lattice.len());
                lattice.push((i, j));
            }
        }
    }
    let gather = (0..grid * grid)
        .map(|c| {
            let (ci, cj) = (c % grid, c / grid);
            (0..layout.n_points())
                .flat_map(|p| {
                    let (i, j) = layout.lattice(p);
                    let g = index[(cj * m + j) * side + ci * m + i].expect("component edge lies on the skeleton");
                    [2 * g, 2 * g + 1]
                })
                .collect()
        })
        .collect();
    let n = 2 * lattice.len();
    let mut fixed = vec![false; n];
    let mut prescribed = vec![0.0; n];
    let length = grid as f64 * component_side;
    let end = grid * m;
    for (g, &(i, j)) in lattice.iter().enumerate() {
        let (coord, comp) = match bc.axis {
            LoadAxis::X => (i, 0),
            LoadAxis::Y => (j, 1),
        };
        if coord == 0 || coord == end {
            fixed[2 * g + comp] = true;
            prescribed[2 * g + comp] = bc.edge_displacement(coord == end, length);
        }
    }
    Ok(Assembly { grid, layout, component_side, xi, bc, lattice, index, gather, fixed, prescribed })
}

impl Assembly {
    pub fn n_components(&self) -> usize {
        self.grid * self.grid
    }

    pub fn n_points(&self) -> usize {
        self.lattice.len()
    }

    pub fn n_dofs(&self) -> usize {
        2 * self.lattice.len()
    }

    fn lattice_side(&self) -> usize {
        self.grid * (self.layout.per_edge - 1) + 1
    }

    /// Lattice site of global point `g`.
    pub fn lattice(&self, g: usize) -> (usize, usize) {
        self.lattice[g]
    }

    pub fn point_at(&self, (i, j): (usize, usize)) -> Option<usize> {
        let s = self.lattice_side();
        (i < s && j < s).then(|| self.index[j * s + i]).flatten()
    }

    /// Rest positions of the skeleton points.
    pub fn positions(&self) -> Vec<[f64; 2]> {
        let h = self.component_side / (self.layout.per_edge - 1) as f64;
        self.lattice.iter().map(|&(i, j)| [i as f64 * h, j as f64 * h]).collect()
    }

    pub fn width(&self) -> f64 {
        self.grid as f64 * self.component_side
    }

    pub fn free_dofs(&self) -> Vec<usize> {
        (0..self.n_dofs()).filter(|&d| !self.fixed[d]).collect()
    }

    pub fn gather_component(&self, u: &[f64], c: usize) -> Vec<f64> {
        self.gather[c].iter().map(|&d| u[d]).collect()
    }

    pub fn scatter_add(&self, c: usize, local: &[f64], out: &mut [f64]) {
        for (&d, &v) in self.gather[c].iter().zip(local) {
            out[d] += v;
        }
    }

    /// Mirror image of a global field: positions are reflected and the normal component negated.
    pub fn flip(&self, u: &[f64], axis: FlipAxis) -> Vec<f64> {
        let end = self.lattice_side() - 1;
        let mut out = vec![0.0; u.len()];
        for (g, &(i, j)) in self.lattice.iter().enumerate() {
            let (src, comp) = match axis {
                FlipAxis::Horizontal => ((end - i, j), 0),
                FlipAxis::Vertical => ((i, end - j), 1),
            };
            let s = self.point_at(src).expect("mirror of a skeleton point is a skeleton point");
            out[2 * g] = u[2 * s];
            out[2 * g + 1] = u[2 * s + 1];
            out[2 * g + comp] = -out[2 * g + comp];
        }
        out
    }

    /// Component index permutation of a flip: component `c` of the flipped grid is `perm[c]`.
    pub fn flip_components(&self, axis: FlipAxis) -> Vec<usize> {
        let g = self.grid;
        (0..g * g)
            .map(|c| {
                let (ci, cj) = (c % g, c / g);
                match axis {
                    FlipAxis::Horizontal => cj * g + (g - 1 - ci),
                    FlipAxis::Vertical => (g - 1 - cj) * g + ci,
                }
            })
            .collect()
    }

    /// Whether the pore grid is mapped to itself by a flip.
    pub fn is_flip_symmetric(&self, axis: FlipAxis) -> bool {
        self.flip_components(axis).iter().enumerate().all(|(c, &p)| self.xi[c] == self.xi[p])
    }
}

/// `Σ_c Ê(u_c, ξ_c)` and its gradient over global dofs; fixed dofs get zero gradient.
///
/// Components are evaluated in parallel and accumulated in component order.
pub fn composed_energy<M: ComponentEnergy + ?Sized>(asm: &Assembly, model: &M, u: &[f64]) -> (f64, Vec<f64>) {
    let parts: Vec<(f64, Vec<f64>)> =
        (0..asm.n_components()).into_par_iter().map(|c| model.energy_grad(&asm.gather_component(u, c), asm.xi[c])).collect();
    let mut grad = vec![0.0; asm.n_dofs()];
    let mut energy = 0.0;
    for (c, (e, g)) in parts.iter().enumerate() {
        energy += e;
        asm.scatter_add(c, g, &mut grad);
    }
    for (g, &f) in grad.iter_mut().zip(&asm.fixed) {
        if f {
            *g = 0.0;
        }
    }
    (energy, grad)
}
