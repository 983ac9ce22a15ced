use std::sync::Arc;

use crate::fem::material::{density_derivatives, energy_density, Material};
use crate::geometry::Mesh;
use crate::linalg::{reverse_cuthill_mckee, BlockCsr};
use crate::scalar::Real;
use crate::FemError;

/// Reference geometry of one P1 triangle.
#[derive(Clone, Copy, Debug)]
struct Element<T> {
    nodes: [usize; 3],
    area: T,
    /// `∇N_a` in reference coordinates.
    grads: [[T; 2]; 3],
}

/// A mesh with its material, element geometry, sparsity pattern and elimination order.
///
/// Built once and shared by every solve on the same mesh.
#[derive(Clone, Debug)]
pub struct FemModel<T> {
    mesh: Arc<Mesh<T>>,
    material: Material<T>,
    elements: Vec<Element<T>>,
    pattern: BlockCsr<T>,
    order: Vec<usize>,
}

/// Energy with its exact gradient and Hessian over all dofs.
#[derive(Clone, Debug)]
pub struct Assembled<T> {
    pub energy: T,
    pub residual: Vec<T>,
    pub tangent: BlockCsr<T>,
}

impl<T: Real> FemModel<T> {
    pub fn new(mesh: impl Into<Arc<Mesh<T>>>, material: Material<T>) -> Result<Self, FemError> {
        material.check()?;
        let mesh = mesh.into();
        let mut elements = Vec::with_capacity(mesh.triangles.len());
        for (t, tri) in mesh.triangles.iter().enumerate() {
            let [p0, p1, p2] = [mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]];
            let (e1, e2) = ([p1[0] - p0[0], p1[1] - p0[1]], [p2[0] - p0[0], p2[1] - p0[1]]);
            let det = e1[0] * e2[1] - e2[0] * e1[1];
            if !(det > T::zero()) {
                return Err(FemError::ElementInversion { triangle: t, det: det.to_f64_lossy() });
            }
            // rows of Dm⁻¹ with Dm = [e1 e2]
            let g1 = [e2[1] / det, -e2[0] / det];
            let g2 = [-e1[1] / det, e1[0] / det];
            let g0 = [-(g1[0] + g2[0]), -(g1[1] + g2[1])];
            elements.push(Element { nodes: *tri, area: T::lit(0.5) * det, grads: [g0, g1, g2] });
        }
        let pattern = BlockCsr::from_cliques(mesh.n_vertices(), &mesh.triangles);
        let order = reverse_cuthill_mckee(&pattern.vertex_graph());
        Ok(Self { mesh, material, elements, pattern, order })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> &Arc<Mesh<T>> {
        &self.mesh
    }

    pub fn material(&self) -> &Material<T> {
        &self.material
    }

    pub fn n_dofs(&self) -> usize {
        self.mesh.n_dofs()
    }

    /// Fill-reducing vertex elimination order.
    pub fn vertex_order(&self) -> &[usize] {
        &self.order
    }

    /// Empty matrix with the mesh sparsity pattern.
    pub fn pattern(&self) -> &BlockCsr<T> {
        &self.pattern
    }

    #[inline]
    fn deformation_gradient(&self, e: &Element<T>, u: &[T]) -> [T; 4] {
        let mut f = [T::one(), T::zero(), T::zero(), T::one()];
        for (a, &v) in e.nodes.iter().enumerate() {
            let g = e.grads[a];
            for i in 0..2 {
                let ui = u[2 * v + i];
                f[2 * i] += ui * g[0];
                f[2 * i + 1] += ui * g[1];
            }
        }
        f
    }

    /// Per-triangle deformation gradients.
    pub fn deformation_gradients(&self, u: &[T]) -> Vec<[T; 4]> {
        self.elements.iter().map(|e| self.deformation_gradient(e, u)).collect()
    }

    /// `Σ area · W(F)`, failing on the first inverted element.
    pub fn energy(&self, u: &[T]) -> Result<T, FemError> {
        assert_eq!(u.len(), self.n_dofs());
        let mut total = T::zero();
        for (t, e) in self.elements.iter().enumerate() {
            let f = self.deformation_gradient(e, u);
            match energy_density(&f, &self.material) {
                Some(w) => total += e.area * w,
                None => return Err(inversion(t, &f)),
            }
        }
        Ok(total)
    }

    pub fn assemble(&self, u: &[T]) -> Result<Assembled<T>, FemError> {
        assert_eq!(u.len(), self.n_dofs());
        let mut energy = T::zero();
        let mut residual = vec![T::zero(); u.len()];
        let mut tangent = self.pattern.clone();
        for (t, e) in self.elements.iter().enumerate() {
            let f = self.deformation_gradient(e, u);
            let (w, p, h) = density_derivatives(&f, &self.material).ok_or_else(|| inversion(t, &f))?;
            energy += e.area * w;
            // dF[2i + j] / du[node a, comp i] = grad_a[j]
            let mut bmat = [[T::zero(); 6]; 4];
            for a in 0..3 {
                for i in 0..2 {
                    for j in 0..2 {
                        bmat[2 * i + j][2 * a + i] = e.grads[a][j];
                    }
                }
            }
            let mut hb = [[T::zero(); 6]; 4];
            for r in 0..4 {
                for c in 0..6 {
                    hb[r][c] = (0..4).map(|s| h[r][s] * bmat[s][c]).sum();
                }
            }
            for x in 0..6 {
                let gx = 2 * e.nodes[x / 2] + x % 2;
                residual[gx] += e.area * (0..4).map(|r| p[r] * bmat[r][x]).sum::<T>();
                for y in 0..6 {
                    let gy = 2 * e.nodes[y / 2] + y % 2;
                    let k = (0..4).map(|r| bmat[r][x] * hb[r][y]).sum::<T>();
                    tangent.add(gx, gy, e.area * k);
                }
            }
        }
        Ok(Assembled { energy, residual, tangent })
    }
}

fn inversion<T: Real>(triangle: usize, f: &[T; 4]) -> FemError {
    FemError::ElementInversion { triangle, det: (f[0] * f[3] - f[1] * f[2]).to_f64_lossy() }
}

/// One-shot assembly without keeping a model around.
pub fn assemble<T: Real>(mesh: &Mesh<T>, displacement: &[T], material: &Material<T>) -> Result<Assembled<T>, FemError> {
    FemModel::new(mesh.clone(), *material)?.assemble(displacement)
}
