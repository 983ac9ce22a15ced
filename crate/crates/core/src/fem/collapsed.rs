use std::io::{BufRead, Write};

use crate::fem::solver::{factor_free, Factorization, FemSolution};
use crate::geometry::Mesh;
use crate::linalg::{DenseMatrix, DofPartition};
use crate::scalar::Real;
use crate::{FemError, GeometryError};

/// Gradient of the collapsed energy with respect to the constrained dofs.
///
/// At an interior equilibrium the total derivative reduces to the reaction forces, so this
/// is the assembled residual restricted to the constrained dofs (in `dirichlet.dofs` order).
pub fn collapsed_gradient<T: Real>(solution: &FemSolution<T>) -> Result<Vec<T>, FemError> {
    if !solution.converged {
        return Err(FemError::NotConverged);
    }
    let asm = solution.model.assemble(&solution.displacement)?;
    Ok(solution.dirichlet.dofs.iter().map(|&d| asm.residual[d]).collect())
}

/// Schur complement of the tangent onto the constrained dofs.
#[derive(Clone, Debug)]
pub struct ReducedHessian<T> {
    pub matrix: DenseMatrix<T>,
    /// The interior block needed a diagonal shift to factor.
    pub regularized: bool,
}

/// `∇²Ẽ` over the constrained dofs: `K_bb − K_bi K_ii⁻¹ K_ib`, one interior solve per column.
pub fn reduced_hessian<T: Real>(solution: &FemSolution<T>) -> Result<ReducedHessian<T>, FemError> {
    let n = solution.dirichlet.len();
    reduced_hessian_projected(solution, &DenseMatrix::identity(n))
}

/// `Bᵀ (K_bb − K_bi K_ii⁻¹ K_ib) B` for a basis `B` over the constrained dofs.
///
/// With `B` the spline map this is the Hessian in control-point coordinates and costs one
/// interior solve per basis column.
pub fn reduced_hessian_projected<T: Real>(
    solution: &FemSolution<T>,
    basis: &DenseMatrix<T>,
) -> Result<ReducedHessian<T>, FemError> {
    if !solution.converged {
        return Err(FemError::NotConverged);
    }
    let bc = &solution.dirichlet;
    if basis.rows() != bc.len() {
        return Err(FemError::Boundary(format!("basis has {} rows, {} constrained dofs", basis.rows(), bc.len())));
    }
    let model = &solution.model;
    let n = model.n_dofs();
    let asm = model.assemble(&solution.displacement)?;
    let part = DofPartition::new(n, &bc.dofs, model.vertex_order());
    let (fac, regularized) = factor_free(&asm.tangent, &part, Factorization::Regularized)?;
    let k = basis.cols();
    // column j of K_b· [−K_ii⁻¹ K_ib w; w] for w = B e_j
    let mut schur_cols = DenseMatrix::zeros(bc.len(), k);
    let mut x = vec![T::zero(); n];
    for j in 0..k {
        x.iter_mut().for_each(|v| *v = T::zero());
        for (r, &d) in bc.dofs.iter().enumerate() {
            x[d] = basis[(r, j)];
        }
        let kx = asm.tangent.matvec(&x);
        let mut y = part.gather_free(&kx);
        fac.solve_in_place(&mut y);
        for (&d, &yi) in part.free().iter().zip(&y) {
            x[d] = -yi;
        }
        let z = asm.tangent.matvec(&x);
        for (r, &d) in bc.dofs.iter().enumerate() {
            schur_cols[(r, j)] = z[d];
        }
    }
    let matrix = basis.transpose().matmul(&schur_cols);
    Ok(ReducedHessian { matrix, regularized })
}

/// Mesh text followed by one `ux uy` line per vertex.
pub fn write_solution_text<T: Real, W: Write>(mesh: &Mesh<T>, displacement: &[T], mut w: W) -> std::io::Result<()> {
    mesh.write_text(&mut w)?;
    for u in displacement.chunks(2) {
        writeln!(w, "{} {}", u[0].to_f64_lossy(), u[1].to_f64_lossy())?;
    }
    Ok(())
}

/// Inverse of [`write_solution_text`].
pub fn read_solution_text<T: Real, R: BufRead>(mut r: R, cell_side: T) -> Result<(Mesh<T>, Vec<T>), GeometryError> {
    let mut text = String::new();
    r.read_to_string(&mut text).map_err(|e| GeometryError::Parse { line: 0, reason: e.to_string() })?;
    let lines: Vec<&str> = text.lines().collect();
    let header: Vec<usize> = lines
        .first()
        .map(|l| l.split_whitespace().filter_map(|s| s.parse().ok()).collect())
        .unwrap_or_default();
    if header.len() != 2 {
        return Err(GeometryError::Parse { line: 1, reason: "bad header".into() });
    }
    let mesh_lines = 1 + header[0] + header[1];
    if lines.len() < mesh_lines {
        return Err(GeometryError::Parse { line: lines.len(), reason: "truncated mesh".into() });
    }
    let mesh = Mesh::read_text(lines[..mesh_lines].join("\n").as_bytes(), cell_side)?;
    let mut u = Vec::with_capacity(2 * header[0]);
    for (k, l) in lines[mesh_lines..].iter().take(header[0]).enumerate() {
        let line = mesh_lines + k + 1;
        let vals: Vec<f64> = l.split_whitespace().map(|s| s.parse::<f64>()).collect::<Result<_, _>>().map_err(|e| {
            GeometryError::Parse { line, reason: e.to_string() }
        })?;
        if vals.len() != 2 {
            return Err(GeometryError::Parse { line, reason: "displacement line needs ux uy".into() });
        }
        u.extend(vals.into_iter().map(T::lit));
    }
    if u.len() != 2 * header[0] {
        return Err(GeometryError::Parse { line: lines.len(), reason: "missing displacement lines".into() });
    }
    Ok((mesh, u))
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::fem::{solve_dirichlet, DirichletData, FemModel, Material, SolveSchedule};
    use crate::geometry::{build_mesh, MeshResolution, PoreShape};
    use crate::linalg::symmetric_eigen;

    fn model() -> Arc<FemModel<f64>> {
        let mesh = build_mesh(&[PoreShape::circular()], [1, 1], MeshResolution::new(8, 2)).unwrap();
        Arc::new(FemModel::new(mesh, Material::default()).unwrap())
    }

    #[test]
    fn rest_hessian_has_three_rigid_modes() {
        let m = model();
        let bc = DirichletData::outer_from_fn(m.mesh(), |_| [0.0, 0.0]);
        let sol = solve_dirichlet(&m, &bc, &SolveSchedule::default(), None).unwrap();
        assert!(collapsed_gradient(&sol).unwrap().iter().all(|g| *g == 0.0));
        let h = reduced_hessian(&sol).unwrap();
        assert!(!h.regularized);
        assert!(h.matrix.asymmetry() < 1e-10);
        let (vals, _) = symmetric_eigen(&h.matrix);
        let scale = vals.last().unwrap().abs();
        let near_null = vals.iter().filter(|v| v.abs() < 1e-6 * scale).count();
        assert_eq!(near_null, 3);
        assert!(vals[0] > -1e-10 * scale);
    }

    #[test]
    fn solution_text_round_trip() {
        let m = model();
        let u: Vec<f64> = (0..m.n_dofs()).map(|i| i as f64 * 1e-3).collect();
        let mut buf = Vec::new();
        write_solution_text(m.mesh(), &u, &mut buf).unwrap();
        let (mesh, back) = read_solution_text::<f64, _>(buf.as_slice(), 1.0).unwrap();
        assert_eq!(back, u);
        assert_eq!(mesh.triangles, m.mesh().triangles);
    }

    #[test]
    fn unconverged_solution_is_rejected() {
        let m = model();
        let bc = DirichletData::outer_from_fn(m.mesh(), |p| [0.0, -0.05 * p[1]]);
        let mut sol = solve_dirichlet(&m, &bc, &SolveSchedule::new(1, 1.0), None).unwrap();
        sol.converged = false;
        assert_eq!(collapsed_gradient(&sol).unwrap_err(), FemError::NotConverged);
        assert!(reduced_hessian(&sol).is_err());
    }
}
