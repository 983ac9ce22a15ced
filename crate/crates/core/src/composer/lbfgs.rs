use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::composer::assembly::{composed_energy, Assembly, ComponentEnergy};

/// L-BFGS settings. The first step is scaled by `min(1, 1/‖g‖₁)`; later steps use `step`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LbfgsConfig {
    pub step: f64,
    pub history: usize,
    /// Bound on the free-dof gradient ∞-norm.
    pub grad_tol: f64,
    /// Bound on `|ΔE| / max(|E|, |E_prev|)`.
    pub rel_tol: f64,
    pub max_iters: usize,
    pub keep_trajectory: bool,
}

impl Default for LbfgsConfig {
    fn default() -> Self {
        Self { step: 0.25, history: 10, grad_tol: 1e-5, rel_tol: 1e-9, max_iters: 10_000, keep_trajectory: false }
    }
}

impl LbfgsConfig {
    /// Default tolerances for shear modulus `mu` and cell side `cell_side`.
    pub fn scaled(mu: f64, cell_side: f64) -> Self {
        Self { grad_tol: 1e-5 * mu * cell_side, ..Default::default() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveResult {
    pub solution: Vec<f64>,
    pub energy: f64,
    pub iterations: usize,
    /// Iterates starting with the initial point, when requested.
    pub trajectory: Option<Vec<Vec<f64>>>,
    pub converged: bool,
    /// Some step was halved after a non-finite energy.
    pub step_halved: bool,
    pub grad_norm: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Minimizes `f` over the dofs in `free`, starting from `x0`; other dofs keep their values.
pub fn minimize_lbfgs<F>(x0: &[f64], free: &[usize], mut f: F, cfg: &LbfgsConfig) -> SolveResult
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let restrict = |g: &[f64]| free.iter().map(|&d| g[d]).collect::<Vec<f64>>();
    let mut x = x0.to_vec();
    let (mut e, g) = f(&x);
    let mut g = restrict(&g);
    let mut trajectory = cfg.keep_trajectory.then(|| vec![x.clone()]);
    let mut pairs: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::new();
    let mut halved = false;
    let mut converged = norm_inf(&g) <= cfg.grad_tol;
    let mut iterations = 0;
    while !converged && iterations < cfg.max_iters && e.is_finite() {
        // two-loop recursion
        let mut q: Vec<f64> = g.iter().map(|v| -v).collect();
        let mut alphas = Vec::with_capacity(pairs.len());
        for (s, y, rho) in pairs.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push(a);
        }
        if let Some((s, y, _)) = pairs.back() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y, rho), a) in pairs.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut d = q;
        let mut fresh = pairs.is_empty();
        if dot(&d, &g) >= 0.0 {
            pairs.clear();
            d = g.iter().map(|v| -v).collect();
            fresh = true;
        }
        let mut t = if fresh { cfg.step * (1.0 / g.iter().map(|v| v.abs()).sum::<f64>()).min(1.0) } else { cfg.step };
        let (x_new, e_new, g_new) = loop {
            let mut xn = x.clone();
            for (&dof, di) in free.iter().zip(&d) {
                xn[dof] += t * di;
            }
            let (en, gn) = f(&xn);
            if en.is_finite() && gn.iter().all(|v| v.is_finite()) {
                break (xn, en, restrict(&gn));
            }
            halved = true;
            t *= 0.5;
            if t < 1e-20 {
                log::warn!("L-BFGS: no finite energy along the search direction");
                return SolveResult { solution: x, energy: e, iterations, trajectory, converged: false, step_halved: true, grad_norm: norm_inf(&g) };
            }
        };
        iterations += 1;
        let s: Vec<f64> = d.iter().map(|v| t * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let ys = dot(&y, &s);
        if ys > 1e-10 {
            if pairs.len() == cfg.history {
                pairs.pop_front();
            }
            pairs.push_back((s, y, 1.0 / ys));
        }
        let change = (e_new - e).abs();
        let scale = e.abs().max(e_new.abs());
        x = x_new;
        e = e_new;
        g = g_new;
        if let Some(t) = trajectory.as_mut() {
            t.push(x.clone());
        }
        converged = norm_inf(&g) <= cfg.grad_tol || change <= cfg.rel_tol * scale;
    }
    SolveResult { solution: x, energy: e, iterations, trajectory, converged, step_halved: halved, grad_norm: norm_inf(&g) }
}

/// Minimizes the composed energy from rest on the free dofs with the Dirichlet values applied.
pub fn solve_composed<M: ComponentEnergy + ?Sized>(asm: &Assembly, model: &M, cfg: &LbfgsConfig) -> SolveResult {
    let free = asm.free_dofs();
    minimize_lbfgs(&asm.prescribed, &free, |u| composed_energy(asm, model, u), cfg)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::composer::assembly::{build_assembly, BoundaryCondition};
    use crate::linalg::{DenseLu, DenseMatrix};
    use crate::surrogate::{SurrogateConfig, SurrogateParams};

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            ((1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2), vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)])
        };
        let cfg = LbfgsConfig { step: 1.0, grad_tol: 1e-8, rel_tol: 0.0, ..Default::default() };
        let r = minimize_lbfgs(&[-1.2, 1.0], &[0, 1], f, &cfg);
        assert!(r.converged);
        assert!((r.solution[0] - 1.0).abs() < 1e-6 && (r.solution[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn non_finite_energy_halves_the_step() {
        let f = |x: &[f64]| if x[0] > 0.5 { (f64::NAN, vec![f64::NAN]) } else { ((x[0] - 2.0).powi(2), vec![2.0 * (x[0] - 2.0)]) };
        let cfg = LbfgsConfig { step: 10.0, max_iters: 3, ..Default::default() };
        let r = minimize_lbfgs(&[0.0], &[0], f, &cfg);
        assert!(r.step_halved);
        assert!(r.energy.is_finite() && r.solution[0] <= 0.5);
    }

    fn net() -> SurrogateParams<f64> {
        SurrogateParams::init(SurrogateConfig { width: 16, ..Default::default() }, &mut ChaCha8Rng::seed_from_u64(9)).unwrap()
    }

    #[test]
    fn zero_strain_stays_at_rest() {
        let a = build_assembly(vec![[0.0; 2]; 4], 2, 10, 2.0, BoundaryCondition::compression(0.0)).unwrap();
        let r = solve_composed(&a, &net(), &LbfgsConfig::default());
        assert!(r.converged && r.iterations <= 1);
        assert!(r.solution.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn solves_are_bitwise_deterministic() {
        let a = build_assembly(vec![[0.0; 2]; 4], 2, 10, 2.0, BoundaryCondition::compression(0.05)).unwrap();
        let cfg = LbfgsConfig { max_iters: 30, keep_trajectory: true, ..Default::default() };
        let p = net();
        let r1 = solve_composed(&a, &p, &cfg);
        let r2 = solve_composed(&a, &p, &cfg);
        assert_eq!(r1, r2);
        assert_eq!(r1.trajectory.as_ref().unwrap().len(), r1.iterations + 1);
        for (d, &f) in a.fixed.iter().enumerate() {
            if f {
                assert_eq!(r1.solution[d], a.prescribed[d]);
            }
        }
    }

    /// `‖P u‖²` with `P` the projector removing infinitesimal rigid motions of the rest shape.
    struct RigidFreeQuadratic {
        p: DenseMatrix<f64>,
    }

    impl RigidFreeQuadratic {
        fn new(positions: &[[f64; 2]]) -> Self {
            let n = positions.len();
            let c = positions.iter().fold([0.0, 0.0], |a, p| [a[0] + p[0] / n as f64, a[1] + p[1] / n as f64]);
            let mut b = DenseMatrix::zeros(2 * n, 3);
            for (i, p) in positions.iter().enumerate() {
                b[(2 * i, 0)] = 1.0;
                b[(2 * i + 1, 1)] = 1.0;
                b[(2 * i, 2)] = -(p[1] - c[1]);
                b[(2 * i + 1, 2)] = p[0] - c[0];
            }
            let btb = b.transpose().matmul(&b);
            let lu = DenseLu::factor(&btb).unwrap();
            let mut p = DenseMatrix::identity(2 * n);
            for k in 0..2 * n {
                let w = lu.solve(b.row(k));
                for l in 0..2 * n {
                    let v: f64 = (0..3).map(|q| b[(l, q)] * w[q]).sum();
                    p[(l, k)] -= v;
                }
            }
            Self { p }
        }
    }

    impl ComponentEnergy for RigidFreeQuadratic {
        fn energy_grad(&self, u: &[f64], _xi: [f64; 2]) -> (f64, Vec<f64>) {
            let pu = self.p.matvec(u);
            (pu.iter().map(|v| v * v).sum(), pu.iter().map(|v| 2.0 * v).collect())
        }
    }

    #[test]
    fn quadratic_model_matches_the_direct_solution() {
        let a = build_assembly(vec![[0.0; 2]; 16], 4, 10, 2.0, BoundaryCondition::compression(0.125)).unwrap();
        assert_eq!(a.n_dofs(), 690);
        let model = RigidFreeQuadratic::new(&a.layout.positions(2.0));
        // global Hessian: Σ_c Gᵀ (2P) G
        let n = a.n_dofs();
        let mut k = DenseMatrix::<f64>::zeros(n, n);
        for c in 0..a.n_components() {
            for (li, &gi) in a.gather[c].iter().enumerate() {
                for (lj, &gj) in a.gather[c].iter().enumerate() {
                    k[(gi, gj)] += 2.0 * model.p[(li, lj)];
                }
            }
        }
        let free = a.free_dofs();
        let fixed: Vec<usize> = (0..n).filter(|&d| a.fixed[d]).collect();
        // x-translation is the only null mode left; pin it with a rank-one term
        let nx: Vec<f64> = free.iter().map(|&d| if d % 2 == 0 { 1.0 } else { 0.0 }).collect();
        let nn: f64 = nx.iter().sum();
        let kff = DenseMatrix::from_fn(free.len(), free.len(), |i, j| k[(free[i], free[j])] + nx[i] * nx[j] / nn);
        let rhs: Vec<f64> = free.iter().map(|&i| -fixed.iter().map(|&j| k[(i, j)] * a.prescribed[j]).sum::<f64>()).collect();
        let xf = DenseLu::factor(&kff).unwrap().solve(&rhs);
        let cfg = LbfgsConfig { grad_tol: 1e-9, rel_tol: 0.0, ..Default::default() };
        let r = solve_composed(&a, &model, &cfg);
        assert!(r.converged, "{} iterations, |g| = {}", r.iterations, r.grad_norm);
        // the error of an iterate is bounded by |g| / λ_min
        let err = free.iter().zip(&xf).fold(0.0f64, |m, (&d, v)| m.max((r.solution[d] - v).abs()));
        assert!(err < 1e-6, "max deviation {err}");
    }
}
