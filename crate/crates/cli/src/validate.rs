//! Invariant suite: fast numerical checks of the solver, basis, surrogate and sampler.

use std::sync::Arc;
use std::time::Instant;

use ces_core::basis::{flip, ControlLayout, FlipAxis, Procrustes};
use ces_core::composer::{build_assembly, fea_reference, BoundaryCondition, ScheduleGrid};
use ces_core::fem::{
    collapsed_gradient, energy_density, reduced_hessian, solve_dirichlet, DirichletData, FemModel, FemSolution, Material, SolveSchedule,
};
use ces_core::geometry::{build_mesh, pore_polygon_area, MeshResolution, PoreSampler, PoreShape};
use ces_core::linalg::symmetric_eigen;
use ces_core::pipeline::{
    hmc_transition, leapfrog, randomize_hmc_config, HmcConfig, Labeler, LabelerConfig, RecordMeta, SampleRecord, Source, StrainGaussian,
    TEMPERATURES,
};
use ces_core::surrogate::{loss, surrogate_energy, surrogate_grad, surrogate_hessian, surrogate_hvp, validation_metrics, FeatureFlags, SurrogateConfig, SurrogateParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Outcome of one acceptance criterion.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub criterion: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl Check {
    pub fn line(&self) -> String {
        format!(
            "criterion {:>2} {:<32} {} ({:.1}s) {}",
            self.criterion,
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.seconds,
            self.detail
        )
    }
}

/// Runs `f`, turning errors into a failed check and enforcing the time budget.
pub fn run_check(criterion: usize, name: &'static str, budget_s: f64, f: impl FnOnce() -> Result<(bool, String), String>) -> Check {
    let t = Instant::now();
    let (mut passed, mut detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
    let seconds = t.elapsed().as_secs_f64();
    if seconds > budget_s {
        passed = false;
        detail = format!("{detail}; over the {budget_s}s budget");
    }
    Check { criterion, name, passed, detail, seconds }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

fn axpy(u: &[f64], s: f64, v: &[f64]) -> Vec<f64> {
    u.iter().zip(v).map(|(a, b)| a + s * b).collect()
}

/// Closed-form simple shear and dilation energies.
pub fn energy_densities(material: Material<f64>) -> Check {
    run_check(1, "analytic energy densities", 1.0, || {
        let m = material;
        let mut worst = 0.0f64;
        for g in [0.0, 0.05, 0.3, -0.7, 1.5] {
            let w = energy_density(&[1.0, g, 0.0, 1.0], &m).ok_or("shear inverted")?;
            worst = worst.max((w - 0.5 * m.mu * g * g).abs());
        }
        for s in [0.5, 0.9, 1.0, 1.1, 2.0] {
            let w = energy_density(&[s, 0.0, 0.0, s], &m).ok_or("dilation inverted")?;
            worst = worst.max((w - 0.5 * m.kappa * (s * s - 1.0).powi(2)).abs());
        }
        Ok((worst <= 1e-12, format!("max error {worst:.2e}")))
    })
}

fn coarse_model(material: Material<f64>, shape: PoreShape<f64>, res: MeshResolution) -> Result<Arc<FemModel<f64>>, String> {
    let mesh = build_mesh(&[shape], [1, 1], res).map_err(err)?;
    Ok(Arc::new(FemModel::new(mesh, material).map_err(err)?))
}

/// Residual and tangent against central differences of the assembled energy.
pub fn assembly_consistency(material: Material<f64>) -> Check {
    run_check(2, "assembly consistency", 30.0, || {
        let m = coarse_model(material, PoreShape::new(0.1, -0.05, 1.0), MeshResolution::new(12, 3))?;
        let n = m.n_dofs();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (mut e_res, mut e_tan) = (0.0f64, 0.0f64);
        for _ in 0..20 {
            let u: Vec<f64> = (0..n).map(|_| rng.random_range(-0.02..0.02)).collect();
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let a = m.assemble(&u).map_err(err)?;
            let h = 1e-6;
            let fd = (m.energy(&axpy(&u, h, &v)).map_err(err)? - m.energy(&axpy(&u, -h, &v)).map_err(err)?) / (2.0 * h);
            let an = dot(&a.residual, &v);
            e_res = e_res.max((fd - an).abs() / an.abs());
            let rp = m.assemble(&axpy(&u, h, &v)).map_err(err)?.residual;
            let rm = m.assemble(&axpy(&u, -h, &v)).map_err(err)?.residual;
            let fdr: Vec<f64> = rp.iter().zip(&rm).map(|(p, q)| (p - q) / (2.0 * h)).collect();
            let kv = a.tangent.matvec(&v);
            e_tan = e_tan.max(max_diff(&fdr, &kv) / max_abs(&kv));
        }
        Ok((e_res < 1e-5 && e_tan < 1e-5, format!("residual rel err {e_res:.2e}, tangent rel err {e_tan:.2e}")))
    })
}

fn tight_solve(m: &Arc<FemModel<f64>>, bc: &DirichletData<f64>) -> Result<FemSolution<f64>, String> {
    let sched = SolveSchedule { residual_tol: 1e-11, ..SolveSchedule::new(2, 1.0) };
    let s = solve_dirichlet(m, bc, &sched, None).map_err(err)?;
    if !s.converged {
        return Err("Dirichlet solve did not converge".into());
    }
    Ok(s)
}

/// Collapsed gradient and reduced Hessian against finite differences with re-solves.
pub fn collapsed_derivatives(material: Material<f64>) -> Check {
    run_check(3, "collapsed derivatives", 300.0, || {
        let m = coarse_model(material, PoreShape::circular(), MeshResolution::new(8, 2))?;
        let field = |p: [f64; 2]| [0.03 * (p[1] - 0.5) + 0.01 * (3.0 * p[0]).sin(), -0.04 * (p[1] - 0.5) + 0.01 * (2.0 * p[0]).cos()];
        let bc = DirichletData::outer_from_fn(m.mesh(), field);
        let sol = tight_solve(&m, &bc)?;
        let g = collapsed_gradient(&sol).map_err(err)?;
        let hm = reduced_hessian(&sol).map_err(err)?.matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let v: Vec<f64> = (0..bc.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let h = 1e-5;
        let shifted = |s: f64| -> Result<FemSolution<f64>, String> {
            let data = DirichletData::new(bc.dofs.clone(), axpy(&bc.values, s, &v)).map_err(err)?;
            tight_solve(&m, &data)
        };
        let (sp, sm) = (shifted(h)?, shifted(-h)?);
        let fd = (sp.energy - sm.energy) / (2.0 * h);
        let an = dot(&g, &v);
        let e_grad = (fd - an).abs() / an.abs();
        let (gp, gm) = (collapsed_gradient(&sp).map_err(err)?, collapsed_gradient(&sm).map_err(err)?);
        let fdh: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        let hv = hm.matvec(&v);
        let e_hess = max_diff(&fdh, &hv) / max_abs(&hv);

        let rest = tight_solve(&m, &DirichletData::outer_from_fn(m.mesh(), |_| [0.0, 0.0]))?;
        let h0 = reduced_hessian(&rest).map_err(err)?.matrix;
        let asym = h0.asymmetry();
        let (vals, _) = symmetric_eigen(&h0);
        let scale = vals.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        let null = vals.iter().filter(|v| v.abs() < 1e-6 * scale).count();
        let psd = vals[0] > -1e-6 * scale;
        let ok = e_grad < 1e-4 && e_hess < 1e-3 && asym < 1e-10 * scale && psd && null == 3;
        Ok((ok, format!("grad rel err {e_grad:.2e}, hessian rel err {e_hess:.2e}, rest asymmetry {asym:.1e}, psd {psd}, near-null modes {null}")))
    })
}

/// Energy of a 1×2 strip equals the sum of its two components solved separately.
pub fn strip_additivity(material: Material<f64>) -> Check {
    run_check(4, "energy decomposition (1x2 strip)", 120.0, || {
        let res = MeshResolution::new(8, 3);
        let tol = 1e-8;
        let shape = PoreShape::new(0.05, 0.02, 1.0);
        let strip = Arc::new(FemModel::new(build_mesh(&[shape; 2], [2, 1], res).map_err(err)?, material).map_err(err)?);
        let comp = Arc::new(FemModel::new(build_mesh(&[shape], [1, 1], res).map_err(err)?, material).map_err(err)?);
        let bc = DirichletData::outer_from_fn(strip.mesh(), |p| [0.02 * (p[1] - 0.5) * (1.0 + p[0]), -0.05 * (p[1] - 0.5) + 0.01 * p[0]]);
        let sched = SolveSchedule { residual_tol: tol, ..SolveSchedule::new(2, 1.0) };
        let whole = solve_dirichlet(&strip, &bc, &sched, None).map_err(err)?;
        if !whole.converged {
            return Err("strip solve did not converge".into());
        }
        let mut sum = 0.0;
        for c in 0..2 {
            let map = comp.mesh().vertex_map_into(strip.mesh(), [c as f64, 0.0]).ok_or("component vertices missing from the strip mesh")?;
            let dofs = DirichletData::<f64>::outer_dofs(comp.mesh());
            let values = dofs.iter().map(|&d| whole.displacement[2 * map[d / 2] + d % 2]).collect();
            let data = DirichletData::new(dofs, values).map_err(err)?;
            let part = solve_dirichlet(&comp, &data, &sched, None).map_err(err)?;
            if !part.converged {
                return Err(format!("component {c} solve did not converge"));
            }
            sum += part.energy;
        }
        let gap = (sum - whole.energy).abs();
        Ok((gap <= 5.0 * tol, format!("|E_strip - sum| = {gap:.2e} (E_strip {:.6e}, bound {:.0e})", whole.energy, 5.0 * tol)))
    })
}

/// Control-point dof counts of one component and of a 4×4 grid.
pub fn dof_counts() -> Check {
    run_check(5, "dof counts", 1.0, || {
        let one = build_assembly(vec![[0.0; 2]], 1, 10, 2.0, BoundaryCondition::compression(0.1)).map_err(err)?.n_dofs();
        let grid = build_assembly(vec![[0.0; 2]; 16], 4, 10, 2.0, BoundaryCondition::compression(0.1)).map_err(err)?.n_dofs();
        let layout = ControlLayout::new(10).map_err(err)?.dim();
        Ok((one == 72 && layout == 72 && grid == 690, format!("component {one}, layout {layout}, 4x4 grid {grid}")))
    })
}

/// Pore area at 64 polygon points and mirror symmetry of `r(θ)`.
pub fn pore_geometry() -> Check {
    run_check(6, "pore geometry", 1.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let sampler = PoreSampler::default();
        let mut shapes: Vec<PoreShape<f64>> = vec![PoreShape::circular(), PoreShape::new(-0.2, 0.1, 1.0)];
        for _ in 0..8 {
            shapes.push(sampler.sample(&mut rng).map_err(err)?);
        }
        let mut area_err = 0.0f64;
        let mut sym_err = 0.0f64;
        for s in &shapes {
            let l0 = s.cell_side;
            area_err = area_err.max((pore_polygon_area(s, 64) - 0.5 * l0 * l0).abs() / (0.5 * l0 * l0));
            for k in 0..50 {
                let t = 0.137 * k as f64;
                let r = s.radius(t);
                for m in [s.radius(-t), s.radius(std::f64::consts::PI - t), s.radius(std::f64::consts::FRAC_PI_2 - t)] {
                    sym_err = sym_err.max((m - r).abs());
                }
            }
        }
        Ok((area_err < 0.01 && sym_err <= 1e-12, format!("max area rel err {area_err:.2e}, mirror err {sym_err:.1e}")))
    })
}

/// Procrustes annihilation and idempotence, flip involution and FEA flip invariance.
pub fn procrustes_and_flips(material: Material<f64>) -> Check {
    run_check(7, "procrustes and flips", 120.0, || {
        let layout = ControlLayout::new(10).map_err(err)?;
        let rest = layout.positions(2.0);
        let p = Procrustes::new(rest.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let (mut rigid, mut idem) = (0.0f64, 0.0f64);
        let mut involution = true;
        for _ in 0..10 {
            let (th, tx, ty): (f64, f64, f64) = (rng.random_range(-1.0..1.0), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5));
            let (s, c) = th.sin_cos();
            let u: Vec<f64> = rest.iter().flat_map(|x| [c * x[0] - s * x[1] + tx - x[0], s * x[0] + c * x[1] + ty - x[1]]).collect();
            rigid = rigid.max(max_abs(&p.align(&u).0));
            let w: Vec<f64> = (0..72).map(|_| rng.random_range(-0.1..0.1)).collect();
            let a = p.align(&w).0;
            idem = idem.max(max_diff(&p.align(&a).0, &a));
            for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
                involution &= flip(&layout, &flip(&layout, &w, axis).map_err(err)?, axis).map_err(err)? == w;
            }
        }
        let cfg = LabelerConfig { resolution: MeshResolution::new(8, 3), material, ..Default::default() };
        let lab = Labeler::new(PoreShape::new(0.1, -0.05, 1.0), cfg).map_err(err)?;
        let u: Vec<f64> = (0..72).map(|i| 0.01 * (0.7 * i as f64).sin()).collect();
        let e0 = lab.solve(&u, None).map_err(err)?.ok_or("FEA failed")?.energy;
        let mut flip_err = 0.0f64;
        for axis in [FlipAxis::Horizontal, FlipAxis::Vertical] {
            let e = lab.solve(&flip(&layout, &u, axis).map_err(err)?, None).map_err(err)?.ok_or("FEA failed")?.energy;
            flip_err = flip_err.max((e - e0).abs());
        }
        let ok = rigid <= 1e-10 && idem <= 1e-10 && involution && flip_err <= 2.0 * cfg.residual_tol;
        Ok((ok, format!("rigid residue {rigid:.1e}, idempotence {idem:.1e}, involution {involution}, FEA flip gap {flip_err:.1e}")))
    })
}

fn random_params(seed: u64, flags: FeatureFlags) -> Result<SurrogateParams<f64>, String> {
    let cfg = SurrogateConfig { width: 32, flags, ..Default::default() };
    let mut p = SurrogateParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).map_err(err)?;
    let last = p.layers.len() - 1;
    p.layers[last].b[0] = -1.0;
    Ok(p)
}

/// Surrogate gradient and HVP against finite differences; HVP symmetry.
pub fn surrogate_derivatives() -> Check {
    run_check(8, "surrogate differentiation", 30.0, || {
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let (mut eg, mut eh, mut es) = (0.0f64, 0.0f64, 0.0f64);
        for k in 0..4 {
            let p = random_params(100 + k, FeatureFlags::default())?;
            let xi = [rng.random_range(-0.2..0.2), rng.random_range(-0.1..0.1)];
            let u: Vec<f64> = (0..72).map(|_| rng.random_range(-0.05..0.05)).collect();
            let v: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();
            let w: Vec<f64> = (0..72).map(|_| rng.random_range(-1.0..1.0)).collect();
            let h = 1e-6;
            let g = surrogate_grad(&p, &u, xi);
            let fd = (surrogate_energy(&p, &axpy(&u, h, &v), xi) - surrogate_energy(&p, &axpy(&u, -h, &v), xi)) / (2.0 * h);
            eg = eg.max((fd - dot(&g, &v)).abs() / dot(&g, &v).abs());
            let hv = surrogate_hvp(&p, &u, xi, &v);
            let h2 = 1e-5;
            let gp = surrogate_grad(&p, &axpy(&u, h2, &v), xi);
            let gm = surrogate_grad(&p, &axpy(&u, -h2, &v), xi);
            let fdh: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h2)).collect();
            eh = eh.max(max_diff(&fdh, &hv) / max_abs(&hv));
            let hw = surrogate_hvp(&p, &u, xi, &w);
            es = es.max((dot(&w, &hv) - dot(&v, &hw)).abs() / dot(&w, &hv).abs().max(1.0));
        }
        Ok((eg < 1e-6 && eh < 1e-5 && es < 1e-8, format!("grad rel err {eg:.1e}, hvp rel err {eh:.1e}, symmetry {es:.1e}")))
    })
}

fn self_records(p: &SurrogateParams<f64>, n: usize, seed: u64) -> Vec<SampleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let u: Vec<f64> = (0..72).map(|_| rng.random_range(-0.05..0.05)).collect();
            let xi = [rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1)];
            SampleRecord {
                energy: surrogate_energy(p, &u, xi),
                grad: surrogate_grad(p, &u, xi),
                hessian: surrogate_hessian(p, &u, xi),
                u,
                xi,
                source: Source::Hmc,
                meta: RecordMeta::default(),
            }
        })
        .collect()
}

/// Zero loss on self targets, L¹ of 2 on flipped gradients, scale-free cosine terms.
pub fn loss_semantics() -> Check {
    run_check(9, "loss semantics", 10.0, || {
        let mut zero = 0.0f64;
        for (_, flags) in FeatureFlags::ablation_grid() {
            let p = random_params(91, flags)?;
            let r = loss(&p, &self_records(&p, 6, 92), &mut ChaCha8Rng::seed_from_u64(93)).map_err(err)?;
            zero = zero.max(r.l0).max(r.l1).max(r.l2);
        }
        let p = random_params(94, FeatureFlags::default())?;
        let mut anti = self_records(&p, 4, 95);
        anti.iter_mut().for_each(|r| r.grad.iter_mut().for_each(|g| *g = -*g));
        let l1 = loss(&p, &anti, &mut ChaCha8Rng::seed_from_u64(96)).map_err(err)?.l1;
        let other = self_records(&random_params(97, FeatureFlags::default())?, 5, 98);
        let base = loss(&p, &other, &mut ChaCha8Rng::seed_from_u64(99)).map_err(err)?;
        let mut scaled = other.clone();
        for r in &mut scaled {
            r.grad.iter_mut().for_each(|g| *g *= 1e3);
            r.hessian.scale(1e3);
        }
        let s = loss(&p, &scaled, &mut ChaCha8Rng::seed_from_u64(99)).map_err(err)?;
        let scale_err = (s.l1 - base.l1).abs().max((s.l2 - base.l2).abs());
        let ok = zero <= 1e-10 && (l1 - 2.0).abs() <= 1e-10 && scale_err <= 1e-10;
        Ok((ok, format!("self-target loss {zero:.1e}, antiparallel L1 {l1:.12}, scale drift {scale_err:.1e}")))
    })
}

/// Batch-means standard error of a scalar chain.
pub fn batch_means_se(x: &[f64], batches: usize) -> f64 {
    let b = x.len() / batches;
    let means: Vec<f64> = (0..batches).map(|k| x[k * b..(k + 1) * b].iter().sum::<f64>() / b as f64).collect();
    let m = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|y| (y - m) * (y - m)).sum::<f64>() / (batches - 1) as f64;
    (var / batches as f64).sqrt()
}

/// Leapfrog reversibility, Gaussian-only mean recovery and hyperparameter ranges.
pub fn hmc_checks() -> Check {
    run_check(11, "hmc", 900.0, || {
        let layout = ControlLayout::new(10).map_err(err)?;
        let target = [[0.3, 0.1], [-0.2, 0.25]];
        let gauss = StrainGaussian::new(&layout, 2.0, target);
        let f = |q: &[f64]| Some(gauss.log_density(q));
        let mut rng = ChaCha8Rng::seed_from_u64(111);
        let u0: Vec<f64> = (0..72).map(|_| rng.random_range(-0.1..0.1)).collect();
        let v0: Vec<f64> = (0..72).map(|_| rng.random_range(-0.1..0.1)).collect();
        let (mut u, mut v) = (u0.clone(), v0.clone());
        let mut s = gauss.log_density(&u);
        leapfrog(&mut u, &mut v, &mut s, 0.05, 40, 0.7, f);
        v.iter_mut().for_each(|x| *x = -*x);
        leapfrog(&mut u, &mut v, &mut s, 0.05, 40, 0.7, f);
        let rev = max_diff(&u, &u0).max(v.iter().zip(&v0).fold(0.0f64, |m, (a, b)| m.max((a + b).abs())));

        // integrator scaled to the slowest and fastest modes of the macro-strain Gaussian
        let op = ces_core::basis::macro_strain_operator(&layout, 2.0);
        let (lam, _) = symmetric_eigen(&op.matmul(&op.transpose()));
        let prec: Vec<f64> = target.iter().flatten().map(|m| m * m + ces_core::pipeline::SIGMA_FLOOR).collect();
        let pmax = prec.iter().fold(0.0f64, |a, &b| a.max(b));
        let pmin = prec.iter().fold(f64::INFINITY, |a, &b| a.min(b));
        let momentum_std = 1.0;
        let w_max = momentum_std * (lam.last().unwrap() * pmax).sqrt();
        let w_min = momentum_std * (lam[0] * pmin).sqrt();
        let step = 0.2 / w_max;
        let mut state = gauss.log_density(&vec![0.0; 72]);
        let mut q = vec![0.0; 72];
        let mut samples: Vec<[f64; 4]> = Vec::new();
        let (burn, n) = (100, 500);
        for it in 0..burn + n {
            let path = rng.random_range(0.5..1.5) * std::f64::consts::FRAC_PI_2 / w_min;
            let cfg = HmcConfig { step_size: step, path_length: path, temperature: 1.0, momentum_std, samples_per_collector: 1 };
            let (nq, ns, _) = hmc_transition(&q, &state, &cfg, &mut rng, f).map_err(|_| "transition failed")?;
            q = nq;
            state = ns;
            if it >= burn {
                let x = op.matvec(&q);
                samples.push([x[0], x[1], x[2], x[3]]);
            }
        }
        let mut worst_z = 0.0f64;
        for (k, mu) in target.iter().flatten().enumerate() {
            let xs: Vec<f64> = samples.iter().map(|s| s[k]).collect();
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            worst_z = worst_z.max((mean - mu).abs() / batch_means_se(&xs, 20));
        }

        let mut rng = ChaCha8Rng::seed_from_u64(112);
        let mut ranges = true;
        let mut seen = [false; 7];
        for _ in 0..10_000 {
            let c = randomize_hmc_config(&mut rng);
            ranges &= (0.005..0.02).contains(&c.step_size) && (0.05..0.3).contains(&c.path_length) && (0.01..0.3).contains(&c.momentum_std);
            match TEMPERATURES.iter().position(|&t| t == c.temperature) {
                Some(i) => seen[i] = true,
                None => ranges = false,
            }
        }
        ranges &= seen.iter().all(|&s| s);
        Ok((rev <= 1e-8 && worst_z <= 3.0 && ranges, format!("reversibility {rev:.1e}, worst mean z {worst_z:.2}, ranges {ranges}")))
    })
}

/// Compression of one component under the full schedule grid.
pub fn newton_robustness(material: Material<f64>) -> Check {
    run_check(13, "newton robustness", 600.0, || {
        let asm = build_assembly(vec![[0.0; 2]], 1, 10, 2.0, BoundaryCondition::compression(0.125)).map_err(err)?;
        let grid = ScheduleGrid::default();
        let r = fea_reference(&asm, 2, material, MeshResolution::new(16, 6), &grid, 1e-8).map_err(err)?;
        let find = |s: usize, l: f64| r.attempts.iter().find(|a| a.load_steps == s && a.relaxation == l).copied();
        let default_ok = find(10, 0.1).is_some_and(|a| a.converged);
        let fastest = r.attempts.iter().filter(|a| a.converged).min_by(|a, b| a.wall_time_s.total_cmp(&b.wall_time_s)).ok_or("nothing converged")?;
        let recorded = r.winner == (fastest.load_steps, fastest.relaxation);
        let aggressive = find(1, 0.9).map(|a| if a.converged { "converged" } else { "failed" }).unwrap_or("not tried");
        let tried = r.attempts.len() == grid.pairs().len();
        Ok((
            default_ok && recorded && tried,
            format!("(10, 0.1) converged {default_ok}; (1, 0.9) {aggressive}; winner {:?} of {} pairs", r.winner, r.attempts.len()),
        ))
    })
}

/// Every fast invariant, in criterion order.
pub fn invariant_suite(material: Material<f64>) -> Vec<Check> {
    vec![
        energy_densities(material),
        assembly_consistency(material),
        collapsed_derivatives(material),
        strip_additivity(material),
        dof_counts(),
        pore_geometry(),
        procrustes_and_flips(material),
        surrogate_derivatives(),
        loss_semantics(),
        hmc_checks(),
        newton_robustness(material),
    ]
}

/// Seeded collection of about 2000 records, then 200 Adam steps from the run initialization.
///
/// Loss is measured on the whole training split with fixed probes before and after.
pub fn training_progress(output: &std::path::Path) -> Check {
    run_check(10, "training progress", 600.0, || {
        let mut config = crate::RunConfig { output: output.to_path_buf(), ..Default::default() };
        config.labeler.resolution = MeshResolution::new(8, 5);
        config.collect.collectors = 80;
        config.collect.samples_per_collector = 25;
        config.train = crate::config::TrainSection { lr: 2e-2, batch: 512, epochs: 1000, max_steps: Some(200) };
        let run = crate::Run::new(config).map_err(err)?;
        let manifest = crate::commands::collect(&run).map_err(err)?;
        let data = run.dataset().load().map_err(err)?;
        let seed = run.config.seed;
        let init = crate::commands::initial_trainer(&run).map_err(err)?;
        let (l_before, _) = validation_metrics(&init.params, &data.train, seed).map_err(err)?;
        let (_, m_before) = validation_metrics(&init.params, &data.val, seed).map_err(err)?;
        crate::commands::train(&run, false).map_err(err)?;
        let trained = run.load_trainer().map_err(err)?;
        let (l_after, _) = validation_metrics(&trained.params, &data.train, seed).map_err(err)?;
        let (_, m_after) = validation_metrics(&trained.params, &data.val, seed).map_err(err)?;
        let n = manifest.train.total() + manifest.val.total();
        let ratio = l_after.total / l_before.total;
        Ok((
            trained.step == 200 && ratio < 0.5 && m_after.g_sim > m_before.g_sim,
            format!(
                "{n} records, {} steps, loss {:.4} -> {:.4} (ratio {ratio:.3}), val G-sim {:.3} -> {:.3}",
                trained.step, l_before.total, l_after.total, m_before.g_sim, m_after.g_sim
            ),
        ))
    })
}

/// Collect, train and DAgger on circular pores, then compare CES with the FEA ladder on a
/// 2×2 grid under compression.
pub fn end_to_end(output: &std::path::Path) -> Check {
    run_check(12, "end-to-end accuracy", 7200.0, || {
        let mut config = crate::RunConfig { output: output.to_path_buf(), ..Default::default() };
        config.geometry.circular_only = true;
        config.labeler.resolution = MeshResolution::new(24, 14);
        config.collect.collectors = 80;
        config.collect.samples_per_collector = 25;
        config.train = crate::config::TrainSection { lr: 1e-2, batch: 512, epochs: 300, max_steps: None };
        config.dagger.rounds = 10;
        config.dagger.scenarios_per_round = 8;
        config.dagger.epochs_per_round = 60;
        let run = crate::Run::new(config).map_err(err)?;
        crate::commands::collect(&run).map_err(err)?;
        crate::commands::train(&run, false).map_err(err)?;
        let rounds = crate::commands::dagger(&run).map_err(err)?;
        let b = &run.config.benchmark;
        let scenario = crate::scenario::ResolvedScenario {
            name: "circular-compression".into(),
            grid: 2,
            xi: vec![[0.0, 0.0]; 4],
            bc: BoundaryCondition::compression(0.05),
            fidelities: b.fidelities.clone(),
            schedule: b.schedule.clone(),
        };
        let rows = crate::commands::benchmark(&run, std::slice::from_ref(&scenario)).map_err(err)?;
        let ces = rows.iter().find(|r| r.method == "ces").ok_or("no ces row")?;
        let coarse = rows.iter().find(|r| r.method != "ces" && r.status == "ok").ok_or("no fea row")?;
        Ok((
            ces.l2_error < coarse.l2_error && ces.rel_energy_error < 0.15,
            format!(
                "{} dagger rounds; ces l2 {:.3e}, rel energy {:.3e}; {} l2 {:.3e}, rel energy {:.3e}",
                rounds.len(),
                ces.l2_error,
                ces.rel_energy_error,
                coarse.method,
                coarse.l2_error,
                coarse.rel_energy_error
            ),
        ))
    })
}
