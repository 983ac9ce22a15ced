use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::pipeline::SampleRecord;
use crate::scalar::{dot, Real};
use crate::surrogate::params::SurrogateParams;
use crate::surrogate::tape::NetworkGraph;
use crate::SurrogateError;

/// Records with `‖R(u)‖²` below this are left out of the log-stiffness term.
pub const NORM_FLOOR: f64 = 1e-12;

/// Training losses of a batch; disabled terms are zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Squared error of the log-stiffness (or of the energy in direct mode).
    pub l0: f64,
    /// Mean gradient cosine distance.
    pub l1: f64,
    /// Mean Hessian-vector-product cosine distance.
    pub l2: f64,
    pub total: f64,
}

/// Validation metrics: energy percent error, gradient and HVP cosine similarity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub e_pct_err: f64,
    pub g_sim: f64,
    pub hvp_sim: f64,
}

pub(crate) struct BatchOutput<T> {
    pub report: LossReport,
    pub metrics: Metrics,
    pub param_grad: Option<Vec<T>>,
}

struct Prepared<T> {
    a: Vec<T>,
    s: T,
    /// `∂R/∂u`, absent when the alignment is off.
    jac: Option<DenseMatrix<T>>,
    /// `d/dε J_R(u + ε v)ᵀ`
    kv: Option<DenseMatrix<T>>,
    adot: Vec<T>,
    target_hv: Vec<T>,
}

/// Standard normal probe directions, one per record, drawn in record order.
pub(crate) fn draw_probes<T: Real, R: Rng + ?Sized>(n: usize, dim: usize, rng: &mut R) -> Vec<Vec<T>> {
    (0..n)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::lit(z)
                })
                .collect()
        })
        .collect()
}

/// `(1 − cos(x, y), ∂/∂x)`; `None` if either vector vanishes.
fn cosine_distance<T: Real>(x: &[T], y: &[T]) -> Option<(T, Vec<T>)> {
    let nx = dot(x, x).sqrt();
    let ny = dot(y, y).sqrt();
    if nx == T::zero() || ny == T::zero() || !(nx * ny).is_finite() {
        return None;
    }
    let c = dot(x, y) / (nx * ny);
    let grad = x.iter().zip(y).map(|(&xi, &yi)| -(yi / (nx * ny) - c * xi / (nx * nx))).collect();
    Some((T::one() - c, grad))
}

pub(crate) fn check_records(records: &[&SampleRecord], dim: usize, offset: usize) -> Result<(), SurrogateError> {
    for (k, r) in records.iter().enumerate() {
        let record = offset + k;
        if r.u.len() != dim || r.grad.len() != dim || r.hessian.rows() != dim || r.hessian.cols() != dim {
            return Err(SurrogateError::Dimension { record, got: r.u.len(), expected: dim });
        }
        let finite = r.energy.is_finite() && r.grad.iter().chain(r.hessian.as_slice()).all(|v| v.is_finite());
        if !finite || r.u.iter().chain(&r.xi).any(|v| !v.is_finite()) {
            return Err(SurrogateError::NonFiniteTarget { record });
        }
    }
    Ok(())
}

/// Losses, metrics, and optionally the weight gradient of the total loss over a batch.
pub(crate) fn evaluate_batch<T: Real>(
    params: &SurrogateParams<T>,
    records: &[&SampleRecord],
    probes: &[Vec<T>],
    full: bool,
    want_grad: bool,
) -> BatchOutput<T> {
    let flags = params.config.flags;
    let d = params.config.dim();
    let din = d + 2;
    let nb = records.len();
    let need_g = full || flags.sobolev_g || flags.sobolev_hvp;
    let need_h = full || flags.sobolev_hvp;
    let aligner = params.aligner::<T>();
    let prep: Vec<Prepared<T>> = records
        .par_iter()
        .zip(probes)
        .map(|(r, v)| {
            let u: Vec<T> = r.u.iter().map(|&x| T::lit(x)).collect();
            let (a, jac, kv) = if flags.remove_rigid {
                let a = aligner.align(&u).0;
                let jac = need_g.then(|| aligner.jacobian(&u));
                let kv = need_h.then(|| aligner.vjp_directional(&u, v));
                (a, jac, kv)
            } else {
                (u, None, None)
            };
            let s = dot(&a, &a);
            let (adot, target_hv) = if need_h {
                let adot = match &jac {
                    Some(j) => j.matvec(v),
                    None => v.clone(),
                };
                let vf: Vec<f64> = v.iter().map(|x| x.to_f64_lossy()).collect();
                (adot, r.hessian.matvec(&vf).into_iter().map(T::lit).collect())
            } else {
                (Vec::new(), Vec::new())
            };
            Prepared { a, s, jac, kv, adot, target_hv }
        })
        .collect();

    let mut x = DenseMatrix::zeros(nb, din);
    for (i, (p, r)) in prep.iter().zip(records).enumerate() {
        let row = x.row_mut(i);
        row[..d].copy_from_slice(&p.a);
        row[d] = T::lit(r.xi[0]);
        row[d + 1] = T::lit(r.xi[1]);
    }
    let xdot = need_h.then(|| {
        let mut m = DenseMatrix::zeros(nb, din);
        for (i, p) in prep.iter().enumerate() {
            m.row_mut(i)[..d].copy_from_slice(&p.adot);
        }
        m
    });
    let graph = NetworkGraph::build(params, x, xdot, need_g);
    let fv = graph.tape.value(graph.f);
    let gv = graph.grad.map(|id| graph.tape.value(id));
    let hv = graph.hvp.map(|id| graph.tape.value(id));

    let two = T::lit(2.0);
    let mut fbar = DenseMatrix::zeros(nb, 1);
    let mut gbar = DenseMatrix::zeros(nb, din);
    let mut hbar = DenseMatrix::zeros(nb, din);
    // first pass: per-record quantities and unnormalized adjoints
    let (mut n0, mut n1, mut n2) = (0usize, 0usize, 0usize);
    let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
    let (mut m_e, mut m_g, mut m_h) = ((0.0, 0usize), (0.0, 0usize), (0.0, 0usize));
    struct Adj<T> {
        f: T,
        l1: Option<Vec<T>>,
        l2: Option<Vec<T>>,
        l0: Option<T>,
    }
    let mut adjs = Vec::with_capacity(nb);
    for (i, (p, r)) in prep.iter().zip(records).enumerate() {
        let f = fv[(i, 0)];
        let ef = f.exp();
        let energy_t = T::lit(r.energy);
        let e_hat = if flags.scale_by_norm { p.s * ef } else { f };
        if r.energy > 1e-12 {
            m_e.0 += 100.0 * ((e_hat - energy_t).abs() / energy_t).to_f64_lossy();
            m_e.1 += 1;
        }
        let mut adj = Adj { f, l0: None, l1: None, l2: None };
        // L0
        if flags.scale_by_norm {
            if p.s.to_f64_lossy() >= NORM_FLOOR && r.energy > 0.0 {
                let t = (energy_t / p.s).ln();
                s0 += ((f - t) * (f - t)).to_f64_lossy();
                adj.l0 = Some(two * (f - t));
                n0 += 1;
            }
        } else {
            s0 += ((f - energy_t) * (f - energy_t)).to_f64_lossy();
            adj.l0 = Some(two * (f - energy_t));
            n0 += 1;
        }
        if let Some(gv) = gv {
            let gfx = &gv.row(i)[..d];
            let ga: Vec<T> = if flags.scale_by_norm { (0..d).map(|k| ef * (two * p.a[k] + p.s * gfx[k])).collect() } else { gfx.to_vec() };
            let gu = match &p.jac {
                Some(j) => j.matvec_t(&ga),
                None => ga.clone(),
            };
            let target: Vec<T> = r.grad.iter().map(|&x| T::lit(x)).collect();
            if let Some((dist, g)) = cosine_distance(&gu, &target) {
                m_g.0 += 1.0 - dist.to_f64_lossy();
                m_g.1 += 1;
                if flags.sobolev_g {
                    s1 += dist.to_f64_lossy();
                    n1 += 1;
                    adj.l1 = Some(g);
                }
            }
            if let Some(hv) = hv {
                let hx = &hv.row(i)[..d];
                let ha: Vec<T> = if flags.scale_by_norm {
                    let gdot = dot(gfx, &p.adot);
                    let adot2 = two * dot(&p.a, &p.adot);
                    (0..d).map(|k| ef * (gdot * (two * p.a[k] + p.s * gfx[k]) + two * p.adot[k] + adot2 * gfx[k] + p.s * hx[k])).collect()
                } else {
                    hx.to_vec()
                };
                let mut hu = match &p.jac {
                    Some(j) => j.matvec_t(&ha),
                    None => ha.clone(),
                };
                if let Some(kv) = &p.kv {
                    hu.iter_mut().zip(kv.matvec(&ga)).for_each(|(h, k)| *h += k);
                }
                if let Some((dist, g)) = cosine_distance(&hu, &p.target_hv) {
                    m_h.0 += 1.0 - dist.to_f64_lossy();
                    m_h.1 += 1;
                    if flags.sobolev_hvp {
                        s2 += dist.to_f64_lossy();
                        n2 += 1;
                        adj.l2 = Some(g);
                    }
                }
            }
        }
        adjs.push(adj);
    }
    let mean = |s: f64, n: usize| if n == 0 { 0.0 } else { s / n as f64 };
    let l0 = mean(s0, n0);
    let l1 = if flags.sobolev_g { mean(s1, n1) } else { 0.0 };
    let l2 = if flags.sobolev_hvp { mean(s2, n2) } else { 0.0 };
    let report = LossReport { l0, l1, l2, total: l0 + l1 + l2 };
    let metrics = Metrics { e_pct_err: mean(m_e.0, m_e.1), g_sim: mean(m_g.0, m_g.1), hvp_sim: mean(m_h.0, m_h.1) };
    if !want_grad {
        return BatchOutput { report, metrics, param_grad: None };
    }

    // second pass: adjoints of f, ∇ₓf and ∇²ₓf ẋ
    let w0 = if n0 > 0 { T::one() / T::lit(n0 as f64) } else { T::zero() };
    let w1 = if n1 > 0 { T::one() / T::lit(n1 as f64) } else { T::zero() };
    let w2 = if n2 > 0 { T::one() / T::lit(n2 as f64) } else { T::zero() };
    for (i, (p, adj)) in prep.iter().zip(&adjs).enumerate() {
        let ef = adj.f.exp();
        let mut fb = adj.l0.map_or(T::zero(), |g| g * w0);
        let mut ga_bar = vec![T::zero(); d];
        let mut gfx_bar = vec![T::zero(); d];
        let mut hx_bar = vec![T::zero(); d];
        if let Some(hv) = hv.filter(|_| adj.l2.is_some()) {
            let gfx = &gv.unwrap().row(i)[..d];
            let hx = &hv.row(i)[..d];
            let hu_bar: Vec<T> = adj.l2.as_ref().unwrap().iter().map(|&g| g * w2).collect();
            let ha_bar = match &p.jac {
                Some(j) => j.matvec(&hu_bar),
                None => hu_bar.clone(),
            };
            if let Some(kv) = &p.kv {
                ga_bar.iter_mut().zip(kv.matvec_t(&hu_bar)).for_each(|(a, k)| *a += k);
            }
            if flags.scale_by_norm {
                let gdot = dot(gfx, &p.adot);
                let adot2 = two * dot(&p.a, &p.adot);
                let q: Vec<T> = (0..d).map(|k| gdot * (two * p.a[k] + p.s * gfx[k]) + two * p.adot[k] + adot2 * gfx[k] + p.s * hx[k]).collect();
                fb += ef * dot(&ha_bar, &q);
                let qb: Vec<T> = ha_bar.iter().map(|&h| ef * h).collect();
                let c = (0..d).fold(T::zero(), |acc, k| acc + qb[k] * (two * p.a[k] + p.s * gfx[k]));
                for k in 0..d {
                    gfx_bar[k] += c * p.adot[k] + gdot * p.s * qb[k] + adot2 * qb[k];
                    hx_bar[k] += p.s * qb[k];
                }
            } else {
                hx_bar.iter_mut().zip(&ha_bar).for_each(|(h, &a)| *h += a);
            }
        }
        if let Some(l1) = &adj.l1 {
            let gu_bar: Vec<T> = l1.iter().map(|&g| g * w1).collect();
            let add = match &p.jac {
                Some(j) => j.matvec(&gu_bar),
                None => gu_bar,
            };
            ga_bar.iter_mut().zip(add).for_each(|(a, b)| *a += b);
        }
        if let Some(gv) = gv {
            let gfx = &gv.row(i)[..d];
            if flags.scale_by_norm {
                let ga: Vec<T> = (0..d).map(|k| ef * (two * p.a[k] + p.s * gfx[k])).collect();
                fb += dot(&ga_bar, &ga);
                for k in 0..d {
                    gfx_bar[k] += ef * p.s * ga_bar[k];
                }
            } else {
                gfx_bar.iter_mut().zip(&ga_bar).for_each(|(g, &a)| *g += a);
            }
        }
        fbar[(i, 0)] = fb;
        gbar.row_mut(i)[..d].copy_from_slice(&gfx_bar);
        hbar.row_mut(i)[..d].copy_from_slice(&hx_bar);
    }
    let mut seeds = vec![(graph.f, fbar)];
    if let Some(id) = graph.grad {
        seeds.push((id, gbar));
    }
    if let Some(id) = graph.hvp {
        seeds.push((id, hbar));
    }
    let param_grad = graph.param_gradient(seeds);
    BatchOutput { report, metrics, param_grad: Some(param_grad) }
}

/// Mean training losses over `batch`, with one fresh probe `v ~ N(0, I)` per record drawn from `rng`.
pub fn loss<T: Real, R: Rng + ?Sized>(
    params: &SurrogateParams<T>,
    batch: &[SampleRecord],
    rng: &mut R,
) -> Result<LossReport, SurrogateError> {
    let refs: Vec<&SampleRecord> = batch.iter().collect();
    check_records(&refs, params.config.dim(), 0)?;
    let probes = draw_probes(refs.len(), params.config.dim(), rng);
    Ok(evaluate_batch(params, &refs, &probes, false, false).report)
}

/// Losses and validation metrics over a set of records.
pub fn evaluate<T: Real, R: Rng + ?Sized>(
    params: &SurrogateParams<T>,
    records: &[SampleRecord],
    rng: &mut R,
) -> Result<(LossReport, Metrics), SurrogateError> {
    if records.is_empty() {
        return Err(SurrogateError::EmptyDataset);
    }
    let refs: Vec<&SampleRecord> = records.iter().collect();
    check_records(&refs, params.config.dim(), 0)?;
    let probes = draw_probes(refs.len(), params.config.dim(), rng);
    let mut report = LossReport::default();
    let mut metrics = Metrics::default();
    // chunked to bound tape memory; means are weighted by chunk size
    let n = refs.len() as f64;
    for (chunk, pr) in refs.chunks(512).zip(probes.chunks(512)) {
        let out = evaluate_batch(params, chunk, pr, true, false);
        let w = chunk.len() as f64 / n;
        report.l0 += w * out.report.l0;
        report.l1 += w * out.report.l1;
        report.l2 += w * out.report.l2;
        metrics.e_pct_err += w * out.metrics.e_pct_err;
        metrics.g_sim += w * out.metrics.g_sim;
        metrics.hvp_sim += w * out.metrics.hvp_sim;
    }
    report.total = report.l0 + report.l1 + report.l2;
    Ok((report, metrics))
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::pipeline::{RecordMeta, Source};
    use crate::surrogate::{surrogate_energy, surrogate_grad, surrogate_hessian, FeatureFlags, SurrogateConfig};

    fn params(flags: FeatureFlags, seed: u64) -> SurrogateParams<f64> {
        let cfg = SurrogateConfig { width: 16, flags, ..Default::default() };
        let mut p = SurrogateParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        p.layers[3].b[0] = -1.0;
        p
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

    #[test]
    fn self_targets_give_zero_loss() {
        for (_, flags) in FeatureFlags::ablation_grid() {
            let p = params(flags, 1);
            let recs = self_records(&p, 6, 2);
            let r = loss(&p, &recs, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
            assert!(r.l0 < 1e-10 && r.l1 < 1e-10 && r.l2 < 1e-10, "{flags:?} {r:?}");
        }
    }

    #[test]
    fn antiparallel_gradients_give_two() {
        let p = params(FeatureFlags::default(), 4);
        let mut recs = self_records(&p, 4, 5);
        recs.iter_mut().for_each(|r| r.grad.iter_mut().for_each(|g| *g = -*g));
        let r = loss(&p, &recs, &mut ChaCha8Rng::seed_from_u64(6)).unwrap();
        assert!((r.l1 - 2.0).abs() < 1e-12);
        assert!((r.total - r.l0 - r.l1 - r.l2).abs() < 1e-15);
    }

    #[test]
    fn cosine_terms_are_scale_invariant_and_deterministic() {
        let p = params(FeatureFlags::default(), 7);
        let recs = self_records(&params(FeatureFlags::default(), 8), 5, 9);
        let base = loss(&p, &recs, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        let again = loss(&p, &recs, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(base, again);
        let mut scaled = recs.clone();
        for r in &mut scaled {
            r.grad.iter_mut().for_each(|g| *g *= 1e3);
            r.hessian.scale(1e3);
        }
        let s = loss(&p, &scaled, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert!((s.l1 - base.l1).abs() < 1e-10 && (s.l2 - base.l2).abs() < 1e-10);
    }

    #[test]
    fn non_finite_targets_are_rejected() {
        let p = params(FeatureFlags::default(), 11);
        let mut recs = self_records(&p, 3, 12);
        recs[2].grad[4] = f64::NAN;
        let err = loss(&p, &recs, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert_eq!(err, SurrogateError::NonFiniteTarget { record: 2 });
    }

    #[test]
    fn parameter_gradient_matches_finite_differences() {
        for (_, flags) in FeatureFlags::ablation_grid() {
            let p = params(flags, 13);
            let recs = self_records(&params(flags, 14), 4, 15);
            let refs: Vec<&SampleRecord> = recs.iter().collect();
            let probes: Vec<Vec<f64>> = draw_probes(4, 72, &mut ChaCha8Rng::seed_from_u64(16));
            let out = evaluate_batch(&p, &refs, &probes, false, true);
            let grad = out.param_grad.unwrap();
            let flat = p.flatten();
            let mut q = p.clone();
            let h = 1e-6;
            let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
            for k in (0..flat.len()).step_by(37) {
                let mut fp = flat.clone();
                fp[k] += h;
                q.assign(&fp);
                let ep = evaluate_batch(&q, &refs, &probes, false, false).report.total;
                fp[k] -= 2.0 * h;
                q.assign(&fp);
                let em = evaluate_batch(&q, &refs, &probes, false, false).report.total;
                let fd = (ep - em) / (2.0 * h);
                assert!((fd - grad[k]).abs() < 1e-6 * scale.max(1.0), "{flags:?} param {k}: {fd} vs {}", grad[k]);
            }
        }
    }
}
