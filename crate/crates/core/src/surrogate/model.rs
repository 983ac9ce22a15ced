use crate::basis::Procrustes;
use crate::scalar::{Dual, Real};
use crate::surrogate::network::{value, value_and_input_grad};
use crate::surrogate::params::SurrogateParams;

impl<T: Real> SurrogateParams<T> {
    /// Procrustes aligner on the rest control-point positions of the modelled component.
    pub fn aligner<S: Real>(&self) -> Procrustes<S> {
        Procrustes::new(self.config.layout().positions(S::lit(self.config.side)))
    }
}

fn input<S: Real>(a: &[S], xi: [S; 2]) -> Vec<S> {
    let mut x = Vec::with_capacity(a.len() + 2);
    x.extend_from_slice(a);
    x.extend_from_slice(&xi);
    x
}

fn energy_generic<T: Real, S: Real + From<T>>(p: &SurrogateParams<T>, u: &[S], xi: [S; 2]) -> S {
    let flags = p.config.flags;
    let a = if flags.remove_rigid { p.aligner::<S>().align(u).0 } else { u.to_vec() };
    let f = value(&p.layers, &input(&a, xi));
    if flags.scale_by_norm {
        let s: S = a.iter().map(|&v| v * v).sum();
        s * f.exp()
    } else {
        f
    }
}

fn energy_grad_generic<T: Real, S: Real + From<T>>(p: &SurrogateParams<T>, u: &[S], xi: [S; 2]) -> (S, Vec<S>) {
    let flags = p.config.flags;
    let aligner = flags.remove_rigid.then(|| p.aligner::<S>());
    let a = match &aligner {
        Some(al) => al.align(u).0,
        None => u.to_vec(),
    };
    let (f, gx) = value_and_input_grad(&p.layers, &input(&a, xi));
    let d = a.len();
    let (e, ga) = if flags.scale_by_norm {
        let s: S = a.iter().map(|&v| v * v).sum();
        let ef = f.exp();
        let two = S::lit(2.0);
        (s * ef, (0..d).map(|i| ef * (two * a[i] + s * gx[i])).collect::<Vec<_>>())
    } else {
        (f, gx[..d].to_vec())
    };
    let gu = match &aligner {
        Some(al) => al.vjp(u, &ga),
        None => ga,
    };
    (e, gu)
}

/// `Ê(u, ξ)`: `‖R(u)‖² exp f(R(u), ξ)` with the full feature set.
///
/// `R` is the identity when `remove_rigid` is off; with `scale_by_norm` off the network
/// output is the energy itself.
pub fn surrogate_energy<T: Real>(params: &SurrogateParams<T>, u: &[T], xi: [T; 2]) -> T {
    energy_generic::<T, T>(params, u, xi)
}

/// Exact `∇_u Ê`, including the derivative of the alignment.
pub fn surrogate_grad<T: Real>(params: &SurrogateParams<T>, u: &[T], xi: [T; 2]) -> Vec<T> {
    energy_grad_generic::<T, T>(params, u, xi).1
}

/// Energy and gradient in one pass.
pub fn surrogate_energy_grad<T: Real>(params: &SurrogateParams<T>, u: &[T], xi: [T; 2]) -> (T, Vec<T>) {
    energy_grad_generic::<T, T>(params, u, xi)
}

/// `∇²Ê v`, the directional derivative of [`surrogate_grad`] along `v` (forward over reverse).
pub fn surrogate_hvp<T: Real>(params: &SurrogateParams<T>, u: &[T], xi: [T; 2], v: &[T]) -> Vec<T> {
    assert_eq!(u.len(), v.len());
    let ud: Vec<Dual<T>> = u.iter().zip(v).map(|(&x, &dx)| Dual::new(x, dx)).collect();
    let xid = [Dual::constant(xi[0]), Dual::constant(xi[1])];
    energy_grad_generic::<T, Dual<T>>(params, &ud, xid).1.into_iter().map(|g| g.eps).collect()
}

/// Dense `∇²Ê` from `2n` Hessian-vector products, symmetrized.
pub fn surrogate_hessian<T: Real>(params: &SurrogateParams<T>, u: &[T], xi: [T; 2]) -> crate::linalg::DenseMatrix<T> {
    let d = u.len();
    let mut h = crate::linalg::DenseMatrix::zeros(d, d);
    let mut e = vec![T::zero(); d];
    for j in 0..d {
        e[j] = T::one();
        let col = surrogate_hvp(params, u, xi, &e);
        for i in 0..d {
            h[(i, j)] = col[i];
        }
        e[j] = T::zero();
    }
    h.symmetrize();
    h
}

#[cfg(test)]
mod tests {
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::surrogate::{FeatureFlags, SurrogateConfig};

    fn params(flags: FeatureFlags, seed: u64) -> SurrogateParams<f64> {
        let cfg = SurrogateConfig { width: 24, flags, ..Default::default() };
        let mut p = SurrogateParams::init(cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
        for l in &mut p.layers {
            l.b.iter_mut().for_each(|b| *b = rng.random_range(-0.2..0.2));
        }
        p
    }

    fn random_u(seed: u64, scale: f64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..72).map(|_| rng.random_range(-scale..scale)).collect()
    }

    fn all_flag_sets() -> Vec<FeatureFlags> {
        FeatureFlags::ablation_grid().into_iter().map(|(_, f)| f).collect()
    }

    #[test]
    fn rigid_motions_have_zero_energy_and_gradient() {
        let p = params(FeatureFlags::default(), 1);
        let layout = p.config.layout();
        let (s, c) = 0.3f64.sin_cos();
        let u: Vec<f64> = layout
            .positions(2.0)
            .into_iter()
            .flat_map(|x| [c * x[0] - s * x[1] + 0.2 - x[0], s * x[0] + c * x[1] - 0.1 - x[1]])
            .collect();
        assert!(surrogate_energy(&p, &u, [0.1, -0.05]).abs() < 1e-20);
        assert_eq!(surrogate_energy(&p, &vec![0.0; 72], [0.0, 0.0]), 0.0);
        let g = surrogate_grad(&p, &vec![0.0; 72], [0.0, 0.0]);
        assert!(g.iter().all(|v| v.abs() < 1e-14));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        for flags in all_flag_sets() {
            let p = params(flags, 2);
            let u = random_u(3, 0.1);
            let xi = [0.1, -0.05];
            let g = surrogate_grad(&p, &u, xi);
            let h = 1e-6;
            let gmax = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for i in 0..72 {
                let mut up = u.clone();
                up[i] += h;
                let mut um = u.clone();
                um[i] -= h;
                let fd = (surrogate_energy(&p, &up, xi) - surrogate_energy(&p, &um, xi)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-6 * gmax, "{flags:?} {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn hvp_matches_finite_differences_and_is_symmetric() {
        for flags in all_flag_sets() {
            let p = params(flags, 4);
            let u = random_u(5, 0.1);
            let v = random_u(6, 1.0);
            let w = random_u(7, 1.0);
            let xi = [-0.05, 0.02];
            let hv = surrogate_hvp(&p, &u, xi, &v);
            let h = 1e-6;
            let shift = |s: f64| -> Vec<f64> { u.iter().zip(&v).map(|(a, b)| a + s * b).collect() };
            let gp = surrogate_grad(&p, &shift(h), xi);
            let gm = surrogate_grad(&p, &shift(-h), xi);
            let scale = hv.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            for i in 0..72 {
                let fd = (gp[i] - gm[i]) / (2.0 * h);
                assert!((fd - hv[i]).abs() <= 1e-5 * scale, "{flags:?} {i}");
            }
            let hw = surrogate_hvp(&p, &u, xi, &w);
            let a: f64 = w.iter().zip(&hv).map(|(x, y)| x * y).sum();
            let b: f64 = v.iter().zip(&hw).map(|(x, y)| x * y).sum();
            assert!((a - b).abs() < 1e-8 * a.abs().max(1.0));
            assert!(surrogate_hvp(&p, &u, xi, &vec![0.0; 72]).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn frozen_network_is_a_scaled_quadratic() {
        let cfg = SurrogateConfig { width: 4, ..Default::default() };
        let mut p = SurrogateParams::<f64>::zeros(cfg).unwrap();
        let c: f64 = 3.5;
        p.layers.last_mut().unwrap().b[0] = c.ln();
        let u = random_u(8, 0.1);
        let al = p.aligner::<f64>();
        let a = al.align(&u).0;
        let e: f64 = c * a.iter().map(|v| v * v).sum::<f64>();
        assert!((surrogate_energy(&p, &u, [0.0, 0.0]) - e).abs() < 1e-14);
        let expect = al.vjp(&u, &a.iter().map(|v| 2.0 * c * v).collect::<Vec<_>>());
        let g = surrogate_grad(&p, &u, [0.0, 0.0]);
        for (x, y) in g.iter().zip(&expect) {
            assert!((x - y).abs() < 1e-13);
        }
    }

    #[test]
    fn tiny_network_matches_hand_evaluation() {
        let flags = FeatureFlags { remove_rigid: false, ..Default::default() };
        let cfg = SurrogateConfig { width: 1, hidden_layers: 1, flags, ..Default::default() };
        let mut p = SurrogateParams::<f64>::zeros(cfg).unwrap();
        p.layers[0].w[(0, 0)] = 2.0;
        p.layers[0].w[(0, 73)] = -1.0;
        p.layers[0].b[0] = 0.5;
        p.layers[1].w[(0, 0)] = 0.75;
        p.layers[1].b[0] = -0.25;
        let mut u = vec![0.0; 72];
        u[0] = 0.1;
        u[5] = -0.2;
        // z = 2(0.1) − 1(0.3) + 0.5 = 0.4; swish(0.4) = 0.4 / (1 + e^−0.4)
        let sw = 0.4 / (1.0 + (-0.4f64).exp());
        let f = 0.75 * sw - 0.25;
        let expect = 0.05 * f.exp();
        assert!((surrogate_energy(&p, &u, [0.0, 0.3]) - expect).abs() < 1e-15);
        assert!((surrogate_energy(&p, &u, [0.0, 0.3]) - 0.046_601_340_343_866_73).abs() < 1e-15);
    }

    #[test]
    fn translation_invariance_and_rigid_orthogonality() {
        let p = params(FeatureFlags::default(), 9);
        let u = random_u(10, 0.1);
        let xi = [0.05, 0.0];
        let shifted: Vec<f64> = u.iter().enumerate().map(|(i, v)| v + if i % 2 == 0 { 0.3 } else { -0.7 }).collect();
        let e = surrogate_energy(&p, &u, xi);
        assert!((surrogate_energy(&p, &shifted, xi) - e).abs() < 1e-10 * e.max(1.0));
        let g = surrogate_grad(&p, &u, xi);
        let pos = p.config.layout().positions(2.0f64);
        let tx: f64 = g.iter().step_by(2).sum();
        let ty: f64 = g.iter().skip(1).step_by(2).sum();
        // infinitesimal rotation about the origin of the deformed configuration
        let rot: f64 = pos.iter().enumerate().map(|(k, x)| -(x[1] + u[2 * k + 1]) * g[2 * k] + (x[0] + u[2 * k]) * g[2 * k + 1]).sum();
        assert!(tx.abs() < 1e-8 && ty.abs() < 1e-8 && rot.abs() < 1e-8, "{tx} {ty} {rot}");
    }
}
