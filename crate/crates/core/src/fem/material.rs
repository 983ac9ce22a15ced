use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::FemError;

/// Compressible neo-Hookean solid in plane form (d = 2).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material<T> {
    pub mu: T,
    pub kappa: T,
}

impl<T: Real> Default for Material<T> {
    fn default() -> Self {
        Self { mu: T::one(), kappa: T::lit(10.0) }
    }
}

impl<T: Real> Material<T> {
    pub fn new(mu: T, kappa: T) -> Result<Self, FemError> {
        let m = Self { mu, kappa };
        m.check()?;
        Ok(m)
    }

    pub fn check(&self) -> Result<(), FemError> {
        if !(self.mu > T::zero() && self.kappa > T::zero() && self.mu.is_finite() && self.kappa.is_finite()) {
            return Err(FemError::Material(format!("mu={} kappa={}", self.mu, self.kappa)));
        }
        Ok(())
    }

    /// Spatial dimension of the formulation.
    pub const fn dim(&self) -> usize {
        2
    }
}

/// Deformation gradient flattened row-major: `[F11, F12, F21, F22]`.
pub type DefGrad<T> = [T; 4];

#[inline]
fn det<T: Real>(f: &DefGrad<T>) -> T {
    f[0] * f[3] - f[1] * f[2]
}

/// `∂J/∂F` in flattened order.
#[inline]
fn cofactor<T: Real>(f: &DefGrad<T>) -> [T; 4] {
    [f[3], -f[2], -f[1], f[0]]
}

/// `W(F) = μ/2 (J⁻¹ tr(F Fᵀ) − 2) + κ/2 (J − 1)²`; `None` when `det F ≤ 0`.
pub fn energy_density<T: Real>(f: &DefGrad<T>, m: &Material<T>) -> Option<T> {
    let j = det(f);
    if !(j > T::zero()) {
        return None;
    }
    let i1 = f.iter().map(|&x| x * x).sum::<T>();
    let half = T::lit(0.5);
    Some(half * m.mu * (i1 / j - T::lit(2.0)) + half * m.kappa * (j - T::one()) * (j - T::one()))
}

/// First Piola-Kirchhoff stress `∂W/∂F` (flattened).
pub fn pk1_stress<T: Real>(f: &DefGrad<T>, m: &Material<T>) -> Option<[T; 4]> {
    let j = det(f);
    if !(j > T::zero()) {
        return None;
    }
    let c = cofactor(f);
    let i1 = f.iter().map(|&x| x * x).sum::<T>();
    let half_mu = T::lit(0.5) * m.mu;
    let k = m.kappa * (j - T::one());
    let mut p = [T::zero(); 4];
    for a in 0..4 {
        p[a] = half_mu * (T::lit(2.0) * f[a] / j - i1 * c[a] / (j * j)) + k * c[a];
    }
    Some(p)
}

/// Energy, stress and material tangent `∂²W/∂F²` in one pass.
pub fn density_derivatives<T: Real>(f: &DefGrad<T>, m: &Material<T>) -> Option<(T, [T; 4], [[T; 4]; 4])> {
    let j = det(f);
    if !(j > T::zero()) {
        return None;
    }
    let c = cofactor(f);
    let i1 = f.iter().map(|&x| x * x).sum::<T>();
    let two = T::lit(2.0);
    let half_mu = T::lit(0.5) * m.mu;
    let jm1 = j - T::one();
    let (j2, j3) = (j * j, j * j * j);
    let w = half_mu * (i1 / j - two) + T::lit(0.5) * m.kappa * jm1 * jm1;
    let mut p = [T::zero(); 4];
    let mut h = [[T::zero(); 4]; 4];
    // ∂²J/∂F² pairs (F11,F22) with +1 and (F12,F21) with −1
    let q = |a: usize, b: usize| -> T {
        match (a, b) {
            (0, 3) | (3, 0) => T::one(),
            (1, 2) | (2, 1) => -T::one(),
            _ => T::zero(),
        }
    };
    for a in 0..4 {
        p[a] = half_mu * (two * f[a] / j - i1 * c[a] / j2) + m.kappa * jm1 * c[a];
        for b in 0..4 {
            let id = if a == b { two / j } else { T::zero() };
            let iso = id - two * (f[a] * c[b] + c[a] * f[b]) / j2 - i1 * q(a, b) / j2 + two * i1 * c[a] * c[b] / j3;
            h[a][b] = half_mu * iso + m.kappa * (c[a] * c[b] + jm1 * q(a, b));
        }
    }
    Some((w, p, h))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat() -> Material<f64> {
        Material::default()
    }

    #[test]
    fn closed_forms() {
        let m = mat();
        assert_eq!(energy_density(&[1.0, 0.0, 0.0, 1.0], &m), Some(0.0));
        let shear = energy_density(&[1.0, 0.3, 0.0, 1.0], &m).unwrap();
        assert!((shear - 0.045).abs() < 1e-12);
        let dil = energy_density(&[1.1, 0.0, 0.0, 1.1], &m).unwrap();
        assert!((dil - 0.5 * 10.0 * (1.21f64 - 1.0).powi(2)).abs() < 1e-12);
        assert!((dil - 0.22050).abs() < 1e-12);
        assert!(energy_density(&[1.0, 0.0, 0.0, -0.1], &m).is_none());
    }

    #[test]
    fn stress_and_tangent_match_finite_differences() {
        let m = Material::<f64>::new(1.3, 7.0).unwrap();
        let f: [f64; 4] = [1.1, 0.2, -0.15, 0.9];
        let (w, p, h) = density_derivatives(&f, &m).unwrap();
        assert_eq!(w, energy_density(&f, &m).unwrap());
        assert_eq!(p, pk1_stress(&f, &m).unwrap());
        let eps = 1e-6;
        for a in 0..4 {
            let mut fp = f;
            let mut fm = f;
            fp[a] += eps;
            fm[a] -= eps;
            let fd = (energy_density(&fp, &m).unwrap() - energy_density(&fm, &m).unwrap()) / (2.0 * eps);
            assert!((fd - p[a]).abs() < 1e-8, "stress {a}");
            let pp = pk1_stress(&fp, &m).unwrap();
            let pm = pk1_stress(&fm, &m).unwrap();
            for b in 0..4 {
                let fd = (pp[b] - pm[b]) / (2.0 * eps);
                assert!((fd - h[b][a]).abs() < 1e-7, "tangent {a}{b}");
                assert!((h[a][b] - h[b][a]).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn rest_tangent_is_linear_elasticity() {
        let (_, p, h) = density_derivatives(&[1.0, 0.0, 0.0, 1.0], &mat()).unwrap();
        assert_eq!(p, [0.0; 4]);
        // λ_lin = κ − μ, shear μ: h = μ(δ_ik δ_jl + δ_il δ_jk) + (κ − μ) δ_ij δ_kl
        assert!((h[0][0] - 11.0).abs() < 1e-14);
        assert!((h[0][3] - 9.0).abs() < 1e-14);
        assert!((h[1][1] - 1.0).abs() < 1e-14);
        assert!((h[1][2] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn invalid_material_rejected() {
        assert!(Material::new(0.0, 1.0).is_err());
        assert!(Material::new(1.0, f64::NAN).is_err());
    }
}
