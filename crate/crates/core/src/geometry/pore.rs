use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::scalar::Real;
use crate::GeometryError;

/// Number of angular samples used when scanning `r(θ)` for extrema.
pub const THETA_SCAN_POINTS: usize = 10_000;

/// Polar pore profile `r(θ) = r0 (1 + α cos 4θ + β cos 8θ)` centred in a square cell.
///
/// `r0` is fixed so that the pore occupies half of the cell area.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoreShape<T> {
    pub alpha: T,
    pub beta: T,
    pub r0: T,
    pub cell_side: T,
}

impl<T: Real> PoreShape<T> {
    pub fn new(alpha: T, beta: T, cell_side: T) -> Self {
        let r0 = cell_side / (T::PI() * (T::lit(2.0) + alpha * alpha + beta * beta)).sqrt();
        Self { alpha, beta, r0, cell_side }
    }

    /// Circular pore in a unit cell.
    pub fn circular() -> Self {
        Self::new(T::zero(), T::zero(), T::one())
    }

    pub fn radius(&self, theta: T) -> T {
        let four = T::lit(4.0);
        let eight = T::lit(8.0);
        self.r0 * (T::one() + self.alpha * (four * theta).cos() + self.beta * (eight * theta).cos())
    }

    /// The pore parameter pair `(α, β)`.
    pub fn xi(&self) -> [T; 2] {
        [self.alpha, self.beta]
    }

    pub fn with_cell_side(&self, cell_side: T) -> Self {
        Self::new(self.alpha, self.beta, cell_side)
    }

    /// Pore boundary polygon with `resolution` vertices at `θ_k = 2πk / resolution`,
    /// counterclockwise, relative to the pore centre.
    pub fn polygon(&self, resolution: usize) -> Vec<[T; 2]> {
        (0..resolution)
            .map(|k| {
                let theta = T::lit(2.0 * std::f64::consts::PI * k as f64 / resolution as f64);
                let r = self.radius(theta);
                [r * theta.cos(), r * theta.sin()]
            })
            .collect()
    }

    /// `(min_θ r, max_θ |r cos θ|)` over a uniform scan of the circle.
    fn extrema(&self) -> (T, T) {
        let mut min_r = T::infinity();
        let mut max_extent = T::zero();
        for k in 0..THETA_SCAN_POINTS {
            let theta = T::lit(2.0 * std::f64::consts::PI * k as f64 / THETA_SCAN_POINTS as f64);
            let r = self.radius(theta);
            min_r = min_r.min(r);
            max_extent = max_extent.max((r * theta.cos()).abs());
        }
        (min_r, max_extent)
    }

    /// Material ligament left between this pore and a neighbouring identical pore.
    pub fn ligament(&self) -> T {
        let (_, extent) = self.extrema();
        self.cell_side - T::lit(2.0) * extent
    }
}

/// `r(θ)` of a pore shape.
pub fn pore_radius<T: Real>(shape: &PoreShape<T>, theta: T) -> T {
    shape.radius(theta)
}

/// A pore is valid when its thinnest radius and the ligament to its neighbours both exceed
/// `thickness_floor · L0`.
pub fn is_valid_pore<T: Real>(shape: &PoreShape<T>, thickness_floor: T) -> bool {
    let (min_r, extent) = shape.extrema();
    let floor = thickness_floor * shape.cell_side;
    let ligament = shape.cell_side - T::lit(2.0) * extent;
    min_r > floor && ligament > floor
}

/// Validity floors and the rejection-sampling box for `(α, β)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoreSampler {
    pub thickness_floor: f64,
    pub alpha_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub max_rejections: usize,
    pub cell_side: f64,
}

impl Default for PoreSampler {
    fn default() -> Self {
        Self {
            thickness_floor: 0.05,
            alpha_range: [-0.3, 0.3],
            beta_range: [-0.3, 0.3],
            max_rejections: 10_000,
            cell_side: 1.0,
        }
    }
}

impl PoreSampler {
    /// Rejects boxes that cannot be sampled from.
    pub fn check(&self) -> Result<(), GeometryError> {
        let ok = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] < r[1];
        if !ok(self.alpha_range) || !ok(self.beta_range) {
            return Err(GeometryError::Parameters(format!(
                "empty pore box alpha={:?} beta={:?}",
                self.alpha_range, self.beta_range
            )));
        }
        if !(self.thickness_floor >= 0.0 && self.cell_side > 0.0) {
            return Err(GeometryError::Parameters("thickness floor and cell side must be positive".into()));
        }
        Ok(())
    }

    /// Draws `(α, β)` uniformly from the valid part of the box.
    pub fn sample<T: Real, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<PoreShape<T>, GeometryError> {
        self.check()?;
        for _ in 0..self.max_rejections {
            let a = rng.random_range(self.alpha_range[0]..self.alpha_range[1]);
            let b = rng.random_range(self.beta_range[0]..self.beta_range[1]);
            let shape = PoreShape::new(T::lit(a), T::lit(b), T::lit(self.cell_side));
            if is_valid_pore(&shape, T::lit(self.thickness_floor)) {
                return Ok(shape);
            }
        }
        Err(GeometryError::RejectionExhausted { attempts: self.max_rejections })
    }
}

/// Uniform draw over valid pore shapes with the default box and floors.
pub fn sample_valid_pore<R: Rng + ?Sized>(rng: &mut R) -> Result<PoreShape<f64>, GeometryError> {
    PoreSampler::default().sample(rng)
}

/// Shoelace area of a simple polygon (positive for counterclockwise order).
pub fn polygon_area<T: Real>(poly: &[[T; 2]]) -> T {
    let n = poly.len();
    let mut twice = T::zero();
    for i in 0..n {
        let p = poly[i];
        let q = poly[(i + 1) % n];
        twice += p[0] * q[1] - q[0] * p[1];
    }
    twice * T::lit(0.5)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn circular_radius_is_one_over_sqrt_two_pi() {
        let s = PoreShape::<f64>::circular();
        for theta in [0.0, 0.3, 1.7, -2.0] {
            assert!((pore_radius(&s, theta) - 0.398_942_280_4).abs() < 1e-10);
        }
    }

    #[test]
    fn radius_hand_values() {
        let s = PoreShape::new(0.2, 0.0, 1.0);
        let expect = 1.2 / (2.04 * std::f64::consts::PI).sqrt();
        assert!((s.radius(0.0) - expect).abs() < 1e-12);
        assert!((s.radius(0.0) - 0.474_014_062_5).abs() < 1e-10);
        let collapsed = PoreShape::<f64>::new(-1.0, 0.0, 1.0);
        assert!(collapsed.radius(0.0).abs() < 1e-15);
    }

    #[test]
    fn validity_examples() {
        assert!(is_valid_pore(&PoreShape::new(0.0, 0.0, 1.0), 0.05));
        assert!(!is_valid_pore(&PoreShape::new(-1.0, 0.0, 1.0), 0.05));
        assert!(!is_valid_pore(&PoreShape::new(0.0, 0.9, 1.0), 0.05));
    }

    #[test]
    fn radius_is_mirror_symmetric() {
        let s = PoreShape::new(0.17, -0.23, 1.0);
        for k in 0..1000 {
            let t = k as f64 * 0.00631;
            assert!((s.radius(t) - s.radius(-t)).abs() < 1e-12);
            assert!((s.radius(t) - s.radius(std::f64::consts::PI - t)).abs() < 1e-12);
        }
    }

    #[test]
    fn sampler_is_seeded_and_valid() {
        let mut a = ChaCha8Rng::seed_from_u64(7);
        let mut b = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let sa = sample_valid_pore(&mut a).unwrap();
            let sb = sample_valid_pore(&mut b).unwrap();
            assert_eq!(sa, sb);
            assert!(is_valid_pore(&sa, 0.05));
        }
    }

    #[test]
    fn impossible_box_exhausts_rejections() {
        let sampler = PoreSampler {
            alpha_range: [0.95, 0.99],
            beta_range: [0.9, 0.95],
            max_rejections: 20,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sampler.sample::<f64, _>(&mut rng).unwrap_err();
        assert_eq!(err, GeometryError::RejectionExhausted { attempts: 20 });
    }
}
