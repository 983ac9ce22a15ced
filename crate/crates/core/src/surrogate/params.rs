use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::basis::ControlLayout;
use crate::linalg::DenseMatrix;
use crate::scalar::Real;
use crate::SurrogateError;

/// Switches for the ablation study. All on is the full model.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureFlags {
    /// Predict `‖a‖² exp f` instead of the energy directly.
    pub scale_by_norm: bool,
    /// Feed the Procrustes-aligned displacement `R(u)` instead of `u`.
    pub remove_rigid: bool,
    /// Train on gradient cosine distance.
    pub sobolev_g: bool,
    /// Train on Hessian-vector-product cosine distance.
    pub sobolev_hvp: bool,
}

impl Default for FeatureFlags {
    fn default() -> Self {
        Self { scale_by_norm: true, remove_rigid: true, sobolev_g: true, sobolev_hvp: true }
    }
}

impl FeatureFlags {
    pub fn bits(self) -> u8 {
        (self.scale_by_norm as u8) | (self.remove_rigid as u8) << 1 | (self.sobolev_g as u8) << 2 | (self.sobolev_hvp as u8) << 3
    }

    pub fn from_bits(b: u8) -> Self {
        Self { scale_by_norm: b & 1 != 0, remove_rigid: b & 2 != 0, sobolev_g: b & 4 != 0, sobolev_hvp: b & 8 != 0 }
    }

    /// Full model plus each flag switched off in turn.
    pub fn ablation_grid() -> Vec<(&'static str, Self)> {
        let all = Self::default();
        vec![
            ("full", all),
            ("no-scale", Self { scale_by_norm: false, ..all }),
            ("no-procrustes", Self { remove_rigid: false, ..all }),
            ("no-sobolev-g", Self { sobolev_g: false, ..all }),
            ("no-sobolev-hvp", Self { sobolev_hvp: false, ..all }),
        ]
    }
}

/// Network architecture and the component it models.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurrogateConfig {
    /// Control points per face (`N`).
    pub per_edge: usize,
    pub width: usize,
    pub hidden_layers: usize,
    /// Side length of the modelled component (rest positions for the alignment).
    pub side: f64,
    pub flags: FeatureFlags,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self { per_edge: 10, width: 128, hidden_layers: 3, side: 2.0, flags: FeatureFlags::default() }
    }
}

impl SurrogateConfig {
    pub fn layout(&self) -> ControlLayout {
        ControlLayout { per_edge: self.per_edge }
    }

    /// Length of the boundary vector `2n`.
    pub fn dim(&self) -> usize {
        self.layout().dim()
    }

    /// Network input: aligned displacements followed by `(α, β)`.
    pub fn input_dim(&self) -> usize {
        self.dim() + 2
    }

    /// `(fan_out, fan_in)` of each affine layer, the scalar output last.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        let mut shapes = Vec::with_capacity(self.hidden_layers + 1);
        let mut fan_in = self.input_dim();
        for _ in 0..self.hidden_layers {
            shapes.push((self.width, fan_in));
            fan_in = self.width;
        }
        shapes.push((1, fan_in));
        shapes
    }

    pub fn check(&self) -> Result<(), SurrogateError> {
        if self.per_edge < 4 {
            return Err(SurrogateError::Config(format!("per_edge = {} < 4", self.per_edge)));
        }
        if self.width == 0 || self.hidden_layers == 0 {
            return Err(SurrogateError::Config("network needs at least one hidden unit and layer".into()));
        }
        if !(self.side > 0.0 && self.side.is_finite()) {
            return Err(SurrogateError::Config(format!("side = {}", self.side)));
        }
        Ok(())
    }
}

/// Affine layer `z = W x + b` with `W` stored `fan_out × fan_in`.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub w: DenseMatrix<T>,
    pub b: Vec<T>,
}

/// Weights `φ` of the network `f_φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateParams<T> {
    pub config: SurrogateConfig,
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> SurrogateParams<T> {
    /// He initialization: `W ~ N(0, 2 / fan_in)`, zero biases.
    pub fn init<R: Rng + ?Sized>(config: SurrogateConfig, rng: &mut R) -> Result<Self, SurrogateError> {
        config.check()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| {
                let std = (2.0 / inp as f64).sqrt();
                let w = DenseMatrix::from_fn(out, inp, |_, _| {
                    let z: f64 = StandardNormal.sample(rng);
                    T::lit(std * z)
                });
                Layer { w, b: vec![T::zero(); out] }
            })
            .collect();
        Ok(Self { config, layers })
    }

    /// All-zero weights, so `f ≡ 0` and the model reduces to `‖R(u)‖²`.
    pub fn zeros(config: SurrogateConfig) -> Result<Self, SurrogateError> {
        config.check()?;
        let layers = config
            .layer_shapes()
            .into_iter()
            .map(|(out, inp)| Layer { w: DenseMatrix::zeros(out, inp), b: vec![T::zero(); out] })
            .collect();
        Ok(Self { config, layers })
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|l| l.w.rows() * l.w.cols() + l.b.len()).sum()
    }

    /// Weights then biases, layer by layer.
    pub fn flatten(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.n_params());
        for l in &self.layers {
            out.extend_from_slice(l.w.as_slice());
            out.extend_from_slice(&l.b);
        }
        out
    }

    /// Inverse of [`flatten`](Self::flatten).
    pub fn assign(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.n_params());
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.w.rows() * l.w.cols();
            l.w.as_mut_slice().copy_from_slice(&flat[k..k + nw]);
            k += nw;
            let nb = l.b.len();
            l.b.copy_from_slice(&flat[k..k + nb]);
            k += nb;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.w.as_slice().iter().chain(&l.b).all(|v| v.is_finite()))
    }

    /// Same weights in another scalar type.
    pub fn cast<U: Real>(&self) -> SurrogateParams<U> {
        let layers = self
            .layers
            .iter()
            .map(|l| Layer {
                w: DenseMatrix::from_row_major(l.w.rows(), l.w.cols(), l.w.as_slice().iter().map(|v| U::lit(v.to_f64_lossy())).collect()),
                b: l.b.iter().map(|v| U::lit(v.to_f64_lossy())).collect(),
            })
            .collect();
        SurrogateParams { config: self.config, layers }
    }

    /// Architecture matches the configuration exactly.
    pub fn check(&self) -> Result<(), SurrogateError> {
        self.config.check()?;
        let shapes = self.config.layer_shapes();
        if shapes.len() != self.layers.len()
            || shapes.iter().zip(&self.layers).any(|(&(o, i), l)| l.w.rows() != o || l.w.cols() != i || l.b.len() != o)
        {
            return Err(SurrogateError::Config("layer shapes do not match the configuration".into()));
        }
        if !self.is_finite() {
            return Err(SurrogateError::Config("non-finite weights".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    #[test]
    fn shapes_and_flatten_round_trip() {
        let cfg = SurrogateConfig { width: 16, ..Default::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = SurrogateParams::<f64>::init(cfg, &mut rng).unwrap();
        assert_eq!(p.layers.len(), 4);
        assert_eq!(p.layers[0].w.cols(), 74);
        assert_eq!(p.n_params(), 16 * 74 + 16 + 2 * (16 * 16 + 16) + 16 + 1);
        let mut q = SurrogateParams::zeros(cfg).unwrap();
        q.assign(&p.flatten());
        assert_eq!(p, q);
        assert!(p.check().is_ok());
        assert!(p.layers.iter().all(|l| l.b.iter().all(|&b| b == 0.0)));
    }

    #[test]
    fn he_scale_is_plausible() {
        let cfg = SurrogateConfig::default();
        let p = SurrogateParams::<f64>::init(cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let w = p.layers[1].w.as_slice();
        let var = w.iter().map(|v| v * v).sum::<f64>() / w.len() as f64;
        assert!((var * 128.0 / 2.0 - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn flag_bits_round_trip() {
        for (_, f) in FeatureFlags::ablation_grid() {
            assert_eq!(FeatureFlags::from_bits(f.bits()), f);
        }
    }
}
