//! Learned collapsed-energy model `Ê(u, ξ) = ‖R(u)‖² exp f_φ(R(u), ξ)`.
//!
//! `f_φ` is a fully connected Swish network on the Procrustes-aligned boundary
//! displacement and the pore parameters. Gradients are exact reverse mode through the
//! alignment; Hessian-vector products push a dual number through the gradient. Training
//! minimizes the log-stiffness error plus gradient and HVP cosine distances with Adam.

mod checkpoint;
mod loss;
mod model;
mod network;
mod params;
mod tape;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, write_sidecar};
pub use loss::{evaluate, loss, LossReport, Metrics, NORM_FLOOR};
pub use model::{surrogate_energy, surrogate_energy_grad, surrogate_grad, surrogate_hessian, surrogate_hvp};
pub use network::swish;
pub use params::{FeatureFlags, Layer, SurrogateConfig, SurrogateParams};
pub use train::{train, validation_metrics, EpochReport, TrainConfig, Trainer};
