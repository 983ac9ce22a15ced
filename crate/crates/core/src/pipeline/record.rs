use serde::{Deserialize, Serialize};

use crate::linalg::DenseMatrix;
use crate::PipelineError;

/// Where a training record came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Source {
    Hmc,
    Dagger,
    RejectedHmc,
}

impl Source {
    pub fn code(self) -> u8 {
        match self {
            Source::Hmc => 0,
            Source::Dagger => 1,
            Source::RejectedHmc => 2,
        }
    }

    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Source::Hmc),
            1 => Some(Source::Dagger),
            2 => Some(Source::RejectedHmc),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Source::Hmc => "hmc",
            Source::Dagger => "dagger",
            Source::RejectedHmc => "rejected-hmc",
        }
    }
}

/// Provenance and solver diagnostics of a record.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordMeta {
    pub collector: u32,
    pub seed: u64,
    pub newton_iterations: u32,
    /// The interior block needed a diagonal shift when the Hessian was condensed.
    pub regularized: bool,
}

/// One labeled boundary state `(u, ξ, Ẽ, ∇Ẽ, ∇²Ẽ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub u: Vec<f64>,
    pub xi: [f64; 2],
    pub energy: f64,
    pub grad: Vec<f64>,
    pub hessian: DenseMatrix<f64>,
    pub source: Source,
    pub meta: RecordMeta,
}

impl SampleRecord {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Finite entries, matching shapes, `Ẽ ≥ 0`, and a symmetric Hessian (1e-8 relative).
    pub fn validate(&self, index: usize) -> Result<(), PipelineError> {
        let bad = |reason: &str| PipelineError::InvalidRecord { index, reason: reason.to_string() };
        let d = self.u.len();
        if self.grad.len() != d || self.hessian.rows() != d || self.hessian.cols() != d {
            return Err(bad("shape mismatch"));
        }
        let finite = self.u.iter().chain(&self.grad).chain(self.hessian.as_slice()).chain(&self.xi).all(|v| v.is_finite());
        if !finite || !self.energy.is_finite() {
            return Err(bad("non-finite entry"));
        }
        if self.energy < 0.0 {
            return Err(bad("negative energy"));
        }
        if self.hessian.asymmetry() > 1e-8 {
            return Err(bad("asymmetric Hessian"));
        }
        Ok(())
    }
}
