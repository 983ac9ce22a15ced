//! Dense and sparse linear algebra used by the solvers.

mod dense;
mod skyline;
mod sparse;

pub use dense::{symmetric_eigen, DenseLu, DenseMatrix};
pub use skyline::{DofPartition, SkylineLdlt, SkylineMatrix, Slot};
pub use sparse::{reverse_cuthill_mckee, BlockCsr};
