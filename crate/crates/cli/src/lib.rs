//! End-to-end pipeline commands: collection, training, DAgger, FEA and CES solves,
//! benchmarks, ablations and the invariant suite.

pub mod commands;
pub mod config;
pub mod error;
pub mod scenario;
pub mod validate;

pub use commands::Run;
pub use config::RunConfig;
pub use error::CliError;
