//! Training data collection: HMC over boundary displacements, FEA labeling, DAgger.
mod collect;
mod dagger;
mod dataset;
mod hmc;
mod labeler;
mod record;

pub use collect::{collector_setup, run_collector, run_collectors, CollectConfig};
pub use dagger::{dagger_round, sample_scenario, DaggerConfig, DaggerOutput, Scenario};
pub use dataset::{
    append_records, decode_record, encode_record, load_records, record_size, split_of, Dataset, DatasetDir, Manifest, SourceCounts, Split,
};
pub use hmc::{
    hamiltonian, hmc_collect, hmc_transition, leapfrog, randomize_hmc_config, shaping_logdensity, Boltzmann, CollectorOutput, HmcConfig, Shaped,
    ShapingTarget, StrainGaussian, SIGMA_FLOOR, TARGET_STRAIN_STD, TEMPERATURES,
};
pub use labeler::{Label, Labeler, LabelerConfig};
pub use record::{RecordMeta, SampleRecord, Source};
