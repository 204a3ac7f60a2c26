//! Exchange Monte Carlo engine.

pub mod diag;
pub mod ladder;
pub mod record;
pub mod sampler;
pub mod spectral;
pub mod target;

pub use diag::{autocorrelation, integrated_time};
pub use ladder::{presets, ReplicaLadder};
pub use record::{read_samples_csv, write_samples_csv, write_samples_csv_subset, SampleRecord, SampleRow};
pub use sampler::{
    exchange_probability, exchange_step, metropolis_sweep, run_emc, run_emc_with_progress, Emc,
    ExchangeStats, Kernel, SamplerConfig,
};
pub use spectral::{SpectralState, SpectralTarget};
pub use target::{SamplerRng, Target, Trial};
