//! Bayesian spectral deconvolution of XANES spectra.
//!
//! A spectrum is modelled as an arctangent absorption edge with a Gaussian
//! white line plus a sum of Gaussian peaks. Posterior samples come from
//! exchange Monte Carlo over a ladder of noise precisions `b`, and the same
//! run yields the Bayesian free energy used to choose the number of peaks
//! and the noise level.
//!
//! ```
//! use xanes_deconv::{default_truth, synthesize, error_function};
//!
//! let truth = default_truth();
//! let data = synthesize(&truth);
//! let e = error_function(&truth.params, &data).unwrap();
//! assert!(e > 0.0 && e < 1e-3);
//! ```

pub mod emc;
pub mod error;
pub mod evidence;
pub mod io;
pub mod model;
pub mod num;
pub mod prior;
pub mod synth;

pub use error::{Error, Result};
pub use evidence::{
    estimate_log_ztilde, free_energy, map_estimate, marginals, peak_count_posterior, select_model,
    EvidenceTable, Marginals, ModelEvidence, PeakPosterior, SelectionResult,
};
pub use model::{
    error_function, evaluate_model, evaluate_peaks, evaluate_step, Dataset, Peak, PeakConfig,
    SpectralParams, StepParams,
};
pub use num::Real;
pub use prior::{default_hyperparams, log_prior, sample_prior, DistributionSpec, ModelSpec, PriorSet, Regime};
pub use synth::{default_truth, synthesize, TruthSpec};

/// Double-precision spectrum parameters.
pub type Spectrum = SpectralParams<f64>;
/// Double-precision dataset.
pub type Data = Dataset<f64>;
/// Double-precision model specification.
pub type Model = ModelSpec<f64>;
/// Single-precision spectrum parameters.
pub type SpectrumF32 = SpectralParams<f32>;
/// Single-precision dataset.
pub type DataF32 = Dataset<f32>;
/// Single-precision model specification.
pub type ModelF32 = ModelSpec<f32>;
