//! Ground-truth spectra and noisy synthetic datasets.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, Peak, SpectralParams, StepParams};
use crate::prior::{default_hyperparams, PriorSet, Regime, DEFAULT_WINDOW};

/// Seed the default truth's peak parameters were drawn with.
pub const DEFAULT_TRUTH_SEED: u64 = 20_230_703;
/// Minimum distance between any two peak centres of a drawn truth (eV).
pub const MIN_PEAK_SEPARATION: f64 = 1.5;
/// Edge position of the O-K edge setting (eV).
pub const DEFAULT_EDGE: f64 = 543.1;
pub const DEFAULT_PRECISION: f64 = 3000.0;
pub const DEFAULT_POINTS: usize = 703;
/// Seed of the noise realisation in [`default_truth`].
pub const DEFAULT_NOISE_SEED: u64 = 1;

/// Everything needed to regenerate a synthetic dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub params: SpectralParams<f64>,
    /// Noise precision `b`; `+∞` disables noise and is stored as `null`.
    #[serde(with = "infinite_as_null")]
    pub precision: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// Noise seed.
    pub seed: u64,
}

impl TruthSpec {
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if !(self.precision > 0.0) {
            return Err(Error::config("noise precision must be positive"));
        }
        if self.n_points == 0 {
            return Err(Error::config("energy grid needs at least one point"));
        }
        if !(self.window.0 < self.window.1) || !self.window.0.is_finite() || !self.window.1.is_finite() {
            return Err(Error::config("energy window must satisfy E_min < E_max"));
        }
        Ok(())
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_none()
        } else {
            s.serialize_some(v)
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// `n` equally spaced energies covering `[lo, hi]`, endpoints included.
pub fn energy_grid(window: (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (window.0 + window.1)];
    }
    let step = (window.1 - window.0) / (n - 1) as f64;
    (0..n).map(|i| window.0 + step * i as f64).collect()
}

/// Draws a (K1, K2) truth from the proposed-regime priors with `E0` fixed.
///
/// Peak centres must lie inside `window` and be at least
/// [`MIN_PEAK_SEPARATION`] apart from each other and from the white-line
/// centre; whole draws are rejected until both hold.
pub fn draw_truth(seed: u64, k1: usize, k2: usize, edge: f64, window: (f64, f64)) -> SpectralParams<f64> {
    let priors: PriorSet<f64> = default_hyperparams(Regime::Proposed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let s = &priors.step;
        let step = StepParams {
            height: s.height.sample(&mut rng),
            edge,
            edge_width: s.edge_width.sample(&mut rng),
            white_height: s.white_height.sample(&mut rng),
            white_offset: s.white_offset.sample(&mut rng),
            white_width: s.white_width.sample(&mut rng),
        };
        let mut draw = |n: usize, below: bool| -> Vec<Peak<f64>> {
            let pop = if below { priors.below() } else { priors.above() };
            (0..n)
                .map(|_| Peak {
                    height: pop.height.sample(&mut rng),
                    offset: pop.position.sample(&mut rng),
                    width: pop.width.sample(&mut rng),
                })
                .collect()
        };
        let mut params = SpectralParams {
            step,
            below: draw(k1, true),
            above: draw(k2, false),
        };
        let mut centres: Vec<f64> = params.peaks().map(|p| edge + p.offset).collect();
        let inside = centres.iter().all(|&c| c > window.0 && c < window.1);
        centres.push(edge + params.step.white_offset);
        let separated = centres.iter().enumerate().all(|(i, a)| {
            centres[i + 1..]
                .iter()
                .all(|b| (a - b).abs() >= MIN_PEAK_SEPARATION)
        });
        let positive = params.peaks().all(|p| p.offset != 0.0);
        if inside && separated && positive {
            params.sort_peaks();
            return params;
        }
    }
}

/// The (5, 5), `b = 3000`, `N = 703` reference truth on 530–590 eV.
///
/// Peak parameters are the frozen output of
/// `draw_truth(DEFAULT_TRUTH_SEED, 5, 5, 543.1, (530, 590))`.
pub fn default_truth() -> TruthSpec {
    TruthSpec {
        params: default_truth_params(),
        precision: DEFAULT_PRECISION,
        window: DEFAULT_WINDOW,
        n_points: DEFAULT_POINTS,
        seed: DEFAULT_NOISE_SEED,
    }
}

fn default_truth_params() -> SpectralParams<f64> {
    let peak = |height, offset, width| Peak { height, offset, width };
    SpectralParams {
        step: StepParams {
            height: 0.8141771202000363,
            edge: DEFAULT_EDGE,
            edge_width: 1.2367241717092,
            white_height: 0.7561315371663297,
            white_offset: 0.8445063851089885,
            white_width: 3.4638795983667343,
        },
        below: vec![
            peak(2.743978784693103, -13.038685502903032, 4.636018475184218),
            peak(4.076933147310133, -11.219317059942288, 2.1528254292432063),
            peak(1.7597050970374786, -9.085732315689972, 1.6080182608746005),
            peak(0.4687124495271664, -4.235936947472588, 3.978182649994795),
            peak(1.2511002670684208, -1.9237181835390054, 0.9006415265113669),
        ],
        above: vec![
            peak(0.26976534246176037, 4.827213918135298, 6.861284079415194),
            peak(0.6056418847471216, 10.449406708807155, 7.845293822114375),
            peak(0.4602804394058028, 14.690925518590014, 12.646863761343122),
            peak(0.4255122046842815, 19.646316628700486, 9.011611199230586),
            peak(0.20712388426508022, 46.78441776807147, 7.682837767531692),
        ],
    }
}

/// `I_i = f(E_i; θ) + ε_i` with `ε_i ~ N(0, 1/b)` i.i.d., seeded.
pub fn synthesize(spec: &TruthSpec) -> Dataset<f64> {
    let energy = energy_grid(spec.window, spec.n_points);
    let sd = 1.0 / spec.precision.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let intensity = energy
        .iter()
        .map(|&e| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let clean = spec.params.value_at(e);
            if sd == 0.0 {
                clean
            } else {
                clean + sd * z
            }
        })
        .collect();
    Dataset::new(energy, intensity).expect("finite synthetic data")
}
