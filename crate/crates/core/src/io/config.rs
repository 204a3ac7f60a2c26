//! Run configuration file (TOML).
//!
//! ```toml
//! seed = 7
//!
//! [model]
//! regime = "proposed"          # or "conventional"
//! grid = [{ k1 = 5, k2 = 5 }]  # conventional: [{ k1 = 10, k2 = 0 }] or use `--k`
//! window = [530.0, 590.0]
//!
//! [ladder]
//! replicas = 92
//! ratio = 1.18
//! anchor = 3000.0
//!
//! [sampler]
//! total_mcs = 60000
//! burn_in = 30000
//!
//! [paths]
//! data = "dataset.csv"
//! out_dir = "out"
//! ```
//!
//! Every section is optional. Relative paths are resolved against the
//! directory of the configuration file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emc::{presets, ReplicaLadder, SamplerConfig};
use crate::error::{Error, Result};
use crate::model::PeakConfig;
use crate::prior::{default_hyperparams, ModelSpec, PriorSet, Regime, DEFAULT_WINDOW};
use crate::synth::{
    default_truth, draw_truth, TruthSpec, DEFAULT_EDGE, DEFAULT_NOISE_SEED, DEFAULT_POINTS,
    DEFAULT_PRECISION, DEFAULT_TRUTH_SEED,
};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Overrides `sampler.seed` and `truth.noise_seed`.
    pub seed: Option<u64>,
    pub model: ModelSection,
    /// Defaults to the regime's preset ladder.
    pub ladder: Option<LadderSection>,
    pub sampler: SamplerConfig,
    /// Replaces the regime's default hyperparameters.
    pub priors: Option<PriorSet<f64>>,
    pub posterior: PosteriorSection,
    pub truth: TruthSection,
    pub diag: DiagSection,
    pub output: OutputSection,
    pub paths: PathSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub regime: Regime,
    /// Candidate peak counts; defaults to `K ∈ [1, 16]` (conventional) or
    /// `(K1, K2) ∈ [0, 8]²` (proposed).
    pub grid: Option<Vec<PeakConfig>>,
    pub window: (f64, f64),
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            regime: Regime::Proposed,
            grid: None,
            window: DEFAULT_WINDOW,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LadderSection {
    pub replicas: usize,
    pub ratio: f64,
    pub anchor: f64,
}

/// Optional non-uniform hyperpriors for the peak-count posterior.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PosteriorSection {
    /// One weight per grid entry.
    pub model_weights: Option<Vec<f64>>,
    /// One weight per ladder rung.
    pub rung_weights: Option<Vec<f64>>,
}

/// Synthetic truth for `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TruthSection {
    pub k1: usize,
    pub k2: usize,
    /// Seed of the peak draw; unset with `(5, 5)` gives the reference truth.
    pub peak_seed: Option<u64>,
    pub edge: f64,
    pub precision: f64,
    pub n_points: usize,
    pub window: (f64, f64),
    pub noise_seed: u64,
}

impl Default for TruthSection {
    fn default() -> Self {
        Self {
            k1: 5,
            k2: 5,
            peak_seed: None,
            edge: DEFAULT_EDGE,
            precision: DEFAULT_PRECISION,
            n_points: DEFAULT_POINTS,
            window: DEFAULT_WINDOW,
            noise_seed: DEFAULT_NOISE_SEED,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagSection {
    /// 1-based replica to analyse; defaults to the ladder anchor.
    pub replica: Option<usize>,
    /// Largest autocorrelation lag; defaults to a quarter of the series.
    pub max_lag: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    /// 1-based replicas written to `samples.csv`; all when unset.
    pub replicas: Option<Vec<usize>>,
    /// Suppress the progress line.
    pub quiet: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PathSection {
    /// Input dataset for `fit` and `select`.
    pub data: Option<PathBuf>,
    /// Samples file for `diag`; defaults to `<out_dir>/samples.csv`.
    pub samples: Option<PathBuf>,
    pub out_dir: PathBuf,
}

impl Default for PathSection {
    fn default() -> Self {
        Self {
            data: None,
            samples: None,
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Which command a configuration is validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Generate,
    Fit,
    Select,
    Diag,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start.min(text.len())].matches('\n').count() as u64 + 1)
                .unwrap_or(0);
            Error::Parse {
                line,
                message: e.message().to_string(),
            }
        })
    }

    /// Reads a configuration file and anchors its relative paths at the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
        })?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.paths.anchor(base);
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::config(e.to_string()))
    }

    pub fn grid(&self) -> Vec<PeakConfig> {
        match &self.model.grid {
            Some(g) => g
                .iter()
                .map(|p| match self.model.regime {
                    Regime::Conventional => PeakConfig::single(p.total()),
                    Regime::Proposed => *p,
                })
                .collect(),
            None => default_grid(self.model.regime),
        }
    }

    pub fn ladder(&self) -> Result<ReplicaLadder> {
        let (l, xi, anchor) = match self.ladder {
            Some(s) => (s.replicas, s.ratio, s.anchor),
            None => match self.model.regime {
                Regime::Proposed => presets::PROPOSED,
                Regime::Conventional => presets::CONVENTIONAL,
            },
        };
        ReplicaLadder::geometric(l, xi, anchor)
    }

    pub fn priors(&self) -> PriorSet<f64> {
        self.priors
            .unwrap_or_else(|| default_hyperparams(self.model.regime))
    }

    pub fn model_spec(&self, peaks: PeakConfig) -> Result<ModelSpec<f64>> {
        ModelSpec::new(self.priors(), peaks, self.model.window)
    }

    /// Sampler settings with the top-level seed applied.
    pub fn sampler(&self) -> SamplerConfig {
        let mut s = self.sampler.clone();
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        s
    }

    pub fn truth_spec(&self) -> Result<TruthSpec> {
        let t = &self.truth;
        let noise_seed = self.seed.unwrap_or(t.noise_seed);
        let reference = default_truth();
        let params = match t.peak_seed {
            None if (t.k1, t.k2) == (5, 5) && t.edge == DEFAULT_EDGE && t.window == DEFAULT_WINDOW => {
                reference.params
            }
            seed => {
                if !(t.window.0 < t.window.1) {
                    return Err(Error::config("truth window must satisfy E_min < E_max"));
                }
                draw_truth(seed.unwrap_or(DEFAULT_TRUTH_SEED), t.k1, t.k2, t.edge, t.window)
            }
        };
        let spec = TruthSpec {
            params,
            precision: t.precision,
            window: t.window,
            n_points: t.n_points,
            seed: noise_seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn data_path(&self) -> Result<&Path> {
        self.paths
            .data
            .as_deref()
            .ok_or_else(|| Error::config("no dataset given; set paths.data or pass --data"))
    }

    pub fn samples_path(&self) -> PathBuf {
        self.paths
            .samples
            .clone()
            .unwrap_or_else(|| self.paths.out_dir.join("samples.csv"))
    }

    /// Checks everything a command needs before any compute starts.
    pub fn validate(&self, command: Command) -> Result<()> {
        match command {
            Command::Generate => {
                self.truth_spec()?;
            }
            Command::Fit | Command::Select => {
                let grid = self.grid();
                if grid.is_empty() {
                    return Err(Error::config("model grid is empty"));
                }
                if command == Command::Fit && grid.len() != 1 {
                    return Err(Error::config(format!(
                        "fit needs exactly one model, the grid has {}; pass --k1/--k2 or --k",
                        grid.len()
                    )));
                }
                for p in &grid {
                    self.model_spec(*p)?;
                }
                let ladder = self.ladder()?;
                self.sampler().validate()?;
                if let Some(w) = &self.posterior.model_weights {
                    if w.len() != grid.len() || w.iter().any(|x| !(*x >= 0.0)) {
                        return Err(Error::config("posterior.model_weights needs one non-negative weight per grid entry"));
                    }
                }
                if let Some(w) = &self.posterior.rung_weights {
                    if w.len() != ladder.len() || w.iter().any(|x| !(*x >= 0.0)) {
                        return Err(Error::config("posterior.rung_weights needs one non-negative weight per rung"));
                    }
                }
                if let Some(r) = &self.output.replicas {
                    if r.iter().any(|&l| l == 0 || l > ladder.len()) {
                        return Err(Error::config("output.replicas are 1-based rung indices"));
                    }
                }
                let data = self.data_path()?;
                if !data.is_file() {
                    return Err(Error::config(format!("dataset {} does not exist", data.display())));
                }
            }
            Command::Diag => {
                let samples = self.samples_path();
                if !samples.is_file() {
                    return Err(Error::config(format!("samples file {} does not exist", samples.display())));
                }
                if self.diag.replica == Some(0) || self.diag.max_lag == Some(0) {
                    return Err(Error::config("diag.replica and diag.max_lag must be positive"));
                }
            }
        }
        Ok(())
    }
}

impl PathSection {
    fn anchor(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(p) = self.data.as_mut() {
            fix(p);
        }
        if let Some(p) = self.samples.as_mut() {
            fix(p);
        }
        fix(&mut self.out_dir);
    }
}

pub fn default_grid(regime: Regime) -> Vec<PeakConfig> {
    match regime {
        Regime::Conventional => (1..=16).map(PeakConfig::single).collect(),
        Regime::Proposed => (0..=8)
            .flat_map(|k1| (0..=8).map(move |k2| PeakConfig::new(k1, k2)))
            .collect(),
    }
}
