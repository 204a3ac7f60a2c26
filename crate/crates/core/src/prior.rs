//! Prior families, the shipped hyperparameter tables for both regimes, and
//! prior evaluation/sampling over a full [`SpectralParams`] vector.

use rand::Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Peak, PeakConfig, SpectralParams, StepParams};
use crate::num::{ln_gamma, Real};

/// One-dimensional prior density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DistributionSpec<T> {
    /// Uniform on `[lower, upper]`.
    Uniform { lower: T, upper: T },
    /// Normal with mean and standard deviation.
    Normal { mean: T, sd: T },
    /// Gamma with shape `κ` and scale `ϑ`.
    Gamma { shape: T, scale: T },
}

impl<T: Real> DistributionSpec<T> {
    pub fn uniform(lower: f64, upper: f64) -> Self {
        Self::Uniform {
            lower: T::lit(lower),
            upper: T::lit(upper),
        }
    }

    pub fn normal(mean: f64, sd: f64) -> Self {
        Self::Normal {
            mean: T::lit(mean),
            sd: T::lit(sd),
        }
    }

    pub fn gamma(shape: f64, scale: f64) -> Self {
        Self::Gamma {
            shape: T::lit(shape),
            scale: T::lit(scale),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Uniform { lower, upper } => lower.is_finite() && upper.is_finite() && lower < upper,
            Self::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > T::zero(),
            Self::Gamma { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > T::zero() && scale > T::zero()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::config(format!("invalid distribution {self:?}")))
        }
    }

    /// Natural-log density; `-inf` outside the support.
    pub fn log_density(&self, x: T) -> Result<T> {
        if x.is_nan() {
            return Err(Error::invalid("log density evaluated at NaN"));
        }
        Ok(self.log_density_unchecked(x))
    }

    #[inline]
    pub(crate) fn log_density_unchecked(&self, x: T) -> T {
        match *self {
            Self::Uniform { lower, upper } => {
                if x >= lower && x <= upper {
                    -(upper - lower).ln()
                } else {
                    T::neg_infinity()
                }
            }
            Self::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                let half = T::lit(0.5);
                -half * (T::lit(2.0) * T::PI() * sd * sd).ln() - half * z * z
            }
            Self::Gamma { shape, scale } => {
                if x > T::zero() && x.is_finite() {
                    (shape - T::one()) * x.ln() - x / scale - ln_gamma(shape) - shape * scale.ln()
                } else {
                    T::neg_infinity()
                }
            }
        }
    }

    /// Characteristic width: range for uniforms, `σ` for normals, `ϑ√κ` for gammas.
    pub fn scale(&self) -> T {
        match *self {
            Self::Uniform { lower, upper } => upper - lower,
            Self::Normal { sd, .. } => sd,
            Self::Gamma { shape, scale } => scale * shape.sqrt(),
        }
    }

    /// Closed support `[lo, hi]` (infinite ends where unbounded).
    pub fn support(&self) -> (T, T) {
        match *self {
            Self::Uniform { lower, upper } => (lower, upper),
            Self::Normal { .. } => (T::neg_infinity(), T::infinity()),
            Self::Gamma { .. } => (T::zero(), T::infinity()),
        }
    }

    pub fn mean(&self) -> T {
        match *self {
            Self::Uniform { lower, upper } => T::lit(0.5) * (lower + upper),
            Self::Normal { mean, .. } => mean,
            Self::Gamma { shape, scale } => shape * scale,
        }
    }

    /// Exact draw. Computed in `f64` and rounded to `T`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> T {
        let f = |v: T| v.to_f64().expect("finite hyperparameter");
        let x = match *self {
            Self::Uniform { lower, upper } => Uniform::new_inclusive(f(lower), f(upper))
                .expect("validated uniform")
                .sample(rng),
            Self::Normal { mean, sd } => Normal::new(f(mean), f(sd))
                .expect("validated normal")
                .sample(rng),
            Self::Gamma { shape, scale } => Gamma::new(f(shape), f(scale))
                .expect("validated gamma")
                .sample(rng),
        };
        T::lit(x)
    }
}

/// Which peak-prior design is in force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// One undifferentiated peak population with absolute positions.
    Conventional,
    /// Separate below-edge and above-edge populations with edge-relative offsets.
    Proposed,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Conventional => f.write_str("conventional"),
            Regime::Proposed => f.write_str("proposed"),
        }
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conventional" => Ok(Regime::Conventional),
            "proposed" => Ok(Regime::Proposed),
            other => Err(Error::config(format!("unknown model regime {other:?}"))),
        }
    }
}

/// Priors over the step block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepPriors<T> {
    #[serde(rename = "H")]
    pub height: DistributionSpec<T>,
    #[serde(rename = "E0")]
    pub edge: DistributionSpec<T>,
    #[serde(rename = "Gamma")]
    pub edge_width: DistributionSpec<T>,
    #[serde(rename = "A")]
    pub white_height: DistributionSpec<T>,
    #[serde(rename = "DeltaE")]
    pub white_offset: DistributionSpec<T>,
    #[serde(rename = "omega")]
    pub white_width: DistributionSpec<T>,
}

/// Priors shared by every peak of one population.
///
/// `position` is over the edge offset `ΔE_k` in the proposed regime and over
/// the absolute centre `E_k` in the conventional regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakPriors<T> {
    #[serde(rename = "F")]
    pub height: DistributionSpec<T>,
    #[serde(rename = "E")]
    pub position: DistributionSpec<T>,
    #[serde(rename = "W")]
    pub width: DistributionSpec<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "lowercase")]
pub enum PeakPriorSet<T> {
    Conventional { peaks: PeakPriors<T> },
    Proposed { below: PeakPriors<T>, above: PeakPriors<T> },
}

/// Complete prior specification for one regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PriorSet<T> {
    pub step: StepPriors<T>,
    pub peaks: PeakPriorSet<T>,
}

/// Energy window the peak positions are confined to.
pub const DEFAULT_WINDOW: (f64, f64) = (530.0, 590.0);

fn default_step<T: Real>() -> StepPriors<T> {
    StepPriors {
        height: DistributionSpec::uniform(0.8, 0.9),
        edge: DistributionSpec::normal(543.1, 2.0),
        edge_width: DistributionSpec::uniform(0.5, 1.4),
        white_height: DistributionSpec::gamma(2.6, 0.6),
        white_offset: DistributionSpec::normal(0.0, 2.0),
        white_width: DistributionSpec::uniform(2.0, 4.0),
    }
}

/// Compiled-in hyperparameters for the 530–590 eV O-K edge setting.
pub fn default_hyperparams<T: Real>(regime: Regime) -> PriorSet<T> {
    let peaks = match regime {
        Regime::Conventional => PeakPriorSet::Conventional {
            peaks: PeakPriors {
                height: DistributionSpec::uniform(0.0, 1.4),
                position: DistributionSpec::uniform(530.0, 590.0),
                width: DistributionSpec::uniform(0.5, 15.0),
            },
        },
        Regime::Proposed => PeakPriorSet::Proposed {
            below: PeakPriors {
                height: DistributionSpec::gamma(2.6, 0.6),
                position: DistributionSpec::uniform(-15.1, 0.0),
                width: DistributionSpec::gamma(3.0, 1.0),
            },
            above: PeakPriors {
                height: DistributionSpec::gamma(4.0, 0.1),
                position: DistributionSpec::uniform(0.0, 48.9),
                width: DistributionSpec::gamma(11.0, 0.8),
            },
        },
    };
    PriorSet {
        step: default_step(),
        peaks,
    }
}

/// Offset supports for the two proposed populations given the peak window and
/// the edge prior `N(μ, σ²)`: `[E_min − μ − σ, 0]` and `[0, E_max − μ + σ]`.
pub fn offset_bounds<T: Real>(window: (T, T), edge_mean: T, edge_sd: T) -> ((T, T), (T, T)) {
    (
        (window.0 - edge_mean - edge_sd, T::zero()),
        (T::zero(), window.1 - edge_mean + edge_sd),
    )
}

impl<T: Real> PriorSet<T> {
    pub fn regime(&self) -> Regime {
        match self.peaks {
            PeakPriorSet::Conventional { .. } => Regime::Conventional,
            PeakPriorSet::Proposed { .. } => Regime::Proposed,
        }
    }

    /// Priors for the below-edge population (the only one in the conventional regime).
    pub fn below(&self) -> &PeakPriors<T> {
        match &self.peaks {
            PeakPriorSet::Conventional { peaks } => peaks,
            PeakPriorSet::Proposed { below, .. } => below,
        }
    }

    pub fn above(&self) -> &PeakPriors<T> {
        match &self.peaks {
            PeakPriorSet::Conventional { peaks } => peaks,
            PeakPriorSet::Proposed { above, .. } => above,
        }
    }

    /// Rejects hyperparameters that could produce states violating the
    /// spectral-parameter invariants.
    pub fn validate(&self) -> Result<()> {
        let s = &self.step;
        for (name, d) in [
            ("H", s.height),
            ("E0", s.edge),
            ("Gamma", s.edge_width),
            ("A", s.white_height),
            ("DeltaE", s.white_offset),
            ("omega", s.white_width),
        ] {
            d.validate().map_err(|e| Error::config(format!("prior {name}: {e}")))?;
        }
        non_negative("H", &s.height, false)?;
        non_negative("A", &s.white_height, false)?;
        non_negative("Gamma", &s.edge_width, true)?;
        non_negative("omega", &s.white_width, true)?;

        let check_pop = |label: &str, p: &PeakPriors<T>| -> Result<()> {
            for (name, d) in [("F", p.height), ("E", p.position), ("W", p.width)] {
                d.validate()
                    .map_err(|e| Error::config(format!("prior {label}.{name}: {e}")))?;
            }
            non_negative(&format!("{label}.F"), &p.height, false)?;
            non_negative(&format!("{label}.W"), &p.width, true)
        };
        match &self.peaks {
            PeakPriorSet::Conventional { peaks } => check_pop("peak", peaks)?,
            PeakPriorSet::Proposed { below, above } => {
                check_pop("below", below)?;
                check_pop("above", above)?;
                let (_, hi) = below.position.support();
                if hi > T::zero() {
                    return Err(Error::config(
                        "below-edge offset prior must be supported on non-positive values",
                    ));
                }
                let (lo, _) = above.position.support();
                if lo < T::zero() {
                    return Err(Error::config(
                        "above-edge offset prior must be supported on non-negative values",
                    ));
                }
            }
        }
        Ok(())
    }
}

fn non_negative<T: Real>(name: &str, d: &DistributionSpec<T>, strict: bool) -> Result<()> {
    let (lo, _) = d.support();
    let ok = match d {
        DistributionSpec::Gamma { .. } => true,
        _ if strict => lo > T::zero(),
        _ => lo >= T::zero(),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::config(format!(
            "prior {name} must be supported on {} values",
            if strict { "positive" } else { "non-negative" }
        )))
    }
}

/// Regime, peak counts, priors and peak window for one candidate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec<T> {
    pub priors: PriorSet<T>,
    pub peaks: PeakConfig,
    pub window: (T, T),
}

impl<T: Real> ModelSpec<T> {
    /// Validates the priors. Conventional configs are folded to `(K, 0)`.
    pub fn new(priors: PriorSet<T>, peaks: PeakConfig, window: (T, T)) -> Result<Self> {
        priors.validate()?;
        if !(window.0 < window.1) || !window.0.is_finite() || !window.1.is_finite() {
            return Err(Error::config("energy window must satisfy E_min < E_max"));
        }
        let peaks = match priors.regime() {
            Regime::Conventional => PeakConfig::single(peaks.total()),
            Regime::Proposed => peaks,
        };
        Ok(Self {
            priors,
            peaks,
            window,
        })
    }

    pub fn proposed(k1: usize, k2: usize) -> Self {
        Self::new(
            default_hyperparams(Regime::Proposed),
            PeakConfig::new(k1, k2),
            (T::lit(DEFAULT_WINDOW.0), T::lit(DEFAULT_WINDOW.1)),
        )
        .expect("default hyperparameters are valid")
    }

    pub fn conventional(k: usize) -> Self {
        Self::new(
            default_hyperparams(Regime::Conventional),
            PeakConfig::single(k),
            (T::lit(DEFAULT_WINDOW.0), T::lit(DEFAULT_WINDOW.1)),
        )
        .expect("default hyperparameters are valid")
    }

    pub fn regime(&self) -> Regime {
        self.priors.regime()
    }

    /// Same priors and window, different peak counts.
    pub fn with_peaks(&self, peaks: PeakConfig) -> Self {
        let peaks = match self.regime() {
            Regime::Conventional => PeakConfig::single(peaks.total()),
            Regime::Proposed => peaks,
        };
        Self {
            priors: self.priors,
            peaks,
            window: self.window,
        }
    }

    /// Value the position prior of a peak is evaluated at.
    #[inline]
    pub(crate) fn position_coordinate(&self, edge: T, offset: T) -> T {
        match self.regime() {
            Regime::Conventional => edge + offset,
            Regime::Proposed => offset,
        }
    }

    #[inline]
    pub(crate) fn peak_log_density(&self, population: &PeakPriors<T>, edge: T, p: &Peak<T>) -> T {
        if !(p.width > T::zero()) || p.height < T::zero() {
            return T::neg_infinity();
        }
        population.height.log_density_unchecked(p.height)
            + population
                .position
                .log_density_unchecked(self.position_coordinate(edge, p.offset))
            + population.width.log_density_unchecked(p.width)
    }

    #[inline]
    pub(crate) fn step_log_density(&self, s: &StepParams<T>) -> T {
        let p = &self.priors.step;
        p.height.log_density_unchecked(s.height)
            + p.edge.log_density_unchecked(s.edge)
            + p.edge_width.log_density_unchecked(s.edge_width)
            + p.white_height.log_density_unchecked(s.white_height)
            + p.white_offset.log_density_unchecked(s.white_offset)
            + p.white_width.log_density_unchecked(s.white_width)
    }

    pub(crate) fn check_shape(&self, params: &SpectralParams<T>) -> Result<()> {
        if params.config() != self.peaks {
            return Err(Error::invalid(format!(
                "parameter vector has {:?} peaks but the model expects {:?}",
                params.config(),
                self.peaks
            )));
        }
        Ok(())
    }
}

/// Sum of all component log-densities; `-inf` if any component leaves its support.
pub fn log_prior<T: Real>(model: &ModelSpec<T>, params: &SpectralParams<T>) -> Result<T> {
    model.check_shape(params)?;
    let values = [
        params.step.height,
        params.step.edge,
        params.step.edge_width,
        params.step.white_height,
        params.step.white_offset,
        params.step.white_width,
    ];
    if values.iter().any(|v| v.is_nan()) || params.peaks().any(|p| p.height.is_nan() || p.offset.is_nan() || p.width.is_nan()) {
        return Err(Error::invalid("log prior evaluated at NaN"));
    }
    let edge = params.step.edge;
    let mut total = model.step_log_density(&params.step);
    for p in &params.below {
        total = total + model.peak_log_density(model.priors.below(), edge, p);
    }
    for p in &params.above {
        total = total + model.peak_log_density(model.priors.above(), edge, p);
    }
    Ok(total)
}

/// Independent draw of every component from its prior.
pub fn sample_prior<T: Real, R: Rng + ?Sized>(model: &ModelSpec<T>, rng: &mut R) -> SpectralParams<T> {
    let p = &model.priors.step;
    let step = StepParams {
        height: p.height.sample(rng),
        edge: p.edge.sample(rng),
        edge_width: p.edge_width.sample(rng),
        white_height: p.white_height.sample(rng),
        white_offset: p.white_offset.sample(rng),
        white_width: p.white_width.sample(rng),
    };
    let regime = model.regime();
    let draw = |pop: &PeakPriors<T>, rng: &mut R| {
        let height = pop.height.sample(rng);
        let pos = pop.position.sample(rng);
        let width = pop.width.sample(rng);
        let offset = match regime {
            Regime::Conventional => pos - step.edge,
            Regime::Proposed => pos,
        };
        Peak {
            height,
            offset,
            width,
        }
    };
    let below = (0..model.peaks.k1)
        .map(|_| draw(model.priors.below(), rng))
        .collect();
    let above = (0..model.peaks.k2)
        .map(|_| draw(model.priors.above(), rng))
        .collect();
    SpectralParams { step, below, above }
}
