//! Spectral regression function: arctangent absorption edge, Gaussian white
//! line, and two populations of Gaussian peaks positioned relative to the edge.
//!
//! Every width in this module (`edge_width` aside) is a full width at half
//! maximum, so a Gaussian with width `W` takes half its height at `±W/2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::{four_ln2, Real};

/// Absorption edge and white line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams<T> {
    /// Step height `H`.
    #[serde(rename = "H")]
    pub height: T,
    /// Edge position `E0`.
    #[serde(rename = "E0")]
    pub edge: T,
    /// Edge width `Γ`.
    #[serde(rename = "Gamma")]
    pub edge_width: T,
    /// White-line height `A`.
    #[serde(rename = "A")]
    pub white_height: T,
    /// White-line offset `ΔE` from the edge.
    #[serde(rename = "DeltaE")]
    pub white_offset: T,
    /// White-line FWHM `ω`.
    #[serde(rename = "omega")]
    pub white_width: T,
}

/// One Gaussian peak. `offset` is measured from the edge position `E0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak<T> {
    #[serde(rename = "F")]
    pub height: T,
    #[serde(rename = "dE")]
    pub offset: T,
    #[serde(rename = "W")]
    pub width: T,
}

/// Number of peaks below (`k1`) and above (`k2`) the edge.
///
/// The conventional regime only looks at the total; by convention it keeps
/// all of its peaks in the first population, so its configs are `(K, 0)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PeakConfig {
    pub k1: usize,
    pub k2: usize,
}

impl PeakConfig {
    pub fn new(k1: usize, k2: usize) -> Self {
        Self { k1, k2 }
    }

    /// Single-population config holding `k` peaks.
    pub fn single(k: usize) -> Self {
        Self { k1: k, k2: 0 }
    }

    pub fn total(&self) -> usize {
        self.k1 + self.k2
    }
}

/// Full parameter vector: step block plus the two peak populations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams<T> {
    pub step: StepParams<T>,
    pub below: Vec<Peak<T>>,
    pub above: Vec<Peak<T>>,
}

impl<T: Real> SpectralParams<T> {
    pub fn config(&self) -> PeakConfig {
        PeakConfig::new(self.below.len(), self.above.len())
    }

    /// All peaks, below-edge population first.
    pub fn peaks(&self) -> impl Iterator<Item = &Peak<T>> {
        self.below.iter().chain(self.above.iter())
    }

    /// Absolute centre of a peak, `E0 + dE`.
    #[inline]
    pub fn center(&self, peak: &Peak<T>) -> T {
        self.step.edge + peak.offset
    }

    /// Checks finiteness and the positivity constraints on heights and widths.
    pub fn validate(&self) -> Result<()> {
        self.step.validate()?;
        for (i, p) in self.peaks().enumerate() {
            p.validate().map_err(|e| Error::invalid(format!("peak {i}: {e}")))?;
            if !self.center(p).is_finite() {
                return Err(Error::invalid(format!("peak {i}: position is not finite")));
            }
        }
        Ok(())
    }

    /// Sorts each population by offset. The model value is unchanged.
    pub fn sort_peaks(&mut self) {
        let by_offset = |a: &Peak<T>, b: &Peak<T>| {
            a.offset
                .partial_cmp(&b.offset)
                .unwrap_or(std::cmp::Ordering::Equal)
        };
        self.below.sort_by(by_offset);
        self.above.sort_by(by_offset);
    }

    /// Model value at `e` without validation.
    #[inline]
    pub fn value_at(&self, e: T) -> T {
        self.step.value_at(e) + self.peaks_at(e)
    }

    /// Sum of all peak contributions at `e` without validation.
    #[inline]
    pub fn peaks_at(&self, e: T) -> T {
        let e0 = self.step.edge;
        self.peaks()
            .fold(T::zero(), |acc, p| acc + gaussian(e, e0 + p.offset, p.height, p.width))
    }
}

impl<T: Real> StepParams<T> {
    fn validate(&self) -> Result<()> {
        let fields = [
            ("H", self.height),
            ("E0", self.edge),
            ("Gamma", self.edge_width),
            ("A", self.white_height),
            ("DeltaE", self.white_offset),
            ("omega", self.white_width),
        ];
        if let Some((name, _)) = fields.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("step parameter {name} is not finite")));
        }
        if !(self.edge_width > T::zero()) || !(self.white_width > T::zero()) {
            return Err(Error::invalid("step widths Gamma and omega must be positive"));
        }
        if self.height < T::zero() || self.white_height < T::zero() {
            return Err(Error::invalid("step heights H and A must be non-negative"));
        }
        Ok(())
    }

    /// Arctangent edge term only.
    #[inline]
    pub fn edge_at(&self, e: T) -> T {
        let half = T::lit(0.5);
        self.height * (half + ((e - self.edge) / (self.edge_width * half)).atan() / T::PI())
    }

    /// White-line term only.
    #[inline]
    pub fn white_line_at(&self, e: T) -> T {
        gaussian(
            e,
            self.edge + self.white_offset,
            self.white_height,
            self.white_width,
        )
    }

    #[inline]
    pub fn value_at(&self, e: T) -> T {
        self.edge_at(e) + self.white_line_at(e)
    }
}

impl<T: Real> Peak<T> {
    /// Value at energy `e` when the edge sits at `edge`.
    #[inline]
    pub fn at(&self, edge: T, e: T) -> T {
        gaussian(e, edge + self.offset, self.height, self.width)
    }

    fn validate(&self) -> Result<()> {
        if !(self.height.is_finite() && self.offset.is_finite() && self.width.is_finite()) {
            return Err(Error::invalid("peak parameters must be finite"));
        }
        if !(self.height > T::zero()) || !(self.width > T::zero()) {
            return Err(Error::invalid("peak height and width must be positive"));
        }
        Ok(())
    }
}

/// `height * exp(-4 ln2 ((e - center) / fwhm)^2)`.
#[inline]
pub fn gaussian<T: Real>(e: T, center: T, height: T, fwhm: T) -> T {
    let z = (e - center) / fwhm;
    height * (-four_ln2::<T>() * z * z).exp()
}

/// Observed spectrum: `N` energy/intensity pairs in input order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    energy: Vec<T>,
    intensity: Vec<T>,
}

impl<T: Real> Dataset<T> {
    pub fn new(energy: Vec<T>, intensity: Vec<T>) -> Result<Self> {
        if energy.len() != intensity.len() {
            return Err(Error::invalid(format!(
                "energy and intensity lengths differ ({} vs {})",
                energy.len(),
                intensity.len()
            )));
        }
        if energy.is_empty() {
            return Err(Error::invalid("dataset must contain at least one point"));
        }
        if let Some(i) = energy.iter().position(|e| !e.is_finite()) {
            return Err(Error::invalid(format!("energy at row {i} is not finite")));
        }
        if let Some(i) = intensity.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("intensity at row {i} is not finite")));
        }
        Ok(Self { energy, intensity })
    }

    pub fn from_points(points: &[(T, T)]) -> Result<Self> {
        let (e, i) = points.iter().copied().unzip();
        Self::new(e, i)
    }

    pub fn len(&self) -> usize {
        self.energy.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energy.is_empty()
    }

    pub fn energy(&self) -> &[T] {
        &self.energy
    }

    pub fn intensity(&self) -> &[T] {
        &self.intensity
    }

    pub fn points(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.energy.iter().copied().zip(self.intensity.iter().copied())
    }
}

fn check_energy<T: Real>(e: T) -> Result<()> {
    if e.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid("energy must be finite"))
    }
}

/// Edge plus white line at energy `e`.
pub fn evaluate_step<T: Real>(p: &StepParams<T>, e: T) -> Result<T> {
    p.validate()?;
    check_energy(e)?;
    Ok(p.value_at(e))
}

/// Sum over both peak populations at energy `e`.
pub fn evaluate_peaks<T: Real>(params: &SpectralParams<T>, e: T) -> Result<T> {
    params.validate()?;
    check_energy(e)?;
    Ok(params.peaks_at(e))
}

/// Full model `f(E; θ, K)`.
pub fn evaluate_model<T: Real>(params: &SpectralParams<T>, e: T) -> Result<T> {
    params.validate()?;
    check_energy(e)?;
    Ok(params.value_at(e))
}

/// Mean squared misfit halved: `(1/2N) Σ (I_i - f(E_i))²`.
pub fn error_function<T: Real>(params: &SpectralParams<T>, data: &Dataset<T>) -> Result<T> {
    if data.is_empty() {
        return Err(Error::invalid("error function needs at least one data point"));
    }
    params.validate()?;
    let sse = data.points().fold(T::zero(), |acc, (e, i)| {
        let r = i - params.value_at(e);
        acc + r * r
    });
    Ok(sse / (T::lit(2.0) * T::lit(data.len() as f64)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn step(h: f64, a: f64) -> StepParams<f64> {
        StepParams {
            height: h,
            edge: 543.1,
            edge_width: 1.0,
            white_height: a,
            white_offset: 0.0,
            white_width: 2.0,
        }
    }

    fn zero_peaks(step: StepParams<f64>) -> SpectralParams<f64> {
        SpectralParams {
            step,
            below: vec![],
            above: vec![],
        }
    }

    #[test]
    fn edge_midpoint_is_half_height() {
        assert_eq!(evaluate_step(&step(1.0, 0.0), 543.1).unwrap(), 0.5);
    }

    #[test]
    fn white_line_peak_value() {
        assert_eq!(evaluate_step(&step(0.0, 1.0), 543.1).unwrap(), 1.0);
    }

    #[test]
    fn step_rejects_non_finite() {
        assert!(evaluate_step(&step(1.0, 0.0), f64::NAN).is_err());
        let mut s = step(1.0, 0.0);
        s.edge = f64::INFINITY;
        assert!(evaluate_step(&s, 540.0).is_err());
    }

    #[test]
    fn empty_peak_sum_is_zero() {
        let p = zero_peaks(step(0.85, 1.2));
        for e in [520.0, 543.1, 600.0] {
            assert_eq!(evaluate_peaks(&p, e).unwrap(), 0.0);
        }
    }

    #[test]
    fn fwhm_half_height() {
        let mut p = zero_peaks(step(0.0, 0.0));
        p.above.push(Peak {
            height: 2.0,
            offset: 4.0,
            width: 3.0,
        });
        let c = 543.1 + 4.0;
        assert!((evaluate_peaks(&p, c + 1.5).unwrap() - 1.0).abs() < 1e-12);
        assert!((evaluate_peaks(&p, c - 1.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn error_function_hand_case() {
        let p = zero_peaks(step(0.0, 0.0));
        let d = Dataset::from_points(&[(540.0, 1.0), (545.0, 2.0)]).unwrap();
        // H = A = 0 and no peaks: the model is identically zero
        assert!((error_function(&p, &d).unwrap() - 1.25).abs() < 1e-15);
    }

    #[test]
    fn dataset_rejects_empty_and_mismatch() {
        assert!(Dataset::<f64>::new(vec![], vec![]).is_err());
        assert!(Dataset::new(vec![1.0], vec![1.0, 2.0]).is_err());
        assert!(Dataset::new(vec![f64::NAN], vec![1.0]).is_err());
    }

    #[test]
    fn duplicate_energies_are_counted() {
        let p = zero_peaks(step(0.0, 0.0));
        let d = Dataset::from_points(&[(540.0, 1.0), (540.0, 1.0)]).unwrap();
        assert_eq!(d.len(), 2);
        assert!((error_function(&p, &d).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn works_in_single_precision() {
        let s = StepParams::<f32> {
            height: 1.0,
            edge: 543.1,
            edge_width: 1.0,
            white_height: 0.0,
            white_offset: 0.0,
            white_width: 2.0,
        };
        assert!((evaluate_step(&s, 543.1).unwrap() - 0.5).abs() < 1e-6);
    }

    #[test]
    fn sorting_keeps_model_value() {
        let mut p = zero_peaks(step(0.85, 1.2));
        p.below = vec![
            Peak { height: 1.0, offset: -1.0, width: 2.0 },
            Peak { height: 0.5, offset: -6.0, width: 1.0 },
        ];
        let before = p.value_at(541.0);
        p.sort_peaks();
        assert_eq!(p.below[0].offset, -6.0);
        assert!((p.value_at(541.0) - before).abs() < 1e-15);
    }
}
