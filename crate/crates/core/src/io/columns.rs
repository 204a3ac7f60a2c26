//! Flat column layout of spectral parameters in sample and report files.
//!
//! Step parameters come first as `step.H`, `step.E0`, `step.Gamma`,
//! `step.A`, `step.DeltaE`, `step.omega`. Proposed-regime peaks follow as
//! `below.j.F`, `below.j.dE`, `below.j.W` then `above.j.…`; conventional
//! peaks as `peak.j.F`, `peak.j.E`, `peak.j.W` with the absolute centre `E`.
//! Peak indices are 1-based.

use crate::error::{Error, Result};
use crate::model::{Peak, PeakConfig, SpectralParams, StepParams};
use crate::prior::Regime;

const STEP_NAMES: [&str; 6] = ["H", "E0", "Gamma", "A", "DeltaE", "omega"];

pub fn param_columns(regime: Regime, peaks: PeakConfig) -> Vec<String> {
    let mut cols: Vec<String> = STEP_NAMES.iter().map(|n| format!("step.{n}")).collect();
    let mut group = |prefix: &str, n: usize, pos: &str| {
        for j in 1..=n {
            for field in ["F", pos, "W"] {
                cols.push(format!("{prefix}.{j}.{field}"));
            }
        }
    };
    match regime {
        Regime::Conventional => group("peak", peaks.total(), "E"),
        Regime::Proposed => {
            group("below", peaks.k1, "dE");
            group("above", peaks.k2, "dE");
        }
    }
    cols
}

/// Appends the values in [`param_columns`] order.
pub fn flatten_params(regime: Regime, p: &SpectralParams<f64>, out: &mut Vec<f64>) {
    let s = &p.step;
    out.extend([s.height, s.edge, s.edge_width, s.white_height, s.white_offset, s.white_width]);
    for pk in p.peaks() {
        let pos = match regime {
            Regime::Conventional => p.step.edge + pk.offset,
            Regime::Proposed => pk.offset,
        };
        out.extend([pk.height, pos, pk.width]);
    }
}

/// Inverse of [`flatten_params`].
pub fn unflatten_params(regime: Regime, peaks: PeakConfig, values: &[f64]) -> Result<SpectralParams<f64>> {
    let expected = 6 + 3 * peaks.total();
    if values.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} parameter values, found {}",
            values.len()
        )));
    }
    let step = StepParams {
        height: values[0],
        edge: values[1],
        edge_width: values[2],
        white_height: values[3],
        white_offset: values[4],
        white_width: values[5],
    };
    let mut all = values[6..].chunks_exact(3).map(|c| Peak {
        height: c[0],
        offset: match regime {
            Regime::Conventional => c[1] - step.edge,
            Regime::Proposed => c[1],
        },
        width: c[2],
    });
    let (k1, k2) = match regime {
        Regime::Conventional => (peaks.total(), 0),
        Regime::Proposed => (peaks.k1, peaks.k2),
    };
    let below = all.by_ref().take(k1).collect();
    let above = all.take(k2).collect();
    Ok(SpectralParams { step, below, above })
}

/// Peak counts implied by a column header written by [`param_columns`].
pub fn peaks_from_columns(columns: &[String]) -> Result<(Regime, PeakConfig)> {
    let count = |prefix: &str| columns.iter().filter(|c| c.starts_with(prefix) && c.ends_with(".F")).count();
    let (conv, below, above) = (count("peak."), count("below."), count("above."));
    let (regime, peaks) = if conv > 0 && below + above == 0 {
        (Regime::Conventional, PeakConfig::single(conv))
    } else if conv == 0 {
        (Regime::Proposed, PeakConfig::new(below, above))
    } else {
        return Err(Error::invalid("columns mix conventional and proposed peaks"));
    };
    if param_columns(regime, peaks) != columns {
        return Err(Error::invalid("unrecognised parameter columns"));
    }
    Ok((regime, peaks))
}
