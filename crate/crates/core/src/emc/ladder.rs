use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Inverse temperatures `0 = b_1 < b_2 < … < b_L`.
///
/// The geometric construction places `anchor` on rung `L − 2` (1-based) and
/// spaces every rung from 2 onwards by the ratio `ξ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaLadder {
    betas: Vec<f64>,
    ratio: Option<f64>,
    anchor: Option<f64>,
}

impl ReplicaLadder {
    /// `b_1 = 0`, `b_l = anchor · ξ^(l − L + 2)` for `2 ≤ l ≤ L`.
    pub fn geometric(replicas: usize, ratio: f64, anchor: f64) -> Result<Self> {
        if replicas < 4 {
            return Err(Error::config(format!(
                "ladder needs at least 4 replicas so that rung L-2 is not the b = 0 rung (got {replicas})"
            )));
        }
        if !(ratio > 1.0) || !ratio.is_finite() {
            return Err(Error::config(format!("ladder ratio must exceed 1 (got {ratio})")));
        }
        if !(anchor > 0.0) || !anchor.is_finite() {
            return Err(Error::config(format!("ladder anchor must be positive (got {anchor})")));
        }
        let l_max = replicas as i32;
        let betas = (1..=l_max)
            .map(|l| {
                if l == 1 {
                    0.0
                } else {
                    anchor * ratio.powi(l - l_max + 2)
                }
            })
            .collect::<Vec<_>>();
        let ladder = Self {
            betas,
            ratio: Some(ratio),
            anchor: Some(anchor),
        };
        ladder.check()?;
        Ok(ladder)
    }

    /// Arbitrary ladder; must start at 0 and increase strictly.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        let ladder = Self {
            betas,
            ratio: None,
            anchor: None,
        };
        ladder.check()?;
        Ok(ladder)
    }

    fn check(&self) -> Result<()> {
        if self.betas.len() < 2 {
            return Err(Error::config("ladder needs at least two rungs"));
        }
        if self.betas[0] != 0.0 {
            return Err(Error::config("first rung must have b = 0"));
        }
        if self.betas.iter().any(|b| !b.is_finite()) {
            return Err(Error::config("ladder rungs must be finite"));
        }
        if self.betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config(
                "ladder must be strictly increasing (ratio too close to 1 for this many replicas?)",
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.betas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.betas.is_empty()
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    /// 0-based index of the anchor rung, when the ladder was built geometrically.
    pub fn anchor_index(&self) -> Option<usize> {
        self.anchor.map(|_| self.betas.len() - 3)
    }

    pub fn anchor(&self) -> Option<f64> {
        self.anchor
    }

    pub fn ratio(&self) -> Option<f64> {
        self.ratio
    }

    /// 0-based index of the rung closest to `b` in log-space (ignores `b = 0`).
    pub fn nearest(&self, b: f64) -> usize {
        (1..self.betas.len())
            .min_by(|&i, &j| {
                let di = (self.betas[i].ln() - b.ln()).abs();
                let dj = (self.betas[j].ln() - b.ln()).abs();
                di.total_cmp(&dj)
            })
            .unwrap_or(0)
    }
}

/// Named ladder presets from the O-K edge experiments.
pub mod presets {
    /// `(L, ξ, anchor)` used for the proposed model.
    pub const PROPOSED: (usize, f64, f64) = (92, 1.18, 3000.0);
    /// `(L, ξ, anchor)` used for the conventional model.
    pub const CONVENTIONAL: (usize, f64, f64) = (120, 1.132, 3000.0);
}
