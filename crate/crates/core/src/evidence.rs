//! Free energies from exchange Monte Carlo samples, empirical-Bayes selection
//! of peak counts and noise level, MAP estimates, and hierarchical peak-count
//! posteriors.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::emc::record::{csv_err, fmt_f64, SampleRecord};
use crate::error::{Error, Result};
use crate::model::{PeakConfig, SpectralParams};
use crate::prior::Regime;

/// `log Z̃(b_l)` for every rung by the telescoping product
/// `Π_{l'<l} ⟨exp[−N (b_{l'+1} − b_{l'}) E_N]⟩_{b_{l'}}`.
///
/// `energies[l]` are the `E_N` samples of replica `l`. The top replica's
/// samples are not needed.
pub fn log_ztilde_from_energies(energies: &[Vec<f64>], betas: &[f64], n: usize) -> Result<Vec<f64>> {
    if energies.len() != betas.len() {
        return Err(Error::invalid(format!(
            "{} energy series for {} rungs",
            energies.len(),
            betas.len()
        )));
    }
    if betas.is_empty() {
        return Err(Error::invalid("no rungs"));
    }
    let n = n as f64;
    let mut out = Vec::with_capacity(betas.len());
    let mut acc = 0.0;
    out.push(acc);
    for l in 0..betas.len() - 1 {
        let samples = &energies[l];
        if samples.is_empty() {
            return Err(Error::InsufficientSamples(format!("replica {} has no samples", l + 1)));
        }
        let db = betas[l + 1] - betas[l];
        acc += log_mean_exp(samples.iter().map(|&e| -n * db * e));
        out.push(acc);
    }
    Ok(out)
}

/// `log Z̃` per replica from a sample record.
pub fn estimate_log_ztilde<P>(record: &SampleRecord<P>) -> Result<Vec<f64>> {
    log_ztilde_from_energies(&record.energy, &record.betas, record.n_data)
}

/// `log((1/M) Σ exp(x_m))` with max-shift stabilisation.
fn log_mean_exp(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let (sum, count) = xs.fold((0.0, 0usize), |(s, c), x| (s + (x - max).exp(), c + 1));
    max + (sum / count as f64).ln()
}

/// `F_N(b) = −(N/2) log(b/2π) − log Z̃(b)`.
pub fn free_energy(log_ztilde: f64, beta: f64, n: usize) -> Result<f64> {
    if !(beta > 0.0) {
        return Err(Error::Domain(format!(
            "free energy is undefined at b = {beta}; it needs b > 0"
        )));
    }
    Ok(-(n as f64) / 2.0 * (beta / (2.0 * std::f64::consts::PI)).ln() - log_ztilde)
}

/// Free-energy profile of one candidate model over the ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEvidence {
    pub peaks: PeakConfig,
    pub betas: Vec<f64>,
    pub log_ztilde: Vec<f64>,
    /// `NaN` on the `b = 0` rung.
    pub free_energy: Vec<f64>,
    /// Retained samples per replica the estimate is based on.
    pub samples: usize,
}

impl ModelEvidence {
    pub fn from_log_ztilde(peaks: PeakConfig, betas: Vec<f64>, log_ztilde: Vec<f64>, n: usize, samples: usize) -> Result<Self> {
        if betas.len() != log_ztilde.len() {
            return Err(Error::invalid("rung count mismatch"));
        }
        let free_energy = betas
            .iter()
            .zip(&log_ztilde)
            .map(|(&b, &z)| if b > 0.0 { free_energy(z, b, n) } else { Ok(f64::NAN) })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            peaks,
            betas,
            log_ztilde,
            free_energy,
            samples,
        })
    }

    pub fn from_record<P>(peaks: PeakConfig, record: &SampleRecord<P>) -> Result<Self> {
        let lz = estimate_log_ztilde(record)?;
        Self::from_log_ztilde(peaks, record.betas.clone(), lz, record.n_data, record.len())
    }

    /// 0-based rung minimising `F` (ties to the lower rung).
    pub fn best_rung(&self) -> Option<usize> {
        (1..self.betas.len())
            .filter(|&l| self.free_energy[l].is_finite())
            .min_by(|&a, &b| self.free_energy[a].total_cmp(&self.free_energy[b]).then(a.cmp(&b)))
    }
}

/// Evidence over a grid of candidate peak counts sharing one ladder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceTable {
    pub regime: Regime,
    pub n_data: usize,
    pub models: Vec<ModelEvidence>,
}

/// Empirical-Bayes choice `(K′, l′) = argmin F_N(K, b_l)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Choice {
    /// Index into [`EvidenceTable::models`].
    pub model: usize,
    pub peaks: PeakConfig,
    /// 0-based rung.
    pub rung: usize,
    pub beta: f64,
    pub free_energy: f64,
}

/// Argmin of `F` over every model and every rung with `b > 0`. Ties go to
/// fewer peaks, then to the lower rung.
pub fn select_model(table: &EvidenceTable) -> Result<Choice> {
    let mut best: Option<Choice> = None;
    for (m, ev) in table.models.iter().enumerate() {
        for l in 1..ev.betas.len() {
            let f = ev.free_energy[l];
            if !f.is_finite() {
                continue;
            }
            let cand = Choice {
                model: m,
                peaks: ev.peaks,
                rung: l,
                beta: ev.betas[l],
                free_energy: f,
            };
            let better = match &best {
                None => true,
                Some(b) => {
                    let key = |c: &Choice| (c.peaks.total(), c.rung, c.peaks);
                    f.total_cmp(&b.free_energy).then(key(&cand).cmp(&key(b))).is_lt()
                }
            };
            if better {
                best = Some(cand);
            }
        }
    }
    best.ok_or_else(|| Error::config("model grid has no finite free energy at any rung with b > 0"))
}

/// Recorded sample of replica `rung` maximising `−N·b·E_N + log p(θ)`.
pub fn map_estimate<P: Clone>(record: &SampleRecord<P>, rung: usize) -> Result<(P, f64)> {
    if rung >= record.replicas() {
        return Err(Error::invalid(format!("rung {rung} is outside the ladder")));
    }
    let n = record.n_data as f64;
    let b = record.betas[rung];
    let best = record.energy[rung]
        .iter()
        .zip(&record.log_prior[rung])
        .enumerate()
        .map(|(i, (&e, &lp))| (i, -n * b * e + lp))
        .filter(|(_, s)| s.is_finite())
        .fold(None::<(usize, f64)>, |acc, (i, s)| match acc {
            Some((_, bs)) if bs >= s => acc,
            _ => Some((i, s)),
        });
    let (i, score) = best.ok_or_else(|| {
        Error::InsufficientSamples(format!("replica {} has no in-support samples", rung + 1))
    })?;
    let p = record.params[rung].get(i).ok_or_else(|| {
        Error::InsufficientSamples("run did not keep parameter snapshots".into())
    })?;
    Ok((p.clone(), score))
}

/// Hierarchical posterior over peak counts and rungs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeakPosterior {
    pub peaks: Vec<PeakConfig>,
    /// Rungs (0-based) the `b`-integral runs over.
    pub rungs: Vec<usize>,
    /// Quadrature weight of each rung.
    pub weights: Vec<f64>,
    /// Density `p(K, b_l | D)` per model and rung, proportional to `exp(−F)`.
    pub density: Vec<Vec<f64>>,
    /// `p(K | D)` per model.
    pub probability: Vec<f64>,
}

/// Trapezoid weights in `b` over the rungs; a single rung gets weight 1.
pub fn trapezoid_weights(betas: &[f64]) -> Vec<f64> {
    let m = betas.len();
    if m == 1 {
        return vec![1.0];
    }
    (0..m)
        .map(|i| {
            let lo = if i == 0 { betas[0] } else { betas[i - 1] };
            let hi = if i + 1 == m { betas[m - 1] } else { betas[i + 1] };
            0.5 * (hi - lo)
        })
        .collect()
}

/// `p(K, b_l | D) ∝ exp(−F_N(K, b_l))` with uniform `p(K)` and `p(b)`, and
/// `p(K | D)` from the trapezoid rule over rungs with `b > 0`.
pub fn peak_count_posterior(table: &EvidenceTable) -> Result<PeakPosterior> {
    peak_count_posterior_with(table, None, None)
}

/// As [`peak_count_posterior`] with optional non-uniform priors over the
/// models and over the rungs (one weight per ladder rung, `b = 0` included).
pub fn peak_count_posterior_with(
    table: &EvidenceTable,
    model_prior: Option<&[f64]>,
    rung_prior: Option<&[f64]>,
) -> Result<PeakPosterior> {
    let first = table
        .models
        .first()
        .ok_or_else(|| Error::config("empty model grid"))?;
    if table.models.iter().any(|m| m.betas != first.betas) {
        return Err(Error::invalid("all models must share one ladder"));
    }
    if let Some(p) = model_prior {
        if p.len() != table.models.len() || p.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("model prior needs one non-negative weight per model"));
        }
    }
    if let Some(p) = rung_prior {
        if p.len() != first.betas.len() || p.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::config("rung prior needs one non-negative weight per rung"));
        }
    }
    let rungs: Vec<usize> = (0..first.betas.len()).filter(|&l| first.betas[l] > 0.0).collect();
    if rungs.is_empty() {
        return Err(Error::config("no rung with b > 0"));
    }
    let rung_betas: Vec<f64> = rungs.iter().map(|&l| first.betas[l]).collect();
    let weights = trapezoid_weights(&rung_betas);

    let log_terms: Vec<Vec<f64>> = table
        .models
        .iter()
        .enumerate()
        .map(|(m, ev)| {
            let lm = model_prior.map_or(0.0, |p| p[m].ln());
            rungs
                .iter()
                .map(|&l| {
                    let lr = rung_prior.map_or(0.0, |p| p[l].ln());
                    let f = ev.free_energy[l];
                    if f.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        -f + lm + lr
                    }
                })
                .collect()
        })
        .collect();
    let shift = log_terms
        .iter()
        .flatten()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::Degenerate("every free energy is infinite".into()));
    }
    let unnorm: Vec<Vec<f64>> = log_terms
        .iter()
        .map(|row| row.iter().map(|&x| (x - shift).exp()).collect())
        .collect();
    let z: f64 = unnorm
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(u, w)| u * w).sum::<f64>())
        .sum();
    if !(z > 0.0) {
        return Err(Error::Degenerate("posterior normaliser vanished".into()));
    }
    let density: Vec<Vec<f64>> = unnorm
        .iter()
        .map(|row| row.iter().map(|u| u / z).collect())
        .collect();
    let probability = density
        .iter()
        .map(|row| row.iter().zip(&weights).map(|(d, w)| d * w).sum())
        .collect();
    Ok(PeakPosterior {
        peaks: table.models.iter().map(|m| m.peaks).collect(),
        rungs,
        weights,
        density,
        probability,
    })
}

/// Marginal distributions of a joint `p(K1, K2 | D)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    /// `(K1, p)` sorted by `K1`.
    pub k1: Vec<(usize, f64)>,
    pub k2: Vec<(usize, f64)>,
    /// `(K, p)` with `K = K1 + K2`.
    pub k: Vec<(usize, f64)>,
}

impl Marginals {
    pub fn argmax_k1(&self) -> Option<usize> {
        argmax(&self.k1)
    }

    pub fn argmax_k2(&self) -> Option<usize> {
        argmax(&self.k2)
    }

    pub fn argmax_k(&self) -> Option<usize> {
        argmax(&self.k)
    }
}

fn argmax(v: &[(usize, f64)]) -> Option<usize> {
    v.iter()
        .fold(None::<(usize, f64)>, |acc, &(k, p)| match acc {
            Some((_, bp)) if bp >= p => acc,
            _ => Some((k, p)),
        })
        .map(|(k, _)| k)
}

/// Row, column and anti-diagonal sums of a joint table.
pub fn marginals(peaks: &[PeakConfig], probability: &[f64]) -> Marginals {
    let mut k1 = BTreeMap::new();
    let mut k2 = BTreeMap::new();
    let mut k = BTreeMap::new();
    for (c, &p) in peaks.iter().zip(probability) {
        *k1.entry(c.k1).or_insert(0.0) += p;
        *k2.entry(c.k2).or_insert(0.0) += p;
        *k.entry(c.total()).or_insert(0.0) += p;
    }
    Marginals {
        k1: k1.into_iter().collect(),
        k2: k2.into_iter().collect(),
        k: k.into_iter().collect(),
    }
}

/// MAP estimate as reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapReport {
    pub params: SpectralParams<f64>,
    /// `−N·b·E_N + log p(θ)` at the chosen rung.
    pub score: f64,
    pub error: f64,
}

/// Outcome of a model-selection run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub regime: Regime,
    pub chosen: PeakConfig,
    /// 1-based rung index `l′`.
    pub rung: usize,
    pub beta: f64,
    pub free_energy: f64,
    pub map: MapReport,
    /// Rung used for cross-model comparison (1-based) and `F` of every model there.
    pub anchor_rung: Option<usize>,
    pub anchor_free_energy: Vec<(PeakConfig, f64)>,
    pub posterior: Vec<(PeakConfig, f64)>,
    pub marginals: Marginals,
}

/// Long-form table `K1,K2,l,b,logZtilde,F` (or `K,l,…` for the conventional
/// regime) with 1-based rung index `l`.
pub fn write_evidence_csv<W: Write>(writer: W, table: &EvidenceTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let conventional = table.regime == Regime::Conventional;
    if conventional {
        w.write_record(["K", "l", "b", "logZtilde", "F"]).map_err(csv_err)?;
    } else {
        w.write_record(["K1", "K2", "l", "b", "logZtilde", "F"]).map_err(csv_err)?;
    }
    for m in &table.models {
        for l in 0..m.betas.len() {
            let mut row = if conventional {
                vec![m.peaks.total().to_string()]
            } else {
                vec![m.peaks.k1.to_string(), m.peaks.k2.to_string()]
            };
            row.push((l + 1).to_string());
            row.push(fmt_f64(m.betas[l]));
            row.push(fmt_f64(m.log_ztilde[l]));
            row.push(fmt_f64(m.free_energy[l]));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a table written by [`write_evidence_csv`].
pub fn read_evidence_csv<R: Read>(reader: R, n_data: usize) -> Result<EvidenceTable> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let regime = match header.first().map(String::as_str) {
        Some("K") => Regime::Conventional,
        Some("K1") => Regime::Proposed,
        _ => {
            return Err(Error::Parse {
                line: 1,
                message: "expected header K,… or K1,K2,…".into(),
            })
        }
    };
    let offset = if regime == Regime::Conventional { 1 } else { 2 };
    let mut models: Vec<ModelEvidence> = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = || Error::Parse {
            line,
            message: "malformed evidence row".into(),
        };
        if rec.len() != offset + 4 {
            return Err(bad());
        }
        let int = |i: usize| rec[i].trim().parse::<usize>().map_err(|_| bad());
        let float = |i: usize| rec[i].trim().parse::<f64>().map_err(|_| bad());
        let peaks = if regime == Regime::Conventional {
            PeakConfig::single(int(0)?)
        } else {
            PeakConfig::new(int(0)?, int(1)?)
        };
        let l = int(offset)?;
        let (b, lz, f) = (float(offset + 1)?, float(offset + 2)?, float(offset + 3)?);
        if models.last().map(|m| m.peaks) != Some(peaks) {
            models.push(ModelEvidence {
                peaks,
                betas: vec![],
                log_ztilde: vec![],
                free_energy: vec![],
                samples: 0,
            });
        }
        let m = models.last_mut().expect("pushed above");
        if l != m.betas.len() + 1 {
            return Err(bad());
        }
        m.betas.push(b);
        m.log_ztilde.push(lz);
        m.free_energy.push(f);
    }
    Ok(EvidenceTable {
        regime,
        n_data,
        models,
    })
}
