//! `generate`, `fit`, `select` and `diag`.
//!
//! Every command validates its configuration before computing and writes
//! its artifacts atomically into the output directory.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::emc::record::{csv_err, fmt_f64};
use crate::emc::{
    autocorrelation, integrated_time, read_samples_csv, run_emc_with_progress, write_samples_csv_subset,
    SampleRecord, SpectralTarget,
};
use crate::error::{Error, Result};
use crate::evidence::{
    map_estimate, marginals, peak_count_posterior_with, select_model, write_evidence_csv, EvidenceTable,
    MapReport, ModelEvidence, PeakPosterior, SelectionResult,
};
use crate::io::columns::{flatten_params, param_columns};
use crate::io::config::{Command, RunConfig};
use crate::io::dataset::{parse_dataset, write_dataset};
use crate::io::{write_atomic, write_json};
use crate::model::{error_function, Dataset, PeakConfig, SpectralParams};
use crate::prior::Regime;
use crate::synth::synthesize;

/// Progress callback: model label, MCS done, total MCS.
pub type Progress<'a> = &'a mut dyn FnMut(&str, usize, usize);

/// Paths written by `generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateOutput {
    pub dataset: PathBuf,
    pub truth: PathBuf,
}

/// Writes `dataset.csv` and the `truth.json` sidecar.
pub fn cmd_generate(cfg: &RunConfig) -> Result<GenerateOutput> {
    cfg.validate(Command::Generate)?;
    let spec = cfg.truth_spec()?;
    let data = synthesize(&spec);
    let out = &cfg.paths.out_dir;
    let dataset = out.join("dataset.csv");
    let truth = out.join("truth.json");
    write_atomic(&dataset, |w| write_dataset(w, &data))?;
    write_json(&truth, &spec)?;
    Ok(GenerateOutput { dataset, truth })
}

/// Run statistics and evidence of one fitted model (`fit.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub regime: Regime,
    pub peaks: PeakConfig,
    pub n_data: usize,
    pub seed: u64,
    pub total_mcs: usize,
    pub burn_in: usize,
    pub retained: usize,
    pub betas: Vec<f64>,
    pub log_ztilde: Vec<f64>,
    /// `null` on the `b = 0` rung.
    pub free_energy: Vec<Option<f64>>,
    /// 1-based rung minimising the free energy.
    pub best_rung: usize,
    /// Acceptance rate of swaps between rungs `l` and `l + 1`.
    pub exchange_rates: Vec<Option<f64>>,
    /// Mean post-burn-in Metropolis acceptance rate per rung.
    pub move_rates: Vec<Option<f64>>,
}

/// MAP estimate at a rung (`map.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapFile {
    pub regime: Regime,
    pub peaks: PeakConfig,
    /// 1-based rung.
    pub rung: usize,
    pub beta: f64,
    #[serde(flatten)]
    pub map: MapReport,
}

/// Result of `fit`.
#[derive(Debug, Clone, PartialEq)]
pub struct FitOutput {
    pub summary: FitSummary,
    pub map: MapFile,
}

fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn label(regime: Regime, peaks: PeakConfig) -> String {
    match regime {
        Regime::Conventional => format!("K={}", peaks.total()),
        Regime::Proposed => format!("K1={},K2={}", peaks.k1, peaks.k2),
    }
}

/// Runs the sampler for one model on `data`.
fn run_model(
    cfg: &RunConfig,
    data: &Dataset<f64>,
    peaks: PeakConfig,
    progress: Progress,
) -> Result<(SampleRecord<SpectralParams<f64>>, ModelEvidence)> {
    let model = cfg.model_spec(peaks)?;
    let peaks = model.peaks;
    let name = label(model.regime(), peaks);
    let target = SpectralTarget::new(model, data.clone());
    let ladder = cfg.ladder()?;
    let record = run_emc_with_progress(&target, &ladder, &cfg.sampler(), &mut |m, n| progress(&name, m, n))?;
    let evidence = ModelEvidence::from_record(peaks, &record)?;
    Ok((record, evidence))
}

fn map_file(
    regime: Regime,
    record: &SampleRecord<SpectralParams<f64>>,
    evidence: &ModelEvidence,
    data: &Dataset<f64>,
) -> Result<MapFile> {
    let rung = evidence
        .best_rung()
        .ok_or_else(|| Error::Degenerate("no finite free energy on any rung".into()))?;
    let (params, score) = map_estimate(record, rung)?;
    let error = error_function(&params, data)?;
    Ok(MapFile {
        regime,
        peaks: evidence.peaks,
        rung: rung + 1,
        beta: record.betas[rung],
        map: MapReport { params, score, error },
    })
}

/// Samples one model and writes `samples.csv`, `fit.json`, `map.json` and
/// `curve.csv`.
pub fn cmd_fit(cfg: &RunConfig, progress: Progress) -> Result<FitOutput> {
    cfg.validate(Command::Fit)?;
    let data = parse_dataset(cfg.data_path()?)?;
    let peaks = cfg.grid()[0];
    let regime = cfg.model.regime;
    let (record, evidence) = run_model(cfg, &data, peaks, progress)?;
    let peaks = evidence.peaks;
    let sampler = cfg.sampler();

    let out = &cfg.paths.out_dir;
    let columns = param_columns(regime, peaks);
    let replicas: Vec<usize> = match &cfg.output.replicas {
        Some(r) => r.iter().map(|l| l - 1).collect(),
        None => (0..record.replicas()).collect(),
    };
    write_atomic(&out.join("samples.csv"), |w| {
        write_samples_csv_subset(w, &record, &columns, |p, v| flatten_params(regime, p, v), &replicas)
    })?;

    let map = map_file(regime, &record, &evidence, &data)?;
    let summary = FitSummary {
        regime,
        peaks,
        n_data: data.len(),
        seed: sampler.seed,
        total_mcs: sampler.total_mcs,
        burn_in: sampler.burn_in,
        retained: record.len(),
        betas: record.betas.clone(),
        log_ztilde: evidence.log_ztilde.clone(),
        free_energy: evidence.free_energy.iter().map(|&f| finite(f)).collect(),
        best_rung: map.rung,
        exchange_rates: record.exchange.rates().into_iter().map(finite).collect(),
        move_rates: record
            .move_rates()
            .iter()
            .map(|r| finite(r.iter().sum::<f64>() / r.len() as f64))
            .collect(),
    };
    write_json(&out.join("fit.json"), &summary)?;
    write_json(&out.join("map.json"), &map)?;
    write_atomic(&out.join("curve.csv"), |w| write_curve_csv(w, regime, &map.map.params, &data))?;
    Ok(FitOutput { summary, map })
}

/// `energy,intensity,model,edge,white_line,<one column per peak>,residual`.
pub fn write_curve_csv<W: Write>(
    writer: W,
    regime: Regime,
    params: &SpectralParams<f64>,
    data: &Dataset<f64>,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<String> = ["energy", "intensity", "model", "edge", "white_line"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    match regime {
        Regime::Conventional => header.extend((1..=params.config().total()).map(|j| format!("peak.{j}"))),
        Regime::Proposed => {
            header.extend((1..=params.below.len()).map(|j| format!("below.{j}")));
            header.extend((1..=params.above.len()).map(|j| format!("above.{j}")));
        }
    }
    header.push("residual".into());
    w.write_record(&header).map_err(csv_err)?;
    for (e, i) in data.points() {
        let f = params.value_at(e);
        let mut row = vec![
            fmt_f64(e),
            fmt_f64(i),
            fmt_f64(f),
            fmt_f64(params.step.edge_at(e)),
            fmt_f64(params.step.white_line_at(e)),
        ];
        row.extend(params.peaks().map(|p| fmt_f64(p.at(params.step.edge, e))));
        row.push(fmt_f64(i - f));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Samples every model on the grid and writes `evidence.csv`,
/// `selection.json`, `posterior.csv`, `posterior_b.csv` and `marginals.csv`.
pub fn cmd_select(cfg: &RunConfig, progress: Progress) -> Result<SelectionResult> {
    cfg.validate(Command::Select)?;
    let data = parse_dataset(cfg.data_path()?)?;
    let regime = cfg.model.regime;
    let mut models = Vec::new();
    let mut maps = Vec::new();
    for peaks in cfg.grid() {
        let (record, evidence) = run_model(cfg, &data, peaks, progress)?;
        maps.push(map_file(regime, &record, &evidence, &data).ok());
        models.push(evidence);
    }
    let table = EvidenceTable {
        regime,
        n_data: data.len(),
        models,
    };
    let choice = select_model(&table)?;
    let map = maps[choice.model]
        .clone()
        .filter(|m| m.rung == choice.rung + 1)
        .ok_or_else(|| Error::Degenerate("no MAP sample for the selected model".into()))?;
    let posterior = peak_count_posterior_with(
        &table,
        cfg.posterior.model_weights.as_deref(),
        cfg.posterior.rung_weights.as_deref(),
    )?;
    let anchor = cfg.ladder()?.anchor_index();
    let result = SelectionResult {
        regime,
        chosen: choice.peaks,
        rung: choice.rung + 1,
        beta: choice.beta,
        free_energy: choice.free_energy,
        map: map.map,
        anchor_rung: anchor.map(|a| a + 1),
        anchor_free_energy: anchor
            .map(|a| table.models.iter().map(|m| (m.peaks, m.free_energy[a])).collect())
            .unwrap_or_default(),
        posterior: posterior
            .peaks
            .iter()
            .copied()
            .zip(posterior.probability.iter().copied())
            .collect(),
        marginals: marginals(&posterior.peaks, &posterior.probability),
    };

    let out = &cfg.paths.out_dir;
    write_atomic(&out.join("evidence.csv"), |w| write_evidence_csv(w, &table))?;
    write_json(&out.join("selection.json"), &result)?;
    write_atomic(&out.join("posterior.csv"), |w| write_posterior_csv(w, regime, &posterior))?;
    write_atomic(&out.join("posterior_b.csv"), |w| {
        write_posterior_b_csv(w, regime, &posterior, &table)
    })?;
    write_atomic(&out.join("marginals.csv"), |w| write_marginals_csv(w, regime, &result))?;
    Ok(result)
}

fn count_header(regime: Regime) -> Vec<&'static str> {
    match regime {
        Regime::Conventional => vec!["K"],
        Regime::Proposed => vec!["K1", "K2"],
    }
}

fn count_fields(regime: Regime, p: PeakConfig) -> Vec<String> {
    match regime {
        Regime::Conventional => vec![p.total().to_string()],
        Regime::Proposed => vec![p.k1.to_string(), p.k2.to_string()],
    }
}

/// `K1,K2,p` (or `K,p`): `p(𝒦 | D)` per grid entry.
fn write_posterior_csv<W: Write>(writer: W, regime: Regime, post: &PeakPosterior) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = count_header(regime);
    header.push("p");
    w.write_record(&header).map_err(csv_err)?;
    for (peaks, &p) in post.peaks.iter().zip(&post.probability) {
        let mut row = count_fields(regime, *peaks);
        row.push(fmt_f64(p));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `K1,K2,l,b,weight,density`: `p(𝒦, b_l | D)` with its quadrature weight.
fn write_posterior_b_csv<W: Write>(
    writer: W,
    regime: Regime,
    post: &PeakPosterior,
    table: &EvidenceTable,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = count_header(regime);
    header.extend(["l", "b", "weight", "density"]);
    w.write_record(&header).map_err(csv_err)?;
    let betas = &table.models[0].betas;
    for (m, peaks) in post.peaks.iter().enumerate() {
        for (r, &l) in post.rungs.iter().enumerate() {
            let mut row = count_fields(regime, *peaks);
            row.extend([
                (l + 1).to_string(),
                fmt_f64(betas[l]),
                fmt_f64(post.weights[r]),
                fmt_f64(post.density[m][r]),
            ]);
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `variable,value,p` with variable one of `K1`, `K2`, `K`.
fn write_marginals_csv<W: Write>(writer: W, regime: Regime, result: &SelectionResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["variable", "value", "p"]).map_err(csv_err)?;
    let m = &result.marginals;
    let mut groups = vec![("K", &m.k)];
    if regime == Regime::Proposed {
        groups.insert(0, ("K2", &m.k2));
        groups.insert(0, ("K1", &m.k1));
    }
    for (name, values) in groups {
        for &(k, p) in values.iter() {
            w.write_record([name.to_string(), k.to_string(), fmt_f64(p)]).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Autocorrelation summary (`diag.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagSummary {
    /// 1-based replica analysed.
    pub replica: usize,
    pub samples: usize,
    pub max_lag: usize,
    pub integrated_time: f64,
}

/// Reads a samples file and writes `trace.csv` (`mcs,E_N`) and
/// `autocorrelation.csv` (`lag,rho`) for one replica.
pub fn cmd_diag(cfg: &RunConfig) -> Result<DiagSummary> {
    cfg.validate(Command::Diag)?;
    let path = cfg.samples_path();
    let file = std::fs::File::open(&path)?;
    let (_, rows) = read_samples_csv(std::io::BufReader::new(file))?;
    let top = rows
        .iter()
        .map(|r| r.replica)
        .max()
        .ok_or_else(|| Error::InsufficientSamples(format!("{} has no samples", path.display())))?;
    let replica = match cfg.diag.replica {
        Some(r) => r,
        None if top >= 3 => top - 2,
        None => top,
    };
    let mut series: Vec<(usize, f64)> = rows
        .iter()
        .filter(|r| r.replica == replica)
        .map(|r| (r.mcs, r.error))
        .collect();
    if series.is_empty() {
        return Err(Error::config(format!("replica {replica} is not in {}", path.display())));
    }
    series.sort_by_key(|s| s.0);
    let energy: Vec<f64> = series.iter().map(|s| s.1).collect();
    let max_lag = cfg.diag.max_lag.unwrap_or((energy.len() / 4).max(1));
    let rho = autocorrelation(&energy, max_lag)?;

    let out = &cfg.paths.out_dir;
    write_atomic(&out.join("trace.csv"), |w| {
        write_columns(w, &["mcs", "E_N"], series.iter().map(|&(m, e)| vec![m.to_string(), fmt_f64(e)]))
    })?;
    write_atomic(&out.join("autocorrelation.csv"), |w| {
        write_columns(
            w,
            &["lag", "rho"],
            rho.iter().enumerate().map(|(t, r)| vec![t.to_string(), fmt_f64(*r)]),
        )
    })?;
    let summary = DiagSummary {
        replica,
        samples: energy.len(),
        max_lag,
        integrated_time: integrated_time(&rho),
    };
    write_json(&out.join("diag.json"), &summary)?;
    Ok(summary)
}

fn write_columns<W: Write>(writer: W, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads any all-numeric CSV artifact (curve, trace, autocorrelation,
/// posterior and marginal tables; the `variable` column of the marginals
/// file is returned as its position in `K1, K2, K`).
pub fn read_numeric_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let row = rec
            .iter()
            .map(|f| match f {
                "K1" => Ok(0.0),
                "K2" => Ok(1.0),
                "K" => Ok(2.0),
                _ => f.parse::<f64>().map_err(|_| Error::Parse {
                    line,
                    message: format!("{f:?} is not a number"),
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok((header, rows))
}

/// Loads `fit.json` and `map.json` from a `fit` output directory.
pub fn read_fit_outputs(dir: &Path) -> Result<(FitSummary, MapFile)> {
    Ok((crate::io::read_json(&dir.join("fit.json"))?, crate::io::read_json(&dir.join("map.json"))?))
}
