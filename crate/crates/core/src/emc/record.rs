use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::emc::sampler::ExchangeStats;
use crate::error::{Error, Result};

/// Post-burn-in samples of every replica plus run statistics.
///
/// Per-sample vectors are indexed `[replica][sample]`; `energy_trace` holds
/// `E_N` after every MCS including burn-in, indexed `[replica][mcs]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord<P> {
    pub n_data: usize,
    pub betas: Vec<f64>,
    /// 0-based MCS index of each retained sample.
    pub mcs: Vec<usize>,
    pub energy: Vec<Vec<f64>>,
    pub log_prior: Vec<Vec<f64>>,
    pub params: Vec<Vec<P>>,
    pub energy_trace: Vec<Vec<f64>>,
    pub exchange: ExchangeStats,
    pub move_accepted: Vec<Vec<u64>>,
    pub move_attempted: Vec<Vec<u64>>,
    /// Proposal widths in force after burn-in.
    pub step_sizes: Vec<Vec<f64>>,
}

impl<P> SampleRecord<P> {
    pub(crate) fn new(n_data: usize, betas: Vec<f64>, dim: usize, retained: usize, total: usize) -> Self {
        let l = betas.len();
        Self {
            n_data,
            mcs: Vec::with_capacity(retained),
            energy: (0..l).map(|_| Vec::with_capacity(retained)).collect(),
            log_prior: (0..l).map(|_| Vec::with_capacity(retained)).collect(),
            params: (0..l).map(|_| Vec::with_capacity(retained)).collect(),
            energy_trace: (0..l).map(|_| Vec::with_capacity(total)).collect(),
            exchange: ExchangeStats::new(l.saturating_sub(1)),
            move_accepted: vec![vec![0; dim]; l],
            move_attempted: vec![vec![0; dim]; l],
            step_sizes: vec![vec![0.0; dim]; l],
            betas,
        }
    }

    pub fn replicas(&self) -> usize {
        self.betas.len()
    }

    /// Retained samples per replica.
    pub fn len(&self) -> usize {
        self.mcs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mcs.is_empty()
    }

    /// Post-burn-in Metropolis acceptance rate per replica and coordinate.
    pub fn move_rates(&self) -> Vec<Vec<f64>> {
        self.move_accepted
            .iter()
            .zip(&self.move_attempted)
            .map(|(a, t)| {
                a.iter()
                    .zip(t)
                    .map(|(&a, &t)| if t == 0 { f64::NAN } else { a as f64 / t as f64 })
                    .collect()
            })
            .collect()
    }
}

/// Writes `mcs,replica,E_N,<columns…>` with one row per retained sample and
/// replica. Replica indices are 1-based.
pub fn write_samples_csv<P, W: Write>(
    writer: W,
    record: &SampleRecord<P>,
    columns: &[String],
    flatten: impl Fn(&P, &mut Vec<f64>),
) -> Result<()> {
    let all: Vec<usize> = (0..record.replicas()).collect();
    write_samples_csv_subset(writer, record, columns, flatten, &all)
}

/// As [`write_samples_csv`] restricted to the given 0-based replicas.
pub fn write_samples_csv_subset<P, W: Write>(
    writer: W,
    record: &SampleRecord<P>,
    columns: &[String],
    flatten: impl Fn(&P, &mut Vec<f64>),
    replicas: &[usize],
) -> Result<()> {
    if let Some(&l) = replicas.iter().find(|&&l| l >= record.replicas()) {
        return Err(Error::invalid(format!("replica {} is outside the ladder", l + 1)));
    }
    if replicas.iter().any(|&l| record.params[l].len() != record.mcs.len()) {
        return Err(Error::InsufficientSamples("run did not keep parameter snapshots".into()));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["mcs".to_string(), "replica".to_string(), "E_N".to_string()];
    header.extend(columns.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    let mut values = Vec::with_capacity(columns.len());
    let mut row = Vec::with_capacity(header.len());
    for (i, &m) in record.mcs.iter().enumerate() {
        for &l in replicas {
            values.clear();
            flatten(&record.params[l][i], &mut values);
            if values.len() != columns.len() {
                return Err(Error::invalid(format!(
                    "flattened sample has {} values for {} columns",
                    values.len(),
                    columns.len()
                )));
            }
            row.clear();
            row.push(m.to_string());
            row.push((l + 1).to_string());
            row.push(fmt_f64(record.energy[l][i]));
            row.extend(values.iter().map(|&v| fmt_f64(v)));
            w.write_record(&row).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One parsed row of a samples file.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleRow {
    pub mcs: usize,
    /// 1-based replica index.
    pub replica: usize,
    pub error: f64,
    pub values: Vec<f64>,
}

/// Reads a file produced by [`write_samples_csv`]. Returns the parameter
/// column names and the rows.
pub fn read_samples_csv<R: Read>(reader: R) -> Result<(Vec<String>, Vec<SampleRow>)> {
    let mut r = csv::Reader::from_reader(reader);
    let header: Vec<String> = r.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    if header.len() < 3 || header[0] != "mcs" || header[1] != "replica" || header[2] != "E_N" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header starting with mcs,replica,E_N".into(),
        });
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("malformed {what}"),
        };
        if rec.len() != header.len() {
            return Err(bad("row length"));
        }
        let mcs = rec[0].trim().parse().map_err(|_| bad("mcs"))?;
        let replica = rec[1].trim().parse().map_err(|_| bad("replica"))?;
        let error = rec[2].trim().parse().map_err(|_| bad("E_N"))?;
        let values = rec
            .iter()
            .skip(3)
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad("parameter value"))?;
        rows.push(SampleRow {
            mcs,
            replica,
            error,
            values,
        });
    }
    Ok((header[3..].to_vec(), rows))
}

/// Shortest representation that parses back to the identical `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}
