//! `energy,intensity` CSV files.

use std::io::{Read, Write};
use std::path::Path;

use crate::emc::record::{csv_err, fmt_f64};
use crate::error::{Error, Result};
use crate::model::Dataset;

/// Reads a dataset from a file; see [`read_dataset`].
pub fn parse_dataset(path: &Path) -> Result<Dataset<f64>> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    read_dataset(std::io::BufReader::new(file))
}

/// Parses a CSV with header `energy,intensity` and one point per row, in
/// file order.
pub fn read_dataset<R: Read>(reader: R) -> Result<Dataset<f64>> {
    let mut r = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = r.headers().map_err(csv_err)?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::invalid("dataset file is empty"));
    }
    if header.len() != 2 || &header[0] != "energy" || &header[1] != "intensity" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header energy,intensity".into(),
        });
    }
    let mut energy = Vec::new();
    let mut intensity = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<f64> {
            let v: f64 = rec
                .get(i)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Parse {
                    line,
                    message: format!("{name} is not a number"),
                })?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Parse {
                    line,
                    message: format!("{name} is not finite"),
                })
            }
        };
        if rec.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", rec.len()),
            });
        }
        energy.push(field(0, "energy")?);
        intensity.push(field(1, "intensity")?);
    }
    if energy.is_empty() {
        return Err(Error::invalid("dataset has no data rows"));
    }
    Dataset::new(energy, intensity)
}

/// Writes a dataset in the format read by [`read_dataset`], with values
/// printed so that they parse back exactly.
pub fn write_dataset<W: Write>(writer: W, data: &Dataset<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["energy", "intensity"]).map_err(csv_err)?;
    for (e, i) in data.points() {
        w.write_record([fmt_f64(e), fmt_f64(i)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_rows() {
        let d = read_dataset("energy,intensity\n530.0,0.1\n531.0,0.2\n".as_bytes()).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.energy(), &[530.0, 531.0]);
        assert_eq!(d.intensity(), &[0.1, 0.2]);
    }

    #[test]
    fn malformed_row_names_its_line() {
        let err = read_dataset("energy,intensity\nabc,1.0\n".as_bytes()).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = read_dataset("energy,intensity\n1,2\n3\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err:?}");
    }

    #[test]
    fn empty_inputs() {
        assert!(matches!(read_dataset("".as_bytes()), Err(Error::InvalidInput(_))));
        assert!(matches!(
            read_dataset("energy,intensity\n".as_bytes()),
            Err(Error::InvalidInput(_))
        ));
    }

    #[test]
    fn wrong_header() {
        assert!(matches!(
            read_dataset("e,i\n1,2\n".as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_file() {
        assert!(matches!(
            parse_dataset(Path::new("/nonexistent/data.csv")),
            Err(Error::Io(_))
        ));
    }

    #[test]
    fn order_is_preserved() {
        let d = read_dataset("energy,intensity\n3,1\n1,2\n2,3\n".as_bytes()).unwrap();
        assert_eq!(d.energy(), &[3.0, 1.0, 2.0]);
    }
}
