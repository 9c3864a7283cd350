use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};

use crate::{Error, Result};

/// 17 significant digits, enough to round-trip an `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Values keyed by name, serialized as a JSON object in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NamedValues(pub Vec<(String, f64)>);

impl NamedValues {
    pub fn new(names: &[String], values: &[f64]) -> Self {
        Self(names.iter().cloned().zip(values.iter().copied()).collect())
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(k, _)| k == name).map(|(_, v)| *v)
    }

    pub fn names(&self) -> Vec<String> {
        self.0.iter().map(|(k, _)| k.clone()).collect()
    }

    pub fn values(&self) -> Vec<f64> {
        self.0.iter().map(|(_, v)| *v).collect()
    }
}

impl Serialize for NamedValues {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(self.0.len()))?;
        for (k, v) in &self.0 {
            map.serialize_entry(k, v)?;
        }
        map.end()
    }
}

/// A one-column series with header `dy`.
pub fn write_series_csv(path: &Path, values: &[f64]) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(["dy"]).map_err(csv_err)?;
    for v in values {
        w.write_record([fmt_f64(*v)]).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a one-column series written by [`write_series_csv`]. Errors name the
/// offending line (the header is line 1).
pub fn read_series_csv(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path)?;
    parse_series(file)
}

pub fn parse_series<R: std::io::Read>(reader: R) -> Result<Vec<f64>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(reader);
    let header = rdr.headers().map_err(csv_err)?.clone();
    if header.len() != 1 {
        return Err(Error::Parse { line: 1, message: format!("expected one column, header has {}", header.len()) });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(csv_err)?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        if rec.len() != 1 {
            return Err(Error::Parse { line, message: format!("expected 1 field, found {}", rec.len()) });
        }
        let field = rec[0].trim();
        let v: f64 = field
            .parse()
            .map_err(|_| Error::Parse { line, message: format!("'{field}' is not a number") })?;
        if !v.is_finite() {
            return Err(Error::Parse { line, message: format!("non-finite value '{field}'") });
        }
        out.push(v);
    }
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse { line, message: format!("{other:?}") },
    }
}

/// Writes a table with a header row; numbers use [`fmt_f64`].
pub fn write_table(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// Provenance of an output file. Deterministic: no clock readings.
#[derive(Debug, Clone, Serialize)]
pub struct Metadata {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
}

impl Metadata {
    pub fn new(command: &'static str) -> Self {
        Self { tool: env!("CARGO_PKG_NAME"), version: env!("CARGO_PKG_VERSION"), command }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn series_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let values = vec![0.1, -1.0 / 3.0, 1e-300, 12345.678901234567];
        write_series_csv(&path, &values).unwrap();
        assert_eq!(read_series_csv(&path).unwrap(), values);
    }

    #[test]
    fn empty_series_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_series_csv(&path, &[]).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "dy\n");
        assert!(read_series_csv(&path).unwrap().is_empty());
    }

    #[test]
    fn bad_row_names_its_line() {
        let text = "dy\n1.0\n2.0\nabc\n";
        match parse_series(text.as_bytes()) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("abc"));
            }
            other => panic!("{other:?}"),
        }
        match parse_series("dy\n1.0\n2.0,3.0\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn named_values_keep_order() {
        let nv = NamedValues::new(&["z".into(), "a".into()], &[1.0, 2.0]);
        assert_eq!(serde_json::to_string(&nv).unwrap(), r#"{"z":1.0,"a":2.0}"#);
    }
}
