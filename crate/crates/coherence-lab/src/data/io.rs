//! Line-delimited JSON and CSV plumbing with a schema version stamp.

use std::io::{BufRead, Write};

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("line {line}: schema version {got}, expected {expected}")]
    SchemaVersion { line: usize, got: u32, expected: u32 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Serialize, Deserialize)]
struct Envelope<T> {
    schema_version: u32,
    data: T,
}

/// Writes one JSON record per line, each wrapped with the schema version.
pub fn write_jsonl<T: Serialize, W: Write>(
    mut w: W,
    records: impl IntoIterator<Item = T>,
) -> Result<(), DataError> {
    for (i, data) in records.into_iter().enumerate() {
        let envelope = Envelope { schema_version: SCHEMA_VERSION, data };
        serde_json::to_writer(&mut w, &envelope)
            .map_err(|e| DataError::Line { line: i + 1, message: e.to_string() })?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a JSONL file written by [`write_jsonl`]; errors carry line numbers.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>, DataError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let envelope: Envelope<T> = serde_json::from_str(&line)
            .map_err(|e| DataError::Line { line: i + 1, message: e.to_string() })?;
        if envelope.schema_version != SCHEMA_VERSION {
            return Err(DataError::SchemaVersion {
                line: i + 1,
                got: envelope.schema_version,
                expected: SCHEMA_VERSION,
            });
        }
        out.push(envelope.data);
    }
    Ok(out)
}

/// Writes a header row and string records.
pub fn write_csv<W: Write>(
    w: W,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<(), DataError> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(header)?;
    for row in rows {
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq, Serialize, serde::Deserialize)]
    struct Rec {
        id: usize,
        payload: Vec<u8>,
    }

    #[test]
    fn jsonl_roundtrip_thousand_records() {
        let records: Vec<Rec> = (0..1000)
            .map(|id| Rec { id, payload: vec![(id % 256) as u8; 3] })
            .collect();
        let mut buf = Vec::new();
        write_jsonl(&mut buf, records.clone()).unwrap();
        let back: Vec<Rec> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, records);
    }

    #[test]
    fn malformed_line_is_located() {
        let text = "{\"schema_version\":1,\"data\":{\"id\":0,\"payload\":[]}}\n{broken\n";
        match read_jsonl::<Rec, _>(text.as_bytes()) {
            Err(DataError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("expected line error, got {other:?}"),
        }
    }

    #[test]
    fn schema_version_mismatch_is_rejected() {
        let text = "{\"schema_version\":9,\"data\":{\"id\":0,\"payload\":[]}}\n";
        assert!(matches!(
            read_jsonl::<Rec, _>(text.as_bytes()),
            Err(DataError::SchemaVersion { got: 9, .. })
        ));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let mut buf = Vec::new();
        write_csv(&mut buf, &["a", "b"], vec![vec!["1".into(), "2".into()]]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,2\n");
    }
}
