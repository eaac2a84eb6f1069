//! Line-delimited JSON reading and writing for sample files.

use serde::de::DeserializeOwned;
use serde::Serialize;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Encode(#[from] serde_json::Error),
}

/// Parses one record per non-blank line.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(reader: R) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| JsonlError::Parse { line: i + 1, source })?;
        out.push(record);
    }
    Ok(out)
}

pub fn read_jsonl_file<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>, JsonlError> {
    read_jsonl(BufReader::new(File::open(path)?))
}

pub fn write_jsonl<T: Serialize, W: Write>(mut writer: W, records: &[T]) -> Result<(), JsonlError> {
    for r in records {
        serde_json::to_writer(&mut writer, r)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

pub fn write_jsonl_file<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<(), JsonlError> {
    write_jsonl(BufWriter::new(File::create(path)?), records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::CreativePairSample;
    use crate::synth::{generate_synthetic, PreferenceRule};

    #[test]
    fn round_trip_and_line_errors() {
        let samples = generate_synthetic(5, 1, &PreferenceRule::default());
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &samples).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 5);
        let back: Vec<CreativePairSample> = read_jsonl(&buf[..]).unwrap();
        assert_eq!(back, samples);

        buf.extend_from_slice(b"{not json}\n");
        let err = read_jsonl::<CreativePairSample, _>(&buf[..]).unwrap_err();
        assert!(matches!(err, JsonlError::Parse { line: 6, .. }));
    }
}
