//! Transmitter-side trace files.
//!
//! A record holds the local readings `mu_h, mu_v, mu_d` of one valid pulse;
//! `mu_a` follows from energy conservation. Two encodings:
//!
//! * CSV with header `mu_h,mu_v,mu_d`, one record per line. Lines starting
//!   with `#` are comments.
//! * Binary: the 8-byte magic `FPQKDTR1` followed by records of three
//!   little-endian `f64`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use fpqkd_core::phase_source::LocalReadout;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const MAGIC: &[u8; 8] = b"FPQKDTR1";

/// Largest tolerated negative `mu_a` before a record is rejected.
pub const MU_A_FLOOR: f64 = -1e-6;

const HEADER: [&str; 3] = ["mu_h", "mu_v", "mu_d"];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub mu_h: f64,
    pub mu_v: f64,
    pub mu_d: f64,
}

impl TraceRecord {
    pub fn from_readout(r: &LocalReadout) -> Self {
        TraceRecord {
            mu_h: r.mu_h,
            mu_v: r.mu_v,
            mu_d: r.mu_d,
        }
    }

    /// Checks the record against the intensity box and derives `mu_a`.
    pub fn readout(&self, index: usize, mu_max: f64) -> Result<LocalReadout> {
        let bad = |what: &str| CliError::Data(format!("trace record {index}: {what} ({self:?})"));
        for (name, v) in [("mu_h", self.mu_h), ("mu_v", self.mu_v)] {
            if !(0.0..=mu_max).contains(&v) {
                return Err(bad(&format!("{name} = {v} is outside [0, {mu_max}]")));
            }
        }
        if !(0.0..=2.0 * mu_max).contains(&self.mu_d) {
            return Err(bad(&format!("mu_d = {} is outside [0, {}]", self.mu_d, 2.0 * mu_max)));
        }
        let mu_a = self.mu_h + self.mu_v - self.mu_d;
        if mu_a < MU_A_FLOOR {
            return Err(bad(&format!("derived mu_a = {mu_a:e} is negative")));
        }
        Ok(LocalReadout {
            mu_h: self.mu_h,
            mu_v: self.mu_v,
            mu_d: self.mu_d,
            mu_a: mu_a.max(0.0),
        })
    }
}

/// Streaming writer for either encoding.
pub struct TraceWriter {
    inner: Inner,
}

enum Inner {
    Csv(Box<csv::Writer<BufWriter<File>>>),
    Binary(BufWriter<File>),
}

impl TraceWriter {
    pub fn csv(path: &Path, config_hash: &str) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = BufWriter::new(file);
        writeln!(out, "# config_hash={config_hash}").map_err(|e| CliError::io(path, e))?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(HEADER).map_err(|e| csv_io(path, e))?;
        Ok(TraceWriter {
            inner: Inner::Csv(Box::new(w)),
        })
    }

    pub fn binary(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut out = BufWriter::new(file);
        out.write_all(MAGIC).map_err(|e| CliError::io(path, e))?;
        Ok(TraceWriter {
            inner: Inner::Binary(out),
        })
    }

    pub fn write(&mut self, r: &TraceRecord, path: &Path) -> Result<()> {
        match &mut self.inner {
            Inner::Csv(w) => w
                .write_record([r.mu_h, r.mu_v, r.mu_d].map(crate::report::num))
                .map_err(|e| csv_io(path, e)),
            Inner::Binary(w) => {
                for v in [r.mu_h, r.mu_v, r.mu_d] {
                    w.write_all(&v.to_le_bytes()).map_err(|e| CliError::io(path, e))?;
                }
                Ok(())
            }
        }
    }

    pub fn finish(self, path: &Path) -> Result<()> {
        match self.inner {
            Inner::Csv(mut w) => w.flush().map_err(|e| CliError::io(path, e)),
            Inner::Binary(mut w) => w.flush().map_err(|e| CliError::io(path, e)),
        }
    }
}

fn csv_io(path: &Path, e: csv::Error) -> CliError {
    CliError::io(path, std::io::Error::other(e))
}

pub fn write_trace(path: &Path, records: &[TraceRecord], binary: bool, config_hash: &str) -> Result<()> {
    let mut w = if binary {
        TraceWriter::binary(path)?
    } else {
        TraceWriter::csv(path, config_hash)?
    };
    for r in records {
        w.write(r, path)?;
    }
    w.finish(path)
}

/// Reads either encoding, recognising the binary one by its magic.
pub fn read_trace(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|f| BufReader::new(f).read_to_end(&mut bytes))
        .map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        parse_binary(&bytes[MAGIC.len()..])
    } else {
        parse_csv(&bytes)
    }
}

fn parse_binary(body: &[u8]) -> Result<Vec<TraceRecord>> {
    const RECORD: usize = 24;
    if !body.len().is_multiple_of(RECORD) {
        return Err(CliError::Data(format!(
            "trace record {}: truncated ({} trailing bytes)",
            body.len() / RECORD,
            body.len() % RECORD
        )));
    }
    Ok(body
        .chunks_exact(RECORD)
        .map(|c| {
            let f = |i: usize| f64::from_le_bytes(c[8 * i..8 * i + 8].try_into().expect("8-byte slice"));
            TraceRecord {
                mu_h: f(0),
                mu_v: f(1),
                mu_d: f(2),
            }
        })
        .collect())
}

fn parse_csv(bytes: &[u8]) -> Result<Vec<TraceRecord>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(bytes);
    let header = rdr
        .headers()
        .map_err(|e| CliError::Data(format!("trace header: {e}")))?
        .clone();
    if header.iter().ne(HEADER) {
        return Err(CliError::Data(format!(
            "trace header must be `{}`, got `{}`",
            HEADER.join(","),
            header.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, r)| r.map_err(|e| CliError::Data(format!("trace record {i}: {e}"))))
        .collect()
}

/// Validated readouts for analysis.
pub fn readouts(records: &[TraceRecord], mu_max: f64) -> Result<Vec<LocalReadout>> {
    records.iter().enumerate().map(|(i, r)| r.readout(i, mu_max)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(mu_h: f64, mu_v: f64, mu_d: f64) -> TraceRecord {
        TraceRecord { mu_h, mu_v, mu_d }
    }

    #[test]
    fn validation() {
        assert!(rec(0.2, 0.3, 0.25).readout(0, 0.5).is_ok());
        let err = rec(0.5, 0.5, 1.2).readout(7, 0.5).unwrap_err();
        assert!(err.to_string().contains("record 7"), "{err}");
        assert_eq!(err.exit_code(), 3);
        assert!(rec(0.6, 0.1, 0.1).readout(0, 0.5).is_err());
        assert!(rec(-0.1, 0.1, 0.0).readout(0, 0.5).is_err());
        // small negative mu_a is clamped, larger is rejected
        let r = rec(0.2, 0.2, 0.4 + 5e-7).readout(0, 0.5).unwrap();
        assert_eq!(r.mu_a, 0.0);
        assert!(rec(0.2, 0.2, 0.4 + 1e-5).readout(0, 0.5).is_err());
    }

    #[test]
    fn both_encodings_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![rec(0.1, 0.2, 0.15), rec(1.0 / 3.0, 0.0, 1.0 / 6.0)];
        for binary in [false, true] {
            let path = dir.path().join(if binary { "t.bin" } else { "t.csv" });
            write_trace(&path, &records, binary, "abc").unwrap();
            assert_eq!(read_trace(&path).unwrap(), records);
        }
    }

    #[test]
    fn malformed_input_names_the_record() {
        let err = parse_csv(b"mu_h,mu_v,mu_d\n0.1,0.1,0.1\n0.1,x,0.1\n").unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
        assert!(parse_csv(b"a,b,c\n").is_err());
        let err = parse_binary(&[0u8; 30]).unwrap_err();
        assert!(err.to_string().contains("record 1"), "{err}");
    }
}
