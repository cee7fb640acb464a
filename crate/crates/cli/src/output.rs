//! Trace CSV and summary files.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use vrsgt_core::optimizer::TraceRecord;

use crate::experiment::Summary;
use crate::CliError;

pub const SCHEMA_VERSION: u32 = 1;

pub const TRACE_HEADER: [&str; 11] = [
    "schema_version",
    "k",
    "t",
    "round",
    "samples",
    "stagap",
    "grad_norm_sq",
    "consensus_err",
    "feasibility_sq",
    "loss",
    "recovery",
];

/// Reals are written in shortest round-trip scientific notation.
fn real(v: f64) -> String {
    format!("{v:e}")
}

pub fn trace_fields(r: &TraceRecord) -> [String; 11] {
    let m = &r.metrics;
    [
        SCHEMA_VERSION.to_string(),
        r.k.to_string(),
        r.t.to_string(),
        r.round.to_string(),
        r.samples.to_string(),
        real(m.stagap),
        real(m.grad_norm_sq),
        real(m.consensus_err),
        real(m.feasibility_sq),
        real(m.loss),
        m.recovery.map(real).unwrap_or_default(),
    ]
}

/// Streams trace rows to disk; the first I/O error is kept and reported by
/// [`finish`](Self::finish).
pub struct TraceWriter {
    path: PathBuf,
    inner: csv::Writer<File>,
    error: Option<csv::Error>,
}

impl TraceWriter {
    pub fn create(path: &Path) -> Result<Self, CliError> {
        let file = File::create(path).map_err(|e| io_error(path, e))?;
        let mut w = Self::wrap(path, file);
        w.inner
            .write_record(TRACE_HEADER)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        Ok(w)
    }

    /// Append to an existing trace whose header matches this schema.
    pub fn append(path: &Path) -> Result<Self, CliError> {
        let file = File::open(path).map_err(|e| io_error(path, e))?;
        let mut first = String::new();
        BufReader::new(file)
            .read_line(&mut first)
            .map_err(|e| io_error(path, e))?;
        if first.trim_end() != TRACE_HEADER.join(",") {
            return Err(CliError::Data(format!(
                "{} is not a trace with schema version {SCHEMA_VERSION}",
                path.display()
            )));
        }
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| io_error(path, e))?;
        Ok(Self::wrap(path, file))
    }

    fn wrap(path: &Path, file: File) -> Self {
        TraceWriter {
            path: path.to_path_buf(),
            inner: csv::WriterBuilder::new().has_headers(false).from_writer(file),
            error: None,
        }
    }

    pub fn write(&mut self, r: &TraceRecord) {
        if self.error.is_none() {
            if let Err(e) = self.inner.write_record(trace_fields(r)) {
                self.error = Some(e);
            }
        }
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        if let Some(e) = self.error.take() {
            return Err(CliError::Data(format!("{}: {e}", self.path.display())));
        }
        self.inner.flush().map_err(|e| io_error(&self.path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> CliError {
    CliError::Data(format!("{}: {e}", path.display()))
}

pub fn write_summary(path: &Path, summary: &Summary) -> Result<(), CliError> {
    let text = toml::to_string(summary).map_err(|e| CliError::Data(e.to_string()))?;
    std::fs::write(path, text).map_err(|e| io_error(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use vrsgt_core::MetricsRow;

    fn record(recovery: Option<f64>) -> TraceRecord {
        TraceRecord {
            k: 2,
            t: 3,
            iteration: 12,
            round: 24,
            samples: 100,
            metrics: MetricsRow {
                stagap: 0.1 + 0.2,
                grad_norm_sq: 1e-20,
                consensus_err: 0.0,
                feasibility_sq: 0.3,
                loss: -1.5,
                recovery,
            },
        }
    }

    #[test]
    fn reals_round_trip() {
        let f = trace_fields(&record(Some(0.25)));
        assert_eq!(f[5].parse::<f64>().unwrap(), 0.1 + 0.2);
        assert_eq!(f[6], "1e-20");
        assert_eq!(f[10], "2.5e-1");
        assert_eq!(trace_fields(&record(None))[10], "");
    }

    #[test]
    fn append_checks_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        let mut w = TraceWriter::create(&path).unwrap();
        w.write(&record(None));
        w.finish().unwrap();
        let mut w = TraceWriter::append(&path).unwrap();
        w.write(&record(None));
        w.finish().unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        std::fs::write(&path, "a,b\n").unwrap();
        assert!(TraceWriter::append(&path).is_err());
    }
}
