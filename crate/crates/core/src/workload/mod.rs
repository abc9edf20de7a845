//! Task datasets: circuit feature extraction, synthetic generation and the
//! CSV interchange format.

mod dataset;
mod qasm;

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{
    dataset_from_features, format_seconds, generate_dataset, ArrivalModel, Dataset,
    GenerationParams, Provenance, DATASET_HEADER, DEFAULT_APP_TAGS,
};
pub use qasm::{extract_features_qasm, CircuitFeatures, QasmError};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("round {round} out of range (dataset has {n_subsets} subsets)")]
    RoundOutOfRange { round: usize, n_subsets: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error(transparent)]
    Qasm(#[from] QasmError),
    #[error("metadata error: {0}")]
    Meta(#[from] serde_json::Error),
}

impl WorkloadError {
    pub(crate) fn format(line: usize, reason: impl Into<String>) -> Self {
        WorkloadError::Format {
            line,
            reason: reason.into(),
        }
    }
}

impl From<csv::Error> for WorkloadError {
    fn from(e: csv::Error) -> Self {
        let line = e.position().map_or(0, |p| p.line() as usize);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => WorkloadError::Io(io),
            kind => WorkloadError::format(line, format!("{kind:?}")),
        }
    }
}

/// A circuit's features together with the application it came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedCircuit {
    pub app_tag: String,
    pub features: CircuitFeatures,
}

pub const FEATURES_HEADER: &str = "source,app_tag,qubits,depth1_layers,gate_count";

/// Benchmark files are named `<app>_<variant>_..._<n>.qasm`; the leading
/// token names the application.
pub fn app_tag_from_path(path: &Path) -> String {
    let stem = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("circuit");
    stem.split('_')
        .next()
        .filter(|s| !s.is_empty())
        .unwrap_or(stem)
        .to_string()
}

pub fn extract_features_file(path: &Path) -> Result<CircuitFeatures, WorkloadError> {
    let text = std::fs::read_to_string(path)?;
    Ok(extract_features_qasm(&text)?)
}

/// Writes one feature row per `(source, circuit)`.
pub fn write_features_csv<'a, W: Write>(
    out: W,
    rows: impl IntoIterator<Item = (&'a str, &'a TaggedCircuit)>,
) -> Result<(), WorkloadError> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(FEATURES_HEADER.split(','))?;
    for (source, c) in rows {
        w.write_record([
            source.to_string(),
            c.app_tag.clone(),
            c.features.qubit_count.to_string(),
            c.features.depth1_layers.to_string(),
            c.features.gate_count.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a features CSV back into a sampling pool. Gate histograms are not
/// part of the file and come back empty.
pub fn read_features_csv<R: Read>(input: R) -> Result<Vec<TaggedCircuit>, WorkloadError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(input);
    let mut records = reader.records();
    match records.next() {
        Some(h)
            if h.as_ref()
                .map(|h| h.iter().collect::<Vec<_>>().join(","))
                .ok()
                .as_deref()
                == Some(FEATURES_HEADER) => {}
        _ => {
            return Err(WorkloadError::format(
                1,
                format!("header must be `{FEATURES_HEADER}`"),
            ))
        }
    }
    let mut pool = Vec::new();
    for (idx, record) in records.enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != 5 {
            return Err(WorkloadError::format(
                line,
                format!("expected 5 columns, found {}", record.len()),
            ));
        }
        let num = |i: usize, col: &str| -> Result<u64, WorkloadError> {
            record[i]
                .trim()
                .parse()
                .map_err(|_| WorkloadError::format(line, format!("invalid {col} `{}`", &record[i])))
        };
        let qubits = num(2, "qubits")?;
        pool.push(TaggedCircuit {
            app_tag: record[1].to_string(),
            features: CircuitFeatures {
                qubit_count: u32::try_from(qubits)
                    .map_err(|_| WorkloadError::format(line, "qubits too large"))?,
                depth1_layers: num(3, "depth1_layers")?,
                gate_count: num(4, "gate_count")?,
                gate_histogram: Default::default(),
            },
        });
    }
    Ok(pool)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tags_from_benchmark_names() {
        assert_eq!(
            app_tag_from_path(Path::new("/x/ghz_indep_qiskit_5.qasm")),
            "ghz"
        );
        assert_eq!(
            app_tag_from_path(Path::new("qftentangled_nativegates_ibm_7.qasm")),
            "qftentangled"
        );
        assert_eq!(app_tag_from_path(Path::new("plain.qasm")), "plain");
    }

    #[test]
    fn features_csv_roundtrip() {
        let c = TaggedCircuit {
            app_tag: "ghz".into(),
            features: extract_features_qasm("qreg q[3]; h q[0]; cx q[0],q[1]; cx q[1],q[2];")
                .unwrap(),
        };
        let mut buf = Vec::new();
        write_features_csv(&mut buf, [("a.qasm", &c)]).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            format!("{FEATURES_HEADER}\na.qasm,ghz,3,3,3\n")
        );
        let pool = read_features_csv(buf.as_slice()).unwrap();
        assert_eq!(pool[0].features.depth1_layers, 3);
        assert_eq!(pool[0].app_tag, "ghz");
        assert!(read_features_csv("nope\n".as_bytes()).is_err());
    }
}
