use clap::ValueEnum;
use serde::{Deserialize, Serialize};

use crate::CliResult;

/// One evaluated quantity. `runtime_ms` is only filled with `--timing`, so
/// records are otherwise a pure function of their command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub quantity: String,
    pub pattern: String,
    pub value: f64,
    pub stderr: Option<f64>,
    /// `None` when the quantity carries no check.
    pub pass: Option<bool>,
    /// Names of the failed invariants.
    pub failed: Vec<String>,
    pub seed: u64,
    pub samples: usize,
    pub generator: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub runtime_ms: Option<u64>,
    pub detail: serde_json::Value,
}

impl Record {
    pub fn failed(&self) -> bool {
        self.pass == Some(false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
pub enum Format {
    Json,
    Csv,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Self as ValueEnum>::from_str(s, true)
    }
}

#[derive(Serialize)]
struct CsvRow {
    quantity: String,
    value: f64,
    stderr: Option<f64>,
    pass: Option<bool>,
    seed: u64,
    samples: usize,
    runtime_ms: Option<u64>,
}

/// JSON: an array of records. CSV: the fixed columns
/// `quantity,value,stderr,pass,seed,samples,runtime_ms`, with the quantity
/// written as `name@pattern`.
pub fn render(records: &[Record], format: Format) -> CliResult<String> {
    match format {
        Format::Json => Ok(serde_json::to_string_pretty(records)? + "\n"),
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in records {
                w.serialize(CsvRow {
                    quantity: format!("{}@{}", r.quantity, r.pattern),
                    value: r.value,
                    stderr: r.stderr,
                    pass: r.pass,
                    seed: r.seed,
                    samples: r.samples,
                    runtime_ms: r.runtime_ms,
                })
                .map_err(|e| crate::CliError::Io(std::io::Error::other(e)))?;
            }
            let bytes = w.into_inner().map_err(|e| crate::CliError::Io(std::io::Error::other(e.to_string())))?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(pass: Option<bool>) -> Record {
        Record {
            quantity: "norm".into(),
            pattern: "hypercube:d=2".into(),
            value: 2.0,
            stderr: None,
            pass,
            failed: vec![],
            seed: 3,
            samples: 0,
            generator: "g".into(),
            runtime_ms: None,
            detail: serde_json::Value::Null,
        }
    }

    #[test]
    fn csv_has_fixed_columns() {
        let out = render(&[record(Some(true)), record(None)], Format::Csv).unwrap();
        let mut lines = out.lines();
        assert_eq!(lines.next().unwrap(), "quantity,value,stderr,pass,seed,samples,runtime_ms");
        assert_eq!(lines.next().unwrap(), "norm@hypercube:d=2,2.0,,true,3,0,");
        assert_eq!(lines.next().unwrap(), "norm@hypercube:d=2,2.0,,,3,0,");
    }

    #[test]
    fn json_round_trips() {
        let recs = vec![record(Some(false))];
        let out = render(&recs, Format::Json).unwrap();
        let back: Vec<Record> = serde_json::from_str(&out).unwrap();
        assert_eq!(back, recs);
        assert!(back[0].failed());
        assert!(!out.contains("runtime_ms"));
    }
}
