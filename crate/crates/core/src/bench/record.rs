use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::bench::BenchError;

pub const CSV_HEADER: &str =
    "experiment,config_hash,rep,wall_s,overhead_pct,imbalance,copy_s,transfer_s,notes";

/// One row of benchmark output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub experiment: String,
    pub config_hash: String,
    pub rep: usize,
    pub wall_s: f64,
    pub overhead_pct: f64,
    pub imbalance: f64,
    pub copy_s: f64,
    pub transfer_s: f64,
    /// Free-form key/value pairs, written as `k=v;k=v`.
    #[serde(serialize_with = "write_notes", deserialize_with = "read_notes")]
    pub notes: BTreeMap<String, String>,
}

impl BenchRecord {
    pub fn new(experiment: &str, config_hash: &str, rep: usize) -> Self {
        Self {
            experiment: experiment.into(),
            config_hash: config_hash.into(),
            rep,
            wall_s: 0.0,
            overhead_pct: 0.0,
            imbalance: 1.0,
            copy_s: 0.0,
            transfer_s: 0.0,
            notes: BTreeMap::new(),
        }
    }

    pub fn note(mut self, key: &str, value: impl ToString) -> Self {
        self.notes.insert(key.into(), value.to_string());
        self
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.notes.get(key).map(String::as_str)
    }

    pub fn get_f64(&self, key: &str) -> Option<f64> {
        self.get(key)?.parse().ok()
    }
}

fn write_notes<S: Serializer>(notes: &BTreeMap<String, String>, s: S) -> Result<S::Ok, S::Error> {
    let text = notes
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(";");
    s.serialize_str(&text)
}

fn read_notes<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<String, String>, D::Error> {
    let text = String::deserialize(d)?;
    text.split(';')
        .filter(|p| !p.is_empty())
        .map(|pair| {
            pair.split_once('=')
                .map(|(k, v)| (k.to_owned(), v.to_owned()))
                .ok_or_else(|| serde::de::Error::custom(format!("note `{pair}` lacks `=`")))
        })
        .collect()
}

pub fn write_records<W: Write>(
    out: W,
    records: &[BenchRecord],
    header: bool,
) -> Result<(), BenchError> {
    let mut w = csv::WriterBuilder::new().has_headers(header).from_writer(out);
    for r in records {
        w.serialize(r)?;
    }
    if header && records.is_empty() {
        w.write_record(CSV_HEADER.split(','))?;
    }
    w.flush()?;
    Ok(())
}

/// Appends to `path`, writing the header only when the file is new or
/// empty.
pub fn append_records(path: &Path, records: &[BenchRecord]) -> Result<(), BenchError> {
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    write_records(file, records, fresh)
}

pub fn read_records_from<R: Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Config(format!(
            "unexpected CSV header `{}`",
            header.join(",")
        )));
    }
    Ok(r.deserialize().collect::<Result<_, _>>()?)
}

pub fn read_records(path: &Path) -> Result<Vec<BenchRecord>, BenchError> {
    read_records_from(std::fs::File::open(path)?)
}
