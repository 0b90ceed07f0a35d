//! Streaming anonymization of detection records.
//!
//! Records are read, hashed and written in bounded chunks so memory does not
//! grow with input size. Output order always matches input order. A record
//! that fails to parse is reported by position on the diagnostics stream and
//! skipped; its text is never echoed.

use std::collections::HashSet;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::anonymizer::{AnonymizationPolicy, Anonymizer, BucketDigest, KdfParams, Salt};
use crate::error::{Error, Result};
use crate::mac::parse_mac;

/// Environment variable holding the secret as hex.
pub const SALT_ENV: &str = "MACANON_SALT";

/// Records hashed per parallel batch.
const CHUNK: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InputFormat {
    /// One MAC address per line.
    #[default]
    Lines,
    /// CSV with a header row; one column holds the address.
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Jsonl,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SaltSource {
    /// Hex text or raw bytes, detected from the content.
    File(PathBuf),
    /// Hex in the named environment variable.
    Env(String),
    InlineHex(String),
}

impl SaltSource {
    pub fn resolve(&self, allow_short: bool) -> Result<Salt> {
        let make = |bytes: Vec<u8>| {
            if allow_short {
                Salt::experimental(bytes)
            } else {
                Salt::new(bytes)
            }
        };
        match self {
            SaltSource::InlineHex(text) => Salt::from_hex(text, allow_short),
            SaltSource::Env(var) => match std::env::var(var) {
                Ok(text) => Salt::from_hex(&text, allow_short),
                Err(_) => Err(Error::validation(format!(
                    "environment variable {var} is not set"
                ))),
            },
            SaltSource::File(path) => make(read_salt_file(path)?),
        }
    }
}

fn read_salt_file(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    let text = std::str::from_utf8(&raw).map(str::trim).unwrap_or("");
    let is_hex = !text.is_empty()
        && text.len().is_multiple_of(2)
        && text.bytes().all(|b| b.is_ascii_hexdigit());
    if is_hex {
        hex::decode(text).map_err(|e| Error::validation(format!("salt file: {e}")))
    } else {
        Ok(raw)
    }
}

/// Settings for the `anonymize` command after merging flags, config file and
/// environment.
#[derive(Debug, Clone, PartialEq)]
pub struct ToolConfig {
    pub kdf: KdfParams,
    pub digest_bits: u32,
    pub salt_source: SaltSource,
    pub allow_short_salt: bool,
    pub extra_entropy: Option<Vec<u8>>,
    pub input_format: InputFormat,
    pub mac_column: String,
    pub output_format: OutputFormat,
    pub memory_budget_kib: Option<u64>,
}

impl ToolConfig {
    pub fn policy(&self) -> Result<AnonymizationPolicy> {
        let salt = self.salt_source.resolve(self.allow_short_salt)?;
        AnonymizationPolicy::new(self.kdf, salt, self.digest_bits, self.extra_entropy.clone())
    }
}

/// JSON configuration file. Every field is optional; command-line flags take
/// precedence.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub kdf: Option<KdfParams>,
    pub digest_bits: Option<u32>,
    pub salt_file: Option<PathBuf>,
    pub salt_hex: Option<String>,
    pub allow_short_salt: Option<bool>,
    pub extra_entropy: Option<String>,
    pub input_format: Option<InputFormat>,
    pub mac_column: Option<String>,
    pub output_format: Option<OutputFormat>,
    pub memory_budget_kib: Option<u64>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("config file {}: {e}", path.display())))
    }
}

/// One captured detection: the address text plus untouched metadata columns.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DetectionRecord {
    pub mac_text: String,
    pub passthrough: Vec<(String, String)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StreamSummary {
    pub written: u64,
    pub failed: u64,
}

#[allow(clippy::large_enum_variant)]
enum Sink<W: Write> {
    Jsonl(W),
    Csv(csv::Writer<W>),
}

impl<W: Write> Sink<W> {
    fn emit(
        &mut self,
        digest: &BucketDigest,
        record: &DetectionRecord,
        row: Option<&[String]>,
    ) -> Result<()> {
        match self {
            Sink::Jsonl(w) => {
                let mut obj = Map::new();
                obj.insert("bucket".into(), Value::String(digest.to_hex()));
                obj.insert("bits".into(), Value::from(digest.bits()));
                for (k, v) in &record.passthrough {
                    obj.insert(k.clone(), Value::String(v.clone()));
                }
                serde_json::to_writer(&mut *w, &Value::Object(obj))
                    .map_err(|e| Error::Io(e.into()))?;
                w.write_all(b"\n")?;
            }
            Sink::Csv(w) => match row {
                Some(fields) => w.write_record(fields).map_err(csv_io)?,
                None => w
                    .write_record([digest.to_hex(), digest.bits().to_string()])
                    .map_err(csv_io)?,
            },
        }
        Ok(())
    }

    fn finish(self) -> Result<()> {
        match self {
            Sink::Jsonl(mut w) => w.flush()?,
            Sink::Csv(mut w) => w.flush()?,
        }
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::validation(format!("{other:?}")),
    }
}

/// A record waiting to be hashed, with its CSV row when output is CSV.
struct Pending {
    position: u64,
    record: DetectionRecord,
    row: Option<Vec<String>>,
    mac_index: usize,
}

struct Stream<'a, W: Write, D: Write> {
    anonymizer: &'a Anonymizer,
    sink: Sink<W>,
    diagnostics: D,
    summary: StreamSummary,
    batch: Vec<Pending>,
}

impl<W: Write, D: Write> Stream<'_, W, D> {
    fn fail(&mut self, position: u64, what: &str) -> Result<()> {
        self.summary.failed += 1;
        writeln!(self.diagnostics, "record {position}: {what}")?;
        Ok(())
    }

    fn push(&mut self, pending: Pending) -> Result<()> {
        self.batch.push(pending);
        if self.batch.len() >= CHUNK {
            self.flush_batch()?;
        }
        Ok(())
    }

    fn flush_batch(&mut self) -> Result<()> {
        let batch = std::mem::take(&mut self.batch);
        let anonymizer = self.anonymizer;
        let digests: Vec<Result<BucketDigest>> = batch
            .par_iter()
            .map(|p| parse_mac(p.record.mac_text.trim()).and_then(|mac| anonymizer.anonymize(mac)))
            .collect();
        for (mut p, digest) in batch.into_iter().zip(digests) {
            match digest {
                Ok(d) => {
                    if let Some(row) = p.row.as_mut() {
                        row[p.mac_index] = d.to_hex();
                    }
                    self.sink.emit(&d, &p.record, p.row.as_deref())?;
                    self.summary.written += 1;
                }
                Err(Error::Parse { reason, .. }) => {
                    self.fail(p.position, &format!("invalid MAC address ({reason})"))?
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// Reads records from `input`, writes one anonymized record per valid input
/// record to `output`, and reports per-record failures to `diagnostics`.
///
/// Errors are returned only for failures that stop the stream (I/O, a
/// missing CSV column, KDF resource exhaustion).
pub fn anonymize_stream<R: BufRead, W: Write, D: Write>(
    config: &ToolConfig,
    anonymizer: &Anonymizer,
    input: R,
    output: W,
    diagnostics: D,
) -> Result<StreamSummary> {
    let sink = match config.output_format {
        OutputFormat::Jsonl => Sink::Jsonl(output),
        OutputFormat::Csv => Sink::Csv(csv::WriterBuilder::new().from_writer(output)),
    };
    let mut stream = Stream {
        anonymizer,
        sink,
        diagnostics,
        summary: StreamSummary::default(),
        batch: Vec::with_capacity(CHUNK),
    };

    match config.input_format {
        InputFormat::Lines => {
            if let Sink::Csv(w) = &mut stream.sink {
                w.write_record(["bucket", "bits"]).map_err(csv_io)?;
            }
            for (i, line) in input.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                stream.push(Pending {
                    position: i as u64 + 1,
                    record: DetectionRecord {
                        mac_text: line,
                        passthrough: Vec::new(),
                    },
                    row: None,
                    mac_index: 0,
                })?;
            }
        }
        InputFormat::Csv => {
            let mut reader = csv::ReaderBuilder::new()
                .has_headers(true)
                .from_reader(input);
            let headers: Vec<String> = reader
                .headers()
                .map_err(csv_io)?
                .iter()
                .map(str::to_owned)
                .collect();
            let mac_index = headers
                .iter()
                .position(|h| *h == config.mac_column)
                .ok_or_else(|| {
                    Error::validation(format!("input has no column named {:?}", config.mac_column))
                })?;
            let unique: HashSet<&String> = headers.iter().collect();
            if unique.len() != headers.len() {
                return Err(Error::validation("input header repeats a column name"));
            }
            match &mut stream.sink {
                Sink::Csv(w) => w.write_record(&headers).map_err(csv_io)?,
                Sink::Jsonl(_) => {
                    if let Some(h) = headers
                        .iter()
                        .enumerate()
                        .find(|&(i, h)| i != mac_index && (h == "bucket" || h == "bits"))
                    {
                        return Err(Error::validation(format!(
                            "column {:?} would collide with an output field",
                            h.1
                        )));
                    }
                }
            }
            let keep_row = config.output_format == OutputFormat::Csv;
            for (i, row) in reader.records().enumerate() {
                let position = i as u64 + 1;
                let row = match row {
                    Ok(row) => row,
                    Err(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => return Err(csv_io(e)),
                    Err(_) => {
                        stream.fail(position, "malformed CSV row")?;
                        continue;
                    }
                };
                let fields: Vec<String> = row.iter().map(str::to_owned).collect();
                let passthrough = if keep_row {
                    Vec::new()
                } else {
                    headers
                        .iter()
                        .zip(&fields)
                        .enumerate()
                        .filter(|&(j, _)| j != mac_index)
                        .map(|(_, (h, v))| (h.clone(), v.clone()))
                        .collect()
                };
                let record = DetectionRecord {
                    mac_text: fields[mac_index].clone(),
                    passthrough,
                };
                stream.push(Pending {
                    position,
                    record,
                    row: keep_row.then_some(fields),
                    mac_index,
                })?;
            }
        }
    }
    stream.flush_batch()?;
    let summary = stream.summary;
    stream.sink.finish()?;
    Ok(summary)
}
