//! Line-delimited JSON record schemas and streaming readers/writers.
//!
//! Readers never buffer the whole file: each call to `next` reads one line.
//! A malformed line yields a [`CorpusError::Malformed`] carrying its line
//! number and iteration continues; I/O failures end the stream.

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::marker::PhantomData;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("{path}: write failed after {written} records: {source}")]
    Write {
        path: PathBuf,
        written: usize,
        #[source]
        source: io::Error,
    },
}

impl CorpusError {
    pub fn is_fatal(&self) -> bool {
        !matches!(self, CorpusError::Malformed { .. })
    }
}

/// One (instruction, source, target, prediction) tuple.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RewriteRecord {
    pub id: String,
    pub instruction: String,
    pub source: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prediction: Option<String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub meta: BTreeMap<String, String>,
}

#[derive(Deserialize)]
struct RawRewrite {
    id: String,
    instruction: String,
    source: String,
    #[serde(default)]
    target: Option<String>,
    #[serde(default)]
    prediction: Option<String>,
    #[serde(default)]
    meta: BTreeMap<String, String>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

impl<'de> Deserialize<'de> for RewriteRecord {
    /// Unknown top-level fields are folded into `meta`; string values are
    /// kept verbatim and anything else as its JSON text.
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawRewrite::deserialize(deserializer)?;
        let mut meta = raw.meta;
        for (key, value) in raw.extra {
            let text = match value {
                Value::String(s) => s,
                other => other.to_string(),
            };
            meta.entry(key).or_insert(text);
        }
        Ok(RewriteRecord {
            id: raw.id,
            instruction: raw.instruction,
            source: raw.source,
            target: raw.target,
            prediction: raw.prediction,
            meta,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub text: String,
    /// Sampling rank; 0 is the highest-probability sample.
    pub rank: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprob: Option<f64>,
}

/// A prompt with the outputs sampled for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub id: String,
    pub instruction: String,
    pub source: String,
    pub candidates: Vec<Candidate>,
}

impl CandidateSet {
    /// Checks non-emptiness, rank distinctness and logprob ordering.
    pub fn validate(&self) -> Vec<Violation> {
        let mut out = Vec::new();
        if self.candidates.is_empty() {
            out.push(Violation::new("candidates", "empty"));
        }
        let mut by_rank: Vec<&Candidate> = self.candidates.iter().collect();
        by_rank.sort_by_key(|c| c.rank);
        if by_rank.windows(2).any(|w| w[0].rank == w[1].rank) {
            out.push(Violation::new("candidates", "duplicate rank"));
        }
        let logprobs: Option<Vec<f64>> = by_rank.iter().map(|c| c.logprob).collect();
        if let Some(lp) = logprobs {
            if lp.windows(2).any(|w| w[1] > w[0]) {
                out.push(Violation::new("candidates", "logprob increases with rank"));
            }
        }
        out
    }
}

/// A broken record invariant, displayed as `field: rule`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: String,
    pub rule: String,
}

impl Violation {
    fn new(field: &str, rule: &str) -> Self {
        Self {
            field: field.to_string(),
            rule: rule.to_string(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

pub fn validate_record(r: &RewriteRecord) -> Vec<Violation> {
    let mut out = Vec::new();
    if r.id.trim().is_empty() {
        out.push(Violation::new("id", "empty"));
    }
    if r.instruction.trim().is_empty() {
        out.push(Violation::new("instruction", "empty"));
    }
    if r.source.trim().is_empty() {
        out.push(Violation::new("source", "empty"));
    }
    if r.target.is_none() && r.prediction.is_none() {
        out.push(Violation::new(
            "target",
            "neither target nor prediction present",
        ));
    }
    out
}

/// Ids that occur more than once, in first-repeat order.
pub fn duplicate_ids<'a, I>(ids: I) -> Vec<String>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut seen = std::collections::HashSet::new();
    let mut dups = Vec::new();
    for id in ids {
        if !seen.insert(id) && !dups.iter().any(|d| d == id) {
            dups.push(id.to_string());
        }
    }
    dups
}

/// Streaming JSONL reader yielding one record per non-blank line.
pub struct RecordReader<T, R = BufReader<File>> {
    reader: R,
    path: PathBuf,
    line: usize,
    buf: Vec<u8>,
    done: bool,
    _marker: PhantomData<fn() -> T>,
}

impl<T: DeserializeOwned> RecordReader<T> {
    pub fn open(path: &Path) -> Result<Self, CorpusError> {
        let file = File::open(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(BufReader::new(file), path))
    }
}

impl<T: DeserializeOwned, R: BufRead> RecordReader<T, R> {
    pub fn new(reader: R, path: &Path) -> Self {
        Self {
            reader,
            path: path.to_path_buf(),
            line: 0,
            buf: Vec::new(),
            done: false,
            _marker: PhantomData,
        }
    }

    /// Number of lines consumed so far.
    pub fn line(&self) -> usize {
        self.line
    }
}

impl<T: DeserializeOwned, R: BufRead> Iterator for RecordReader<T, R> {
    type Item = Result<T, CorpusError>;

    fn next(&mut self) -> Option<Self::Item> {
        while !self.done {
            self.buf.clear();
            match self.reader.read_until(b'\n', &mut self.buf) {
                Ok(0) => self.done = true,
                Ok(_) => {
                    self.line += 1;
                    let line = self.line;
                    let text = match std::str::from_utf8(&self.buf) {
                        Ok(t) => t.trim_end_matches(['\n', '\r']),
                        Err(e) => {
                            return Some(Err(CorpusError::Malformed {
                                line,
                                message: format!("invalid UTF-8: {e}"),
                            }))
                        }
                    };
                    if text.trim().is_empty() {
                        continue;
                    }
                    return Some(
                        serde_json::from_str(text).map_err(|e| CorpusError::Malformed {
                            line,
                            message: e.to_string(),
                        }),
                    );
                }
                Err(source) => {
                    self.done = true;
                    return Some(Err(CorpusError::Io {
                        path: self.path.clone(),
                        source,
                    }));
                }
            }
        }
        None
    }
}

pub fn read_records<T: DeserializeOwned>(path: &Path) -> Result<RecordReader<T>, CorpusError> {
    RecordReader::open(path)
}

/// Records plus the per-line errors encountered while reading them.
#[derive(Debug)]
pub struct ReadOutcome<T> {
    pub records: Vec<T>,
    pub errors: Vec<CorpusError>,
}

/// Collects a whole file. With `strict`, the first malformed line is returned
/// as an error; otherwise malformed lines are collected alongside the records.
pub fn read_all<T: DeserializeOwned>(
    path: &Path,
    strict: bool,
) -> Result<ReadOutcome<T>, CorpusError> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for item in read_records(path)? {
        match item {
            Ok(r) => records.push(r),
            Err(e) if e.is_fatal() || strict => return Err(e),
            Err(e) => errors.push(e),
        }
    }
    Ok(ReadOutcome { records, errors })
}

/// Line-oriented writer; text newlines are escaped by JSON encoding.
pub struct RecordWriter<W: Write = BufWriter<File>> {
    out: W,
    path: PathBuf,
    written: usize,
}

impl RecordWriter {
    pub fn create(path: &Path) -> Result<Self, CorpusError> {
        let file = File::create(path).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::new(BufWriter::new(file), path))
    }
}

impl<W: Write> RecordWriter<W> {
    pub fn new(out: W, path: &Path) -> Self {
        Self {
            out,
            path: path.to_path_buf(),
            written: 0,
        }
    }

    fn fail(&self, source: io::Error) -> CorpusError {
        CorpusError::Write {
            path: self.path.clone(),
            written: self.written,
            source,
        }
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<(), CorpusError> {
        serde_json::to_writer(&mut self.out, record).map_err(|e| self.fail(e.into()))?;
        self.out.write_all(b"\n").map_err(|e| self.fail(e))?;
        self.written += 1;
        Ok(())
    }

    pub fn written(&self) -> usize {
        self.written
    }

    pub fn finish(mut self) -> Result<usize, CorpusError> {
        self.out.flush().map_err(|e| self.fail(e))?;
        Ok(self.written)
    }
}

pub fn write_records<T, I>(records: I, path: &Path) -> Result<usize, CorpusError>
where
    T: Serialize,
    I: IntoIterator<Item = T>,
{
    let mut writer = RecordWriter::create(path)?;
    for r in records {
        writer.write(&r)?;
    }
    writer.finish()
}
