//! JSONL ingestion, NFC normalization and the length filter.
//!
//! Every input line that is not a usable document ends up in a reject log
//! with a reason, so `records + rejects` always accounts for the whole file.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use unicode_normalization::{is_nfc_quick, IsNormalized, UnicodeNormalization};

use crate::error::{Error, IoContext, Result};

pub const DEFAULT_TEXT_FIELD: &str = "text";
pub const DEFAULT_MIN_CHARS: usize = 200;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub file_ordinal: u32,
    /// Index among the valid records of the file.
    pub record_ordinal: u64,
    /// 1-based line number in the source file.
    pub line: u64,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanDocument {
    pub doc_id: u64,
    /// NFC-normalized text.
    pub text: String,
    /// Code points in `text`.
    pub char_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Preprocessed {
    Clean(CleanDocument),
    Filtered { char_count: usize },
}

/// One line of the reject log.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub file: String,
    /// 1-based physical line number.
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Default, Clone)]
pub struct RejectLog {
    pub entries: Vec<Reject>,
}

impl RejectLog {
    pub fn push(&mut self, file: &Path, line: u64, reason: impl Into<String>) {
        self.entries.push(Reject {
            file: file.display().to_string(),
            line,
            reason: reason.into(),
        });
    }

    pub fn extend(&mut self, other: RejectLog) {
        self.entries.extend(other.entries);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sorts by (file, line) so logs merged from several workers are stable.
    pub fn sort(&mut self) {
        self.entries
            .sort_by(|a, b| (&a.file, a.line).cmp(&(&b.file, b.line)));
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).at(path)?;
        let mut out = BufWriter::new(file);
        for entry in &self.entries {
            serde_json::to_writer(&mut out, entry).map_err(|e| Error::io(path, e.into()))?;
            out.write_all(b"\n").at(path)?;
        }
        out.flush().at(path)
    }
}

/// A line-by-line JSONL reader yielding documents and recording rejects.
pub struct JsonlReader {
    path: PathBuf,
    file_ordinal: u32,
    text_field: String,
    lines: std::io::Lines<BufReader<File>>,
    line_no: u64,
    next_record: u64,
    rejects: RejectLog,
}

impl JsonlReader {
    pub fn open(path: &Path, file_ordinal: u32, text_field: &str) -> Result<Self> {
        let file = File::open(path).at(path)?;
        Ok(JsonlReader {
            path: path.to_path_buf(),
            file_ordinal,
            text_field: text_field.to_string(),
            lines: BufReader::with_capacity(1 << 20, file).lines(),
            line_no: 0,
            next_record: 0,
            rejects: RejectLog::default(),
        })
    }

    pub fn rejects(&self) -> &RejectLog {
        &self.rejects
    }

    pub fn into_rejects(self) -> RejectLog {
        self.rejects
    }

    /// Reads up to `max` documents; an empty vector means end of file.
    pub fn next_batch(&mut self, max: usize) -> Result<Vec<RawDocument>> {
        let mut batch = Vec::with_capacity(max.min(4096));
        while batch.len() < max {
            match self.next() {
                Some(doc) => batch.push(doc?),
                None => break,
            }
        }
        Ok(batch)
    }

    fn parse_line(&self, line: &str) -> std::result::Result<String, String> {
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| format!("invalid json: {e}"))?;
        let obj = value
            .as_object()
            .ok_or_else(|| "line is not a JSON object".to_string())?;
        match obj.get(&self.text_field) {
            Some(serde_json::Value::String(s)) => Ok(s.clone()),
            Some(_) => Err(format!("field `{}` is not a string", self.text_field)),
            None => Err(format!("missing text field `{}`", self.text_field)),
        }
    }
}

impl Iterator for JsonlReader {
    type Item = Result<RawDocument>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            let line = match self.lines.next()? {
                Ok(line) => line,
                Err(e) => return Some(Err(Error::io(&self.path, e))),
            };
            self.line_no += 1;
            if line.trim().is_empty() {
                continue;
            }
            match self.parse_line(&line) {
                Ok(text) => {
                    let doc = RawDocument {
                        file_ordinal: self.file_ordinal,
                        record_ordinal: self.next_record,
                        line: self.line_no,
                        text,
                    };
                    self.next_record += 1;
                    return Some(Ok(doc));
                }
                Err(reason) => {
                    let (path, line_no) = (self.path.clone(), self.line_no);
                    self.rejects.push(&path, line_no, reason);
                }
            }
        }
    }
}

/// Loads a whole JSONL file. Malformed lines go to the returned reject log.
pub fn load_jsonl_file(
    path: &Path,
    file_ordinal: u32,
    text_field: &str,
) -> Result<(Vec<RawDocument>, RejectLog)> {
    let mut reader = JsonlReader::open(path, file_ordinal, text_field)?;
    let docs = reader.by_ref().collect::<Result<Vec<_>>>()?;
    Ok((docs, reader.into_rejects()))
}

/// NFC-normalizes `text`, borrowing when it is already normalized.
pub fn normalize_nfc(text: &str) -> std::borrow::Cow<'_, str> {
    if is_nfc_quick(text.chars()) == IsNormalized::Yes {
        std::borrow::Cow::Borrowed(text)
    } else {
        std::borrow::Cow::Owned(text.nfc().collect())
    }
}

/// Normalizes and length-filters a document. Character counts are code points
/// of the normalized text, spaces included.
pub fn preprocess(doc: RawDocument, doc_id: u64, min_chars: usize) -> Preprocessed {
    let text = match normalize_nfc(&doc.text) {
        std::borrow::Cow::Borrowed(_) => doc.text,
        std::borrow::Cow::Owned(s) => s,
    };
    let char_count = text.chars().count();
    if char_count < min_chars {
        Preprocessed::Filtered { char_count }
    } else {
        Preprocessed::Clean(CleanDocument {
            doc_id,
            text,
            char_count,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    /// Valid JSONL records in the file.
    pub records: u64,
    /// Records surviving normalization and the length filter.
    pub kept: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub files: Vec<ManifestEntry>,
    pub text_field: String,
    pub min_chars: usize,
}

impl CorpusManifest {
    /// Total valid records `N` over all files.
    pub fn total_records(&self) -> u64 {
        self.files.iter().map(|f| f.records).sum()
    }

    /// Documents that reach hashing; this sizes the bucket count.
    pub fn total_kept(&self) -> u64 {
        self.files.iter().map(|f| f.kept).sum()
    }

    /// First doc_id of every file (prefix sums of record counts).
    pub fn offsets(&self) -> Vec<u64> {
        let mut acc = 0;
        self.files
            .iter()
            .map(|f| {
                let start = acc;
                acc += f.records;
                start
            })
            .collect()
    }
}

/// Sorts `paths` lexicographically, rejects duplicates and scans every file
/// to fill in record counts.
pub fn build_manifest(paths: &[PathBuf], text_field: &str, min_chars: usize) -> Result<CorpusManifest> {
    if paths.is_empty() {
        return Err(Error::config("no input files given"));
    }
    let mut sorted = paths.to_vec();
    sorted.sort();
    let mut seen = HashSet::new();
    for p in &sorted {
        let key = std::fs::canonicalize(p).unwrap_or_else(|_| p.clone());
        if !seen.insert(key) {
            return Err(Error::config(format!("duplicate input path {}", p.display())));
        }
    }
    if sorted.len() > u32::MAX as usize {
        return Err(Error::config("too many input files"));
    }

    let mut files = Vec::with_capacity(sorted.len());
    for (ordinal, path) in sorted.into_iter().enumerate() {
        let (mut records, mut kept) = (0u64, 0u64);
        for doc in JsonlReader::open(&path, ordinal as u32, text_field)? {
            let doc = doc?;
            records += 1;
            let normalized = normalize_nfc(&doc.text);
            if normalized.chars().count() >= min_chars {
                kept += 1;
            }
        }
        files.push(ManifestEntry { path, records, kept });
    }
    Ok(CorpusManifest {
        files,
        text_field: text_field.to_string(),
        min_chars,
    })
}
