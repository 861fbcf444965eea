//! Run configuration: defaults, config-file loading and the config hashes
//! stamped into artifacts.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::compare::Threshold;
use crate::corpus::{DEFAULT_MIN_CHARS, DEFAULT_TEXT_FIELD};
use crate::error::{Error, IoContext, Result};
use crate::lsh::BucketScale;
use crate::minhash::Unit;

pub const DEFAULT_HASHES: usize = 128;
pub const DEFAULT_BANDS: usize = 16;
pub const DEFAULT_ROWS: usize = 8;
pub const DEFAULT_SHINGLE_LEN: usize = 5;
pub const DEFAULT_SEED: u64 = 1234;
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;
pub const DEFAULT_BATCH_DOCS: usize = 2048;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub workspace: PathBuf,
    pub hashes: usize,
    pub bands: usize,
    pub rows: usize,
    pub shingle_len: usize,
    pub unit: Unit,
    pub threshold: Threshold,
    pub bucket_scale: BucketScale,
    pub min_chars: usize,
    pub seed: u64,
    pub workers: usize,
    pub memory_budget: u64,
    pub buckets_per_pass: Option<u32>,
    pub text_field: String,
    pub batch_docs: usize,
    pub fsync: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            inputs: Vec::new(),
            workspace: PathBuf::from("lshdedup-work"),
            hashes: DEFAULT_HASHES,
            bands: DEFAULT_BANDS,
            rows: DEFAULT_ROWS,
            shingle_len: DEFAULT_SHINGLE_LEN,
            unit: Unit::Byte,
            threshold: Threshold { num: 4, den: 5 },
            bucket_scale: BucketScale::default(),
            min_chars: DEFAULT_MIN_CHARS,
            seed: DEFAULT_SEED,
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
            memory_budget: DEFAULT_MEMORY_BUDGET,
            buckets_per_pass: None,
            text_field: DEFAULT_TEXT_FIELD.to_string(),
            batch_docs: DEFAULT_BATCH_DOCS,
            fsync: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hashes == 0 || self.bands == 0 || self.rows == 0 {
            return Err(Error::config("hashes, bands and rows must be positive"));
        }
        if self.hashes != self.bands * self.rows {
            return Err(Error::config(format!(
                "hashes ({}) must equal bands ({}) x rows ({})",
                self.hashes, self.bands, self.rows
            )));
        }
        if u32::try_from(self.hashes).is_err() {
            return Err(Error::config("too many hash functions"));
        }
        if self.shingle_len == 0 || u32::try_from(self.shingle_len).is_err() {
            return Err(Error::config("shingle length must be a positive 32-bit value"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers must be at least 1"));
        }
        if self.memory_budget == 0 {
            return Err(Error::config("memory budget must be positive"));
        }
        if self.buckets_per_pass == Some(0) {
            return Err(Error::config("buckets per pass must be at least 1"));
        }
        if self.batch_docs == 0 {
            return Err(Error::config("batch size must be at least 1"));
        }
        if self.text_field.is_empty() {
            return Err(Error::config("text field name must not be empty"));
        }
        Ok(())
    }

    /// Hash of everything that determines the signature files: hashing and
    /// banding parameters, preprocessing, and the input files (path and size).
    pub fn signature_hash(&self) -> Result<u64> {
        let mut inputs = self.inputs.clone();
        inputs.sort();
        let mut h = Sha256::new();
        h.update(b"lshdedup-signatures-v1\n");
        let params = format!(
            "H={} b={} r={} L={} unit={} scale={} min_chars={} seed={} field={}\n",
            self.hashes,
            self.bands,
            self.rows,
            self.shingle_len,
            self.unit,
            self.bucket_scale,
            self.min_chars,
            self.seed,
            self.text_field
        );
        h.update(params.as_bytes());
        for path in &inputs {
            let len = std::fs::metadata(path).at(path)?.len();
            h.update(format!("{}\t{len}\n", path.display()).as_bytes());
        }
        Ok(digest_u64(h))
    }

    /// Signature hash extended with the comparison threshold.
    pub fn compare_hash(&self) -> Result<u64> {
        let mut h = Sha256::new();
        h.update(b"lshdedup-compare-v1\n");
        h.update(self.signature_hash()?.to_le_bytes());
        h.update(format!("theta={}\n", self.threshold).as_bytes());
        Ok(digest_u64(h))
    }

    /// Applies the keys set in a config file on top of `self`.
    pub fn apply_file(&mut self, file: ConfigFile) -> Result<()> {
        if let Some(inputs) = file.input {
            self.inputs = inputs.into_vec();
        }
        if let Some(ws) = file.workspace {
            self.workspace = ws;
        }
        set(&mut self.hashes, file.hashes);
        set(&mut self.bands, file.bands);
        set(&mut self.rows, file.rows);
        set(&mut self.shingle_len, file.shingle_len);
        if let Some(u) = file.unit {
            self.unit = u.parse()?;
        }
        if let Some(t) = file.threshold {
            self.threshold = t.to_threshold()?;
        }
        if let Some(s) = file.bucket_scale {
            self.bucket_scale = s.to_scale()?;
        }
        set(&mut self.min_chars, file.min_chars);
        set(&mut self.seed, file.seed);
        set(&mut self.workers, file.workers);
        if let Some(m) = file.memory_budget {
            self.memory_budget = m.to_bytes()?;
        }
        if file.buckets_per_pass.is_some() {
            self.buckets_per_pass = file.buckets_per_pass;
        }
        if let Some(f) = file.text_field {
            self.text_field = f;
        }
        set(&mut self.batch_docs, file.batch_docs);
        set(&mut self.fsync, file.fsync);
        Ok(())
    }

    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).at(path)?;
        let file: ConfigFile =
            toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        self.apply_file(file)
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn digest_u64(h: Sha256) -> u64 {
    let out = h.finalize();
    u64::from_le_bytes(out[..8].try_into().unwrap())
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany {
    One(PathBuf),
    Many(Vec<PathBuf>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<PathBuf> {
        match self {
            OneOrMany::One(p) => vec![p],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum NumOrText {
    Int(u64),
    Float(f64),
    Text(String),
}

impl NumOrText {
    fn to_threshold(&self) -> Result<Threshold> {
        match self {
            NumOrText::Int(i) => Threshold::new(*i, 1),
            NumOrText::Float(f) => Threshold::from_f64(*f),
            NumOrText::Text(s) => s.parse(),
        }
    }

    fn to_scale(&self) -> Result<BucketScale> {
        match self {
            NumOrText::Int(i) => BucketScale::new(
                u32::try_from(*i).map_err(|_| Error::config("bucket scale too large"))?,
                1,
            ),
            NumOrText::Float(f) => format!("{f}").parse(),
            NumOrText::Text(s) => s.parse(),
        }
    }

    fn to_bytes(&self) -> Result<u64> {
        match self {
            NumOrText::Int(i) => Ok(*i),
            NumOrText::Float(_) => Err(Error::config(
                "memory budget must be an integer or a size like 4GiB",
            )),
            NumOrText::Text(s) => parse_bytes(s),
        }
    }
}

/// `key = value` config file; every key is optional and mirrors a CLI flag.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct ConfigFile {
    pub input: Option<OneOrMany>,
    pub workspace: Option<PathBuf>,
    pub hashes: Option<usize>,
    pub bands: Option<usize>,
    pub rows: Option<usize>,
    pub shingle_len: Option<usize>,
    pub unit: Option<String>,
    pub threshold: Option<NumOrText>,
    pub bucket_scale: Option<NumOrText>,
    pub min_chars: Option<usize>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub memory_budget: Option<NumOrText>,
    pub buckets_per_pass: Option<u32>,
    pub text_field: Option<String>,
    pub batch_docs: Option<usize>,
    pub fsync: Option<bool>,
}

/// Parses `1024`, `64K`, `512MiB`, `4G`, `4GB`... Suffixes are binary.
pub fn parse_bytes(s: &str) -> Result<u64> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, suffix) = s.split_at(split);
    let n: u64 = digits
        .parse()
        .map_err(|_| Error::config(format!("bad byte size `{s}`")))?;
    let mult: u64 = match suffix.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" | "kib" => 1 << 10,
        "m" | "mb" | "mib" => 1 << 20,
        "g" | "gb" | "gib" => 1 << 30,
        "t" | "tb" | "tib" => 1 << 40,
        _ => return Err(Error::config(format!("bad byte size `{s}`"))),
    };
    n.checked_mul(mult)
        .ok_or_else(|| Error::config(format!("byte size `{s}` overflows")))
}
