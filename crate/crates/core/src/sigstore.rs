//! Signature files and the bucket gather.
//!
//! # Signature file layout
//!
//! All integers are little-endian. The 64-byte header:
//!
//! | offset | size | field                         |
//! |-------:|-----:|-------------------------------|
//! | 0      | 4    | magic `LSHS`                  |
//! | 4      | 2    | format version (1)            |
//! | 6      | 2    | unit tag (0 byte, 1 codepoint)|
//! | 8      | 4    | H, hash functions             |
//! | 12     | 4    | b, bands                      |
//! | 16     | 4    | r, rows per band              |
//! | 20     | 4    | K, buckets per band           |
//! | 24     | 4    | L, shingle length             |
//! | 28     | 4    | bucket scale numerator        |
//! | 32     | 4    | bucket scale denominator      |
//! | 36     | 4    | source file ordinal           |
//! | 40     | 8    | hash family seed              |
//! | 48     | 8    | record count                  |
//! | 56     | 8    | config hash                   |
//!
//! followed by `record count` fixed-size records of
//! `doc_id: u64, H x u32 signature values, b x u32 bucket ids`.
//!
//! # Gather
//!
//! Bucket contents are collected by scanning every signature file once per
//! pass. A pass covers either one band and `C` consecutive bucket ids, or
//! (when `C = K`) a worker's whole band range. Within a pass each document's
//! signature is held once, however many of the pass's buckets it lands in.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::compare::BucketBatch;
use crate::error::{Error, IoContext, Result};
use crate::lsh::{band_partition, BucketKey, BucketScale};
use crate::minhash::Unit;

pub const MAGIC: &[u8; 4] = b"LSHS";
pub const FORMAT_VERSION: u16 = 1;
pub const HEADER_BYTES: usize = 64;
pub const SIGNATURE_EXT: &str = "lshs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureFileHeader {
    pub version: u16,
    pub unit: Unit,
    pub hashes: u32,
    pub bands: u32,
    pub rows: u32,
    pub buckets: u32,
    pub shingle_len: u32,
    pub scale: BucketScale,
    pub source_ordinal: u32,
    pub seed: u64,
    pub record_count: u64,
    pub config_hash: u64,
}

impl SignatureFileHeader {
    pub fn record_bytes(&self) -> usize {
        record_bytes(self.hashes as usize, self.bands as usize)
    }

    pub fn encode(&self) -> [u8; HEADER_BYTES] {
        let mut out = [0u8; HEADER_BYTES];
        out[0..4].copy_from_slice(MAGIC);
        out[4..6].copy_from_slice(&self.version.to_le_bytes());
        out[6..8].copy_from_slice(&self.unit.tag().to_le_bytes());
        out[8..12].copy_from_slice(&self.hashes.to_le_bytes());
        out[12..16].copy_from_slice(&self.bands.to_le_bytes());
        out[16..20].copy_from_slice(&self.rows.to_le_bytes());
        out[20..24].copy_from_slice(&self.buckets.to_le_bytes());
        out[24..28].copy_from_slice(&self.shingle_len.to_le_bytes());
        out[28..32].copy_from_slice(&self.scale.num.to_le_bytes());
        out[32..36].copy_from_slice(&self.scale.den.to_le_bytes());
        out[36..40].copy_from_slice(&self.source_ordinal.to_le_bytes());
        out[40..48].copy_from_slice(&self.seed.to_le_bytes());
        out[48..56].copy_from_slice(&self.record_count.to_le_bytes());
        out[56..64].copy_from_slice(&self.config_hash.to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8; HEADER_BYTES], path: &Path) -> Result<Self> {
        if &bytes[0..4] != MAGIC {
            return Err(Error::corrupt(path, "bad magic"));
        }
        let u16_at = |o: usize| u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap());
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let u64_at = |o: usize| u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
        let version = u16_at(4);
        if version != FORMAT_VERSION {
            return Err(Error::corrupt(
                path,
                format!("unsupported format version {version}"),
            ));
        }
        let unit = Unit::from_tag(u16_at(6))
            .ok_or_else(|| Error::corrupt(path, format!("unknown unit tag {}", u16_at(6))))?;
        let header = SignatureFileHeader {
            version,
            unit,
            hashes: u32_at(8),
            bands: u32_at(12),
            rows: u32_at(16),
            buckets: u32_at(20),
            shingle_len: u32_at(24),
            scale: BucketScale {
                num: u32_at(28),
                den: u32_at(32),
            },
            source_ordinal: u32_at(36),
            seed: u64_at(40),
            record_count: u64_at(48),
            config_hash: u64_at(56),
        };
        if header.hashes == 0
            || header.bands == 0
            || header.rows == 0
            || u64::from(header.bands) * u64::from(header.rows) != u64::from(header.hashes)
            || header.buckets == 0
        {
            return Err(Error::corrupt(path, "inconsistent banding parameters"));
        }
        Ok(header)
    }

    /// Headers of one run agree on everything but record count and ordinal.
    pub fn compatible_with(&self, other: &SignatureFileHeader) -> bool {
        let strip = |h: &SignatureFileHeader| SignatureFileHeader {
            record_count: 0,
            source_ordinal: 0,
            ..*h
        };
        strip(self) == strip(other)
    }
}

pub fn record_bytes(hashes: usize, bands: usize) -> usize {
    8 + 4 * hashes + 4 * bands
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureRecord {
    pub doc_id: u64,
    pub values: Vec<u32>,
    pub buckets: Vec<u32>,
}

/// Streams records into a signature file. The record count in the header is
/// patched on [`SignatureWriter::finish`].
pub struct SignatureWriter {
    path: PathBuf,
    header: SignatureFileHeader,
    out: BufWriter<File>,
    written: u64,
    buf: Vec<u8>,
}

impl SignatureWriter {
    pub fn create(path: &Path, header: SignatureFileHeader) -> Result<Self> {
        let file = File::create(path).at(path)?;
        let mut out = BufWriter::with_capacity(1 << 20, file);
        out.write_all(&header.encode()).at(path)?;
        Ok(SignatureWriter {
            path: path.to_path_buf(),
            header,
            out,
            written: 0,
            buf: Vec::with_capacity(header.record_bytes()),
        })
    }

    pub fn push(&mut self, doc_id: u64, values: &[u32], buckets: &[u32]) -> Result<()> {
        if values.len() != self.header.hashes as usize || buckets.len() != self.header.bands as usize {
            return Err(Error::config(format!(
                "record for doc {doc_id} does not match the file header shape"
            )));
        }
        self.buf.clear();
        self.buf.extend_from_slice(&doc_id.to_le_bytes());
        for v in values.iter().chain(buckets) {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
        self.out.write_all(&self.buf).at(&self.path)?;
        self.written += 1;
        Ok(())
    }

    pub fn finish(self, fsync: bool) -> Result<SignatureFileHeader> {
        let path = self.path;
        let file = self
            .out
            .into_inner()
            .map_err(|e| Error::io(&path, e.into_error()))?;
        let mut file = file;
        let header = SignatureFileHeader {
            record_count: self.written,
            ..self.header
        };
        file.seek(SeekFrom::Start(48)).at(&path)?;
        file.write_all(&header.record_count.to_le_bytes()).at(&path)?;
        if fsync {
            file.sync_all().at(&path)?;
        }
        Ok(header)
    }
}

pub fn write_signature_file(
    header: &SignatureFileHeader,
    records: &[SignatureRecord],
    path: &Path,
    fsync: bool,
) -> Result<SignatureFileHeader> {
    let mut writer = SignatureWriter::create(path, *header)?;
    for r in records {
        writer.push(r.doc_id, &r.values, &r.buckets)?;
    }
    writer.finish(fsync)
}

/// Sequential reader over a signature file.
pub struct SignatureReader {
    path: PathBuf,
    header: SignatureFileHeader,
    input: BufReader<File>,
    remaining: u64,
    buf: Vec<u8>,
}

impl SignatureReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path).at(path)?;
        let len = file.metadata().at(path)?.len();
        let mut input = BufReader::with_capacity(1 << 20, file);
        let mut raw = [0u8; HEADER_BYTES];
        input
            .read_exact(&mut raw)
            .map_err(|_| Error::corrupt(path, "file shorter than the header"))?;
        let header = SignatureFileHeader::decode(&raw, path)?;
        let expected = header
            .record_count
            .checked_mul(header.record_bytes() as u64)
            .and_then(|b| b.checked_add(HEADER_BYTES as u64));
        if expected != Some(len) {
            return Err(Error::corrupt(
                path,
                format!(
                    "length {len} does not match {} records of {} bytes",
                    header.record_count,
                    header.record_bytes()
                ),
            ));
        }
        Ok(SignatureReader {
            path: path.to_path_buf(),
            header,
            input,
            remaining: header.record_count,
            buf: vec![0u8; header.record_bytes()],
        })
    }

    pub fn header(&self) -> &SignatureFileHeader {
        &self.header
    }

    /// Reads the next record into borrowed scratch space.
    pub fn next_raw(&mut self) -> Result<Option<RawRecord<'_>>> {
        if self.remaining == 0 {
            return Ok(None);
        }
        self.input
            .read_exact(&mut self.buf)
            .map_err(|_| Error::corrupt(&self.path, "truncated record"))?;
        self.remaining -= 1;
        Ok(Some(RawRecord {
            bytes: &self.buf,
            hashes: self.header.hashes as usize,
        }))
    }

    pub fn read_all(mut self) -> Result<(SignatureFileHeader, Vec<SignatureRecord>)> {
        let mut records = Vec::with_capacity(self.header.record_count as usize);
        while let Some(raw) = self.next_raw()? {
            records.push(raw.to_record());
        }
        Ok((self.header, records))
    }
}

/// A record view over the reader's buffer.
pub struct RawRecord<'a> {
    bytes: &'a [u8],
    hashes: usize,
}

impl RawRecord<'_> {
    pub fn doc_id(&self) -> u64 {
        u64::from_le_bytes(self.bytes[..8].try_into().unwrap())
    }

    fn u32_at(&self, index: usize) -> u32 {
        let o = 8 + 4 * index;
        u32::from_le_bytes(self.bytes[o..o + 4].try_into().unwrap())
    }

    pub fn bucket(&self, band: usize) -> u32 {
        self.u32_at(self.hashes + band)
    }

    pub fn values_into(&self, out: &mut Vec<u32>) {
        out.extend((0..self.hashes).map(|i| self.u32_at(i)));
    }

    pub fn to_record(&self) -> SignatureRecord {
        let bands = (self.bytes.len() - 8) / 4 - self.hashes;
        let mut values = Vec::with_capacity(self.hashes);
        self.values_into(&mut values);
        SignatureRecord {
            doc_id: self.doc_id(),
            values,
            buckets: (0..bands).map(|b| self.bucket(b)).collect(),
        }
    }
}

pub fn read_signature_file(path: &Path) -> Result<(SignatureFileHeader, Vec<SignatureRecord>)> {
    SignatureReader::open(path)?.read_all()
}

/// Reads and cross-checks the headers of all files of one run.
pub fn read_headers(files: &[PathBuf]) -> Result<Vec<SignatureFileHeader>> {
    let mut headers: Vec<SignatureFileHeader> = Vec::with_capacity(files.len());
    for path in files {
        let header = *SignatureReader::open(path)?.header();
        if let Some(first) = headers.first() {
            if !first.compatible_with(&header) {
                return Err(Error::IncompatibleRun(format!(
                    "{} was produced with different parameters than {}",
                    path.display(),
                    files[0].display()
                )));
            }
        }
        headers.push(header);
    }
    Ok(headers)
}

/// One scan over all signature files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatherPass {
    pub worker: usize,
    pub bands: Range<u32>,
    pub buckets: Range<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatherPlan {
    /// Bucket ids gathered per pass and band (`C`).
    pub buckets_per_pass: u32,
    pub buckets: u32,
    pub passes: Vec<GatherPass>,
    /// Estimated gather bytes per pass, `total / K * C`.
    pub pass_bytes_estimate: u64,
}

impl GatherPlan {
    pub fn passes_for(&self, worker: usize) -> impl Iterator<Item = (usize, &GatherPass)> {
        self.passes
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.worker == worker)
    }
}

/// Picks the largest `C` with `(total / K) * C * workers <= budget`, clamped
/// to `[1, K]`, and tiles every worker's band range with passes.
pub fn plan_gather(
    total_signature_bytes: u64,
    buckets: u32,
    bands: u32,
    workers: usize,
    memory_budget: u64,
) -> Result<GatherPlan> {
    if memory_budget == 0 {
        return Err(Error::config("memory budget must be positive"));
    }
    if buckets == 0 {
        return Err(Error::config("bucket count must be at least 1"));
    }
    let workers = workers.max(1);
    let k = u128::from(buckets);
    let demand = u128::from(total_signature_bytes) * workers as u128;
    let c = (u128::from(memory_budget) * k).checked_div(demand).unwrap_or(k);
    if c == 0 {
        return Err(Error::config(format!(
            "memory budget of {memory_budget} bytes cannot hold one bucket per pass for {workers} \
             workers ({total_signature_bytes} signature bytes over {buckets} buckets); \
             raise the budget or the bucket count"
        )));
    }
    let c = c.min(k) as u32;
    Ok(GatherPlan {
        buckets_per_pass: c,
        buckets,
        passes: tile_passes(bands, buckets, c, workers),
        pass_bytes_estimate: (u128::from(total_signature_bytes) * u128::from(c) / k) as u64,
    })
}

/// Plan with an explicit `C`, bypassing the memory bound.
pub fn plan_with_buckets_per_pass(
    total_signature_bytes: u64,
    buckets: u32,
    bands: u32,
    workers: usize,
    per_pass: u32,
) -> Result<GatherPlan> {
    if per_pass == 0 {
        return Err(Error::config("buckets per pass must be at least 1"));
    }
    let c = per_pass.min(buckets.max(1));
    Ok(GatherPlan {
        buckets_per_pass: c,
        buckets,
        passes: tile_passes(bands, buckets, c, workers.max(1)),
        pass_bytes_estimate: (u128::from(total_signature_bytes) * u128::from(c) / u128::from(buckets.max(1)))
            as u64,
    })
}

fn tile_passes(bands: u32, buckets: u32, per_pass: u32, workers: usize) -> Vec<GatherPass> {
    let mut passes = Vec::new();
    for (worker, range) in band_partition(bands as usize, workers).into_iter().enumerate() {
        if range.is_empty() {
            continue;
        }
        let range = range.start as u32..range.end as u32;
        if per_pass >= buckets {
            passes.push(GatherPass {
                worker,
                bands: range,
                buckets: 0..buckets,
            });
            continue;
        }
        for band in range {
            let mut start = 0;
            while start < buckets {
                let end = start.saturating_add(per_pass).min(buckets);
                passes.push(GatherPass {
                    worker,
                    bands: band..band + 1,
                    buckets: start..end,
                });
                start = end;
            }
        }
    }
    passes
}

/// Shared count of live gather bytes with a high-water mark.
#[derive(Debug, Default)]
pub struct MemoryTracker {
    current: AtomicUsize,
    peak: AtomicUsize,
}

impl MemoryTracker {
    pub fn new() -> Arc<Self> {
        Arc::new(MemoryTracker::default())
    }

    pub fn add(&self, bytes: usize) {
        let now = self.current.fetch_add(bytes, Ordering::SeqCst) + bytes;
        self.peak.fetch_max(now, Ordering::SeqCst);
    }

    pub fn sub(&self, bytes: usize) {
        self.current.fetch_sub(bytes, Ordering::SeqCst);
    }

    pub fn current(&self) -> usize {
        self.current.load(Ordering::SeqCst)
    }

    pub fn peak(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }
}

/// Bytes accounted to a tracker, released on drop.
pub struct TrackedBytes {
    tracker: Option<Arc<MemoryTracker>>,
    bytes: usize,
}

impl TrackedBytes {
    pub fn new(tracker: Option<Arc<MemoryTracker>>) -> Self {
        TrackedBytes { tracker, bytes: 0 }
    }

    pub fn set(&mut self, bytes: usize) {
        if let Some(t) = &self.tracker {
            if bytes > self.bytes {
                t.add(bytes - self.bytes);
            } else {
                t.sub(self.bytes - bytes);
            }
        }
        self.bytes = bytes;
    }
}

impl Drop for TrackedBytes {
    fn drop(&mut self) {
        self.set(0);
    }
}

/// Documents and bucket memberships collected by one pass.
pub struct GatheredPass {
    hashes: usize,
    doc_ids: Vec<u64>,
    values: Vec<u32>,
    /// (band, bucket, local doc index), sorted after the scan.
    entries: Vec<(u32, u32, u32)>,
    groups: Vec<Range<usize>>,
    accounted: TrackedBytes,
}

impl GatheredPass {
    fn heap_bytes(&self) -> usize {
        self.doc_ids.capacity() * 8
            + self.values.capacity() * 4
            + self.entries.capacity() * std::mem::size_of::<(u32, u32, u32)>()
            + self.groups.capacity() * std::mem::size_of::<Range<usize>>()
    }

    /// Buckets holding at least two documents.
    pub fn bucket_count(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn documents(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn keys(&self) -> impl Iterator<Item = BucketKey> + '_ {
        self.groups.iter().map(|g| {
            let (band, bucket, _) = self.entries[g.start];
            BucketKey { band, bucket }
        })
    }

    /// Materializes each bucket as a batch sorted by doc_id.
    pub fn batches(&self) -> impl Iterator<Item = (BucketKey, BucketBatch)> + '_ {
        self.groups.iter().map(|g| {
            let (band, bucket, _) = self.entries[g.start];
            let mut members: Vec<u32> = self.entries[g.clone()].iter().map(|e| e.2).collect();
            members.sort_unstable_by_key(|&i| self.doc_ids[i as usize]);
            let h = self.hashes;
            let mut ids = Vec::with_capacity(members.len());
            let mut values = Vec::with_capacity(members.len() * h);
            for &m in &members {
                let m = m as usize;
                ids.push(self.doc_ids[m]);
                values.extend_from_slice(&self.values[m * h..(m + 1) * h]);
            }
            let batch = BucketBatch::from_flat(ids, values, h).expect("gathered buckets are well formed");
            (BucketKey { band, bucket }, batch)
        })
    }

    pub fn into_map(self) -> BTreeMap<BucketKey, Vec<(u64, Vec<u32>)>> {
        self.batches()
            .map(|(key, batch)| {
                let members = (0..batch.len())
                    .map(|i| (batch.doc_ids()[i], batch.signature(i).to_vec()))
                    .collect();
                (key, members)
            })
            .collect()
    }
}

/// Scans all `files` and collects documents whose bucket id in any band of
/// `bands` lies in `buckets`. Buckets with fewer than two documents are
/// dropped.
pub fn scan_gather(
    files: &[PathBuf],
    bands: Range<u32>,
    buckets: Range<u32>,
    tracker: Option<Arc<MemoryTracker>>,
) -> Result<GatheredPass> {
    let headers = read_headers(files)?;
    let Some(first) = headers.first() else {
        return Ok(GatheredPass {
            hashes: 0,
            doc_ids: Vec::new(),
            values: Vec::new(),
            entries: Vec::new(),
            groups: Vec::new(),
            accounted: TrackedBytes::new(tracker),
        });
    };
    if bands.end > first.bands || buckets.end > first.buckets {
        return Err(Error::config(format!(
            "gather range bands {bands:?} buckets {buckets:?} exceeds b={} K={}",
            first.bands, first.buckets
        )));
    }
    let hashes = first.hashes as usize;
    let records: u64 = headers.iter().map(|h| h.record_count).sum();

    // Expected sizes assume bucket ids spread evenly over [0, K).
    let width = u64::from(buckets.end - buckets.start);
    let band_count = u64::from(bands.end - bands.start);
    let k = u64::from(first.buckets);
    let expected_entries = (records * band_count * width).div_ceil(k);
    let expected_docs = expected_entries.min(records);
    let headroom = |n: u64| (n + n / 50 + 16) as usize;

    let mut pass = GatheredPass {
        hashes,
        doc_ids: Vec::with_capacity(headroom(expected_docs)),
        values: Vec::with_capacity(headroom(expected_docs) * hashes),
        entries: Vec::with_capacity(headroom(expected_entries)),
        groups: Vec::new(),
        accounted: TrackedBytes::new(tracker),
    };
    let step_docs = (expected_docs / 16 + 16) as usize;
    let step_entries = (expected_entries / 16 + 16) as usize;
    let bytes = pass.heap_bytes();
    pass.accounted.set(bytes);

    for path in files {
        let mut reader = SignatureReader::open(path)?;
        while let Some(rec) = reader.next_raw()? {
            let mut local: Option<u32> = None;
            for band in bands.clone() {
                let bucket = rec.bucket(band as usize);
                if !buckets.contains(&bucket) {
                    continue;
                }
                let idx = match local {
                    Some(i) => i,
                    None => {
                        if pass.doc_ids.len() == pass.doc_ids.capacity() {
                            pass.doc_ids.reserve_exact(step_docs);
                            pass.values.reserve_exact(step_docs * hashes);
                        }
                        let i = u32::try_from(pass.doc_ids.len())
                            .map_err(|_| Error::config("too many documents in one gather pass"))?;
                        pass.doc_ids.push(rec.doc_id());
                        rec.values_into(&mut pass.values);
                        local = Some(i);
                        i
                    }
                };
                if pass.entries.len() == pass.entries.capacity() {
                    pass.entries.reserve_exact(step_entries);
                }
                pass.entries.push((band, bucket, idx));
            }
            if local.is_some() {
                let bytes = pass.heap_bytes();
                if bytes != pass.accounted.bytes {
                    pass.accounted.set(bytes);
                }
            }
        }
    }

    pass.entries.sort_unstable();
    let mut groups = Vec::new();
    let mut start = 0;
    while start < pass.entries.len() {
        let key = (pass.entries[start].0, pass.entries[start].1);
        let mut end = start + 1;
        while end < pass.entries.len() && (pass.entries[end].0, pass.entries[end].1) == key {
            end += 1;
        }
        if end - start >= 2 {
            groups.push(start..end);
        }
        start = end;
    }
    pass.groups = groups;
    let bytes = pass.heap_bytes();
    pass.accounted.set(bytes);
    Ok(pass)
}

/// Run-level manifest written next to the signature files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub header: SignatureFileHeader,
    pub signature_files: Vec<SignatureFileEntry>,
    pub docs_scanned: u64,
    pub docs_kept: u64,
    pub rejects: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureFileEntry {
    pub path: PathBuf,
    pub input: PathBuf,
    pub source_ordinal: u32,
    pub records: u64,
    pub bytes: u64,
}

impl RunManifest {
    pub fn total_signature_bytes(&self) -> u64 {
        self.signature_files.iter().map(|f| f.bytes).sum()
    }

    pub fn paths(&self) -> Vec<PathBuf> {
        self.signature_files.iter().map(|f| f.path.clone()).collect()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).map_err(|e| Error::io(path, e.into()))?;
        write_atomic(path, &json)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).at(path)?;
        serde_json::from_slice(&bytes).map_err(|e| Error::corrupt(path, e.to_string()))
    }
}

/// Writes via a temporary sibling and a rename.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(&tmp)
            .at(&tmp)?;
        f.write_all(bytes).at(&tmp)?;
    }
    std::fs::rename(&tmp, path).at(path)
}
