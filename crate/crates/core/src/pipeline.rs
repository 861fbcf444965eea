//! The three pipeline stages and the end-to-end run.
//!
//! Workspace layout:
//!
//! ```text
//! run.json                 hash-stage manifest
//! rejects.jsonl            malformed or filtered input records
//! signatures/*.lshs        one signature file per input file
//! compare.json             gather-compare manifest
//! pairs/wWWW-pPPPPP.pairs  one pair file per worker per pass
//! report/                  groups.jsonl, removal.txt, summary.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::mpsc::sync_channel;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::compare::{compare_bucket, read_pairs, sort_dedup_pairs, write_pairs, DuplicatePair};
use crate::config::RunConfig;
use crate::corpus::{build_manifest, preprocess, JsonlReader, Preprocessed, RawDocument, RejectLog};
use crate::error::{Error, IoContext, Result};
use crate::graph::{components, emit_report, union_pairs, DedupReport};
use crate::lsh::{band_buckets, BandingConfig};
use crate::minhash::{derive_family, signature_of_document, HashFamily};
use crate::sigstore::{
    plan_gather, plan_with_buckets_per_pass, read_headers, scan_gather, write_atomic, GatherPlan,
    MemoryTracker, RunManifest, SignatureFileEntry, SignatureFileHeader, SignatureWriter, FORMAT_VERSION,
    SIGNATURE_EXT,
};

pub const RUN_MANIFEST: &str = "run.json";
pub const COMPARE_MANIFEST: &str = "compare.json";
pub const REJECTS_FILE: &str = "rejects.jsonl";
pub const SIGNATURE_DIR: &str = "signatures";
pub const PAIRS_DIR: &str = "pairs";
pub const REPORT_DIR: &str = "report";

#[derive(Debug, Clone)]
pub struct HashOutcome {
    pub run: RunManifest,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareManifest {
    pub config_hash: String,
    pub signature_config_hash: String,
    pub workers: usize,
    pub memory_budget: u64,
    pub buckets_per_pass: u32,
    pub buckets: u32,
    pub passes: usize,
    pub pass_bytes_estimate: u64,
    /// Largest gather footprint observed across concurrent workers.
    pub peak_gather_bytes: u64,
    /// Pair file names under `pairs/`, sorted.
    pub pair_files: Vec<String>,
    pub pairs_written: u64,
}

#[derive(Debug, Clone)]
pub struct CompareOutcome {
    pub manifest: CompareManifest,
    pub plan: GatherPlan,
    pub elapsed: Duration,
}

#[derive(Debug, Clone)]
pub struct UnionOutcome {
    pub report: DedupReport,
    pub elapsed: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub hash_secs: f64,
    pub compare_secs: f64,
    pub union_secs: f64,
    pub total_secs: f64,
}

#[derive(Debug, Clone)]
pub struct DedupOutcome {
    pub report: DedupReport,
    pub run: RunManifest,
    pub compare: CompareManifest,
    pub timings: StageTimings,
}

fn remove_if_exists(path: &Path) -> Result<()> {
    let result = if path.is_dir() {
        std::fs::remove_dir_all(path)
    } else {
        std::fs::remove_file(path)
    };
    match result {
        Err(e) if e.kind() != std::io::ErrorKind::NotFound => Err(Error::io(path, e)),
        _ => Ok(()),
    }
}

fn signature_file_name(ordinal: usize, input: &Path) -> String {
    let stem = input
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "input".to_string());
    format!("{ordinal:05}-{stem}.{SIGNATURE_EXT}")
}

/// Hash stage: every input file becomes a signature file.
pub fn run_hash(cfg: &RunConfig) -> Result<HashOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let manifest = build_manifest(&cfg.inputs, &cfg.text_field, cfg.min_chars)?;
    let kept = manifest.total_kept();
    let banding = BandingConfig::for_corpus(cfg.bands, cfg.rows, kept.max(1), cfg.bucket_scale)?;
    let family = derive_family(cfg.seed, cfg.hashes, cfg.shingle_len, cfg.unit)?;
    let config_hash = cfg.signature_hash()?;
    log::info!(
        "hash: {} files, {} records, {} kept, K = {}",
        manifest.files.len(),
        manifest.total_records(),
        kept,
        banding.buckets
    );

    let ws = &cfg.workspace;
    std::fs::create_dir_all(ws).at(ws)?;
    for stale in [
        RUN_MANIFEST,
        COMPARE_MANIFEST,
        REJECTS_FILE,
        SIGNATURE_DIR,
        PAIRS_DIR,
        REPORT_DIR,
    ] {
        remove_if_exists(&ws.join(stale))?;
    }
    let sig_dir = ws.join(SIGNATURE_DIR);
    std::fs::create_dir_all(&sig_dir).at(&sig_dir)?;

    let template = SignatureFileHeader {
        version: FORMAT_VERSION,
        unit: cfg.unit,
        hashes: cfg.hashes as u32,
        bands: cfg.bands as u32,
        rows: cfg.rows as u32,
        buckets: banding.buckets,
        shingle_len: cfg.shingle_len as u32,
        scale: cfg.bucket_scale,
        source_ordinal: 0,
        seed: cfg.seed,
        record_count: 0,
        config_hash,
    };
    let offsets = manifest.offsets();
    let jobs: Vec<FileJob> = manifest
        .files
        .iter()
        .enumerate()
        .map(|(i, entry)| FileJob {
            ordinal: i as u32,
            input: entry.path.clone(),
            output: sig_dir.join(signature_file_name(i, &entry.path)),
            first_doc_id: offsets[i],
            expected_kept: entry.kept,
        })
        .collect();

    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let results: Mutex<Vec<Option<FileResult>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let workers = cfg.workers.min(jobs.len()).max(1);
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                if abort.load(Ordering::Relaxed) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let result = hash_file(cfg, &family, &banding, template, job);
                if result.is_err() {
                    abort.store(true, Ordering::Relaxed);
                }
                results.lock().unwrap()[i] = Some(result);
            });
        }
    });

    let mut entries = Vec::with_capacity(jobs.len());
    let mut rejects = RejectLog::default();
    for result in results.into_inner().unwrap() {
        match result {
            Some(Ok((entry, file_rejects))) => {
                entries.push(entry);
                rejects.extend(file_rejects);
            }
            Some(Err(e)) => return Err(e),
            // Skipped after another file failed; that error is returned above.
            None => {}
        }
    }
    rejects.sort();
    rejects.write_jsonl(&ws.join(REJECTS_FILE))?;

    let run = RunManifest {
        config_hash: format!("{config_hash:016x}"),
        header: template,
        docs_scanned: manifest.total_records(),
        docs_kept: entries.iter().map(|e| e.records).sum(),
        rejects: rejects.len() as u64,
        signature_files: entries,
    };
    run.write(&ws.join(RUN_MANIFEST))?;
    Ok(HashOutcome {
        run,
        elapsed: start.elapsed(),
    })
}

type FileResult = Result<(SignatureFileEntry, RejectLog)>;

struct FileJob {
    ordinal: u32,
    input: PathBuf,
    output: PathBuf,
    first_doc_id: u64,
    expected_kept: u64,
}

/// Hashes one input file. A reader thread parses the next batch while this
/// thread hashes the current one.
fn hash_file(
    cfg: &RunConfig,
    family: &HashFamily,
    banding: &BandingConfig,
    template: SignatureFileHeader,
    job: &FileJob,
) -> Result<(SignatureFileEntry, RejectLog)> {
    let mut header = template;
    header.source_ordinal = job.ordinal;
    let mut writer = SignatureWriter::create(&job.output, header)?;
    let mut reader = JsonlReader::open(&job.input, job.ordinal, &cfg.text_field)?;
    let batch_docs = cfg.batch_docs;
    let (tx, rx) = sync_channel::<Result<Vec<RawDocument>>>(0);
    let mut rejects = RejectLog::default();

    let (consumed, parse_rejects) = std::thread::scope(|s| {
        let handle = s.spawn(move || {
            loop {
                match reader.next_batch(batch_docs) {
                    Ok(batch) if batch.is_empty() => break,
                    Ok(batch) => {
                        if tx.send(Ok(batch)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
            reader.into_rejects()
        });
        let consumed = (|| -> Result<()> {
            for batch in rx.iter() {
                for doc in batch? {
                    hash_document(cfg, family, banding, job, doc, &mut writer, &mut rejects)?;
                }
            }
            Ok(())
        })();
        drop(rx);
        (consumed, handle.join().expect("reader thread panicked"))
    });
    consumed?;
    rejects.extend(parse_rejects);

    let header = writer.finish(cfg.fsync)?;
    if header.record_count != job.expected_kept {
        log::warn!(
            "{}: {} documents kept, manifest scan counted {}; was the file modified?",
            job.input.display(),
            header.record_count,
            job.expected_kept
        );
    }
    let bytes = std::fs::metadata(&job.output).at(&job.output)?.len();
    Ok((
        SignatureFileEntry {
            path: job.output.clone(),
            input: job.input.clone(),
            source_ordinal: job.ordinal,
            records: header.record_count,
            bytes,
        },
        rejects,
    ))
}

fn hash_document(
    cfg: &RunConfig,
    family: &HashFamily,
    banding: &BandingConfig,
    job: &FileJob,
    doc: RawDocument,
    writer: &mut SignatureWriter,
    rejects: &mut RejectLog,
) -> Result<()> {
    let line = doc.line;
    let doc_id = job.first_doc_id + doc.record_ordinal;
    match preprocess(doc, doc_id, cfg.min_chars) {
        Preprocessed::Filtered { char_count } => {
            rejects.push(
                &job.input,
                line,
                format!("{char_count} characters, below the minimum of {}", cfg.min_chars),
            );
        }
        Preprocessed::Clean(clean) => match signature_of_document(&clean, family) {
            Ok(sig) => {
                let buckets = band_buckets(&sig.values, banding)?;
                writer.push(doc_id, &sig.values, &buckets)?;
            }
            Err(Error::ShortDocument {
                units, shingle_len, ..
            }) => {
                rejects.push(
                    &job.input,
                    line,
                    format!("{units} units, shorter than one {shingle_len}-unit shingle"),
                );
            }
            Err(e) => return Err(e),
        },
    }
    Ok(())
}

fn load_run(cfg: &RunConfig, stage: &str) -> Result<RunManifest> {
    let path = cfg.workspace.join(RUN_MANIFEST);
    if !path.exists() {
        return Err(Error::prerequisite(
            stage,
            format!(
                "no hash results in {}; run the hash stage first",
                cfg.workspace.display()
            ),
        ));
    }
    let run = RunManifest::read(&path)?;
    let expected = format!("{:016x}", cfg.signature_hash()?);
    if run.config_hash != expected {
        return Err(Error::IncompatibleRun(format!(
            "signatures in {} were produced with a different configuration or input set \
             (config hash {} vs {expected}); rerun the hash stage",
            cfg.workspace.display(),
            run.config_hash
        )));
    }
    Ok(run)
}

fn load_compare(cfg: &RunConfig, stage: &str) -> Result<CompareManifest> {
    let path = cfg.workspace.join(COMPARE_MANIFEST);
    if !path.exists() {
        return Err(Error::prerequisite(
            stage,
            format!(
                "no pair files in {}; run gather-compare first",
                cfg.workspace.display()
            ),
        ));
    }
    let bytes = std::fs::read(&path).at(&path)?;
    let manifest: CompareManifest =
        serde_json::from_slice(&bytes).map_err(|e| Error::corrupt(&path, e.to_string()))?;
    let expected = format!("{:016x}", cfg.compare_hash()?);
    if manifest.config_hash != expected {
        return Err(Error::IncompatibleRun(format!(
            "pairs in {} were produced with a different configuration (config hash {} vs {expected}); \
             rerun gather-compare",
            cfg.workspace.display(),
            manifest.config_hash
        )));
    }
    Ok(manifest)
}

/// Gather-compare stage: workers own band ranges and walk their passes,
/// writing one pair file per pass.
pub fn run_gather_compare(cfg: &RunConfig) -> Result<CompareOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let run = load_run(cfg, "gather-compare")?;
    let files = run.paths();
    for header in read_headers(&files)? {
        if format!("{:016x}", header.config_hash) != run.config_hash {
            return Err(Error::IncompatibleRun(
                "signature file headers do not match run.json; rerun the hash stage".into(),
            ));
        }
    }
    let total = run.total_signature_bytes();
    let (k, bands) = (run.header.buckets, run.header.bands);
    let plan = match cfg.buckets_per_pass {
        Some(c) => plan_with_buckets_per_pass(total, k, bands, cfg.workers, c)?,
        None => plan_gather(total, k, bands, cfg.workers, cfg.memory_budget)?,
    };
    log::info!(
        "gather-compare: {} signature bytes, K = {k}, C = {}, {} passes over {} workers",
        total,
        plan.buckets_per_pass,
        plan.passes.len(),
        cfg.workers
    );

    let ws = &cfg.workspace;
    for stale in [COMPARE_MANIFEST, PAIRS_DIR, REPORT_DIR] {
        remove_if_exists(&ws.join(stale))?;
    }
    let pairs_dir = ws.join(PAIRS_DIR);
    std::fs::create_dir_all(&pairs_dir).at(&pairs_dir)?;

    let tracker = MemoryTracker::new();
    let abort = AtomicBool::new(false);
    let outputs: Mutex<Vec<(String, u64)>> = Mutex::new(Vec::new());
    let failure: Mutex<Option<Error>> = Mutex::new(None);
    std::thread::scope(|s| {
        for worker in 0..cfg.workers {
            let (plan, files, tracker) = (&plan, &files, &tracker);
            let (abort, outputs, failure, pairs_dir) = (&abort, &outputs, &failure, &pairs_dir);
            s.spawn(move || {
                for (index, pass) in plan.passes_for(worker) {
                    if abort.load(Ordering::Relaxed) {
                        return;
                    }
                    let name = format!("w{worker:03}-p{index:05}.pairs");
                    let result = run_pass(
                        files,
                        pass.bands.clone(),
                        pass.buckets.clone(),
                        cfg,
                        tracker,
                        &pairs_dir.join(&name),
                    );
                    match result {
                        Ok(count) => outputs.lock().unwrap().push((name, count)),
                        Err(e) => {
                            abort.store(true, Ordering::Relaxed);
                            failure.lock().unwrap().get_or_insert(e);
                            return;
                        }
                    }
                }
            });
        }
    });
    if let Some(e) = failure.into_inner().unwrap() {
        return Err(e);
    }
    let mut outputs = outputs.into_inner().unwrap();
    outputs.sort();

    let manifest = CompareManifest {
        config_hash: format!("{:016x}", cfg.compare_hash()?),
        signature_config_hash: run.config_hash.clone(),
        workers: cfg.workers,
        memory_budget: cfg.memory_budget,
        buckets_per_pass: plan.buckets_per_pass,
        buckets: plan.buckets,
        passes: plan.passes.len(),
        pass_bytes_estimate: plan.pass_bytes_estimate,
        peak_gather_bytes: tracker.peak() as u64,
        pairs_written: outputs.iter().map(|o| o.1).sum(),
        pair_files: outputs.into_iter().map(|o| o.0).collect(),
    };
    let path = ws.join(COMPARE_MANIFEST);
    let json = serde_json::to_vec_pretty(&manifest).map_err(|e| Error::io(&path, e.into()))?;
    write_atomic(&path, &json)?;
    Ok(CompareOutcome {
        manifest,
        plan,
        elapsed: start.elapsed(),
    })
}

fn run_pass(
    files: &[PathBuf],
    bands: std::ops::Range<u32>,
    buckets: std::ops::Range<u32>,
    cfg: &RunConfig,
    tracker: &Arc<MemoryTracker>,
    out: &Path,
) -> Result<u64> {
    let gathered = scan_gather(files, bands, buckets, Some(tracker.clone()))?;
    let mut pairs: Vec<DuplicatePair> = Vec::new();
    for (_, batch) in gathered.batches() {
        // The staged copy of a bucket counts towards the gather footprint.
        let staged = batch.heap_bytes();
        tracker.add(staged);
        pairs.extend(compare_bucket(&batch, cfg.threshold));
        drop(batch);
        tracker.sub(staged);
    }
    drop(gathered);
    sort_dedup_pairs(&mut pairs);
    write_pairs(out, &pairs)?;
    Ok(pairs.len() as u64)
}

/// Union stage: merges all pair files and writes the report.
pub fn run_union(cfg: &RunConfig) -> Result<UnionOutcome> {
    cfg.validate()?;
    let start = Instant::now();
    let run = load_run(cfg, "union")?;
    let compare = load_compare(cfg, "union")?;
    let pairs_dir = cfg.workspace.join(PAIRS_DIR);
    let mut pairs = Vec::with_capacity(compare.pairs_written as usize);
    for name in &compare.pair_files {
        pairs.extend(read_pairs(&pairs_dir.join(name))?);
    }
    sort_dedup_pairs(&mut pairs);
    let distinct = pairs.len() as u64;
    let mut uf = union_pairs(pairs);
    let groups = components(&mut uf);
    let mut report = emit_report(groups, run.docs_kept);
    report.counters.docs_scanned = run.docs_scanned;
    report.counters.docs_kept = run.docs_kept;
    report.counters.distinct_pairs = distinct;
    report.write(&cfg.workspace.join(REPORT_DIR))?;
    log::info!(
        "union: {distinct} distinct pairs, {} groups, {}",
        report.groups.len(),
        report.ratio_label()
    );
    Ok(UnionOutcome {
        report,
        elapsed: start.elapsed(),
    })
}

/// Runs hash, gather-compare and union in order.
pub fn run_dedup(cfg: &RunConfig) -> Result<DedupOutcome> {
    let start = Instant::now();
    let hash = run_hash(cfg).map_err(|e| e.in_stage("hash"))?;
    let compare = run_gather_compare(cfg).map_err(|e| e.in_stage("gather-compare"))?;
    let union = run_union(cfg).map_err(|e| e.in_stage("union"))?;
    Ok(DedupOutcome {
        report: union.report,
        run: hash.run,
        compare: compare.manifest,
        timings: StageTimings {
            hash_secs: hash.elapsed.as_secs_f64(),
            compare_secs: compare.elapsed.as_secs_f64(),
            union_secs: union.elapsed.as_secs_f64(),
            total_secs: start.elapsed().as_secs_f64(),
        },
    })
}
