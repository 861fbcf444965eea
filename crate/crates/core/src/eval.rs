//! Accuracy evaluation against all-pairs MinHash, and stage timing benchmarks.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::corpus::{load_jsonl_file, preprocess, CleanDocument, Preprocessed};
use crate::error::{Error, IoContext, Result};
use crate::minhash::derive_family;
use crate::oracle::{dupset_jaccard, standard_minhash_dupset, AccuracyRow, NearDuplicateSet};
use crate::pipeline::{run_dedup, StageTimings};
use crate::sigstore::write_atomic;

pub const ACCURACY_FILE: &str = "accuracy.json";
pub const BENCH_FILE: &str = "bench.json";
pub const PIPELINE_METHOD: &str = "lsh-pipeline";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub rows: Vec<AccuracyRow>,
    /// Jaccard of the pipeline's near-duplicate set against the oracle's.
    pub dupset_jaccard: f64,
    pub timings: StageTimings,
}

/// Reads the corpus the same way the hash stage does: sorted inputs, doc_ids
/// numbered across files, NFC and the length filter applied.
pub fn load_clean_corpus(cfg: &RunConfig) -> Result<Vec<CleanDocument>> {
    let mut inputs = cfg.inputs.clone();
    inputs.sort();
    let mut docs = Vec::new();
    let mut offset = 0u64;
    for (ordinal, path) in inputs.iter().enumerate() {
        let (raw, _) = load_jsonl_file(path, ordinal as u32, &cfg.text_field)?;
        let records = raw.len() as u64;
        for doc in raw {
            let id = offset + doc.record_ordinal;
            if let Preprocessed::Clean(clean) = preprocess(doc, id, cfg.min_chars) {
                docs.push(clean);
            }
        }
        offset += records;
    }
    Ok(docs)
}

/// Runs the pipeline and the all-pairs oracle with the same hash family and
/// writes `accuracy.json` into the workspace.
pub fn cmd_eval_accuracy(cfg: &RunConfig, allow_large: bool) -> Result<AccuracyReport> {
    let docs = load_clean_corpus(cfg)?;
    // Refuse before spending time on the pipeline.
    if docs.len() > crate::oracle::ORACLE_MAX_DOCS && !allow_large {
        return Err(Error::OracleGuard(format!(
            "{} documents exceed the all-pairs limit of {}; pass --allow-large to run anyway",
            docs.len(),
            crate::oracle::ORACLE_MAX_DOCS
        )));
    }
    let outcome = run_dedup(cfg)?;
    let family = derive_family(cfg.seed, cfg.hashes, cfg.shingle_len, cfg.unit)?;
    let oracle = standard_minhash_dupset(&docs, &family, cfg.threshold, allow_large)?;
    let pipeline =
        NearDuplicateSet::from_ids(PIPELINE_METHOD, outcome.report.near_duplicate_set.iter().copied());
    let corpus_size = docs.len() as u64;
    let report = AccuracyReport {
        rows: vec![
            AccuracyRow::new(&pipeline, &oracle, corpus_size),
            AccuracyRow::new(&oracle, &oracle, corpus_size),
        ],
        dupset_jaccard: dupset_jaccard(&pipeline, &oracle).as_f64(),
        timings: outcome.timings,
    };
    let path = cfg.workspace.join(ACCURACY_FILE);
    let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::io(&path, e.into()))?;
    write_atomic(&path, &json)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub workers: usize,
    pub docs: u64,
    pub passes: usize,
    #[serde(flatten)]
    pub timings: StageTimings,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    /// Total time of the first row over each row's total time.
    pub fn speedups(&self) -> Vec<f64> {
        let Some(base) = self.rows.first() else {
            return Vec::new();
        };
        self.rows
            .iter()
            .map(|r| base.timings.total_secs / r.timings.total_secs)
            .collect()
    }

    pub fn table(&self) -> String {
        let mut out = format!(
            "{:>7} {:>10} {:>10} {:>10} {:>10} {:>8}\n",
            "workers", "hash s", "compare s", "union s", "total s", "speedup"
        );
        for (row, speedup) in self.rows.iter().zip(self.speedups()) {
            let t = &row.timings;
            out.push_str(&format!(
                "{:>7} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>7.2}x\n",
                row.workers, t.hash_secs, t.compare_secs, t.union_secs, t.total_secs, speedup
            ));
        }
        out
    }
}

/// Times the full pipeline once per worker count, each in its own
/// subdirectory of the workspace. Caches are not flushed between runs; drop
/// the page cache beforehand for cold-read numbers.
pub fn cmd_bench(cfg: &RunConfig, worker_counts: &[usize]) -> Result<BenchReport> {
    if worker_counts.is_empty() || worker_counts.contains(&0) {
        return Err(Error::config("worker list must hold positive counts"));
    }
    let mut rows = Vec::with_capacity(worker_counts.len());
    for &workers in worker_counts {
        let run_cfg = RunConfig {
            workers,
            workspace: bench_workspace(&cfg.workspace, workers),
            ..cfg.clone()
        };
        let outcome = run_dedup(&run_cfg)?;
        log::info!("bench: {workers} workers, {:.3} s", outcome.timings.total_secs);
        rows.push(BenchRow {
            workers,
            docs: outcome.run.docs_kept,
            passes: outcome.compare.passes,
            timings: outcome.timings,
        });
    }
    let report = BenchReport { rows };
    std::fs::create_dir_all(&cfg.workspace).at(&cfg.workspace)?;
    let path = cfg.workspace.join(BENCH_FILE);
    let json = serde_json::to_vec_pretty(&report).map_err(|e| Error::io(&path, e.into()))?;
    write_atomic(&path, &json)?;
    Ok(report)
}

fn bench_workspace(base: &Path, workers: usize) -> PathBuf {
    base.join(format!("bench-w{workers:03}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{cmd_gen_synthetic, SyntheticCorpus, SyntheticSpec};

    fn setup_with_truth(dir: &Path, groups: usize) -> (RunConfig, SyntheticCorpus) {
        let spec = SyntheticSpec {
            docs: 400,
            groups,
            shards: 3,
            ..SyntheticSpec::default()
        };
        let (corpus, inputs) = cmd_gen_synthetic(&spec, &dir.join("corpus")).unwrap();
        let cfg = RunConfig {
            inputs,
            workspace: dir.join("ws"),
            workers: 2,
            ..RunConfig::default()
        };
        (cfg, corpus)
    }

    fn setup(dir: &Path, groups: usize) -> RunConfig {
        setup_with_truth(dir, groups).0
    }

    #[test]
    fn accuracy_on_planted_corpus() {
        let dir = tempfile::tempdir().unwrap();
        let (cfg, truth) = setup_with_truth(dir.path(), 40);
        let report = cmd_eval_accuracy(&cfg, false).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert_eq!(report.rows[1].jaccard_vs_oracle, 1.0);
        let oracle = standard_minhash_dupset(
            &load_clean_corpus(&cfg).unwrap(),
            &derive_family(cfg.seed, cfg.hashes, cfg.shingle_len, cfg.unit).unwrap(),
            cfg.threshold,
            false,
        )
        .unwrap();
        for p in truth.pairs.iter().filter(|p| p.jaccard >= 0.9) {
            assert!(
                oracle.ids.binary_search(&p.a).is_ok() && oracle.ids.binary_search(&p.b).is_ok(),
                "{p:?}"
            );
        }
        assert!(report.dupset_jaccard >= 0.9, "{}", report.dupset_jaccard);
        assert!(dir.path().join("ws").join(ACCURACY_FILE).exists());
    }

    #[test]
    fn duplicate_free_corpus_scores_one() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_eval_accuracy(&setup(dir.path(), 0), false).unwrap();
        assert_eq!(report.rows[0].dupset_size, 0);
        assert_eq!(report.rows[1].dupset_size, 0);
        assert_eq!(report.dupset_jaccard, 1.0);
    }

    #[test]
    fn bench_rows_account_for_total_time() {
        let dir = tempfile::tempdir().unwrap();
        let report = cmd_bench(&setup(dir.path(), 10), &[1]).unwrap();
        assert_eq!(report.rows.len(), 1);
        let t = &report.rows[0].timings;
        let sum = t.hash_secs + t.compare_secs + t.union_secs;
        assert!((t.total_secs - sum).abs() <= 0.05 * t.total_secs, "{t:?}");
        assert!(report.table().lines().count() == 2);
        assert!(cmd_bench(&setup(dir.path(), 10), &[]).is_err());
    }
}
