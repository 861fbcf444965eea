//! Ground truth at desk scale: exact window Jaccard, all-pairs MinHash and
//! the near-duplicate-set agreement metric.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compare::{DuplicatePair, Threshold};
use crate::corpus::CleanDocument;
use crate::error::{Error, Result};
use crate::minhash::{signature_of_document, signature_of_text, HashFamily, Signature, Unit};

/// Above this many documents the all-pairs oracle logs a warning.
pub const ORACLE_WARN_DOCS: usize = 100_000;
/// Above this many documents it refuses unless explicitly allowed.
pub const ORACLE_MAX_DOCS: usize = 1_000_000;

/// `intersection / union` kept as integers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Jaccard {
    pub intersection: u64,
    pub union: u64,
}

impl Jaccard {
    /// 1.0 when both sets are empty.
    pub fn as_f64(&self) -> f64 {
        if self.union == 0 {
            1.0
        } else {
            self.intersection as f64 / self.union as f64
        }
    }
}

fn window_set(units: &[u32], len: usize) -> HashSet<&[u32]> {
    units.windows(len).collect()
}

/// Jaccard similarity of the distinct `L`-unit window sets of two texts.
pub fn exact_jaccard(a: &str, b: &str, shingle_len: usize, unit: Unit) -> Result<Jaccard> {
    if shingle_len == 0 {
        return Err(Error::Domain("shingle length must be at least 1".into()));
    }
    let (ua, ub) = (unit.units(a), unit.units(b));
    if ua.len() < shingle_len || ub.len() < shingle_len {
        return Err(Error::Domain(format!(
            "a document is shorter than the shingle length {shingle_len}"
        )));
    }
    let (sa, sb) = (window_set(&ua, shingle_len), window_set(&ub, shingle_len));
    let intersection = sa.intersection(&sb).count() as u64;
    Ok(Jaccard {
        intersection,
        union: (sa.len() + sb.len()) as u64 - intersection,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NearDuplicateSet {
    pub method: String,
    /// Ascending doc_ids.
    pub ids: Vec<u64>,
}

impl NearDuplicateSet {
    pub fn from_ids(method: &str, ids: impl IntoIterator<Item = u64>) -> Self {
        let mut ids: Vec<u64> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        NearDuplicateSet {
            method: method.to_string(),
            ids,
        }
    }

    pub fn from_pairs(method: &str, pairs: &[DuplicatePair]) -> Self {
        Self::from_ids(method, pairs.iter().flat_map(|p| [p.lo, p.hi]))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

fn check_guard(docs: usize, allow_large: bool) -> Result<()> {
    if docs > ORACLE_MAX_DOCS && !allow_large {
        return Err(Error::OracleGuard(format!(
            "{docs} documents exceed the all-pairs limit of {ORACLE_MAX_DOCS}; \
             pass the override to run anyway"
        )));
    }
    if docs > ORACLE_WARN_DOCS {
        log::warn!("all-pairs MinHash over {docs} documents is quadratic and will be slow");
    }
    Ok(())
}

/// Every pair of signatures whose similarity exceeds `threshold`, compared
/// exhaustively. A pair stops being counted once its mismatches rule it out,
/// which never changes the answer. Sorted by `(lo, hi)`.
pub fn all_pairs_duplicates(
    signatures: &[Signature],
    threshold: Threshold,
    allow_large: bool,
) -> Result<Vec<DuplicatePair>> {
    check_guard(signatures.len(), allow_large)?;
    let Some(first) = signatures.first() else {
        return Ok(Vec::new());
    };
    let hashes = first.values.len();
    if signatures.iter().any(|s| s.values.len() != hashes) {
        return Err(Error::config("signatures differ in length"));
    }
    let need = threshold.min_matches(hashes);
    if need > hashes as u64 {
        return Ok(Vec::new());
    }
    let max_mismatch = hashes - need as usize;

    let mut pairs: Vec<DuplicatePair> = (0..signatures.len())
        .into_par_iter()
        .with_min_len(16)
        .flat_map_iter(|i| {
            let a = &signatures[i];
            signatures[i + 1..].iter().filter_map(move |b| {
                let mut mismatches = 0usize;
                for (ca, cb) in a.values.chunks(16).zip(b.values.chunks(16)) {
                    mismatches += ca.iter().zip(cb).filter(|(x, y)| x != y).count();
                    if mismatches > max_mismatch {
                        return None;
                    }
                }
                Some(DuplicatePair::canonical(
                    a.doc_id,
                    b.doc_id,
                    (hashes - mismatches) as u32,
                ))
            })
        })
        .collect();
    pairs.sort_unstable();
    Ok(pairs)
}

/// Standard MinHash: all-pairs comparison of the documents' signatures.
pub fn standard_minhash_dupset(
    docs: &[CleanDocument],
    family: &HashFamily,
    threshold: Threshold,
    allow_large: bool,
) -> Result<NearDuplicateSet> {
    check_guard(docs.len(), allow_large)?;
    let signatures = docs
        .par_iter()
        .map(|d| signature_of_document(d, family))
        .collect::<Result<Vec<_>>>()?;
    signature_dupset(&signatures, threshold, allow_large)
}

/// [`standard_minhash_dupset`] over precomputed signatures.
pub fn signature_dupset(
    signatures: &[Signature],
    threshold: Threshold,
    allow_large: bool,
) -> Result<NearDuplicateSet> {
    let pairs = all_pairs_duplicates(signatures, threshold, allow_large)?;
    Ok(NearDuplicateSet::from_pairs("standard-minhash", &pairs))
}

/// Jaccard similarity of two doc_id sets; 1.0 when both are empty.
pub fn dupset_jaccard(a: &NearDuplicateSet, b: &NearDuplicateSet) -> Jaccard {
    let (mut i, mut j, mut inter) = (0, 0, 0u64);
    while i < a.ids.len() && j < b.ids.len() {
        match a.ids[i].cmp(&b.ids[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    Jaccard {
        intersection: inter,
        union: (a.ids.len() + b.ids.len()) as u64 - inter,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairEstimate {
    pub exact: f64,
    pub estimate: f64,
    pub abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorStats {
    pub pairs: Vec<PairEstimate>,
    pub mean_abs_error: f64,
}

/// Exact window Jaccard against signature similarity for each text pair.
pub fn estimator_error_stats(pairs: &[(String, String)], family: &HashFamily) -> Result<EstimatorStats> {
    let estimates = pairs
        .par_iter()
        .map(|(a, b)| {
            let exact = exact_jaccard(a, b, family.shingle_len, family.unit)?.as_f64();
            let sa = signature_of_text(0, a, family)?;
            let sb = signature_of_text(1, b, family)?;
            let estimate = crate::compare::sim_sig(&sa.values, &sb.values)?.as_f64();
            Ok(PairEstimate {
                exact,
                estimate,
                abs_error: (exact - estimate).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mean_abs_error = if estimates.is_empty() {
        0.0
    } else {
        estimates.iter().map(|e| e.abs_error).sum::<f64>() / estimates.len() as f64
    };
    Ok(EstimatorStats {
        pairs: estimates,
        mean_abs_error,
    })
}

/// One row of the accuracy report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub method: String,
    pub dupset_size: u64,
    pub corpus_size: u64,
    pub ratio: f64,
    pub jaccard_vs_oracle: f64,
}

impl AccuracyRow {
    pub fn new(set: &NearDuplicateSet, oracle: &NearDuplicateSet, corpus_size: u64) -> Self {
        AccuracyRow {
            method: set.method.clone(),
            dupset_size: set.len() as u64,
            corpus_size,
            ratio: if corpus_size == 0 {
                0.0
            } else {
                set.len() as f64 / corpus_size as f64
            },
            jaccard_vs_oracle: dupset_jaccard(set, oracle).as_f64(),
        }
    }
}
