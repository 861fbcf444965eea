//! All-pairs signature comparison inside a bucket.
//!
//! The kernel walks the upper triangle of the `c x c` comparison matrix in
//! square tiles. Each tile pair is copied into two small contiguous buffers
//! and the equality counts are accumulated like a matrix product with `==`
//! in place of `*`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};

pub const DEFAULT_TILE: usize = 32;
/// Bytes per pair record: lo u64, hi u64, match count u32.
pub const PAIR_RECORD_BYTES: usize = 20;

/// Parses a non-negative decimal like `0.8` or `12` into a reduced fraction.
pub(crate) fn parse_decimal(s: &str) -> Option<(u64, u64)> {
    let s = s.trim();
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) || frac.len() > 18 {
        return None;
    }
    let den = 10u64.checked_pow(frac.len() as u32)?;
    let int_part: u64 = if int.is_empty() { 0 } else { int.parse().ok()? };
    let frac_part: u64 = if frac.is_empty() { 0 } else { frac.parse().ok()? };
    let num = int_part.checked_mul(den)?.checked_add(frac_part)?;
    let g = gcd(num, den);
    Some((num / g, den / g))
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.max(1)
}

/// Similarity threshold as an exact fraction in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Threshold {
    pub num: u64,
    pub den: u64,
}

impl Threshold {
    pub fn new(num: u64, den: u64) -> Result<Self> {
        if den == 0 || num > den {
            return Err(Error::config(format!("threshold {num}/{den} is not in [0, 1]")));
        }
        let g = gcd(num, den);
        Ok(Threshold {
            num: num / g,
            den: den / g,
        })
    }

    /// Uses the shortest decimal representation of `value`, so `0.8` is 4/5.
    pub fn from_f64(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::config("threshold must be finite"));
        }
        format!("{value}").parse()
    }

    /// True when `matches / hashes > num / den`.
    #[inline]
    pub fn exceeded_by(&self, matches: u32, hashes: usize) -> bool {
        u128::from(matches) * u128::from(self.den) > u128::from(self.num) * hashes as u128
    }

    /// Smallest match count that exceeds the threshold.
    pub fn min_matches(&self, hashes: usize) -> u64 {
        (self.num as u128 * hashes as u128 / self.den as u128) as u64 + 1
    }

    pub fn as_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl std::str::FromStr for Threshold {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (num, den) = parse_decimal(s).ok_or_else(|| Error::config(format!("bad threshold `{s}`")))?;
        Threshold::new(num, den)
    }
}

impl std::fmt::Display for Threshold {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

/// Exact signature similarity `matches / hashes`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Similarity {
    pub matches: u32,
    pub hashes: u32,
}

impl Similarity {
    pub fn as_f64(&self) -> f64 {
        f64::from(self.matches) / f64::from(self.hashes)
    }
}

/// Fraction of positions where the two signatures agree.
pub fn sim_sig(a: &[u32], b: &[u32]) -> Result<Similarity> {
    if a.len() != b.len() {
        return Err(Error::config(format!(
            "signature lengths differ: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let hashes = u32::try_from(a.len()).map_err(|_| Error::config("signature too long"))?;
    Ok(Similarity {
        matches: count_equal(a, b),
        hashes,
    })
}

#[inline(always)]
fn count_equal(a: &[u32], b: &[u32]) -> u32 {
    a.iter().zip(b).map(|(x, y)| u32::from(x == y)).sum()
}

/// Signatures of one bucket, sorted by doc_id, stored row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketBatch {
    doc_ids: Vec<u64>,
    values: Vec<u32>,
    hashes: usize,
}

impl BucketBatch {
    pub fn new(entries: Vec<(u64, Vec<u32>)>) -> Result<Self> {
        let hashes = entries.first().map(|e| e.1.len()).unwrap_or(0);
        let mut doc_ids = Vec::with_capacity(entries.len());
        let mut values = Vec::with_capacity(entries.len() * hashes);
        for (id, sig) in entries {
            if sig.len() != hashes {
                return Err(Error::config("signatures in a bucket differ in length"));
            }
            doc_ids.push(id);
            values.extend_from_slice(&sig);
        }
        BucketBatch::from_flat(doc_ids, values, hashes)
    }

    /// `values` holds `doc_ids.len()` signatures of `hashes` values each.
    pub fn from_flat(doc_ids: Vec<u64>, values: Vec<u32>, hashes: usize) -> Result<Self> {
        if doc_ids.len() < 2 {
            return Err(Error::config("a bucket batch needs at least two documents"));
        }
        if hashes == 0 || values.len() != doc_ids.len() * hashes {
            return Err(Error::config("bucket batch values do not match its shape"));
        }
        if doc_ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::config("bucket batch doc_ids must be strictly increasing"));
        }
        Ok(BucketBatch {
            doc_ids,
            values,
            hashes,
        })
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn hashes(&self) -> usize {
        self.hashes
    }

    pub fn doc_ids(&self) -> &[u64] {
        &self.doc_ids
    }

    pub fn signature(&self, i: usize) -> &[u32] {
        &self.values[i * self.hashes..(i + 1) * self.hashes]
    }

    /// Heap bytes held by the batch.
    pub fn heap_bytes(&self) -> usize {
        self.doc_ids.capacity() * 8 + self.values.capacity() * 4
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DuplicatePair {
    pub lo: u64,
    pub hi: u64,
    pub matches: u32,
}

impl DuplicatePair {
    /// Orders the endpoints so that `lo < hi`.
    pub fn canonical(a: u64, b: u64, matches: u32) -> Self {
        DuplicatePair {
            lo: a.min(b),
            hi: a.max(b),
            matches,
        }
    }

    pub fn similarity(&self, hashes: usize) -> Similarity {
        Similarity {
            matches: self.matches,
            hashes: hashes as u32,
        }
    }
}

/// Every pair `i < j` of the batch whose similarity exceeds `threshold`.
pub fn compare_bucket(batch: &BucketBatch, threshold: Threshold) -> Vec<DuplicatePair> {
    compare_bucket_tiled(batch, threshold, DEFAULT_TILE)
}

pub fn compare_bucket_tiled(batch: &BucketBatch, threshold: Threshold, tile: usize) -> Vec<DuplicatePair> {
    let tile = tile.max(1);
    let (c, h) = (batch.len(), batch.hashes);
    let mut row_tile = vec![0u32; tile * h];
    let mut col_tile = vec![0u32; tile * h];
    let mut counts = vec![0u32; tile * tile];
    let mut out = Vec::new();

    for row_start in (0..c).step_by(tile) {
        let rows = tile.min(c - row_start);
        row_tile[..rows * h].copy_from_slice(&batch.values[row_start * h..(row_start + rows) * h]);
        for col_start in (row_start..c).step_by(tile) {
            let cols = tile.min(c - col_start);
            let diagonal = col_start == row_start;
            if !diagonal {
                col_tile[..cols * h].copy_from_slice(&batch.values[col_start * h..(col_start + cols) * h]);
            }
            let col_src = if diagonal { &row_tile } else { &col_tile };
            for i in 0..rows {
                let a = &row_tile[i * h..(i + 1) * h];
                let first_col = if diagonal { i + 1 } else { 0 };
                for j in first_col..cols {
                    counts[i * tile + j] = count_equal(a, &col_src[j * h..(j + 1) * h]);
                }
            }
            for i in 0..rows {
                let first_col = if diagonal { i + 1 } else { 0 };
                for j in first_col..cols {
                    let matches = counts[i * tile + j];
                    if threshold.exceeded_by(matches, h) {
                        out.push(DuplicatePair {
                            lo: batch.doc_ids[row_start + i],
                            hi: batch.doc_ids[col_start + j],
                            matches,
                        });
                    }
                }
            }
        }
    }
    out
}

/// Compares every bucket of a gather pass; a pair found in several buckets
/// of the same pass is reported once. Output is sorted by `(lo, hi)`.
pub fn compare_pass<'a, I>(buckets: I, threshold: Threshold) -> Vec<DuplicatePair>
where
    I: IntoIterator<Item = &'a BucketBatch>,
{
    let mut pairs: Vec<DuplicatePair> = buckets
        .into_iter()
        .flat_map(|b| compare_bucket(b, threshold))
        .collect();
    sort_dedup_pairs(&mut pairs);
    pairs
}

pub fn sort_dedup_pairs(pairs: &mut Vec<DuplicatePair>) {
    pairs.sort_unstable();
    pairs.dedup_by_key(|p| (p.lo, p.hi));
}

pub fn write_pairs(path: &Path, pairs: &[DuplicatePair]) -> Result<()> {
    let file = File::create(path).at(path)?;
    let mut out = BufWriter::new(file);
    for p in pairs {
        let mut rec = [0u8; PAIR_RECORD_BYTES];
        rec[..8].copy_from_slice(&p.lo.to_le_bytes());
        rec[8..16].copy_from_slice(&p.hi.to_le_bytes());
        rec[16..].copy_from_slice(&p.matches.to_le_bytes());
        out.write_all(&rec).at(path)?;
    }
    out.flush().at(path)
}

pub fn read_pairs(path: &Path) -> Result<Vec<DuplicatePair>> {
    let file = File::open(path).at(path)?;
    let len = file.metadata().at(path)?.len() as usize;
    if !len.is_multiple_of(PAIR_RECORD_BYTES) {
        return Err(Error::corrupt(
            path,
            "pair file length is not a whole number of records",
        ));
    }
    let mut buf = Vec::with_capacity(len);
    BufReader::new(file).read_to_end(&mut buf).at(path)?;
    let pairs = buf
        .chunks_exact(PAIR_RECORD_BYTES)
        .map(|rec| DuplicatePair {
            lo: u64::from_le_bytes(rec[..8].try_into().unwrap()),
            hi: u64::from_le_bytes(rec[8..16].try_into().unwrap()),
            matches: u32::from_le_bytes(rec[16..].try_into().unwrap()),
        })
        .collect::<Vec<_>>();
    if let Some(bad) = pairs.iter().find(|p| p.lo >= p.hi) {
        return Err(Error::corrupt(
            path,
            format!("pair ({}, {}) is not canonical", bad.lo, bad.hi),
        ));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeSet;

    fn naive(batch: &BucketBatch, t: Threshold) -> BTreeSet<DuplicatePair> {
        let mut out = BTreeSet::new();
        for i in 0..batch.len() {
            for j in i + 1..batch.len() {
                let mut m = 0;
                for k in 0..batch.hashes() {
                    if batch.signature(i)[k] == batch.signature(j)[k] {
                        m += 1;
                    }
                }
                if m as f64 / batch.hashes() as f64 > t.as_f64() {
                    out.insert(DuplicatePair {
                        lo: batch.doc_ids()[i],
                        hi: batch.doc_ids()[j],
                        matches: m,
                    });
                }
            }
        }
        out
    }

    #[test]
    fn sim_sig_examples() {
        let s = [1, 2, 3, 4];
        assert_eq!(sim_sig(&s, &s).unwrap().as_f64(), 1.0);
        assert_eq!(sim_sig(&s, &[5, 6, 7, 8]).unwrap().as_f64(), 0.0);
        let sim = sim_sig(&s, &[1, 2, 0, 4]).unwrap();
        assert_eq!((sim.matches, sim.hashes), (3, 4));
        assert_eq!(sim.as_f64(), 0.75);
        assert!(matches!(sim_sig(&s, &[1, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn threshold_parsing_is_exact() {
        let t: Threshold = "0.8".parse().unwrap();
        assert_eq!((t.num, t.den), (4, 5));
        assert_eq!(Threshold::from_f64(0.8).unwrap(), t);
        assert_eq!(t.min_matches(128), 103);
        assert!(!t.exceeded_by(102, 128));
        assert!(t.exceeded_by(103, 128));
        assert!(!t.exceeded_by(4, 5));
        assert!("1.5".parse::<Threshold>().is_err());
        assert!("-0.1".parse::<Threshold>().is_err());
        assert_eq!("1".parse::<Threshold>().unwrap().min_matches(128), 129);
    }

    #[test]
    fn identical_pair_found() {
        let batch = BucketBatch::new(vec![(3, vec![1, 2, 3, 4, 5]), (8, vec![1, 2, 3, 4, 5])]).unwrap();
        let pairs = compare_bucket(&batch, "0.8".parse().unwrap());
        assert_eq!(
            pairs,
            vec![DuplicatePair {
                lo: 3,
                hi: 8,
                matches: 5
            }]
        );
        assert_eq!(pairs[0].similarity(5).as_f64(), 1.0);
    }

    #[test]
    fn threshold_is_strict() {
        // Every pair agrees on exactly 4 of 5 positions.
        let batch = BucketBatch::new(vec![
            (0, vec![1, 1, 1, 1, 0]),
            (1, vec![1, 1, 1, 1, 1]),
            (2, vec![1, 1, 1, 1, 2]),
        ])
        .unwrap();
        assert!(compare_bucket(&batch, "0.8".parse().unwrap()).is_empty());
        assert_eq!(compare_bucket(&batch, "0.79".parse().unwrap()).len(), 3);
    }

    #[test]
    fn batch_validation() {
        assert!(BucketBatch::new(vec![(1, vec![1])]).is_err());
        assert!(BucketBatch::new(vec![(2, vec![1]), (1, vec![1])]).is_err());
        assert!(BucketBatch::new(vec![(1, vec![1]), (1, vec![1])]).is_err());
        assert!(BucketBatch::new(vec![(1, vec![1]), (2, vec![1, 2])]).is_err());
    }

    #[test]
    fn pass_suppresses_repeats_and_keeps_disjoint_buckets() {
        let a = BucketBatch::new(vec![(1, vec![7; 4]), (2, vec![7; 4])]).unwrap();
        let b = BucketBatch::new(vec![(5, vec![9; 4]), (6, vec![9; 4])]).unwrap();
        let t = "0.5".parse().unwrap();
        let pairs = compare_pass([&a, &b, &a], t);
        assert_eq!(
            pairs.iter().map(|p| (p.lo, p.hi)).collect::<Vec<_>>(),
            vec![(1, 2), (5, 6)]
        );
        assert!(compare_pass(std::iter::empty::<&BucketBatch>(), t).is_empty());
    }

    #[test]
    fn pair_file_roundtrip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.pairs");
        let pairs = vec![
            DuplicatePair {
                lo: 1,
                hi: 2,
                matches: 120,
            },
            DuplicatePair {
                lo: u64::MAX - 1,
                hi: u64::MAX,
                matches: 128,
            },
        ];
        write_pairs(&path, &pairs).unwrap();
        assert_eq!(std::fs::metadata(&path).unwrap().len(), 40);
        assert_eq!(read_pairs(&path).unwrap(), pairs);
        std::fs::write(&path, [0u8; 19]).unwrap();
        assert!(matches!(read_pairs(&path), Err(Error::Corrupt { .. })));
    }

    fn batch_strategy() -> impl Strategy<Value = BucketBatch> {
        (2usize..120, 1usize..40, 1u32..4).prop_flat_map(|(c, h, alphabet)| {
            proptest::collection::vec(0..alphabet, c * h).prop_map(move |values| {
                BucketBatch::from_flat((0..c as u64).map(|i| i * 3 + 1).collect(), values, h).unwrap()
            })
        })
    }

    proptest! {
        #[test]
        fn tiled_equals_naive(batch in batch_strategy(), tile in 1usize..40, t in 0u64..=10) {
            let th = Threshold::new(t, 10).unwrap();
            let tiled: BTreeSet<_> = compare_bucket_tiled(&batch, th, tile).into_iter().collect();
            prop_assert_eq!(tiled, naive(&batch, th));
        }

        #[test]
        fn raising_threshold_never_adds(batch in batch_strategy(), t1 in 0u64..=10, dt in 0u64..=10) {
            let lo = Threshold::new(t1, 10).unwrap();
            let hi = Threshold::new((t1 + dt).min(10), 10).unwrap();
            let a: BTreeSet<_> = compare_bucket(&batch, lo).into_iter().collect();
            let b: BTreeSet<_> = compare_bucket(&batch, hi).into_iter().collect();
            prop_assert!(b.is_subset(&a));
            prop_assert!(a.iter().all(|p| p.lo < p.hi));
        }
    }
}
