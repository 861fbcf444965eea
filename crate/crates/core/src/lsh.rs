//! Banding: a signature of `b * r` values is cut into `b` bands and each band
//! maps to bucket `(sum of its r values) mod K`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::minhash::Signature;

/// Positive rational bucket scale `kappa` in `K = ceil(kappa * sqrt(N))`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BucketScale {
    pub num: u32,
    pub den: u32,
}

impl BucketScale {
    pub fn new(num: u32, den: u32) -> Result<Self> {
        if num == 0 || den == 0 {
            return Err(Error::config("bucket scale must be a positive rational"));
        }
        Ok(BucketScale { num, den })
    }

    pub fn as_f64(self) -> f64 {
        f64::from(self.num) / f64::from(self.den)
    }
}

impl Default for BucketScale {
    fn default() -> Self {
        BucketScale { num: 2, den: 1 }
    }
}

impl std::str::FromStr for BucketScale {
    type Err = Error;

    /// Accepts `a/b` or a plain decimal such as `1.5`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let num = n
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad bucket scale `{s}`")))?;
            let den = d
                .trim()
                .parse()
                .map_err(|_| Error::config(format!("bad bucket scale `{s}`")))?;
            return BucketScale::new(num, den);
        }
        let (num, den) = crate::compare::parse_decimal(s)
            .ok_or_else(|| Error::config(format!("bad bucket scale `{s}`")))?;
        let num = u32::try_from(num).map_err(|_| Error::config("bucket scale too large"))?;
        let den = u32::try_from(den).map_err(|_| Error::config("bucket scale too precise"))?;
        BucketScale::new(num, den)
    }
}

impl std::fmt::Display for BucketScale {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandingConfig {
    pub bands: usize,
    pub rows: usize,
    pub buckets: u32,
    pub scale: BucketScale,
}

impl BandingConfig {
    pub fn new(bands: usize, rows: usize, buckets: u32, scale: BucketScale) -> Result<Self> {
        if bands == 0 || rows == 0 {
            return Err(Error::config("band and row counts must be positive"));
        }
        if buckets == 0 {
            return Err(Error::config("bucket count must be at least 1"));
        }
        Ok(BandingConfig {
            bands,
            rows,
            buckets,
            scale,
        })
    }

    /// Derives `K` from the document count with [`choose_bucket_count`].
    pub fn for_corpus(bands: usize, rows: usize, docs: u64, scale: BucketScale) -> Result<Self> {
        BandingConfig::new(bands, rows, choose_bucket_count(docs.max(1), scale), scale)
    }

    /// Signature length `H = b * r`.
    pub fn hashes(&self) -> usize {
        self.bands * self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BucketKey {
    pub band: u32,
    pub bucket: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BucketAssignment {
    pub doc_id: u64,
    pub buckets: Vec<u32>,
}

impl BucketAssignment {
    pub fn keys(&self) -> impl Iterator<Item = BucketKey> + '_ {
        self.buckets.iter().enumerate().map(|(band, &bucket)| BucketKey {
            band: band as u32,
            bucket,
        })
    }
}

/// `K = max(1, ceil(kappa * sqrt(N)))`, computed exactly in integers.
pub fn choose_bucket_count(docs: u64, scale: BucketScale) -> u32 {
    // ceil(num/den * sqrt(N)) = ceil(sqrt(num^2 N) / den); find the least K
    // with (K * den)^2 >= num^2 * N.
    let target = u128::from(scale.num).pow(2) * u128::from(docs);
    let den = u128::from(scale.den);
    let mut k = ((scale.as_f64() * (docs as f64).sqrt()).ceil() as u128).max(1);
    while k > 1 && ((k - 1) * den).pow(2) >= target {
        k -= 1;
    }
    while (k * den).pow(2) < target {
        k += 1;
    }
    u32::try_from(k).unwrap_or(u32::MAX)
}

/// Bucket of each band: the 64-bit sum of its `r` values, modulo `K`.
pub fn bucket_ids(signature: &Signature, config: &BandingConfig) -> Result<BucketAssignment> {
    Ok(BucketAssignment {
        doc_id: signature.doc_id,
        buckets: band_buckets(&signature.values, config)?,
    })
}

pub fn band_buckets(values: &[u32], config: &BandingConfig) -> Result<Vec<u32>> {
    if values.len() != config.hashes() {
        return Err(Error::config(format!(
            "signature has {} values, expected b*r = {}",
            values.len(),
            config.hashes()
        )));
    }
    let k = u64::from(config.buckets);
    Ok(values
        .chunks_exact(config.rows)
        .map(|band| (band.iter().map(|&v| u64::from(v)).sum::<u64>() % k) as u32)
        .collect())
}

/// Splits `[0, bands)` into `workers` contiguous ranges whose sizes differ by
/// at most one; the first ranges get the extra band. Workers beyond `bands`
/// receive empty ranges.
pub fn band_partition(bands: usize, workers: usize) -> Vec<Range<usize>> {
    let workers = workers.max(1);
    let base = bands / workers;
    let extra = bands % workers;
    let mut start = 0;
    (0..workers)
        .map(|w| {
            let len = base + usize::from(w < extra);
            let range = start..start + len;
            start += len;
            range
        })
        .collect()
}
