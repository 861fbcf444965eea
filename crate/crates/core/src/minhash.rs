//! Partially reusable polynomial hash functions and MinHash signatures.
//!
//! A window `s = c_1 .. c_L` hashes to `f(s) mod p` with
//! `f(s) = sum_i c_i * q^(i-1)`. Shifting the window by one unit only needs
//! the previous value:
//!
//! ```text
//! h(t) = ((h(s) - c_1) * q^-1 + c_{L+1} * q^(L-1)) mod p
//! ```
//!
//! The division by `q` is a multiplication by its inverse modulo the prime
//! `p`. Every `(p, q)` pair is one member of the hash family.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::CleanDocument;
use crate::error::{Error, Result};

/// Range of the derived moduli: primes in `[2^21, 2^23)`.
pub const P_RANGE: std::ops::Range<u32> = (1 << 21)..(1 << 23);

/// What a single position of a shingle is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Unit {
    /// Bytes of the UTF-8 encoding.
    Byte,
    /// Unicode scalar values.
    Codepoint,
}

impl Unit {
    pub fn tag(self) -> u16 {
        match self {
            Unit::Byte => 0,
            Unit::Codepoint => 1,
        }
    }

    pub fn from_tag(tag: u16) -> Option<Unit> {
        match tag {
            0 => Some(Unit::Byte),
            1 => Some(Unit::Codepoint),
            _ => None,
        }
    }

    /// Number of distinct unit values.
    pub fn alphabet_size(self) -> u32 {
        match self {
            Unit::Byte => 256,
            Unit::Codepoint => 0x11_0000,
        }
    }

    /// Bases are primes drawn from this range; it starts above the alphabet.
    pub fn q_range(self) -> std::ops::Range<u32> {
        match self {
            Unit::Byte => 257..(1 << 16),
            Unit::Codepoint => 0x11_0001..(1 << 21),
        }
    }

    /// Unit sequence of a text.
    pub fn units(self, text: &str) -> Vec<u32> {
        match self {
            Unit::Byte => text.bytes().map(u32::from).collect(),
            Unit::Codepoint => text.chars().map(u32::from).collect(),
        }
    }

    pub fn unit_count(self, text: &str) -> usize {
        match self {
            Unit::Byte => text.len(),
            Unit::Codepoint => text.chars().count(),
        }
    }
}

impl std::str::FromStr for Unit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "byte" => Ok(Unit::Byte),
            "codepoint" => Ok(Unit::Codepoint),
            other => Err(Error::config(format!(
                "unknown shingle unit `{other}` (expected byte or codepoint)"
            ))),
        }
    }
}

impl std::fmt::Display for Unit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Unit::Byte => "byte",
            Unit::Codepoint => "codepoint",
        })
    }
}

/// One `(p, q)` hash function with its rolling constants.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashFunctionParams {
    pub p: u32,
    pub q: u32,
    /// `q^-1 mod p`.
    pub q_inv: u32,
    /// `q^(L-1) mod p`.
    pub q_pow: u32,
    barrett: u64,
}

impl HashFunctionParams {
    /// `p` must be prime and `q` in `[1, p)`; `shingle_len` is `L`.
    pub fn new(p: u32, q: u32, shingle_len: usize) -> Result<Self> {
        if shingle_len == 0 {
            return Err(Error::config("shingle length must be at least 1"));
        }
        if !is_prime(p) {
            return Err(Error::config(format!("modulus {p} is not prime")));
        }
        if q == 0 || q >= p {
            return Err(Error::config(format!("base {q} must lie in [1, {p})")));
        }
        let exp = u64::try_from(shingle_len - 1).expect("usize fits u64");
        Ok(HashFunctionParams {
            p,
            q,
            q_inv: pow_mod(q, u64::from(p) - 2, p),
            q_pow: pow_mod(q, exp, p),
            barrett: u64::MAX / u64::from(p),
        })
    }

    /// `x mod p` for any 64-bit `x`.
    #[inline(always)]
    fn reduce(&self, x: u64) -> u32 {
        let quot = ((u128::from(x) * u128::from(self.barrett)) >> 64) as u64;
        let mut r = x - quot * u64::from(self.p);
        if r >= u64::from(self.p) {
            r -= u64::from(self.p);
        }
        r as u32
    }
}

/// Evaluates `(sum_i c_i q^(i-1)) mod p` directly by Horner's rule.
pub fn hash_window_direct(window: &[u32], params: &HashFunctionParams) -> Result<u32> {
    if window.is_empty() {
        return Err(Error::Domain("cannot hash an empty window".into()));
    }
    let (p, q) = (u64::from(params.p), u64::from(params.q));
    let mut acc = 0u64;
    for &c in window.iter().rev() {
        if c >= params.q {
            return Err(Error::Domain(format!(
                "unit value {c} is not below the base {}",
                params.q
            )));
        }
        acc = (acc * q + u64::from(c)) % p;
    }
    Ok(acc as u32)
}

/// Advances a window hash by one unit: drops `outgoing` (the first unit of
/// the old window) and appends `incoming`.
#[inline(always)]
pub fn roll_next(state: u32, outgoing: u32, incoming: u32, params: &HashFunctionParams) -> u32 {
    // Units are below q < p, so outgoing needs no reduction.
    let diff = if state >= outgoing {
        state - outgoing
    } else {
        state + (params.p - outgoing)
    };
    let shifted = u64::from(diff) * u64::from(params.q_inv);
    let added = u64::from(incoming) * u64::from(params.q_pow);
    match shifted.checked_add(added) {
        Some(sum) => params.reduce(sum),
        None => params.reduce(u64::from(params.reduce(shifted)) + added),
    }
}

/// `H` hash functions derived deterministically from a seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    pub params: Vec<HashFunctionParams>,
    pub shingle_len: usize,
    pub unit: Unit,
    pub seed: u64,
}

impl HashFamily {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }
}

/// Derives `count` distinct `(p, q)` pairs from `seed`.
///
/// A ChaCha8 stream seeded with `seed` draws a uniform candidate in
/// [`P_RANGE`] and takes the next prime at or above it (redrawing when that
/// prime leaves the range); `q` is drawn the same way from
/// [`Unit::q_range`]. A pair already in the family is discarded and redrawn.
pub fn derive_family(seed: u64, count: usize, shingle_len: usize, unit: Unit) -> Result<HashFamily> {
    if count == 0 {
        return Err(Error::config("hash function count must be at least 1"));
    }
    if shingle_len == 0 {
        return Err(Error::config("shingle length must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::with_capacity(count);
    let mut params = Vec::with_capacity(count);
    let max_attempts = count.saturating_mul(64).max(1024);
    let mut attempts = 0;
    while params.len() < count {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::config(format!(
                "could not find {count} distinct hash functions"
            )));
        }
        let p = draw_prime(&mut rng, P_RANGE);
        let q = draw_prime(&mut rng, unit.q_range());
        if q == p || !seen.insert((p, q)) {
            continue;
        }
        params.push(HashFunctionParams::new(p, q, shingle_len)?);
    }
    Ok(HashFamily {
        params,
        shingle_len,
        unit,
        seed,
    })
}

fn draw_prime(rng: &mut ChaCha8Rng, range: std::ops::Range<u32>) -> u32 {
    loop {
        let mut n = rng.random_range(range.clone());
        while n < range.end && !is_prime(n) {
            n += 1;
        }
        if n < range.end {
            return n;
        }
    }
}

/// Deterministic Miller-Rabin for 32-bit integers.
pub fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    for small in [2u32, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37] {
        if n.is_multiple_of(small) {
            return n == small;
        }
    }
    let n64 = u64::from(n);
    let mut d = n64 - 1;
    let mut s = 0;
    while d % 2 == 0 {
        d /= 2;
        s += 1;
    }
    'witness: for a in [2u64, 7, 61] {
        if a % n64 == 0 {
            continue;
        }
        let mut x = u64::from(pow_mod(a as u32, d, n));
        if x == 1 || x == n64 - 1 {
            continue;
        }
        for _ in 1..s {
            x = x * x % n64;
            if x == n64 - 1 {
                continue 'witness;
            }
        }
        return false;
    }
    true
}

fn pow_mod(base: u32, mut exp: u64, modulus: u32) -> u32 {
    let m = u64::from(modulus);
    let mut result = 1 % m;
    let mut b = u64::from(base) % m;
    while exp > 0 {
        if exp & 1 == 1 {
            result = result * b % m;
        }
        b = b * b % m;
        exp >>= 1;
    }
    result as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Signature {
    pub doc_id: u64,
    pub values: Vec<u32>,
}

/// Element-wise minimum of all window hashes of one unit sequence.
fn min_hashes<T: Copy + Into<u32>>(units: &[T], family: &HashFamily, out: &mut Vec<u32>) {
    let len = family.shingle_len;
    debug_assert!(units.len() >= len);
    let first: Vec<u32> = units[..len].iter().map(|&u| u.into()).collect();
    out.clear();
    for params in &family.params {
        let mut h = hash_window_direct(&first, params).expect("units are below every base");
        let mut min = h;
        for (&out_unit, &in_unit) in units.iter().zip(&units[len..]) {
            h = roll_next(h, out_unit.into(), in_unit.into(), params);
            min = min.min(h);
        }
        out.push(min);
    }
}

/// MinHash signature of one document.
pub fn signature_of_document(doc: &CleanDocument, family: &HashFamily) -> Result<Signature> {
    signature_of_text(doc.doc_id, &doc.text, family)
}

/// Same as [`signature_of_document`] for a bare text.
pub fn signature_of_text(doc_id: u64, text: &str, family: &HashFamily) -> Result<Signature> {
    let mut values = Vec::with_capacity(family.len());
    match family.unit {
        Unit::Byte => {
            let bytes = text.as_bytes();
            if bytes.len() < family.shingle_len {
                return Err(Error::ShortDocument {
                    doc_id,
                    units: bytes.len(),
                    shingle_len: family.shingle_len,
                });
            }
            min_hashes(bytes, family, &mut values);
        }
        Unit::Codepoint => {
            let units: Vec<u32> = text.chars().map(u32::from).collect();
            if units.len() < family.shingle_len {
                return Err(Error::ShortDocument {
                    doc_id,
                    units: units.len(),
                    shingle_len: family.shingle_len,
                });
            }
            min_hashes(&units, family, &mut values);
        }
    }
    Ok(Signature { doc_id, values })
}

/// Signatures of a batch in input order, computed on `workers` threads.
pub fn signature_batch(
    docs: &[CleanDocument],
    family: &HashFamily,
    workers: usize,
) -> Vec<Result<Signature>> {
    if workers <= 1 {
        return docs.iter().map(|d| signature_of_document(d, family)).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| {
            docs.par_iter()
                .map(|d| signature_of_document(d, family))
                .collect()
        }),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); hashing sequentially");
            signature_batch(docs, family, 1)
        }
    }
}
