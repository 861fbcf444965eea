//! Synthetic corpora with planted near-duplicate groups and known ground truth.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, IoContext, Result};
use crate::minhash::Unit;
use crate::oracle::exact_jaccard;

/// Edits per character that keep at least 95% of planted pairs above a window
/// Jaccard of 0.8 with 5-byte windows.
pub const DEFAULT_EDIT_RATE: f64 = 0.01;
/// JSON array of planted pairs; not `.jsonl` so directory inputs skip it.
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub docs: usize,
    pub groups: usize,
    /// Inclusive bounds on the members per planted group.
    pub group_size: (usize, usize),
    /// Probability of an edit (substitution, insertion or deletion) at each
    /// character of a copy.
    pub edit_rate: f64,
    /// Inclusive bounds on the base text length in characters.
    pub length: (usize, usize),
    pub vocabulary: usize,
    pub seed: u64,
    pub shards: usize,
    /// Window length used for the ground-truth Jaccard.
    pub shingle_len: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            docs: 50_000,
            groups: 5_000,
            group_size: (2, 2),
            edit_rate: DEFAULT_EDIT_RATE,
            length: (300, 1500),
            vocabulary: 20_000,
            seed: 7,
            shards: 8,
            shingle_len: 5,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let (gmin, gmax) = self.group_size;
        if gmin < 2 || gmax < gmin {
            return Err(Error::config("group sizes must satisfy 2 <= min <= max"));
        }
        if self.groups * gmax > self.docs {
            return Err(Error::config(format!(
                "{} groups of up to {gmax} documents do not fit in {} documents",
                self.groups, self.docs
            )));
        }
        if !(0.0..=1.0).contains(&self.edit_rate) {
            return Err(Error::config("edit rate must lie in [0, 1]"));
        }
        let (lmin, lmax) = self.length;
        if lmin < self.shingle_len.max(1) || lmax < lmin {
            return Err(Error::config("base lengths must satisfy L <= min <= max"));
        }
        if self.vocabulary == 0 || self.shards == 0 || self.shingle_len == 0 {
            return Err(Error::config(
                "vocabulary, shards and shingle length must be positive",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedPair {
    pub a: u64,
    pub b: u64,
    pub group: u32,
    pub jaccard: f64,
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    /// Texts in corpus order; the index is the pipeline doc_id.
    pub texts: Vec<String>,
    /// Doc ids of each planted group, ascending.
    pub groups: Vec<Vec<u64>>,
    pub pairs: Vec<PlantedPair>,
}

impl SyntheticCorpus {
    /// Fraction of planted pairs whose window Jaccard exceeds `threshold`.
    pub fn share_above(&self, threshold: f64) -> f64 {
        if self.pairs.is_empty() {
            return 1.0;
        }
        self.pairs.iter().filter(|p| p.jaccard > threshold).count() as f64 / self.pairs.len() as f64
    }
}

/// Pseudo-words of 1 to 10 letters; short words are the most frequent.
pub fn vocabulary(rng: &mut impl Rng, size: usize) -> Vec<String> {
    (0..size)
        .map(|_| {
            let len = 1 + rng.random_range(0..4) + rng.random_range(0..4) + rng.random_range(0..3);
            (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
        })
        .collect()
}

/// Words drawn with a skew towards the front of the vocabulary, joined by
/// spaces, until the text reaches `len` characters.
pub fn random_text(rng: &mut impl Rng, vocab: &[String], len: usize) -> String {
    let mut text = String::with_capacity(len + 12);
    while text.len() < len {
        if !text.is_empty() {
            text.push(if rng.random_bool(0.08) { '.' } else { ' ' });
        }
        let u: f64 = rng.random();
        let i = ((u * u) * vocab.len() as f64) as usize;
        text.push_str(&vocab[i.min(vocab.len() - 1)]);
    }
    text.truncate(len);
    text
}

/// Applies independent character edits at `rate`: each position is kept, or
/// with probability `rate` substituted, deleted or followed by an insertion.
pub fn apply_edits(rng: &mut impl Rng, text: &str, rate: f64) -> String {
    let mut out = String::with_capacity(text.len() + 16);
    for c in text.chars() {
        if rate == 0.0 || !rng.random_bool(rate) {
            out.push(c);
            continue;
        }
        match rng.random_range(0..3) {
            0 => {
                let mut sub = rng.random_range(b'a'..=b'z') as char;
                if sub == c {
                    sub = if c == 'z' { 'a' } else { (c as u8 + 1) as char };
                }
                out.push(sub);
            }
            1 => {}
            _ => {
                out.push(c);
                out.push(rng.random_range(b'a'..=b'z') as char);
            }
        }
    }
    out
}

/// Generates the corpus in memory.
pub fn generate(spec: &SyntheticSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = vocabulary(&mut rng, spec.vocabulary);
    let mut texts: Vec<(Option<u32>, String)> = Vec::with_capacity(spec.docs);
    for g in 0..spec.groups {
        let size = rng.random_range(spec.group_size.0..=spec.group_size.1);
        let len = rng.random_range(spec.length.0..=spec.length.1);
        let base = random_text(&mut rng, &vocab, len);
        for _ in 1..size {
            texts.push((Some(g as u32), apply_edits(&mut rng, &base, spec.edit_rate)));
        }
        texts.push((Some(g as u32), base));
    }
    while texts.len() < spec.docs {
        let len = rng.random_range(spec.length.0..=spec.length.1);
        texts.push((None, random_text(&mut rng, &vocab, len)));
    }
    texts.shuffle(&mut rng);

    let mut groups = vec![Vec::new(); spec.groups];
    for (id, (g, _)) in texts.iter().enumerate() {
        if let Some(g) = g {
            groups[*g as usize].push(id as u64);
        }
    }
    let texts: Vec<String> = texts.into_iter().map(|(_, t)| t).collect();
    let mut pairs = Vec::new();
    for (g, members) in groups.iter().enumerate() {
        for (i, &a) in members.iter().enumerate() {
            for &b in &members[i + 1..] {
                let j = exact_jaccard(
                    &texts[a as usize],
                    &texts[b as usize],
                    spec.shingle_len,
                    Unit::Byte,
                )?;
                pairs.push(PlantedPair {
                    a,
                    b,
                    group: g as u32,
                    jaccard: j.as_f64(),
                });
            }
        }
    }
    Ok(SyntheticCorpus { texts, groups, pairs })
}

/// Writes `corpus-NNNNN.jsonl` shards and the ground-truth pair file into
/// `dir`. Returns the shard paths in corpus order.
pub fn write_corpus(corpus: &SyntheticCorpus, dir: &Path, shards: usize) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).at(dir)?;
    let shards = shards.max(1);
    let per_shard = corpus.texts.len().div_ceil(shards).max(1);
    let mut paths = Vec::with_capacity(shards);
    for (s, chunk) in corpus.texts.chunks(per_shard).enumerate() {
        let path = dir.join(format!("corpus-{s:05}.jsonl"));
        let mut out = BufWriter::new(File::create(&path).at(&path)?);
        for (i, text) in chunk.iter().enumerate() {
            let line = serde_json::json!({ "id": s * per_shard + i, "text": text });
            serde_json::to_writer(&mut out, &line).map_err(|e| Error::io(&path, e.into()))?;
            out.write_all(b"\n").at(&path)?;
        }
        out.flush().at(&path)?;
        paths.push(path);
    }
    let truth = dir.join(GROUND_TRUTH_FILE);
    let json = serde_json::to_vec(&corpus.pairs).map_err(|e| Error::io(&truth, e.into()))?;
    std::fs::write(&truth, json).at(&truth)?;
    Ok(paths)
}

pub fn read_ground_truth(path: &Path) -> Result<Vec<PlantedPair>> {
    let bytes = std::fs::read(path).at(path)?;
    serde_json::from_slice(&bytes).map_err(|e| Error::corrupt(path, e.to_string()))
}

/// Generates and writes a corpus; see [`write_corpus`].
pub fn cmd_gen_synthetic(spec: &SyntheticSpec, dir: &Path) -> Result<(SyntheticCorpus, Vec<PathBuf>)> {
    let corpus = generate(spec)?;
    let paths = write_corpus(&corpus, dir, spec.shards)?;
    Ok((corpus, paths))
}

/// Two texts whose window Jaccard is close to `target`: a shared middle of
/// `len` characters flanked by independent random text on each side.
pub fn pair_with_target_jaccard(
    rng: &mut impl Rng,
    vocab: &[String],
    target: f64,
    len: usize,
) -> (String, String) {
    // With s shared and d distinct windows per side, J = s / (s + 2d).
    let target = target.clamp(0.01, 0.99);
    let distinct = ((len as f64) * (1.0 - target) / (2.0 * target)).round() as usize;
    let shared = random_text(rng, vocab, len);
    let mut side = |n: usize| {
        if n == 0 {
            String::new()
        } else {
            random_text(rng, vocab, n)
        }
    };
    let (a_pre, a_post, b_pre, b_post) = (
        side(distinct / 2),
        side(distinct - distinct / 2),
        side(distinct / 2),
        side(distinct - distinct / 2),
    );
    (
        format!("{a_pre} {shared} {a_post}"),
        format!("{b_pre} {shared} {b_post}"),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(edit_rate: f64, groups: usize) -> SyntheticSpec {
        SyntheticSpec {
            docs: 300,
            groups,
            group_size: (2, 4),
            edit_rate,
            seed: 3,
            ..SyntheticSpec::default()
        }
    }

    #[test]
    fn zero_edit_rate_copies_exactly() {
        let c = generate(&small(0.0, 40)).unwrap();
        assert!(!c.pairs.is_empty());
        for p in &c.pairs {
            assert_eq!(c.texts[p.a as usize], c.texts[p.b as usize]);
            assert_eq!(p.jaccard, 1.0);
        }
    }

    #[test]
    fn no_groups_means_no_ground_truth() {
        let c = generate(&small(0.01, 0)).unwrap();
        assert_eq!(c.texts.len(), 300);
        assert!(c.pairs.is_empty());
    }

    #[test]
    fn groups_are_all_within_pairs() {
        let c = generate(&small(0.01, 40)).unwrap();
        let expected: usize = c.groups.iter().map(|g| g.len() * (g.len() - 1) / 2).sum();
        assert_eq!(c.pairs.len(), expected);
        assert!(c.groups.iter().all(|g| (2..=4).contains(&g.len())));
        assert_eq!(c.texts.len(), 300);
    }

    #[test]
    fn generation_is_seeded() {
        let a = generate(&small(0.02, 20)).unwrap();
        let b = generate(&small(0.02, 20)).unwrap();
        assert_eq!(a.texts, b.texts);
        let c = generate(&SyntheticSpec {
            seed: 4,
            ..small(0.02, 20)
        })
        .unwrap();
        assert_ne!(a.texts, c.texts);
    }

    #[test]
    fn shards_and_truth_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticSpec {
            shards: 3,
            ..small(0.01, 10)
        };
        let (corpus, paths) = cmd_gen_synthetic(&spec, dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let mut texts = Vec::new();
        for p in &paths {
            let (docs, rejects) = crate::corpus::load_jsonl_file(p, 0, "text").unwrap();
            assert!(rejects.is_empty());
            texts.extend(docs.into_iter().map(|d| d.text));
        }
        assert_eq!(texts, corpus.texts);
        assert_eq!(
            read_ground_truth(&dir.path().join(GROUND_TRUTH_FILE)).unwrap(),
            corpus.pairs
        );
    }

    #[test]
    fn bad_specs_are_rejected() {
        assert!(generate(&SyntheticSpec {
            docs: 10,
            groups: 6,
            ..small(0.0, 0)
        })
        .is_err());
        assert!(generate(&SyntheticSpec {
            group_size: (1, 2),
            ..small(0.0, 1)
        })
        .is_err());
        assert!(generate(&SyntheticSpec {
            edit_rate: 1.5,
            ..small(0.0, 1)
        })
        .is_err());
    }

    #[test]
    fn target_jaccard_pairs_land_near_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let vocab = vocabulary(&mut rng, 5000);
        for target in [0.2, 0.5, 0.8] {
            let mut total = 0.0;
            for _ in 0..20 {
                let (a, b) = pair_with_target_jaccard(&mut rng, &vocab, target, 800);
                total += exact_jaccard(&a, &b, 5, Unit::Byte).unwrap().as_f64();
            }
            let mean = total / 20.0;
            assert!((mean - target).abs() < 0.1, "target {target}, mean {mean}");
        }
    }

    #[test]
    fn default_edit_rate_keeps_planted_pairs_above_threshold() {
        let spec = SyntheticSpec {
            docs: 4000,
            groups: 1000,
            ..SyntheticSpec::default()
        };
        let c = generate(&spec).unwrap();
        assert!(c.share_above(0.8) >= 0.95, "{}", c.share_above(0.8));
    }
}
