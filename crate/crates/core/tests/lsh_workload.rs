use std::collections::HashMap;

use lshdedup::lsh::{band_buckets, BandingConfig, BucketKey, BucketScale};
use lshdedup::minhash::{derive_family, signature_of_text, Signature, Unit};
use lshdedup::synth::{generate, SyntheticSpec};

fn signatures(seed: u64) -> Vec<Signature> {
    let spec = SyntheticSpec {
        docs: 600,
        groups: 60,
        length: (250, 600),
        seed,
        ..SyntheticSpec::default()
    };
    let corpus = generate(&spec).unwrap();
    let family = derive_family(seed, 128, 5, Unit::Byte).unwrap();
    corpus
        .texts
        .iter()
        .enumerate()
        .map(|(i, t)| signature_of_text(i as u64, t, &family).unwrap())
        .collect()
}

/// In-bucket comparisons: sum over buckets of c(c-1)/2.
fn workload(sigs: &[Signature], buckets: u32) -> u64 {
    let cfg = BandingConfig::new(16, 8, buckets, BucketScale::default()).unwrap();
    let mut sizes: HashMap<BucketKey, u64> = HashMap::new();
    for s in sigs {
        for (band, bucket) in band_buckets(&s.values, &cfg).unwrap().into_iter().enumerate() {
            *sizes
                .entry(BucketKey {
                    band: band as u32,
                    bucket,
                })
                .or_default() += 1;
        }
    }
    sizes.values().map(|&c| c * (c - 1) / 2).sum()
}

fn median(mut v: Vec<u64>) -> u64 {
    v.sort_unstable();
    v[v.len() / 2]
}

#[test]
fn candidate_workload_does_not_grow_with_bucket_count() {
    let corpora: Vec<Vec<Signature>> = (1..=5).map(signatures).collect();
    let ks = [1u32, 4, 16, 64, 256, 1024, 4096];
    let medians: Vec<u64> = ks
        .iter()
        .map(|&k| median(corpora.iter().map(|c| workload(c, k)).collect()))
        .collect();
    for w in medians.windows(2) {
        assert!(w[1] <= w[0], "workload rose with K: {medians:?}");
    }
    // K = 1 compares everything in every band.
    assert_eq!(medians[0], 16 * 600 * 599 / 2);
}

#[test]
fn identical_bands_always_share_a_bucket() {
    let sigs = signatures(9);
    for k in [1u32, 7, 2000] {
        let cfg = BandingConfig::new(16, 8, k, BucketScale::default()).unwrap();
        for pair in sigs.windows(2) {
            let (a, b) = (&pair[0].values, &pair[1].values);
            let (ba, bb) = (band_buckets(a, &cfg).unwrap(), band_buckets(b, &cfg).unwrap());
            assert_eq!(ba.len(), 16);
            for band in 0..16 {
                if a[band * 8..(band + 1) * 8] == b[band * 8..(band + 1) * 8] {
                    assert_eq!(ba[band], bb[band]);
                }
            }
        }
    }
}
