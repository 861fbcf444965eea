//! Acceptance criteria, run in sequence so that timings do not interfere.
//! `cargo test --test acceptance -- 3 7` runs a subset.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use lshdedup::compare::{compare_bucket, BucketBatch, DuplicatePair};
use lshdedup::config::RunConfig;
use lshdedup::eval::cmd_eval_accuracy;
use lshdedup::graph::{components, emit_report, union_pairs};
use lshdedup::minhash::{derive_family, hash_window_direct, roll_next, HashFunctionParams, Unit};
use lshdedup::oracle::estimator_error_stats;
use lshdedup::pipeline::{run_dedup, REPORT_DIR};
use lshdedup::synth::{generate, pair_with_target_jaccard, vocabulary, write_corpus, SyntheticSpec};
use lshdedup::Threshold;

struct Outcome {
    pass: bool,
    detail: String,
}

/// Number, name, time limit, check.
type Criterion = (u32, &'static str, Duration, fn() -> Outcome);

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn work_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join("acceptance")
}

fn workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Writes a planted corpus under the work directory and returns its shards.
fn planted_corpus(name: &str, spec: &SyntheticSpec) -> (Vec<PathBuf>, f64) {
    let dir = work_dir().join(name);
    let _ = std::fs::remove_dir_all(&dir);
    let corpus = generate(spec).expect("valid spec");
    let share = corpus.share_above(0.8);
    (
        write_corpus(&corpus, &dir, spec.shards).expect("corpus written"),
        share,
    )
}

fn corpus_50k() -> SyntheticSpec {
    SyntheticSpec {
        docs: 50_000,
        groups: 5_000,
        group_size: (2, 2),
        seed: 2024,
        ..SyntheticSpec::default()
    }
}

fn report_bytes(ws: &Path) -> Vec<Vec<u8>> {
    ["groups.jsonl", "removal.txt", "summary.json"]
        .iter()
        .map(|f| std::fs::read(ws.join(REPORT_DIR).join(f)).expect("report file"))
        .collect()
}

// 1. Rolling hash equals direct evaluation on every window.
fn rolling_exactness() -> Outcome {
    const WINDOW: usize = 5;
    const PER_FUNCTION: usize = 65_536;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut params: Vec<HashFunctionParams> = Vec::new();
    for seed in 0..4 {
        params.extend(derive_family(seed, 8, WINDOW, Unit::Byte).unwrap().params);
    }
    let (mut windows, mut mismatches) = (0u64, 0u64);
    for p in &params {
        let text: Vec<u32> = (0..PER_FUNCTION + WINDOW - 1)
            .map(|_| rng.random_range(0..256))
            .collect();
        let mut state = hash_window_direct(&text[..WINDOW], p).unwrap();
        windows += 1;
        for start in 1..=text.len() - WINDOW {
            state = roll_next(state, text[start - 1], text[start + WINDOW - 1], p);
            let direct = hash_window_direct(&text[start..start + WINDOW], p).unwrap();
            mismatches += u64::from(state != direct);
            windows += 1;
        }
    }
    let distinct: BTreeSet<(u32, u32)> = params.iter().map(|p| (p.p, p.q)).collect();
    outcome(
        mismatches == 0 && windows >= 1_000_000 && distinct.len() >= 16,
        format!(
            "{windows} windows over {} (p, q) pairs, {mismatches} mismatches",
            distinct.len()
        ),
    )
}

/// Signatures drawn around a few centres so that similarities straddle the
/// threshold.
fn random_bucket(rng: &mut ChaCha8Rng, size: usize, hashes: usize) -> Vec<(u64, Vec<u32>)> {
    let centres: Vec<Vec<u32>> = (0..rng.random_range(1..4))
        .map(|_| (0..hashes).map(|_| rng.random_range(0..1000)).collect())
        .collect();
    let mut id = 0u64;
    (0..size)
        .map(|_| {
            id += rng.random_range(1..5);
            let centre = &centres[rng.random_range(0..centres.len())];
            let noise = rng.random_range(0.0..0.4);
            let sig = centre
                .iter()
                .map(|&v| {
                    if rng.random_bool(noise) {
                        rng.random_range(0..1000)
                    } else {
                        v
                    }
                })
                .collect();
            (id, sig)
        })
        .collect()
}

// 2. Tiled kernel equals the quadratic oracle.
fn kernel_equivalence() -> Outcome {
    const HASHES: usize = 128;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut failures, mut pairs_seen) = (0, 0usize);
    for bucket in 0..1000 {
        let size = if bucket < 2 {
            [2, 512][bucket]
        } else {
            rng.random_range(2..=512)
        };
        let entries = random_bucket(&mut rng, size, HASHES);
        // Strict threshold as a fraction num/den.
        let (num, den) = [(4u64, 5u64), (1, 2), (9, 10)][bucket % 3];
        let mut expected = BTreeSet::new();
        for i in 0..entries.len() {
            for j in i + 1..entries.len() {
                let m = entries[i]
                    .1
                    .iter()
                    .zip(&entries[j].1)
                    .filter(|(a, b)| a == b)
                    .count() as u64;
                if m * den > num * HASHES as u64 {
                    expected.insert((entries[i].0, entries[j].0, m as u32));
                }
            }
        }
        let batch = BucketBatch::new(entries).unwrap();
        let got: BTreeSet<(u64, u64, u32)> = compare_bucket(&batch, Threshold::new(num, den).unwrap())
            .into_iter()
            .map(|p| (p.lo, p.hi, p.matches))
            .collect();
        pairs_seen += expected.len();
        failures += usize::from(got != expected);
    }
    outcome(
        failures == 0,
        format!("1000 buckets, {pairs_seen} qualifying pairs, {failures} mismatched buckets"),
    )
}

// 3. Pipeline near-duplicate set against all-pairs MinHash.
fn accuracy() -> Outcome {
    let spec = corpus_50k();
    let (inputs, share) = planted_corpus("accuracy", &spec);
    let cfg = RunConfig {
        inputs,
        workspace: work_dir().join("accuracy-ws"),
        workers: workers(),
        ..RunConfig::default()
    };
    let report = cmd_eval_accuracy(&cfg, false).expect("evaluation runs");
    let row = &report.rows[0];
    let oracle = &report.rows[1];
    outcome(
        share >= 0.95 && report.dupset_jaccard >= 0.95,
        format!(
            "planted pairs with J > 0.8: {:.4}; pipeline {} / {}, all-pairs {} / {}, dupset jaccard {:.4}",
            share,
            row.dupset_size,
            row.corpus_size,
            oracle.dupset_size,
            oracle.corpus_size,
            report.dupset_jaccard
        ),
    )
}

// 4. Signature similarity estimates window Jaccard.
fn estimator_fidelity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let vocab = vocabulary(&mut rng, 20_000);
    let targets = [0.2, 0.5, 0.8];
    let pairs: Vec<(String, String)> = (0..1000)
        .map(|i| {
            let len = rng.random_range(600..1200);
            pair_with_target_jaccard(&mut rng, &vocab, targets[i % 3], len)
        })
        .collect();
    let family = derive_family(RunConfig::default().seed, 128, 5, Unit::Byte).unwrap();
    let stats = estimator_error_stats(&pairs, &family).unwrap();
    let mut by_level = String::new();
    for (k, t) in targets.iter().enumerate() {
        let level: Vec<_> = stats.pairs.iter().skip(k).step_by(3).collect();
        let exact = level.iter().map(|p| p.exact).sum::<f64>() / level.len() as f64;
        let err = level.iter().map(|p| p.abs_error).sum::<f64>() / level.len() as f64;
        by_level.push_str(&format!(" J~{t}: mean J {exact:.3}, error {err:.4};"));
    }
    outcome(
        stats.mean_abs_error <= 0.05,
        format!(
            "mean |sim - J| = {:.4} over 1000 pairs;{by_level}",
            stats.mean_abs_error
        ),
    )
}

fn bfs_components(edges: &[(u64, u64)]) -> Vec<Vec<u64>> {
    let mut adj: BTreeMap<u64, Vec<u64>> = BTreeMap::new();
    for &(a, b) in edges {
        adj.entry(a).or_default().push(b);
        adj.entry(b).or_default().push(a);
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for &start in adj.keys() {
        if !seen.insert(start) {
            continue;
        }
        let (mut comp, mut queue) = (vec![start], VecDeque::from([start]));
        while let Some(v) = queue.pop_front() {
            for &w in &adj[&v] {
                if seen.insert(w) {
                    comp.push(w);
                    queue.push_back(w);
                }
            }
        }
        comp.sort_unstable();
        out.push(comp);
    }
    out.sort();
    out
}

// 5. Union-find components against breadth-first search.
fn union_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut failures = Vec::new();
    let mut max_edges = 0;
    for case in 0..100 {
        let edges_n = if case == 0 {
            100_000
        } else {
            rng.random_range(1..=100_000)
        };
        max_edges = max_edges.max(edges_n);
        let nodes = (edges_n as f64 * rng.random_range(0.3..3.0)).max(2.0) as u64;
        let spread = rng.random_range(1..1000u64);
        let edges: Vec<(u64, u64)> = (0..edges_n)
            .filter_map(|_| {
                let (a, b) = (
                    rng.random_range(0..nodes) * spread,
                    rng.random_range(0..nodes) * spread,
                );
                (a != b).then_some((a, b))
            })
            .collect();
        let pairs: Vec<DuplicatePair> = edges
            .iter()
            .map(|&(a, b)| DuplicatePair::canonical(a, b, 0))
            .collect();
        let groups = components(&mut union_pairs(pairs.iter().copied()));
        let members: Vec<Vec<u64>> = groups.iter().map(|g| g.members.clone()).collect();
        let minimal = groups
            .iter()
            .all(|g| g.members.iter().all(|&m| g.representative <= m));
        let mut shuffled = pairs.clone();
        shuffled.shuffle(&mut rng);
        let report = emit_report(groups, nodes);
        let permuted = emit_report(components(&mut union_pairs(shuffled)), nodes);
        if members != bfs_components(&edges) || !minimal || report != permuted {
            failures.push(case);
        }
    }
    outcome(
        failures.is_empty(),
        format!("100 edge lists up to {max_edges} edges, failing cases {failures:?}"),
    )
}

// 6. Identical reports across reruns and worker counts.
fn determinism() -> Outcome {
    let (inputs, _) = planted_corpus("determinism", &corpus_50k());
    let mut reports = Vec::new();
    for (name, w) in [("w1-a", 1), ("w1-b", 1), ("w8", 8)] {
        let cfg = RunConfig {
            inputs: inputs.clone(),
            workspace: work_dir().join(format!("determinism-{name}")),
            workers: w,
            ..RunConfig::default()
        };
        run_dedup(&cfg).expect("pipeline runs");
        reports.push(report_bytes(&cfg.workspace));
    }
    let rerun = reports[0] == reports[1];
    let across = reports[0] == reports[2];
    outcome(
        rerun && across,
        format!("rerun identical: {rerun}; 1 vs 8 workers identical: {across}"),
    )
}

// 7. Bounded gather memory with several passes per worker.
fn bounded_gather() -> Outcome {
    const WORKERS: usize = 4;
    let (inputs, _) = planted_corpus("gather", &corpus_50k());
    let base = RunConfig {
        inputs,
        workers: WORKERS,
        ..RunConfig::default()
    };
    let single = RunConfig {
        workspace: work_dir().join("gather-single"),
        ..base.clone()
    };
    let one = run_dedup(&single).expect("single-pass run");
    let total = one.run.total_signature_bytes();
    let budget = total * WORKERS as u64 / 8;
    let bounded = RunConfig {
        workspace: work_dir().join("gather-bounded"),
        memory_budget: budget,
        ..base
    };
    let many = run_dedup(&bounded).expect("bounded run");
    let same = report_bytes(&single.workspace) == report_bytes(&bounded.workspace);
    let peak = many.compare.peak_gather_bytes;
    let multi = many.compare.passes > WORKERS && one.compare.passes == WORKERS;
    outcome(
        same && multi && peak as f64 <= 1.1 * budget as f64,
        format!(
            "budget {budget} B, C = {} of K = {}, {} passes (single-pass run: {}), peak {peak} B = {:.3} x budget, reports identical: {same}",
            many.compare.buckets_per_pass,
            many.compare.buckets,
            many.compare.passes,
            one.compare.passes,
            peak as f64 / budget as f64
        ),
    )
}

// 8. Eight workers take at most half the single-worker time.
fn scaling() -> Outcome {
    let spec = SyntheticSpec {
        docs: 100_000,
        groups: 10_000,
        group_size: (2, 2),
        seed: 8,
        shards: 16,
        ..SyntheticSpec::default()
    };
    let (inputs, _) = planted_corpus("scaling", &spec);
    let mut times = Vec::new();
    for w in [1, 8] {
        let cfg = RunConfig {
            inputs: inputs.clone(),
            workspace: work_dir().join(format!("scaling-w{w}")),
            workers: w,
            ..RunConfig::default()
        };
        let start = Instant::now();
        run_dedup(&cfg).expect("pipeline runs");
        times.push(start.elapsed().as_secs_f64());
    }
    outcome(
        times[1] <= 0.5 * times[0],
        format!(
            "1 worker {:.2} s, 8 workers {:.2} s, ratio {:.3} (limit 0.5); {} hardware thread(s) available",
            times[0],
            times[1],
            times[1] / times[0],
            workers()
        ),
    )
}

/// `count` distinct random 5-byte windows.
fn distinct_windows(rng: &mut ChaCha8Rng, count: usize) -> Vec<[u32; 5]> {
    let mut keys = BTreeSet::new();
    while keys.len() < count {
        keys.insert(rng.random_range(0..1u64 << 40));
    }
    let mut windows: Vec<[u32; 5]> = keys
        .into_iter()
        .map(|k| std::array::from_fn(|i| ((k >> (8 * i)) & 0xff) as u32))
        .collect();
    windows.shuffle(rng);
    windows
}

// 9. Uniformity and collision rate of every derived hash function.
fn hash_quality() -> Outcome {
    const N: usize = 1_000_000;
    const BINS: usize = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let windows = distinct_windows(&mut rng, N);
    let family = derive_family(RunConfig::default().seed, 128, 5, Unit::Byte).unwrap();
    let critical = ChiSquared::new((BINS - 1) as f64).unwrap().inverse_cdf(0.999);
    let expected_per_bin = N as f64 / BINS as f64;
    let pairs = (N as f64) * (N as f64 - 1.0) / 2.0;

    let (mut worst_chi, mut chi_failures) = (0.0f64, 0);
    let (mut collisions, mut mean, mut variance) = (0u64, 0.0, 0.0);
    let mut values = vec![0u32; N];
    for p in &family.params {
        let mut bins = [0u64; BINS];
        for (v, w) in values.iter_mut().zip(&windows) {
            *v = hash_window_direct(w, p).unwrap();
            bins[*v as usize % BINS] += 1;
        }
        let chi: f64 = bins
            .iter()
            .map(|&o| (o as f64 - expected_per_bin).powi(2) / expected_per_bin)
            .sum();
        worst_chi = worst_chi.max(chi);
        chi_failures += usize::from(chi > critical);

        values.sort_unstable();
        let mut run = 1u64;
        for k in 1..=N {
            if k < N && values[k] == values[k - 1] {
                run += 1;
            } else {
                collisions += run * (run - 1) / 2;
                run = 1;
            }
        }
        let rate = 1.0 / f64::from(p.p);
        mean += pairs * rate;
        variance += pairs * rate * (1.0 - rate);
    }
    let z = (collisions as f64 - mean) / variance.sqrt();
    outcome(
        chi_failures == 0 && z.abs() <= 3.0,
        format!(
            "{} functions: worst chi-square {worst_chi:.1} vs critical {critical:.1}, {chi_failures} failing; \
             colliding pairs {collisions} vs expected {mean:.0} (z = {z:.2})",
            family.len()
        ),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        (
            1,
            "rolling hash exactness",
            Duration::from_secs(60),
            rolling_exactness,
        ),
        (
            2,
            "tiled kernel equals quadratic oracle",
            Duration::from_secs(120),
            kernel_equivalence,
        ),
        (
            3,
            "accuracy against all-pairs MinHash",
            Duration::from_secs(600),
            accuracy,
        ),
        (4, "estimator fidelity", Duration::MAX, estimator_fidelity),
        (5, "union-find equals BFS components", Duration::MAX, union_oracle),
        (
            6,
            "determinism across runs and workers",
            Duration::MAX,
            determinism,
        ),
        (
            7,
            "memory-bounded multi-pass gather",
            Duration::MAX,
            bounded_gather,
        ),
        (8, "8-worker speedup", Duration::MAX, scaling),
        (9, "hash uniformity and collisions", Duration::MAX, hash_quality),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    std::fs::create_dir_all(work_dir()).expect("work directory");

    let mut failed = Vec::new();
    for (id, name, limit, run) in criteria {
        if !selected.is_empty() && !selected.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = std::panic::catch_unwind(run).unwrap_or_else(|_| outcome(false, "panicked"));
        let elapsed = start.elapsed();
        let in_time = elapsed <= limit;
        let pass = result.pass && in_time;
        let limit_note = if limit == Duration::MAX {
            String::new()
        } else {
            format!(", limit {} s", limit.as_secs())
        };
        println!(
            "criterion {id} {}: {name}: {} [{:.1} s{limit_note}]",
            if pass { "PASS" } else { "FAIL" },
            result.detail,
            elapsed.as_secs_f64()
        );
        if !pass {
            failed.push(id);
        }
    }
    let _ = std::fs::remove_dir_all(work_dir());
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
