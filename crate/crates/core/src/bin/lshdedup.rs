use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lshdedup::config::parse_bytes;
use lshdedup::eval::{cmd_bench, cmd_eval_accuracy};
use lshdedup::lsh::BucketScale;
use lshdedup::pipeline::{run_dedup, run_gather_compare, run_hash, run_union, REPORT_DIR};
use lshdedup::synth::{cmd_gen_synthetic, SyntheticSpec};
use lshdedup::{Error, Result, RunConfig, Threshold, Unit};

#[derive(Parser)]
#[command(
    name = "lshdedup",
    version,
    about = "Near-duplicate detection for JSONL corpora"
)]
struct Cli {
    /// Log progress (-v) or debug detail (-vv).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run hash, gather-compare and union.
    Dedup(RunArgs),
    /// Write signature files for every input.
    Hash(RunArgs),
    /// Gather buckets in memory-bounded passes and write candidate pairs.
    GatherCompare(RunArgs),
    /// Merge pairs into groups and write the report.
    Union(RunArgs),
    /// Generate a corpus with planted near-duplicate groups.
    GenSynthetic(SynthArgs),
    /// Compare the pipeline's near-duplicate set with all-pairs MinHash.
    EvalAccuracy {
        #[command(flatten)]
        run: RunArgs,
        /// Run the all-pairs oracle above its document limit.
        #[arg(long)]
        allow_large: bool,
    },
    /// Time the pipeline stages for several worker counts.
    Bench {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,8")]
        worker_list: Vec<usize>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Config file of `key = value` lines; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Input JSONL files, or directories whose *.jsonl files are used.
    #[arg(long, num_args = 1..)]
    input: Vec<PathBuf>,
    #[arg(long)]
    workspace: Option<PathBuf>,
    #[arg(long)]
    hashes: Option<usize>,
    #[arg(long)]
    bands: Option<usize>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    shingle_len: Option<usize>,
    /// `byte` or `codepoint`.
    #[arg(long)]
    unit: Option<Unit>,
    #[arg(long)]
    threshold: Option<Threshold>,
    /// Bucket count scale: K = ceil(scale * sqrt(N)).
    #[arg(long)]
    bucket_scale: Option<BucketScale>,
    #[arg(long)]
    min_chars: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Bytes, or a size such as 512MiB or 4G.
    #[arg(long)]
    memory_budget: Option<String>,
    /// Fix C instead of deriving it from the memory budget.
    #[arg(long)]
    buckets_per_pass: Option<u32>,
    #[arg(long)]
    text_field: Option<String>,
    /// fsync signature files on close.
    #[arg(long)]
    fsync: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory for shards and ground_truth.json.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    docs: Option<usize>,
    #[arg(long)]
    groups: Option<usize>,
    #[arg(long)]
    group_size_min: Option<usize>,
    #[arg(long)]
    group_size_max: Option<usize>,
    #[arg(long)]
    edit_rate: Option<f64>,
    #[arg(long)]
    min_length: Option<usize>,
    #[arg(long)]
    max_length: Option<usize>,
    #[arg(long)]
    vocabulary: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    shards: Option<usize>,
}

fn expand_inputs(paths: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let entries = std::fs::read_dir(p).map_err(|e| Error::io(p, e))?;
            let mut found: Vec<PathBuf> = entries
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file() && f.extension().is_some_and(|x| x == "jsonl"))
                .collect();
            if found.is_empty() {
                return Err(Error::config(format!("no .jsonl files in {}", p.display())));
            }
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn resolve(args: RunArgs) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &args.config {
        cfg.load_file(path)?;
    }
    if !args.input.is_empty() {
        cfg.inputs = args.input;
    }
    cfg.inputs = expand_inputs(&cfg.inputs)?;
    macro_rules! flag {
        ($($field:ident => $target:ident),*) => {
            $(if let Some(v) = args.$field { cfg.$target = v; })*
        };
    }
    flag!(workspace => workspace, hashes => hashes, bands => bands, rows => rows,
          shingle_len => shingle_len, unit => unit, threshold => threshold,
          bucket_scale => bucket_scale, min_chars => min_chars, seed => seed,
          workers => workers, text_field => text_field);
    if let Some(budget) = &args.memory_budget {
        cfg.memory_budget = parse_bytes(budget)?;
    }
    if args.buckets_per_pass.is_some() {
        cfg.buckets_per_pass = args.buckets_per_pass;
    }
    cfg.fsync |= args.fsync;
    cfg.validate()?;
    Ok(cfg)
}

fn synth_spec(args: &SynthArgs) -> SyntheticSpec {
    let d = SyntheticSpec::default();
    let group_min = args.group_size_min.unwrap_or(d.group_size.0);
    SyntheticSpec {
        docs: args.docs.unwrap_or(d.docs),
        groups: args.groups.unwrap_or(d.groups),
        group_size: (
            group_min,
            args.group_size_max.unwrap_or(group_min.max(d.group_size.1)),
        ),
        edit_rate: args.edit_rate.unwrap_or(d.edit_rate),
        length: (
            args.min_length.unwrap_or(d.length.0),
            args.max_length.unwrap_or(d.length.1),
        ),
        vocabulary: args.vocabulary.unwrap_or(d.vocabulary),
        seed: args.seed.unwrap_or(d.seed),
        shards: args.shards.unwrap_or(d.shards),
        shingle_len: d.shingle_len,
    }
}

fn print_json<T: serde::Serialize>(value: &T) {
    println!("{}", serde_json::to_string_pretty(value).expect("serializable"));
}

fn report_dir(cfg: &RunConfig) -> PathBuf {
    cfg.workspace.join(REPORT_DIR)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Dedup(args) => {
            let cfg = resolve(args)?;
            let out = run_dedup(&cfg)?;
            println!(
                "{} near duplicates ({:.4}) in {} groups; {} to remove; {} distinct pairs over {} passes",
                out.report.ratio_label(),
                out.report.ratio(),
                out.report.groups.len(),
                out.report.removal.len(),
                out.report.counters.distinct_pairs,
                out.compare.passes
            );
            let t = out.timings;
            println!(
                "hash {:.3} s, gather-compare {:.3} s, union {:.3} s, total {:.3} s",
                t.hash_secs, t.compare_secs, t.union_secs, t.total_secs
            );
            println!("report: {}", report_dir(&cfg).display());
        }
        Command::Hash(args) => {
            let cfg = resolve(args)?;
            let out = run_hash(&cfg).map_err(|e| e.in_stage("hash"))?;
            println!(
                "{} signature files, {} documents kept of {}, {} rejects, K = {} ({:.3} s)",
                out.run.signature_files.len(),
                out.run.docs_kept,
                out.run.docs_scanned,
                out.run.rejects,
                out.run.header.buckets,
                out.elapsed.as_secs_f64()
            );
        }
        Command::GatherCompare(args) => {
            let cfg = resolve(args)?;
            let out = run_gather_compare(&cfg).map_err(|e| e.in_stage("gather-compare"))?;
            let m = &out.manifest;
            println!(
                "C = {} of K = {}, {} passes, {} pairs, peak gather {} bytes ({:.3} s)",
                m.buckets_per_pass,
                m.buckets,
                m.passes,
                m.pairs_written,
                m.peak_gather_bytes,
                out.elapsed.as_secs_f64()
            );
        }
        Command::Union(args) => {
            let cfg = resolve(args)?;
            let out = run_union(&cfg).map_err(|e| e.in_stage("union"))?;
            println!(
                "{} near duplicates in {} groups; report: {} ({:.3} s)",
                out.report.ratio_label(),
                out.report.groups.len(),
                report_dir(&cfg).display(),
                out.elapsed.as_secs_f64()
            );
        }
        Command::GenSynthetic(args) => {
            let spec = synth_spec(&args);
            let (corpus, paths) = cmd_gen_synthetic(&spec, &args.out)?;
            println!(
                "{} documents in {} shards under {}; {} planted pairs, {:.4} with window Jaccard > 0.8",
                corpus.texts.len(),
                paths.len(),
                display(&args.out),
                corpus.pairs.len(),
                corpus.share_above(0.8)
            );
        }
        Command::EvalAccuracy { run, allow_large } => {
            let cfg = resolve(run)?;
            let report = cmd_eval_accuracy(&cfg, allow_large)?;
            print_json(&report.rows);
            println!(
                "dupset jaccard vs all-pairs MinHash: {:.4}",
                report.dupset_jaccard
            );
        }
        Command::Bench { run, worker_list } => {
            let cfg = resolve(run)?;
            let report = cmd_bench(&cfg, &worker_list)?;
            print!("{}", report.table());
            print_json(&report);
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
