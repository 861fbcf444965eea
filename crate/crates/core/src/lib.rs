//! Near-duplicate document detection over JSONL corpora: rolling-hash MinHash
//! signatures, LSH bucketing, memory-bounded bucket gathering, tiled in-bucket
//! comparison and a union-find merge of the resulting pairs.

pub mod compare;
pub mod config;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod graph;
pub mod lsh;
pub mod minhash;
pub mod oracle;
pub mod pipeline;
pub mod sigstore;
pub mod synth;

pub use compare::{DuplicatePair, Threshold};
pub use config::RunConfig;
pub use error::{Error, Result};
pub use minhash::{HashFamily, Signature, Unit};
