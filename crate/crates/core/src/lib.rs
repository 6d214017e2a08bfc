//! Merkle-aggregated, KDF-hardened timestamping of rotated log files.
//!
//! One notarized digest covers a whole batch of files. Each file gets its own
//! [`marker::TimestampMarker`] (root, Merkle path, KDF parameters, commitment and
//! token) which can be verified independently of its siblings.
//!
//! The crate is split by pipeline stage:
//!
//! - [`splitter`]: disaggregates a log stream into per-retention-class files
//! - [`merkle`]: tree construction, membership proofs and verification
//! - [`kdf`]: iterated-hash hardening between root and timestamping, plus the
//!   parameter commitment
//! - [`tsa`]: timestamping backends (local hash-chained ledger, external TSA stub)
//! - [`marker`]: the `.tsm` per-file evidence format
//! - [`pipeline`]: stamp / verify orchestration used by the CLI
//! - [`estimator`]: storage, cost and brute-force feasibility arithmetic
//!
//! With the default `parallel` feature, leaf hashing and level construction run
//! on rayon's pool; results are bit-identical to the sequential path.

pub mod digest;
pub mod estimator;
pub mod kdf;
pub mod marker;
pub mod merkle;
pub mod pipeline;
pub mod splitter;
pub mod tsa;

pub use digest::{Digest, HashFn, Sha256Fn, DIGEST_LEN};
pub use merkle::{MerkleError, MerkleProof, MerkleTree, ProofStep, Side};
