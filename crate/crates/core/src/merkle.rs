//! Merkle tree accumulator over ordered file contents.
//!
//! Construction rules:
//!
//! - a leaf is `sha256(content)`; no domain-separation prefix
//! - an internal node is `sha256(left ‖ right)` over the raw 32-byte children
//! - when a level has odd length, the last node is paired with itself
//! - a single-leaf tree has the leaf digest as its root
//!
//! Proofs are canonical: every proof for an `n`-leaf tree has exactly
//! `⌈log₂ n⌉` steps, including the duplicated value at single-child positions.

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use thiserror::Error;

use crate::digest::{Digest, HashFn, Sha256Fn};

/// Proofs longer than this cannot describe a tree addressable by a `u64` index.
pub const MAX_PROOF_STEPS: usize = 64;

/// Levels shorter than this are always hashed sequentially.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
const PARALLEL_MIN_NODES: usize = 512;

/// Leaf sets smaller than this (in total bytes) are hashed sequentially
/// unless they are also numerous.
#[cfg_attr(not(feature = "parallel"), allow(dead_code))]
const PARALLEL_MIN_LEAF_BYTES: usize = 256 * 1024;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MerkleError {
    #[error("nothing to timestamp: empty input list")]
    EmptyInput,
    #[error("leaf index {index} out of range for tree with {leaf_count} leaves")]
    IndexRange { index: u64, leaf_count: u64 },
    #[error("malformed proof: {0}")]
    MalformedProof(String),
}

/// Which side of the running digest a proof sibling is concatenated on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn as_char(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }

    pub fn from_char(c: char) -> Option<Self> {
        match c {
            'L' => Some(Side::Left),
            'R' => Some(Side::Right),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProofStep {
    pub sibling: Digest,
    pub side: Side,
}

/// Merkle path for one leaf, ordered leaf-side first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleProof {
    pub leaf_index: u64,
    pub steps: Vec<ProofStep>,
}

/// How level construction is scheduled. Both modes produce identical trees.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExecMode {
    Sequential,
    /// Uses rayon when the `parallel` feature is enabled, otherwise falls back
    /// to sequential.
    Parallel,
}

impl Default for ExecMode {
    fn default() -> Self {
        if cfg!(feature = "parallel") {
            ExecMode::Parallel
        } else {
            ExecMode::Sequential
        }
    }
}

/// `⌈log₂ n⌉`, the number of levels above the leaves (0 for `n <= 1`).
pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        u64::BITS - (n - 1).leading_zeros()
    }
}

pub fn hash_leaf(content: &[u8]) -> Digest {
    Sha256Fn.hash(content)
}

pub fn hash_node(left: &Digest, right: &Digest) -> Digest {
    Sha256Fn.hash_parts(&[left.as_bytes(), right.as_bytes()])
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MerkleTree {
    /// `levels[0]` holds the leaf digests, the last level holds only the root.
    levels: Vec<Vec<Digest>>,
}

impl MerkleTree {
    /// Builds a tree over `leaves` in the given order.
    pub fn build<L>(leaves: &[L]) -> Result<Self, MerkleError>
    where
        L: AsRef<[u8]> + Sync,
    {
        Self::build_with(leaves, ExecMode::default())
    }

    pub fn build_with<L>(leaves: &[L], mode: ExecMode) -> Result<Self, MerkleError>
    where
        L: AsRef<[u8]> + Sync,
    {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyInput);
        }
        let digests = hash_leaves(leaves, mode);
        Self::from_leaf_digests(digests, mode)
    }

    /// Builds a tree from precomputed leaf digests (e.g. files hashed while
    /// streaming from disk).
    pub fn from_leaf_digests(leaves: Vec<Digest>, mode: ExecMode) -> Result<Self, MerkleError> {
        if leaves.is_empty() {
            return Err(MerkleError::EmptyInput);
        }
        let mut levels = vec![leaves];
        while levels.last().map_or(0, Vec::len) > 1 {
            let next = next_level(levels.last().unwrap(), mode);
            levels.push(next);
        }
        Ok(MerkleTree { levels })
    }

    pub fn leaf_count(&self) -> u64 {
        self.levels[0].len() as u64
    }

    pub fn root(&self) -> Digest {
        self.levels.last().unwrap()[0]
    }

    pub fn leaves(&self) -> &[Digest] {
        &self.levels[0]
    }

    pub fn levels(&self) -> &[Vec<Digest>] {
        &self.levels
    }

    /// Number of levels above the leaves.
    pub fn height(&self) -> usize {
        self.levels.len() - 1
    }

    /// Canonical membership proof for `leaf_index`.
    pub fn proof(&self, leaf_index: u64) -> Result<MerkleProof, MerkleError> {
        let n = self.leaf_count();
        if leaf_index >= n {
            return Err(MerkleError::IndexRange {
                index: leaf_index,
                leaf_count: n,
            });
        }
        let mut idx = leaf_index as usize;
        let mut steps = Vec::with_capacity(self.height());
        for level in &self.levels[..self.height()] {
            let step = if idx % 2 == 1 {
                ProofStep {
                    sibling: level[idx - 1],
                    side: Side::Left,
                }
            } else {
                // single child: the node is paired with itself
                ProofStep {
                    sibling: *level.get(idx + 1).unwrap_or(&level[idx]),
                    side: Side::Right,
                }
            };
            steps.push(step);
            idx /= 2;
        }
        Ok(MerkleProof { leaf_index, steps })
    }
}

/// Shorthand for `tree.proof(leaf_index)`.
pub fn merkle_path(tree: &MerkleTree, leaf_index: u64) -> Result<MerkleProof, MerkleError> {
    tree.proof(leaf_index)
}

impl MerkleProof {
    /// Checks that the proof could describe a path to `leaf_index`: the side
    /// flags must spell out the index bits, leaf-side first.
    pub fn check_shape(&self) -> Result<(), MerkleError> {
        if self.steps.len() > MAX_PROOF_STEPS {
            return Err(MerkleError::MalformedProof(format!(
                "{} steps exceeds the maximum of {MAX_PROOF_STEPS}",
                self.steps.len()
            )));
        }
        if self.steps.len() < 64 && self.leaf_index >> self.steps.len() != 0 {
            return Err(MerkleError::MalformedProof(format!(
                "leaf index {} does not fit in a path of {} steps",
                self.leaf_index,
                self.steps.len()
            )));
        }
        for (k, step) in self.steps.iter().enumerate() {
            let expected = if (self.leaf_index >> k) & 1 == 1 {
                Side::Left
            } else {
                Side::Right
            };
            if step.side != expected {
                return Err(MerkleError::MalformedProof(format!(
                    "step {k} has side {:?} but leaf index {} requires {:?}",
                    step.side, self.leaf_index, expected
                )));
            }
        }
        Ok(())
    }

    /// Folds a leaf digest through the steps and returns the implied root.
    pub fn fold(&self, leaf: Digest) -> Result<Digest, MerkleError> {
        self.fold_with(&Sha256Fn, leaf)
    }

    pub fn fold_with<H: HashFn>(&self, hasher: &H, leaf: Digest) -> Result<Digest, MerkleError> {
        self.check_shape()?;
        Ok(self.steps.iter().fold(leaf, |acc, step| match step.side {
            Side::Left => hasher.hash_parts(&[step.sibling.as_bytes(), acc.as_bytes()]),
            Side::Right => hasher.hash_parts(&[acc.as_bytes(), step.sibling.as_bytes()]),
        }))
    }
}

/// True iff `content` folded through `proof` reproduces `expected_root`.
pub fn verify_path(
    content: &[u8],
    proof: &MerkleProof,
    expected_root: &Digest,
) -> Result<bool, MerkleError> {
    Ok(proof.fold(hash_leaf(content))? == *expected_root)
}

fn hash_leaves<L: AsRef<[u8]> + Sync>(leaves: &[L], mode: ExecMode) -> Vec<Digest> {
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel
            if leaves.len() >= 2
                && (leaves.len() >= PARALLEL_MIN_NODES
                    || leaves.iter().map(|l| l.as_ref().len()).sum::<usize>() >= PARALLEL_MIN_LEAF_BYTES) =>
        {
            leaves.par_iter().map(|l| hash_leaf(l.as_ref())).collect()
        }
        _ => leaves.iter().map(|l| hash_leaf(l.as_ref())).collect(),
    }
}

fn hash_pair(pair: &[Digest]) -> Digest {
    hash_node(&pair[0], pair.get(1).unwrap_or(&pair[0]))
}

fn next_level(level: &[Digest], mode: ExecMode) -> Vec<Digest> {
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel if level.len() >= PARALLEL_MIN_NODES => {
            level.par_chunks(2).map(hash_pair).collect()
        }
        _ => level.chunks(2).map(hash_pair).collect(),
    }
}
