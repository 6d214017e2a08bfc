//! Iterated-hash hardening between the Merkle root and the timestamping
//! backend, and the commitment that pins its parameters.
//!
//! ```text
//! d₁ = sha256(salt ‖ root)
//! dᵢ = sha256(dᵢ₋₁)                       for i = 2..=repetitions
//! commitment = sha256(d_r ‖ salt ‖ be64(repetitions) ‖ be64(n_files))
//! ```
//!
//! Every brute-force candidate path now costs `repetitions` hash evaluations
//! before it can even be compared against the notarized value.

use std::fmt;
use std::time::Instant;

use rand::RngCore;
use thiserror::Error;

use crate::digest::{Digest, HashFn, Sha256Fn};

pub const SALT_LEN: usize = 16;

/// Iterations timed by [`calibrate_repetitions`] before extrapolating.
pub const CALIBRATION_PROBE_ITERATIONS: u64 = 10_000;

const CALIBRATION_PROBES: usize = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KdfError {
    #[error("bad KDF parameter: {0}")]
    BadParam(String),
    #[error("target delay {target_seconds}s exceeds the allowed budget of {max_allowed_seconds}s")]
    DelayBudget {
        target_seconds: f64,
        max_allowed_seconds: f64,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Salt(pub [u8; SALT_LEN]);

impl Salt {
    /// Draws a fresh salt from the operating system CSPRNG.
    pub fn random() -> Self {
        let mut s = [0u8; SALT_LEN];
        rand::rngs::OsRng.fill_bytes(&mut s);
        Salt(s)
    }

    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; SALT_LEN]>::try_from(bytes).ok().map(Salt)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Debug for Salt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Salt({})", self.to_hex())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KdfParams {
    pub salt: Salt,
    pub repetitions: u64,
    /// Leaf count of the tree the root came from.
    pub n_files: u64,
}

impl KdfParams {
    pub fn new(salt: Salt, repetitions: u64, n_files: u64) -> Result<Self, KdfError> {
        let p = KdfParams {
            salt,
            repetitions,
            n_files,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), KdfError> {
        if self.repetitions == 0 {
            return Err(KdfError::BadParam("repetitions must be at least 1".into()));
        }
        if self.n_files == 0 {
            return Err(KdfError::BadParam("n_files must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Commitment {
    pub digest: Digest,
}

pub fn kdf_chain(root: &Digest, salt: &Salt, repetitions: u64) -> Result<Digest, KdfError> {
    kdf_chain_with(&Sha256Fn, root, salt, repetitions)
}

/// [`kdf_chain`] over an arbitrary hash; performs exactly `repetitions`
/// evaluations of `hasher`.
pub fn kdf_chain_with<H: HashFn>(
    hasher: &H,
    root: &Digest,
    salt: &Salt,
    repetitions: u64,
) -> Result<Digest, KdfError> {
    if repetitions == 0 {
        return Err(KdfError::BadParam("repetitions must be at least 1".into()));
    }
    let mut d = hasher.hash_parts(&[&salt.0, root.as_bytes()]);
    for _ in 1..repetitions {
        d = hasher.hash(d.as_bytes());
    }
    Ok(d)
}

/// The 64-byte preimage hashed into the commitment.
pub fn commitment_preimage(kdf_output: &Digest, params: &KdfParams) -> [u8; 64] {
    let mut buf = [0u8; 64];
    buf[..32].copy_from_slice(kdf_output.as_bytes());
    buf[32..48].copy_from_slice(&params.salt.0);
    buf[48..56].copy_from_slice(&params.repetitions.to_be_bytes());
    buf[56..].copy_from_slice(&params.n_files.to_be_bytes());
    buf
}

pub fn commit(kdf_output: &Digest, params: &KdfParams) -> Commitment {
    Commitment {
        digest: Sha256Fn.hash(&commitment_preimage(kdf_output, params)),
    }
}

pub fn verify_commitment(commitment: &Commitment, kdf_output: &Digest, params: &KdfParams) -> bool {
    commit(kdf_output, params).digest == commitment.digest
}

/// Runs the full hardening step: chain the root, then commit.
pub fn harden(root: &Digest, params: &KdfParams) -> Result<(Digest, Commitment), KdfError> {
    params.validate()?;
    let out = kdf_chain(root, &params.salt, params.repetitions)?;
    Ok((out, commit(&out, params)))
}

/// Measured cost of one chain iteration on this machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KdfThroughput {
    pub seconds_per_iteration: f64,
}

impl KdfThroughput {
    /// Times a [`CALIBRATION_PROBE_ITERATIONS`]-long chain a few times and
    /// keeps the slowest probe, so the extrapolated count errs toward staying
    /// under the delay target.
    pub fn measure() -> Self {
        let salt = Salt([0x5a; SALT_LEN]);
        let mut root = Digest::ZERO;
        let mut slowest = 0f64;
        for _ in 0..CALIBRATION_PROBES {
            let start = Instant::now();
            root = kdf_chain(&root, &salt, CALIBRATION_PROBE_ITERATIONS).expect("probe is non-zero");
            slowest = slowest.max(start.elapsed().as_secs_f64());
        }
        std::hint::black_box(root);
        let per = slowest / CALIBRATION_PROBE_ITERATIONS as f64;
        KdfThroughput {
            seconds_per_iteration: per.max(f64::MIN_POSITIVE),
        }
    }

    /// Largest repetition count whose extrapolated run time fits in
    /// `target_seconds`; never less than 1.
    pub fn repetitions_for(&self, target_seconds: f64) -> u64 {
        let r = (target_seconds / self.seconds_per_iteration).floor();
        if r.is_finite() && r >= 1.0 {
            r.min(u64::MAX as f64) as u64
        } else if r.is_infinite() && r > 0.0 {
            u64::MAX
        } else {
            1
        }
    }
}

fn check_delay_budget(target_seconds: f64, max_allowed_seconds: f64) -> Result<(), KdfError> {
    if !(target_seconds.is_finite() && target_seconds > 0.0) {
        return Err(KdfError::BadParam(format!(
            "target_seconds must be positive and finite, got {target_seconds}"
        )));
    }
    if !(max_allowed_seconds.is_finite() && max_allowed_seconds > 0.0) {
        return Err(KdfError::BadParam(format!(
            "max_allowed_seconds must be positive and finite, got {max_allowed_seconds}"
        )));
    }
    if target_seconds > max_allowed_seconds {
        return Err(KdfError::DelayBudget {
            target_seconds,
            max_allowed_seconds,
        });
    }
    Ok(())
}

/// Picks a repetition count that keeps the hardening step within
/// `target_seconds` on this machine.
///
/// Single-threaded; timing is only meaningful when nothing else CPU-heavy is
/// running.
pub fn calibrate_repetitions(target_seconds: f64, max_allowed_seconds: f64) -> Result<u64, KdfError> {
    check_delay_budget(target_seconds, max_allowed_seconds)?;
    Ok(KdfThroughput::measure().repetitions_for(target_seconds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::{sha256, sha256_parts};
    use proptest::prelude::*;
    use std::sync::atomic::{AtomicU64, Ordering};

    struct Counting(AtomicU64);

    impl HashFn for Counting {
        fn hash_parts(&self, parts: &[&[u8]]) -> Digest {
            self.0.fetch_add(1, Ordering::Relaxed);
            Sha256Fn.hash_parts(parts)
        }
    }

    fn root() -> Digest {
        sha256(b"root")
    }

    const SALT: Salt = Salt([7u8; SALT_LEN]);

    #[test]
    fn single_iteration_is_salted_hash() {
        assert_eq!(
            kdf_chain(&root(), &SALT, 1).unwrap(),
            sha256_parts(&[&SALT.0, root().as_bytes()])
        );
    }

    #[test]
    fn three_iterations_chain() {
        let d1 = sha256_parts(&[&SALT.0, root().as_bytes()]);
        let d3 = sha256(sha256(d1.as_bytes()).as_bytes());
        assert_eq!(kdf_chain(&root(), &SALT, 3).unwrap(), d3);
        assert_eq!(kdf_chain(&root(), &SALT, 3), kdf_chain(&root(), &SALT, 3));
    }

    #[test]
    fn zero_repetitions_rejected() {
        assert!(matches!(kdf_chain(&root(), &SALT, 0), Err(KdfError::BadParam(_))));
        assert!(KdfParams::new(SALT, 0, 1).is_err());
        assert!(KdfParams::new(SALT, 1, 0).is_err());
    }

    #[test]
    fn chain_counts_hash_calls() {
        for r in [1u64, 2, 17, 1000] {
            let h = Counting(AtomicU64::new(0));
            kdf_chain_with(&h, &root(), &SALT, r).unwrap();
            assert_eq!(h.0.load(Ordering::Relaxed), r);
        }
    }

    #[test]
    fn commitment_layout() {
        let p = KdfParams::new(SALT, 1000, 6).unwrap();
        let out = kdf_chain(&root(), &SALT, 1000).unwrap();
        let mut pre = out.0.to_vec();
        pre.extend_from_slice(&SALT.0);
        pre.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0x03, 0xe8]);
        pre.extend_from_slice(&[0, 0, 0, 0, 0, 0, 0, 6]);
        assert_eq!(commit(&out, &p).digest, sha256(&pre));
    }

    #[test]
    fn commitment_rejects_altered_params() {
        let p = KdfParams::new(SALT, 1000, 16).unwrap();
        let (out, c) = harden(&root(), &p).unwrap();
        assert!(verify_commitment(&c, &out, &p));
        let fewer = KdfParams { repetitions: 999, ..p };
        assert!(!verify_commitment(&c, &out, &fewer));
        let other_n = KdfParams { n_files: 15, ..p };
        assert!(!verify_commitment(&c, &out, &other_n));
    }

    #[test]
    fn delay_budget() {
        assert!(matches!(
            calibrate_repetitions(2.0, 1.0),
            Err(KdfError::DelayBudget { .. })
        ));
        assert!(matches!(calibrate_repetitions(0.0, 1.0), Err(KdfError::BadParam(_))));
        assert!(calibrate_repetitions(0.01, 0.01).unwrap() >= 1);
    }

    #[test]
    fn calibration_is_monotone_in_target() {
        let t = KdfThroughput::measure();
        let mut prev = 0;
        for target in [1e-9, 1e-4, 2e-4, 1e-3, 2e-3, 0.5, 1.0] {
            let r = t.repetitions_for(target);
            assert!(r >= 1 && r >= prev);
            prev = r;
        }
    }

    #[test]
    fn calibrated_count_stays_within_target() {
        let target = 0.05;
        let r = calibrate_repetitions(target, 1.0).unwrap();
        let start = Instant::now();
        kdf_chain(&root(), &SALT, r).unwrap();
        // generous slack for a loaded CI machine
        assert!(start.elapsed().as_secs_f64() < target * 4.0);
    }

    #[test]
    fn repetitions_for_edge_cases() {
        let t = KdfThroughput { seconds_per_iteration: 1e-6 };
        assert_eq!(t.repetitions_for(1.0), 1_000_000);
        assert_eq!(t.repetitions_for(1e-9), 1);
    }

    proptest! {
        #[test]
        fn any_bit_flip_changes_commitment(bit in 0usize..512, out in any::<[u8; 32]>(), salt in any::<[u8; 16]>(), r in 1u64.., n in 1u64..) {
            let p = KdfParams { salt: Salt(salt), repetitions: r, n_files: n };
            let base = commitment_preimage(&Digest(out), &p);
            let mut flipped = base;
            flipped[bit / 8] ^= 0x80 >> (bit % 8);
            prop_assert_ne!(sha256(&base), sha256(&flipped));
        }
    }
}
