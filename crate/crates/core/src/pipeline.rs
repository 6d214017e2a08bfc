//! Stamp and verify whole batches.
//!
//! Stamping: hash files → tree → harden root → commit → one timestamp request
//! over the commitment → one marker per file.

use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

#[cfg(feature = "parallel")]
use rayon::prelude::*;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

use crate::digest::Digest;
use crate::kdf::{self, Commitment, KdfError, KdfParams, Salt};
use crate::marker::{self, MarkerError, TimestampMarker, VerificationReport};
use crate::merkle::{ExecMode, MerkleError, MerkleTree};
use crate::tsa::{BackendError, Clock, TimestampBackend, TimestampToken};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Merkle(#[from] MerkleError),
    #[error(transparent)]
    Kdf(#[from] KdfError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Marker(#[from] MarkerError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PipelineError + '_ {
    move |source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KdfSetting {
    Repetitions(u64),
    Calibrate {
        target_seconds: f64,
        max_allowed_seconds: f64,
    },
}

impl KdfSetting {
    pub fn resolve(&self) -> Result<u64, KdfError> {
        match *self {
            KdfSetting::Repetitions(0) => Err(KdfError::BadParam("repetitions must be at least 1".into())),
            KdfSetting::Repetitions(r) => Ok(r),
            KdfSetting::Calibrate {
                target_seconds,
                max_allowed_seconds,
            } => kdf::calibrate_repetitions(target_seconds, max_allowed_seconds),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StampOptions {
    pub kdf: KdfSetting,
    /// Fresh random salt when `None`.
    pub salt: Option<Salt>,
    pub mode: ExecMode,
}

impl StampOptions {
    pub fn with_repetitions(repetitions: u64) -> Self {
        StampOptions {
            kdf: KdfSetting::Repetitions(repetitions),
            salt: None,
            mode: ExecMode::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct StampOutcome {
    pub root: Digest,
    pub kdf_params: KdfParams,
    pub kdf_output: Digest,
    pub commitment: Commitment,
    pub token: TimestampToken,
    pub markers: Vec<TimestampMarker>,
}

/// Stamps a batch given precomputed leaf digests, in the given order.
pub fn stamp_digests<B: TimestampBackend + ?Sized>(
    names: &[String],
    leaf_digests: Vec<Digest>,
    backend: &B,
    clock: &dyn Clock,
    opts: &StampOptions,
) -> Result<StampOutcome, PipelineError> {
    let tree = MerkleTree::from_leaf_digests(leaf_digests, opts.mode)?;
    let repetitions = opts.kdf.resolve()?;
    let kdf_params = KdfParams::new(opts.salt.unwrap_or_else(Salt::random), repetitions, tree.leaf_count())?;
    let (kdf_output, commitment) = kdf::harden(&tree.root(), &kdf_params)?;
    if names.len() as u64 != tree.leaf_count() {
        return Err(MarkerError::CountMismatch {
            files: names.len(),
            leaves: tree.leaf_count(),
            n_files: kdf_params.n_files,
        }
        .into());
    }
    let token = backend.request_timestamp(&commitment.digest)?;
    let created_at = marker::format_created_at(clock.now());
    let markers = marker::assemble_markers(names, &tree, &kdf_params, &commitment, &token, &created_at)?;
    Ok(StampOutcome {
        root: tree.root(),
        kdf_params,
        kdf_output,
        commitment,
        token,
        markers,
    })
}

pub fn stamp_contents<B, C>(
    names: &[String],
    contents: &[C],
    backend: &B,
    clock: &dyn Clock,
    opts: &StampOptions,
) -> Result<StampOutcome, PipelineError>
where
    B: TimestampBackend + ?Sized,
    C: AsRef<[u8]> + Sync,
{
    let tree = MerkleTree::build_with(contents, opts.mode)?;
    stamp_digests(names, tree.leaves().to_vec(), backend, clock, opts)
}

/// One-token-per-file stamping: every file becomes its own single-leaf batch.
pub fn stamp_legacy<B: TimestampBackend + ?Sized>(
    names: &[String],
    leaf_digests: &[Digest],
    backend: &B,
    clock: &dyn Clock,
    opts: &StampOptions,
) -> Result<Vec<StampOutcome>, PipelineError> {
    if names.is_empty() {
        return Err(MerkleError::EmptyInput.into());
    }
    names
        .iter()
        .zip(leaf_digests)
        .map(|(name, d)| stamp_digests(std::slice::from_ref(name), vec![*d], backend, clock, opts))
        .collect()
}

/// Streams a file through SHA-256.
pub fn hash_file(path: &Path) -> Result<Digest, PipelineError> {
    let mut f = File::open(path).map_err(io_err(path))?;
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf).map_err(io_err(path))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(Digest(h.finalize().into()))
}

pub fn hash_files(paths: &[PathBuf], mode: ExecMode) -> Result<Vec<Digest>, PipelineError> {
    match mode {
        #[cfg(feature = "parallel")]
        ExecMode::Parallel => paths.par_iter().map(|p| hash_file(p)).collect(),
        _ => paths.iter().map(|p| hash_file(p)).collect(),
    }
}

pub fn marker_file_name(file_name: &str) -> String {
    format!("{file_name}.{}", marker::MARKER_EXTENSION)
}

/// Writes every marker to `dir/<file_name>.tsm`. All markers are first written
/// to temporary files; they are renamed into place only once every write
/// succeeded, and removed otherwise.
pub fn write_markers_atomic(dir: &Path, markers: &[TimestampMarker]) -> Result<Vec<PathBuf>, PipelineError> {
    let mut staged: Vec<(PathBuf, PathBuf)> = Vec::with_capacity(markers.len());
    let cleanup = |staged: &[(PathBuf, PathBuf)]| {
        for (tmp, _) in staged {
            let _ = fs::remove_file(tmp);
        }
    };
    for m in markers {
        let final_path = dir.join(marker_file_name(&m.file_name));
        let tmp = dir.join(format!(".{}.tmp", marker_file_name(&m.file_name)));
        let write = || -> io::Result<()> {
            let mut f = File::create(&tmp)?;
            f.write_all(&marker::serialize_marker(m))?;
            f.sync_all()
        };
        if let Err(e) = write() {
            let _ = fs::remove_file(&tmp);
            cleanup(&staged);
            return Err(io_err(&tmp)(e));
        }
        staged.push((tmp, final_path));
    }
    for (i, (tmp, final_path)) in staged.iter().enumerate() {
        if let Err(e) = fs::rename(tmp, final_path) {
            cleanup(&staged[i..]);
            return Err(io_err(final_path)(e));
        }
    }
    Ok(staged.into_iter().map(|(_, p)| p).collect())
}

pub fn read_marker(path: &Path) -> Result<TimestampMarker, PipelineError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    Ok(marker::parse_marker(&bytes)?)
}

pub fn verify_file<B: TimestampBackend + ?Sized>(
    file: &Path,
    marker: &TimestampMarker,
    backend: &B,
    max_repetitions: u64,
) -> Result<VerificationReport, PipelineError> {
    let content = fs::read(file).map_err(io_err(file))?;
    Ok(marker::verify_marker_with_limit(&content, marker, backend, max_repetitions))
}
