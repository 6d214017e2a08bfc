//! Per-file timestamp markers and the `.tsm` text format.
//!
//! A marker carries everything needed to check one file on its own: the
//! shared root, the file's Merkle path, the KDF parameters, the commitment and
//! the token issued over that commitment.
//!
//! `.tsm` layout (UTF-8, LF line endings, fixed field order, blank line at the
//! end):
//!
//! ```text
//! schema_version=1
//! file_name=auth.log
//! leaf_index=2
//! n_files=6
//! root=<64 hex>
//! proof=R:<64 hex>;L:<64 hex>;R:<64 hex>
//! salt=<32 hex>
//! repetitions=100000
//! commitment=<64 hex>
//! token=<base64>
//! created_at=2021-10-12T03:00:00Z
//!
//! ```
//!
//! In `file_name`, backslash, LF and CR are escaped as `\\`, `\n` and `\r`.

use base64::Engine as _;
use base64::engine::general_purpose::STANDARD as BASE64;
use thiserror::Error;

use crate::digest::Digest;
use crate::kdf::{self, Commitment, KdfParams, Salt};
use crate::merkle::{self, MerkleProof, MerkleTree, ProofStep, Side};
use crate::tsa::{TimestampBackend, TimestampToken};

pub const SCHEMA_VERSION: u64 = 1;
pub const MARKER_EXTENSION: &str = "tsm";

/// Markers claiming more repetitions than this are not re-derived during
/// verification; a corrupted count could otherwise stall the verifier.
pub const DEFAULT_MAX_VERIFY_REPETITIONS: u64 = 1 << 32;

const CREATED_AT_FORMAT: &str = "%Y-%m-%dT%H:%M:%SZ";

const FIELDS: [&str; 11] = [
    "schema_version",
    "file_name",
    "leaf_index",
    "n_files",
    "root",
    "proof",
    "salt",
    "repetitions",
    "commitment",
    "token",
    "created_at",
];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MarkerError {
    #[error("malformed marker at field `{field}`: {detail}")]
    Malformed { field: String, detail: String },
    #[error("unsupported marker schema version {0}")]
    Version(u64),
    #[error("{files} file names for a tree of {leaves} leaves committed as {n_files} files")]
    CountMismatch { files: usize, leaves: u64, n_files: u64 },
}

fn malformed(field: &str, detail: impl Into<String>) -> MarkerError {
    MarkerError::Malformed {
        field: field.to_string(),
        detail: detail.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampMarker {
    pub schema_version: u64,
    pub file_name: String,
    pub leaf_index: u64,
    pub proof: MerkleProof,
    pub root: Digest,
    pub kdf_params: KdfParams,
    pub commitment: Commitment,
    pub token: TimestampToken,
    /// Informational only; never part of any check.
    pub created_at: String,
}

/// Formats Unix seconds the way `created_at` stores them.
pub fn format_created_at(unix_seconds: i64) -> String {
    chrono::DateTime::from_timestamp(unix_seconds, 0)
        .unwrap_or_default()
        .format(CREATED_AT_FORMAT)
        .to_string()
}

/// One marker per file, all sharing root, commitment and token.
pub fn assemble_markers<S: AsRef<str>>(
    file_names: &[S],
    tree: &MerkleTree,
    kdf_params: &KdfParams,
    commitment: &Commitment,
    token: &TimestampToken,
    created_at: &str,
) -> Result<Vec<TimestampMarker>, MarkerError> {
    if file_names.len() as u64 != tree.leaf_count() || tree.leaf_count() != kdf_params.n_files {
        return Err(MarkerError::CountMismatch {
            files: file_names.len(),
            leaves: tree.leaf_count(),
            n_files: kdf_params.n_files,
        });
    }
    let root = tree.root();
    file_names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let proof = tree
                .proof(i as u64)
                .expect("index below leaf count");
            Ok(TimestampMarker {
                schema_version: SCHEMA_VERSION,
                file_name: name.as_ref().to_string(),
                leaf_index: i as u64,
                proof,
                root,
                kdf_params: *kdf_params,
                commitment: *commitment,
                token: token.clone(),
                created_at: created_at.to_string(),
            })
        })
        .collect()
}

fn escape_name(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out
}

fn unescape_name(s: &str) -> Result<String, MarkerError> {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            other => return Err(malformed("file_name", format!("bad escape sequence \\{}", other.map(String::from).unwrap_or_default()))),
        }
    }
    Ok(out)
}

pub fn encode_proof(proof: &MerkleProof) -> String {
    proof
        .steps
        .iter()
        .map(|s| format!("{}:{}", s.side.as_char(), s.sibling.to_hex()))
        .collect::<Vec<_>>()
        .join(";")
}

fn decode_proof(s: &str, leaf_index: u64) -> Result<MerkleProof, MarkerError> {
    let steps = if s.is_empty() {
        Vec::new()
    } else {
        s.split(';')
            .enumerate()
            .map(|(k, part)| {
                let (side, hex) = part
                    .split_once(':')
                    .ok_or_else(|| malformed("proof", format!("step {k} lacks `side:hex`")))?;
                let side = match side {
                    "L" => Side::Left,
                    "R" => Side::Right,
                    _ => return Err(malformed("proof", format!("step {k} has side {side:?}"))),
                };
                let sibling = hex
                    .parse::<Digest>()
                    .map_err(|e| malformed("proof", format!("step {k}: {e}")))?;
                Ok(ProofStep { sibling, side })
            })
            .collect::<Result<_, _>>()?
    };
    if steps.len() > merkle::MAX_PROOF_STEPS {
        return Err(malformed("proof", format!("{} steps", steps.len())));
    }
    Ok(MerkleProof { leaf_index, steps })
}

/// Canonical `.tsm` bytes.
pub fn serialize_marker(m: &TimestampMarker) -> Vec<u8> {
    let mut s = String::with_capacity(512 + 67 * m.proof.steps.len());
    let mut line = |k: &str, v: &str| {
        s.push_str(k);
        s.push('=');
        s.push_str(v);
        s.push('\n');
    };
    line("schema_version", &m.schema_version.to_string());
    line("file_name", &escape_name(&m.file_name));
    line("leaf_index", &m.leaf_index.to_string());
    line("n_files", &m.kdf_params.n_files.to_string());
    line("root", &m.root.to_hex());
    line("proof", &encode_proof(&m.proof));
    line("salt", &m.kdf_params.salt.to_hex());
    line("repetitions", &m.kdf_params.repetitions.to_string());
    line("commitment", &m.commitment.digest.to_hex());
    line("token", &BASE64.encode(m.token.encode()));
    line("created_at", &m.created_at);
    s.push('\n');
    s.into_bytes()
}

fn parse_u64(field: &str, v: &str) -> Result<u64, MarkerError> {
    // canonical decimal only: no sign, no leading zeros
    if v.is_empty() || !v.bytes().all(|b| b.is_ascii_digit()) || (v.len() > 1 && v.starts_with('0')) {
        return Err(malformed(field, format!("{v:?} is not a canonical decimal integer")));
    }
    v.parse().map_err(|_| malformed(field, format!("{v:?} out of range")))
}

fn parse_digest(field: &str, v: &str) -> Result<Digest, MarkerError> {
    v.parse().map_err(|e| malformed(field, format!("{e}")))
}

pub fn parse_marker(bytes: &[u8]) -> Result<TimestampMarker, MarkerError> {
    let text = std::str::from_utf8(bytes).map_err(|e| malformed("<envelope>", format!("not UTF-8: {e}")))?;
    let body = text
        .strip_suffix("\n\n")
        .ok_or_else(|| malformed("<envelope>", "missing blank-line terminator"))?;
    let lines: Vec<&str> = body.split('\n').collect();
    let mut values = Vec::with_capacity(FIELDS.len());
    for (i, field) in FIELDS.iter().enumerate() {
        let l = lines
            .get(i)
            .ok_or_else(|| malformed(field, "missing (truncated marker)"))?;
        let (k, v) = l
            .split_once('=')
            .ok_or_else(|| malformed(field, format!("line {} is not key=value", i + 1)))?;
        if k != *field {
            return Err(malformed(field, format!("expected key `{field}`, found `{k}`")));
        }
        if v.contains('\r') && *field != "file_name" {
            return Err(malformed(field, "carriage return in value"));
        }
        values.push(v);
    }
    if lines.len() > FIELDS.len() {
        return Err(malformed("<envelope>", format!("{} unexpected trailing lines", lines.len() - FIELDS.len())));
    }

    let version = parse_u64("schema_version", values[0])?;
    if version != SCHEMA_VERSION {
        return Err(MarkerError::Version(version));
    }
    let file_name = unescape_name(values[1])?;
    let leaf_index = parse_u64("leaf_index", values[2])?;
    let n_files = parse_u64("n_files", values[3])?;
    let root = parse_digest("root", values[4])?;
    let proof = decode_proof(values[5], leaf_index)?;
    let salt_bytes = hex::decode(values[6]).map_err(|e| malformed("salt", e.to_string()))?;
    if values[6].bytes().any(|b| b.is_ascii_uppercase()) {
        return Err(malformed("salt", "hex must be lowercase"));
    }
    let salt = Salt::from_slice(&salt_bytes)
        .ok_or_else(|| malformed("salt", format!("expected {} bytes, got {}", kdf::SALT_LEN, salt_bytes.len())))?;
    let repetitions = parse_u64("repetitions", values[7])?;
    let commitment = Commitment {
        digest: parse_digest("commitment", values[8])?,
    };
    let token_bytes = BASE64
        .decode(values[9])
        .map_err(|e| malformed("token", format!("bad base64: {e}")))?;
    let token = TimestampToken::decode(&token_bytes).map_err(|e| malformed("token", e.to_string()))?;
    let created_at = values[10].to_string();
    chrono::NaiveDateTime::parse_from_str(&created_at, CREATED_AT_FORMAT)
        .map_err(|e| malformed("created_at", e.to_string()))?;

    Ok(TimestampMarker {
        schema_version: version,
        file_name,
        leaf_index,
        proof,
        root,
        kdf_params: KdfParams {
            salt,
            repetitions,
            n_files,
        },
        commitment,
        token,
        created_at,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerificationReport {
    pub path_ok: bool,
    pub commitment_ok: bool,
    pub token_ok: bool,
    pub overall: bool,
    pub failure_detail: Option<String>,
}

impl VerificationReport {
    fn new(path_ok: bool, commitment_ok: bool, token_ok: bool, details: Vec<String>) -> Self {
        VerificationReport {
            path_ok,
            commitment_ok,
            token_ok,
            overall: path_ok && commitment_ok && token_ok,
            failure_detail: (!details.is_empty()).then(|| details.join("; ")),
        }
    }
}

pub fn verify_marker<B: TimestampBackend + ?Sized>(
    content: &[u8],
    marker: &TimestampMarker,
    backend: &B,
) -> VerificationReport {
    verify_marker_with_limit(content, marker, backend, DEFAULT_MAX_VERIFY_REPETITIONS)
}

/// Checks, independently of each other:
///
/// - path: the content folds through the proof to the marker's root
/// - commitment: the committed parameters are sane and consistent with the
///   path length, and re-deriving the hardened root reproduces the commitment
/// - token: the backend vouches for the token over the commitment digest
pub fn verify_marker_with_limit<B: TimestampBackend + ?Sized>(
    content: &[u8],
    marker: &TimestampMarker,
    backend: &B,
    max_repetitions: u64,
) -> VerificationReport {
    let mut details = Vec::new();

    let path_ok = if marker.proof.leaf_index != marker.leaf_index {
        details.push("proof leaf index disagrees with marker".to_string());
        false
    } else {
        match merkle::verify_path(content, &marker.proof, &marker.root) {
            Ok(true) => true,
            Ok(false) => {
                details.push("content does not fold to the marker root".to_string());
                false
            }
            Err(e) => {
                details.push(e.to_string());
                false
            }
        }
    };

    let params = &marker.kdf_params;
    let expected_steps = merkle::ceil_log2(params.n_files) as usize;
    let commitment_ok = if let Err(e) = params.validate() {
        details.push(e.to_string());
        false
    } else if marker.leaf_index >= params.n_files {
        details.push(format!("leaf index {} outside committed n_files {}", marker.leaf_index, params.n_files));
        false
    } else if marker.proof.steps.len() != expected_steps {
        details.push(format!(
            "proof has {} steps but committed n_files {} requires {expected_steps}",
            marker.proof.steps.len(),
            params.n_files
        ));
        false
    } else if params.repetitions > max_repetitions {
        details.push(format!(
            "repetitions {} exceeds verification limit {max_repetitions}",
            params.repetitions
        ));
        false
    } else {
        let out = kdf::kdf_chain(&marker.root, &params.salt, params.repetitions).expect("validated");
        let ok = kdf::verify_commitment(&marker.commitment, &out, params);
        if !ok {
            details.push("commitment does not match hardened root and parameters".to_string());
        }
        ok
    };

    let token_ok = backend.verify_token(&marker.token, &marker.commitment.digest);
    if !token_ok {
        details.push(format!("token not accepted by backend `{}`", backend.backend_id()));
    }

    VerificationReport::new(path_ok, commitment_ok, token_ok, details)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsa::{FixedClock, LedgerBackend};
    use proptest::prelude::*;
    use std::sync::Arc;

    fn sample_token() -> TimestampToken {
        TimestampToken {
            backend_id: "local-ledger".into(),
            attested_digest: Digest([9; 32]),
            attested_time: 1_634_000_000,
            evidence: vec![1; 40],
        }
    }

    fn sample_markers(n: usize) -> Vec<TimestampMarker> {
        let contents: Vec<Vec<u8>> = (0..n).map(|i| format!("log {i}\n").into_bytes()).collect();
        let names: Vec<String> = (0..n).map(|i| format!("class{i}.log")).collect();
        let tree = MerkleTree::build(&contents).unwrap();
        let params = KdfParams::new(Salt([3; 16]), 10, n as u64).unwrap();
        let (_, c) = kdf::harden(&tree.root(), &params).unwrap();
        assemble_markers(&names, &tree, &params, &c, &sample_token(), "2021-10-12T03:00:00Z").unwrap()
    }

    #[test]
    fn eight_files_share_root_and_token() {
        let ms = sample_markers(8);
        assert_eq!(ms.len(), 8);
        for (i, m) in ms.iter().enumerate() {
            assert_eq!(m.leaf_index, i as u64);
            assert_eq!(m.proof.steps.len(), 3);
            assert_eq!(m.token, ms[0].token);
            assert_eq!(m.root, ms[0].root);
            assert_eq!(m.commitment, ms[0].commitment);
        }
        let (a, b) = (&ms[0], &ms[1]);
        let mut b_as_a = b.clone();
        b_as_a.file_name = a.file_name.clone();
        b_as_a.leaf_index = a.leaf_index;
        b_as_a.proof = a.proof.clone();
        assert_eq!(&b_as_a, a);
    }

    #[test]
    fn single_file_marker_has_empty_proof() {
        let ms = sample_markers(1);
        assert!(ms[0].proof.steps.is_empty());
        let text = String::from_utf8(serialize_marker(&ms[0])).unwrap();
        assert!(text.contains("\nproof=\n"));
        assert_eq!(parse_marker(text.as_bytes()).unwrap(), ms[0]);
    }

    #[test]
    fn count_mismatch() {
        let tree = MerkleTree::build(&[b"a", b"b"]).unwrap();
        let params = KdfParams::new(Salt([0; 16]), 1, 2).unwrap();
        let c = kdf::commit(&Digest::ZERO, &params);
        let err = assemble_markers(&["only-one"], &tree, &params, &c, &sample_token(), "2021-10-12T03:00:00Z");
        assert!(matches!(err, Err(MarkerError::CountMismatch { .. })));
        let params3 = KdfParams { n_files: 3, ..params };
        let err = assemble_markers(&["a", "b"], &tree, &params3, &c, &sample_token(), "2021-10-12T03:00:00Z");
        assert!(matches!(err, Err(MarkerError::CountMismatch { .. })));
    }

    #[test]
    fn field_order_and_terminator() {
        let m = &sample_markers(6)[4];
        let text = String::from_utf8(serialize_marker(m)).unwrap();
        let keys: Vec<&str> = text.lines().take(11).map(|l| l.split_once('=').unwrap().0).collect();
        assert_eq!(keys, FIELDS);
        assert!(text.ends_with("\n\n"));
        let proof_line = text.lines().nth(5).unwrap();
        assert_eq!(proof_line.matches(';').count(), 2);
        assert!(proof_line.starts_with("proof=R:"));
    }

    #[test]
    fn truncation_is_malformed() {
        let bytes = serialize_marker(&sample_markers(3)[0]);
        for cut in 0..bytes.len() {
            assert!(
                matches!(parse_marker(&bytes[..cut]), Err(MarkerError::Malformed { .. })),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn malformed_reports_field() {
        let text = String::from_utf8(serialize_marker(&sample_markers(2)[0])).unwrap();
        let bad = text.replace("\nsalt=", "\nsalt=zz");
        match parse_marker(bad.as_bytes()) {
            Err(MarkerError::Malformed { field, .. }) => assert_eq!(field, "salt"),
            other => panic!("{other:?}"),
        }
        let bad = text.replace("leaf_index=0", "leaf_index=00");
        assert!(matches!(parse_marker(bad.as_bytes()), Err(MarkerError::Malformed { field, .. }) if field == "leaf_index"));
        let bad = text.replace("\nroot=", "\nrot=");
        assert!(matches!(parse_marker(bad.as_bytes()), Err(MarkerError::Malformed { field, .. }) if field == "root"));
        let bad = format!("{text}extra\n\n");
        assert!(parse_marker(bad.as_bytes()).is_err());
    }

    #[test]
    fn unknown_version() {
        let text = String::from_utf8(serialize_marker(&sample_markers(2)[0])).unwrap();
        let bad = text.replacen("schema_version=1", "schema_version=2", 1);
        assert_eq!(parse_marker(bad.as_bytes()), Err(MarkerError::Version(2)));
    }

    #[test]
    fn awkward_file_names_roundtrip() {
        let mut m = sample_markers(1).remove(0);
        for name in ["a\nb", "c:\\logs\\x.log", "tab\there", "r\rs", "ünïcode=.log", "\\n"] {
            m.file_name = name.to_string();
            let bytes = serialize_marker(&m);
            assert_eq!(parse_marker(&bytes).unwrap().file_name, name);
        }
    }

    #[test]
    fn honest_and_tampered_verification() {
        let dir = tempfile::tempdir().unwrap();
        let backend = LedgerBackend::new(dir.path().join("l.bin"), Arc::new(FixedClock(1_700_000_000)));
        let contents: Vec<Vec<u8>> = (0..5).map(|i| vec![i as u8; 10 + i]).collect();
        let tree = MerkleTree::build(&contents).unwrap();
        let params = KdfParams::new(Salt([1; 16]), 1000, 5).unwrap();
        let (_, c) = kdf::harden(&tree.root(), &params).unwrap();
        let token = backend.request_timestamp(&c.digest).unwrap();
        let names = ["a", "b", "c", "d", "e"];
        let ms = assemble_markers(&names, &tree, &params, &c, &token, "2023-11-14T22:13:20Z").unwrap();
        for (m, content) in ms.iter().zip(&contents) {
            let r = verify_marker(content, m, &backend);
            assert!(r.overall, "{r:?}");
            assert!(r.failure_detail.is_none());
        }

        let m = &ms[3];
        let content = &contents[3];

        let mut flipped = content.clone();
        flipped[0] ^= 1;
        let r = verify_marker(&flipped, m, &backend);
        assert!(!r.path_ok && r.commitment_ok && r.token_ok && !r.overall);

        let mut t = m.clone();
        t.kdf_params.repetitions = 999;
        let r = verify_marker(content, &t, &backend);
        assert!(r.path_ok && !r.commitment_ok && r.token_ok);

        let mut t = m.clone();
        t.kdf_params.n_files = 6;
        let r = verify_marker(content, &t, &backend);
        assert!(r.path_ok && !r.commitment_ok && r.token_ok);

        let mut t = m.clone();
        t.kdf_params.salt.0[5] ^= 0x10;
        let r = verify_marker(content, &t, &backend);
        assert!(r.path_ok && !r.commitment_ok && r.token_ok);

        let mut t = m.clone();
        t.proof.steps[1].sibling = t.proof.steps[1].sibling.with_bit_flipped(100);
        let r = verify_marker(content, &t, &backend);
        assert!(!r.path_ok && r.commitment_ok && r.token_ok);

        // the root feeds both the path and the hardened commitment
        let mut t = m.clone();
        t.root = t.root.with_bit_flipped(3);
        let r = verify_marker(content, &t, &backend);
        assert!(!r.path_ok && !r.commitment_ok && r.token_ok);

        let mut t = m.clone();
        t.token.evidence[0] ^= 1;
        let r = verify_marker(content, &t, &backend);
        assert!(r.path_ok && r.commitment_ok && !r.token_ok);

        let mut t = m.clone();
        t.kdf_params.repetitions = u64::MAX;
        let r = verify_marker(content, &t, &backend);
        assert!(!r.commitment_ok);
        assert!(r.failure_detail.unwrap().contains("verification limit"));
    }

    fn arb_marker() -> impl Strategy<Value = TimestampMarker> {
        (
            "[ -~]{0,24}",
            1u64..5000,
            any::<[u8; 32]>(),
            any::<[u8; 16]>(),
            1u64..u64::MAX,
            any::<[u8; 32]>(),
            prop::collection::vec(any::<u8>(), 0..100),
            any::<[u8; 32]>(),
            0i64..4_000_000_000,
        )
            .prop_flat_map(|(name, n, root, salt, reps, commit, evidence, sib, t)| {
                (0..n).prop_map(move |idx| {
                    let steps = (0..merkle::ceil_log2(n))
                        .map(|k| ProofStep {
                            sibling: Digest(sib).with_bit_flipped(k as usize),
                            side: if (idx >> k) & 1 == 1 { Side::Left } else { Side::Right },
                        })
                        .collect();
                    TimestampMarker {
                        schema_version: SCHEMA_VERSION,
                        file_name: name.clone(),
                        leaf_index: idx,
                        proof: MerkleProof { leaf_index: idx, steps },
                        root: Digest(root),
                        kdf_params: KdfParams { salt: Salt(salt), repetitions: reps, n_files: n },
                        commitment: Commitment { digest: Digest(commit) },
                        token: TimestampToken {
                            backend_id: "local-ledger".into(),
                            attested_digest: Digest(commit),
                            attested_time: t,
                            evidence: evidence.clone(),
                        },
                        created_at: format_created_at(t),
                    }
                })
            })
    }

    proptest! {
        #[test]
        fn serialize_parse_roundtrip(m in arb_marker()) {
            let bytes = serialize_marker(&m);
            prop_assert_eq!(&serialize_marker(&m), &bytes);
            prop_assert_eq!(parse_marker(&bytes).unwrap(), m);
        }
    }
}
