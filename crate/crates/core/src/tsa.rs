//! Timestamping backends: something that binds one digest to a point in time
//! and can later confirm that binding.
//!
//! Two implementations ship with the crate:
//!
//! - [`LedgerBackend`], an append-only, hash-chained local ledger file that
//!   acts as a self-hosted authority (demo, tests, air-gapped sites)
//! - [`ExternalTsaClient`], which frames an RFC 3161-shaped `TimeStampReq`
//!   (digest, nonce, policy) to a remote endpoint and keeps the response as
//!   evidence. It only checks that the response is well-formed; certificate
//!   chain validation is not performed.

use std::fs::{File, OpenOptions};
use std::io::{self, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::RngCore;
use thiserror::Error;

use crate::digest::{sha256_parts, Digest, DIGEST_LEN};

pub const LEDGER_BACKEND_ID: &str = "local-ledger";
pub const EXTERNAL_BACKEND_ID: &str = "external-tsa";

/// Environment variable consulted by [`ExternalTsaClient::from_env`].
pub const TSA_ENDPOINT_ENV: &str = "TSA_ENDPOINT";

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("timestamping backend unavailable: {0}")]
    Unavailable(String),
    #[error("timestamping backend rejected the request: {0}")]
    Rejected(String),
}

/// Source of attestation times, in Unix seconds.
pub trait Clock: Send + Sync {
    fn now(&self) -> i64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> i64 {
        chrono::Utc::now().timestamp()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FixedClock(pub i64);

impl Clock for FixedClock {
    fn now(&self) -> i64 {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimestampToken {
    pub backend_id: String,
    pub attested_digest: Digest,
    /// Unix seconds.
    pub attested_time: i64,
    /// Backend-specific proof material.
    pub evidence: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("malformed token encoding: {0}")]
pub struct TokenDecodeError(pub String);

impl TimestampToken {
    /// Binary encoding used inside markers:
    /// `u16 id_len ‖ id ‖ digest[32] ‖ i64 time ‖ u32 evidence_len ‖ evidence`,
    /// all integers big-endian.
    pub fn encode(&self) -> Vec<u8> {
        let id = self.backend_id.as_bytes();
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&(id.len() as u16).to_be_bytes());
        out.extend_from_slice(id);
        out.extend_from_slice(self.attested_digest.as_bytes());
        out.extend_from_slice(&self.attested_time.to_be_bytes());
        out.extend_from_slice(&(self.evidence.len() as u32).to_be_bytes());
        out.extend_from_slice(&self.evidence);
        out
    }

    pub fn encoded_len(&self) -> usize {
        2 + self.backend_id.len() + DIGEST_LEN + 8 + 4 + self.evidence.len()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, TokenDecodeError> {
        let mut r = bytes;
        let id_len = u16::from_be_bytes(take::<2>(&mut r, "backend id length")?) as usize;
        let id = take_slice(&mut r, id_len, "backend id")?;
        let backend_id = String::from_utf8(id.to_vec())
            .map_err(|_| TokenDecodeError("backend id is not UTF-8".into()))?;
        let attested_digest = Digest(take::<DIGEST_LEN>(&mut r, "digest")?);
        let attested_time = i64::from_be_bytes(take::<8>(&mut r, "time")?);
        let ev_len = u32::from_be_bytes(take::<4>(&mut r, "evidence length")?) as usize;
        let evidence = take_slice(&mut r, ev_len, "evidence")?.to_vec();
        if !r.is_empty() {
            return Err(TokenDecodeError(format!("{} trailing bytes", r.len())));
        }
        Ok(TimestampToken {
            backend_id,
            attested_digest,
            attested_time,
            evidence,
        })
    }
}

fn take_slice<'a>(r: &mut &'a [u8], n: usize, what: &str) -> Result<&'a [u8], TokenDecodeError> {
    if r.len() < n {
        return Err(TokenDecodeError(format!("truncated {what}")));
    }
    let (head, tail) = r.split_at(n);
    *r = tail;
    Ok(head)
}

fn take<const N: usize>(r: &mut &[u8], what: &str) -> Result<[u8; N], TokenDecodeError> {
    Ok(take_slice(r, N, what)?.try_into().unwrap())
}

pub trait TimestampBackend: Send + Sync {
    fn backend_id(&self) -> &str;

    fn request_timestamp(&self, digest: &Digest) -> Result<TimestampToken, BackendError>;

    /// True iff the evidence is authentic under this backend's trust anchor
    /// and the token attests exactly `digest`.
    fn verify_token(&self, token: &TimestampToken, digest: &Digest) -> bool;
}

impl<B: TimestampBackend + ?Sized> TimestampBackend for Box<B> {
    fn backend_id(&self) -> &str {
        (**self).backend_id()
    }
    fn request_timestamp(&self, digest: &Digest) -> Result<TimestampToken, BackendError> {
        (**self).request_timestamp(digest)
    }
    fn verify_token(&self, token: &TimestampToken, digest: &Digest) -> bool {
        (**self).verify_token(token, digest)
    }
}

/// Wraps a backend and counts issuance requests.
#[derive(Debug)]
pub struct CountingBackend<B> {
    inner: B,
    requests: AtomicU64,
}

impl<B> CountingBackend<B> {
    pub fn new(inner: B) -> Self {
        CountingBackend {
            inner,
            requests: AtomicU64::new(0),
        }
    }

    pub fn requests(&self) -> u64 {
        self.requests.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: TimestampBackend> TimestampBackend for CountingBackend<B> {
    fn backend_id(&self) -> &str {
        self.inner.backend_id()
    }
    fn request_timestamp(&self, digest: &Digest) -> Result<TimestampToken, BackendError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        self.inner.request_timestamp(digest)
    }
    fn verify_token(&self, token: &TimestampToken, digest: &Digest) -> bool {
        self.inner.verify_token(token, digest)
    }
}

// ---------------------------------------------------------------------------
// Local hash-chained ledger
// ---------------------------------------------------------------------------

/// `serial(8, LE) ‖ time(8, LE) ‖ digest(32) ‖ chain(32)`
pub const LEDGER_RECORD_LEN: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LedgerRecord {
    pub serial: u64,
    pub time: i64,
    pub digest: Digest,
    pub chain: Digest,
}

impl LedgerRecord {
    pub fn to_bytes(&self) -> [u8; LEDGER_RECORD_LEN] {
        let mut b = [0u8; LEDGER_RECORD_LEN];
        b[..8].copy_from_slice(&self.serial.to_le_bytes());
        b[8..16].copy_from_slice(&self.time.to_le_bytes());
        b[16..48].copy_from_slice(self.digest.as_bytes());
        b[48..].copy_from_slice(self.chain.as_bytes());
        b
    }

    pub fn from_bytes(b: &[u8; LEDGER_RECORD_LEN]) -> Self {
        LedgerRecord {
            serial: u64::from_le_bytes(b[..8].try_into().unwrap()),
            time: i64::from_le_bytes(b[8..16].try_into().unwrap()),
            digest: Digest::from_slice(&b[16..48]).unwrap(),
            chain: Digest::from_slice(&b[48..]).unwrap(),
        }
    }
}

/// `chain_i = sha256(chain_{i-1} ‖ serial_i ‖ time_i ‖ digest_i)`, integers
/// encoded exactly as stored (8-byte little-endian).
pub fn ledger_chain_next(prev: &Digest, serial: u64, time: i64, digest: &Digest) -> Digest {
    sha256_parts(&[
        prev.as_bytes(),
        &serial.to_le_bytes(),
        &time.to_le_bytes(),
        digest.as_bytes(),
    ])
}

pub fn parse_ledger(bytes: &[u8]) -> Result<Vec<LedgerRecord>, BackendError> {
    if !bytes.len().is_multiple_of(LEDGER_RECORD_LEN) {
        return Err(BackendError::Rejected(format!(
            "ledger length {} is not a multiple of {LEDGER_RECORD_LEN}",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(LEDGER_RECORD_LEN)
        .map(|c| LedgerRecord::from_bytes(c.try_into().unwrap()))
        .collect())
}

/// Outcome of recomputing the chain from genesis (32 zero bytes).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct LedgerAudit {
    pub records: usize,
    /// Positions whose stored chain value disagrees with the recomputed one,
    /// or whose serial is out of sequence.
    pub broken: Vec<usize>,
}

impl LedgerAudit {
    pub fn is_intact(&self) -> bool {
        self.broken.is_empty()
    }

    pub fn first_break(&self) -> Option<usize> {
        self.broken.first().copied()
    }
}

pub fn audit_ledger(records: &[LedgerRecord]) -> LedgerAudit {
    let mut chain = Digest::ZERO;
    let mut broken = Vec::new();
    for (i, r) in records.iter().enumerate() {
        chain = ledger_chain_next(&chain, r.serial, r.time, &r.digest);
        if chain != r.chain || r.serial != i as u64 + 1 {
            broken.push(i);
        }
    }
    LedgerAudit {
        records: records.len(),
        broken,
    }
}

/// Ledger token evidence: `serial(8, LE) ‖ chain(32)`.
fn ledger_evidence(serial: u64, chain: &Digest) -> Vec<u8> {
    let mut e = serial.to_le_bytes().to_vec();
    e.extend_from_slice(chain.as_bytes());
    e
}

pub struct LedgerBackend {
    path: PathBuf,
    clock: Arc<dyn Clock>,
    append: Mutex<()>,
}

impl std::fmt::Debug for LedgerBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LedgerBackend").field("path", &self.path).finish()
    }
}

impl LedgerBackend {
    pub fn new(path: impl Into<PathBuf>, clock: Arc<dyn Clock>) -> Self {
        LedgerBackend {
            path: path.into(),
            clock,
            append: Mutex::new(()),
        }
    }

    pub fn with_system_clock(path: impl Into<PathBuf>) -> Self {
        Self::new(path, Arc::new(SystemClock))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn records(&self) -> Result<Vec<LedgerRecord>, BackendError> {
        match std::fs::read(&self.path) {
            Ok(b) => parse_ledger(&b),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Vec::new()),
            Err(e) => Err(unavailable(&self.path, e)),
        }
    }

    pub fn audit(&self) -> Result<LedgerAudit, BackendError> {
        Ok(audit_ledger(&self.records()?))
    }

    fn append(&self, digest: &Digest) -> io::Result<Result<LedgerRecord, String>> {
        let mut f = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&self.path)?;
        f.lock()?;
        let result = self.append_locked(&mut f, digest);
        f.unlock()?;
        result
    }

    fn append_locked(&self, f: &mut File, digest: &Digest) -> io::Result<Result<LedgerRecord, String>> {
        let mut bytes = Vec::new();
        f.seek(SeekFrom::Start(0))?;
        f.read_to_end(&mut bytes)?;
        let records = match parse_ledger(&bytes) {
            Ok(r) => r,
            Err(e) => return Ok(Err(e.to_string())),
        };
        let audit = audit_ledger(&records);
        if let Some(i) = audit.first_break() {
            return Ok(Err(format!("ledger chain broken at record {i}; refusing to append")));
        }
        let prev = records.last().map_or(Digest::ZERO, |r| r.chain);
        let serial = records.len() as u64 + 1;
        let time = self.clock.now();
        let record = LedgerRecord {
            serial,
            time,
            digest: *digest,
            chain: ledger_chain_next(&prev, serial, time, digest),
        };
        f.seek(SeekFrom::End(0))?;
        f.write_all(&record.to_bytes())?;
        f.sync_data()?;
        Ok(Ok(record))
    }
}

fn unavailable(path: &Path, e: io::Error) -> BackendError {
    BackendError::Unavailable(format!("ledger {}: {e}", path.display()))
}

impl TimestampBackend for LedgerBackend {
    fn backend_id(&self) -> &str {
        LEDGER_BACKEND_ID
    }

    fn request_timestamp(&self, digest: &Digest) -> Result<TimestampToken, BackendError> {
        let _guard = self.append.lock().unwrap_or_else(|p| p.into_inner());
        let record = self
            .append(digest)
            .map_err(|e| unavailable(&self.path, e))?
            .map_err(BackendError::Rejected)?;
        Ok(TimestampToken {
            backend_id: LEDGER_BACKEND_ID.to_string(),
            attested_digest: record.digest,
            attested_time: record.time,
            evidence: ledger_evidence(record.serial, &record.chain),
        })
    }

    fn verify_token(&self, token: &TimestampToken, digest: &Digest) -> bool {
        if token.backend_id != LEDGER_BACKEND_ID
            || token.attested_digest != *digest
            || token.evidence.len() != 8 + DIGEST_LEN
        {
            return false;
        }
        let serial = u64::from_le_bytes(token.evidence[..8].try_into().unwrap());
        let chain = Digest::from_slice(&token.evidence[8..]).unwrap();
        let Ok(records) = self.records() else {
            return false;
        };
        if serial == 0 || serial > records.len() as u64 {
            return false;
        }
        let prefix = &records[..serial as usize];
        let rec = prefix[prefix.len() - 1];
        rec.serial == serial
            && rec.time == token.attested_time
            && rec.digest == *digest
            && rec.chain == chain
            && audit_ledger(prefix).is_intact()
    }
}

// ---------------------------------------------------------------------------
// External TSA stub
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("transport failure: {0}")]
    Unreachable(String),
    #[error("server answered with HTTP status {0}")]
    Status(u16),
}

/// Delivers a request body to an endpoint and returns the response body.
pub trait Transport: Send + Sync {
    fn post(&self, endpoint: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, TransportError>;
}

/// Blocking HTTP POST.
#[derive(Debug, Default)]
pub struct HttpTransport;

impl Transport for HttpTransport {
    fn post(&self, endpoint: &str, content_type: &str, body: &[u8]) -> Result<Vec<u8>, TransportError> {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .build()
            .into();
        let mut resp = agent
            .post(endpoint)
            .header("Content-Type", content_type)
            .send(body)
            .map_err(|e| TransportError::Unreachable(e.to_string()))?;
        let status = resp.status().as_u16();
        if !(200..300).contains(&status) {
            return Err(TransportError::Status(status));
        }
        resp.body_mut()
            .read_to_vec()
            .map_err(|e| TransportError::Unreachable(e.to_string()))
    }
}

pub const TIMESTAMP_QUERY_CONTENT_TYPE: &str = "application/timestamp-query";

/// Policy OID sent when none is configured (a private-arc placeholder).
pub const DEFAULT_POLICY_OID: &str = "1.3.6.1.4.1.99999.1.1";

const SHA256_OID: &str = "2.16.840.1.101.3.4.2.1";

pub struct ExternalTsaClient<T: Transport = HttpTransport> {
    endpoint: String,
    policy_oid: String,
    clock: Arc<dyn Clock>,
    transport: T,
}

impl ExternalTsaClient<HttpTransport> {
    /// Reads the endpoint from `TSA_ENDPOINT`.
    pub fn from_env(clock: Arc<dyn Clock>) -> Result<Self, BackendError> {
        let endpoint = std::env::var(TSA_ENDPOINT_ENV)
            .map_err(|_| BackendError::Unavailable(format!("{TSA_ENDPOINT_ENV} is not set")))?;
        Ok(Self::new(endpoint, DEFAULT_POLICY_OID, clock, HttpTransport))
    }
}

impl<T: Transport> ExternalTsaClient<T> {
    pub fn new(endpoint: impl Into<String>, policy_oid: impl Into<String>, clock: Arc<dyn Clock>, transport: T) -> Self {
        ExternalTsaClient {
            endpoint: endpoint.into(),
            policy_oid: policy_oid.into(),
            clock,
            transport,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }
}

/// DER `TimeStampReq`:
///
/// ```text
/// SEQUENCE { version INTEGER 1,
///            messageImprint SEQUENCE { AlgorithmIdentifier{sha256, NULL}, OCTET STRING digest },
///            reqPolicy OID, nonce INTEGER, certReq BOOLEAN TRUE }
/// ```
pub fn encode_timestamp_request(digest: &Digest, nonce: &[u8], policy_oid: &str) -> Result<Vec<u8>, BackendError> {
    let bad_oid = |o: &str| BackendError::Rejected(format!("invalid policy OID {o:?}"));
    let alg = der::seq(&[der::oid(SHA256_OID).ok_or_else(|| bad_oid(SHA256_OID))?, der::null()]);
    let imprint = der::seq(&[alg, der::octets(digest.as_bytes())]);
    Ok(der::seq(&[
        der::uint(&[1]),
        imprint,
        der::oid(policy_oid).ok_or_else(|| bad_oid(policy_oid))?,
        der::uint(nonce),
        der::boolean(true),
    ]))
}

/// Syntactic check of a DER `TimeStampResp`: a PKIStatusInfo with status
/// granted (0) or grantedWithMods (1), followed by a token SEQUENCE.
pub fn check_timestamp_response(resp: &[u8]) -> Result<(), String> {
    let (outer, rest) = der::parse(resp).ok_or("response is not DER")?;
    if !rest.is_empty() || outer.tag != der::TAG_SEQUENCE {
        return Err("response is not a single SEQUENCE".into());
    }
    let (status_info, after) = der::parse(outer.body).ok_or("missing PKIStatusInfo")?;
    if status_info.tag != der::TAG_SEQUENCE {
        return Err("PKIStatusInfo is not a SEQUENCE".into());
    }
    let (status, _) = der::parse(status_info.body).ok_or("missing PKIStatus")?;
    if status.tag != der::TAG_INTEGER || status.body.is_empty() {
        return Err("PKIStatus is not an INTEGER".into());
    }
    let code = status.body.iter().fold(0i64, |acc, b| (acc << 8) | *b as i64);
    if status.body.len() > 2 || !(code == 0 || code == 1) {
        return Err(format!("TSA status {code} is not granted"));
    }
    let (token, trailing) = der::parse(after).ok_or("granted response carries no token")?;
    if token.tag != der::TAG_SEQUENCE || !trailing.is_empty() {
        return Err("timeStampToken is not a single SEQUENCE".into());
    }
    Ok(())
}

/// External evidence: `nonce_len(1) ‖ nonce ‖ response DER`.
fn split_external_evidence(e: &[u8]) -> Option<(&[u8], &[u8])> {
    let (&n, rest) = e.split_first()?;
    (rest.len() >= n as usize).then(|| rest.split_at(n as usize))
}

impl<T: Transport> TimestampBackend for ExternalTsaClient<T> {
    fn backend_id(&self) -> &str {
        EXTERNAL_BACKEND_ID
    }

    fn request_timestamp(&self, digest: &Digest) -> Result<TimestampToken, BackendError> {
        let mut nonce = [0u8; 8];
        rand::rngs::OsRng.fill_bytes(&mut nonce);
        let req = encode_timestamp_request(digest, &nonce, &self.policy_oid)?;
        let resp = self
            .transport
            .post(&self.endpoint, TIMESTAMP_QUERY_CONTENT_TYPE, &req)
            .map_err(|e| match e {
                TransportError::Unreachable(m) => BackendError::Unavailable(format!("{}: {m}", self.endpoint)),
                TransportError::Status(s) => BackendError::Rejected(format!("HTTP status {s}")),
            })?;
        check_timestamp_response(&resp).map_err(BackendError::Rejected)?;
        let mut evidence = Vec::with_capacity(1 + nonce.len() + resp.len());
        evidence.push(nonce.len() as u8);
        evidence.extend_from_slice(&nonce);
        evidence.extend_from_slice(&resp);
        Ok(TimestampToken {
            backend_id: EXTERNAL_BACKEND_ID.to_string(),
            attested_digest: *digest,
            attested_time: self.clock.now(),
            evidence,
        })
    }

    fn verify_token(&self, token: &TimestampToken, digest: &Digest) -> bool {
        token.backend_id == EXTERNAL_BACKEND_ID
            && token.attested_digest == *digest
            && split_external_evidence(&token.evidence)
                .is_some_and(|(nonce, resp)| !nonce.is_empty() && check_timestamp_response(resp).is_ok())
    }
}

/// Just enough DER for the request/response framing above.
pub mod der {
    pub const TAG_BOOLEAN: u8 = 0x01;
    pub const TAG_INTEGER: u8 = 0x02;
    pub const TAG_OCTET_STRING: u8 = 0x04;
    pub const TAG_NULL: u8 = 0x05;
    pub const TAG_OID: u8 = 0x06;
    pub const TAG_SEQUENCE: u8 = 0x30;

    pub fn tlv(tag: u8, body: &[u8]) -> Vec<u8> {
        let mut out = vec![tag];
        let len = body.len();
        if len < 0x80 {
            out.push(len as u8);
        } else {
            let bytes = len.to_be_bytes();
            let skip = bytes.iter().take_while(|b| **b == 0).count();
            out.push(0x80 | (bytes.len() - skip) as u8);
            out.extend_from_slice(&bytes[skip..]);
        }
        out.extend_from_slice(body);
        out
    }

    pub fn seq(items: &[Vec<u8>]) -> Vec<u8> {
        tlv(TAG_SEQUENCE, &items.concat())
    }

    pub fn null() -> Vec<u8> {
        tlv(TAG_NULL, &[])
    }

    pub fn boolean(v: bool) -> Vec<u8> {
        tlv(TAG_BOOLEAN, &[if v { 0xff } else { 0 }])
    }

    pub fn octets(b: &[u8]) -> Vec<u8> {
        tlv(TAG_OCTET_STRING, b)
    }

    /// Non-negative INTEGER from big-endian magnitude bytes.
    pub fn uint(magnitude: &[u8]) -> Vec<u8> {
        let trimmed = {
            let skip = magnitude.iter().take_while(|b| **b == 0).count();
            &magnitude[skip..]
        };
        let mut body = Vec::with_capacity(trimmed.len() + 1);
        if trimmed.first().is_none_or(|b| b & 0x80 != 0) {
            body.push(0);
        }
        body.extend_from_slice(trimmed);
        tlv(TAG_INTEGER, &body)
    }

    /// Dotted-decimal OID; `None` if it is not a valid OID.
    pub fn oid(dotted: &str) -> Option<Vec<u8>> {
        let arcs: Vec<u64> = dotted.split('.').map(|a| a.parse().ok()).collect::<Option<_>>()?;
        if arcs.len() < 2 || arcs[0] > 2 || (arcs[0] < 2 && arcs[1] >= 40) {
            return None;
        }
        let mut body = Vec::new();
        let first = arcs[0].checked_mul(40)?.checked_add(arcs[1])?;
        for arc in std::iter::once(first).chain(arcs[2..].iter().copied()) {
            let mut groups = vec![(arc & 0x7f) as u8];
            let mut v = arc >> 7;
            while v > 0 {
                groups.push(0x80 | (v & 0x7f) as u8);
                v >>= 7;
            }
            body.extend(groups.iter().rev());
        }
        Some(tlv(TAG_OID, &body))
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub struct Tlv<'a> {
        pub tag: u8,
        pub body: &'a [u8],
    }

    /// Parses one definite-length TLV and returns it with the remaining input.
    pub fn parse(input: &[u8]) -> Option<(Tlv<'_>, &[u8])> {
        let (&tag, rest) = input.split_first()?;
        let (&first, mut rest) = rest.split_first()?;
        let len = if first < 0x80 {
            first as usize
        } else {
            let n = (first & 0x7f) as usize;
            if n == 0 || n > 4 || rest.len() < n {
                return None;
            }
            let len = rest[..n].iter().fold(0usize, |acc, b| (acc << 8) | *b as usize);
            rest = &rest[n..];
            len
        };
        if rest.len() < len {
            return None;
        }
        let (body, rest) = rest.split_at(len);
        Some((Tlv { tag, body }, rest))
    }
}
