//! Storage/cost comparison between one-token-per-file timestamping and the
//! Merkle-aggregated schema, plus brute-force feasibility arithmetic.
//!
//! All sizes are in bytes. Reported storage is also given rounded down to a
//! multiple of 1024 (`*_kib_floor`).

use std::fmt::Write as _;

use crate::merkle::ceil_log2;

pub const DEFAULT_HASH_SIZE_BYTES: u64 = 32;
pub const DEFAULT_TOKEN_SIZE_BYTES: u64 = 5120;

/// `.tsm` bytes that do not depend on field values: keys, `=`, LFs, the
/// fixed-width hex fields (root, salt, commitment), `created_at` and the
/// terminating blank line.
pub const TSM_FRAMING_BYTES: u64 = 293;

/// Allowance for the value-dependent scalars of a typical marker: file name
/// (~16 bytes) plus the decimal leaf index, file count and repetitions.
pub const TSM_NOMINAL_VARIABLE_BYTES: u64 = 32;

/// Per-file surcharge of the new schema on top of the Merkle path: everything
/// in a `.tsm` except proof steps and the shared token.
pub const DEFAULT_MARKER_OVERHEAD_BYTES: u64 = TSM_FRAMING_BYTES + TSM_NOMINAL_VARIABLE_BYTES;

pub fn floor_to_kib(bytes: u128) -> u128 {
    bytes & !1023
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    pub files_per_rotation: u64,
    pub rotations_per_day: u64,
    pub days: u64,
    pub hash_size_bytes: u64,
    pub token_size_bytes: u64,
    /// Unitless. No default: it depends on the TSA contract.
    pub price_per_timestamp: Option<f64>,
    pub marker_overhead_bytes: u64,
}

impl CostModel {
    pub fn new(files_per_rotation: u64) -> Self {
        CostModel {
            files_per_rotation,
            rotations_per_day: 1,
            days: 1,
            hash_size_bytes: DEFAULT_HASH_SIZE_BYTES,
            token_size_bytes: DEFAULT_TOKEN_SIZE_BYTES,
            price_per_timestamp: None,
            marker_overhead_bytes: DEFAULT_MARKER_OVERHEAD_BYTES,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        for (name, v) in [
            ("files_per_rotation", self.files_per_rotation),
            ("rotations_per_day", self.rotations_per_day),
            ("days", self.days),
            ("hash_size_bytes", self.hash_size_bytes),
            ("token_size_bytes", self.token_size_bytes),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if let Some(p) = self.price_per_timestamp {
            if !(p.is_finite() && p >= 0.0) {
                return Err(format!("price_per_timestamp must be a non-negative number, got {p}"));
            }
        }
        Ok(())
    }

    pub fn rotations(&self) -> u128 {
        self.rotations_per_day as u128 * self.days as u128
    }

    /// Proof bytes plus overhead for one file in the new schema.
    pub fn per_file_marker_bytes(&self) -> u128 {
        ceil_log2(self.files_per_rotation) as u128 * self.hash_size_bytes as u128
            + self.marker_overhead_bytes as u128
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SavingsReport {
    pub model: CostModel,
    pub tokens_legacy: u128,
    pub tokens_new: u128,
    pub legacy_storage_bytes: u128,
    pub new_storage_bytes: u128,
    pub legacy_storage_kib_floor: u128,
    pub new_storage_kib_floor: u128,
    pub legacy_cost: Option<f64>,
    pub new_cost: Option<f64>,
    /// legacy / new, unrounded bytes.
    pub storage_ratio: f64,
    pub cost_ratio: Option<f64>,
}

impl SavingsReport {
    pub fn has_savings(&self) -> bool {
        self.tokens_new < self.tokens_legacy
    }
}

pub fn savings_report(model: &CostModel) -> SavingsReport {
    let n = model.files_per_rotation as u128;
    let token = model.token_size_bytes as u128;
    let tokens_legacy = n * model.rotations();
    let tokens_new = model.rotations();
    let legacy_storage_bytes = tokens_legacy * token;
    let new_storage_bytes = tokens_new * token + n * model.rotations() * model.per_file_marker_bytes();
    let legacy_cost = model.price_per_timestamp.map(|p| tokens_legacy as f64 * p);
    let new_cost = model.price_per_timestamp.map(|p| tokens_new as f64 * p);
    let cost_ratio = match (legacy_cost, new_cost) {
        (Some(l), Some(c)) if c > 0.0 => Some(l / c),
        _ => None,
    };
    SavingsReport {
        model: model.clone(),
        tokens_legacy,
        tokens_new,
        legacy_storage_bytes,
        new_storage_bytes,
        legacy_storage_kib_floor: floor_to_kib(legacy_storage_bytes),
        new_storage_kib_floor: floor_to_kib(new_storage_bytes),
        legacy_cost,
        new_cost,
        storage_ratio: legacy_storage_bytes as f64 / new_storage_bytes as f64,
        cost_ratio,
    }
}

fn base64_len(bytes: u64) -> u64 {
    bytes.div_ceil(3) * 4
}

/// Length of the `proof=` value for an `n`-file tree: `side:hex` per step,
/// `;`-separated.
pub fn tsm_proof_text_bytes(n_files: u64) -> u64 {
    let steps = ceil_log2(n_files) as u64;
    steps * (2 + 2 * DEFAULT_HASH_SIZE_BYTES) + steps.saturating_sub(1)
}

/// Expected size of one serialized `.tsm` marker, embedded token included.
pub fn estimated_tsm_bytes(n_files: u64, token_encoded_len: u64) -> u64 {
    DEFAULT_MARKER_OVERHEAD_BYTES + tsm_proof_text_bytes(n_files) + base64_len(token_encoded_len)
}

fn fmt_cost(c: Option<f64>) -> String {
    c.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"))
}

/// Aligned plain-text comparison table.
pub fn render_savings_table(r: &SavingsReport) -> String {
    let m = &r.model;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "n={} files/rotation, {} rotation(s)/day, {} day(s), hash {} B, token {} B, marker overhead {} B",
        m.files_per_rotation, m.rotations_per_day, m.days, m.hash_size_bytes, m.token_size_bytes, m.marker_overhead_bytes
    );
    let rows = [
        ("tokens", r.tokens_legacy.to_string(), r.tokens_new.to_string()),
        (
            "storage (B)",
            r.legacy_storage_bytes.to_string(),
            r.new_storage_bytes.to_string(),
        ),
        (
            "storage (KiB, floor)",
            (r.legacy_storage_kib_floor / 1024).to_string(),
            (r.new_storage_kib_floor / 1024).to_string(),
        ),
        ("cost", fmt_cost(r.legacy_cost), fmt_cost(r.new_cost)),
    ];
    let w0 = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
    let w1 = rows.iter().map(|r| r.1.len()).chain(["legacy".len()]).max().unwrap_or(0);
    let w2 = rows.iter().map(|r| r.2.len()).chain(["merkle".len()]).max().unwrap_or(0);
    let _ = writeln!(out, "{:<w0$}  {:>w1$}  {:>w2$}", "", "legacy", "merkle");
    for (label, a, b) in rows {
        if label == "cost" && r.legacy_cost.is_none() {
            continue;
        }
        let _ = writeln!(out, "{label:<w0$}  {a:>w1$}  {b:>w2$}");
    }
    let _ = writeln!(out, "storage ratio {:.2}x", r.storage_ratio);
    if let Some(c) = r.cost_ratio {
        let _ = writeln!(out, "cost ratio {c:.2}x");
    }
    if !r.has_savings() {
        let _ = writeln!(out, "no savings: a single file per rotation already needs exactly one token");
    }
    out
}

/// `key=value` lines, same style as `.tsm` markers.
pub fn render_savings_kv(r: &SavingsReport) -> String {
    let m = &r.model;
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("files_per_rotation", m.files_per_rotation.to_string());
    kv("rotations_per_day", m.rotations_per_day.to_string());
    kv("days", m.days.to_string());
    kv("hash_size_bytes", m.hash_size_bytes.to_string());
    kv("token_size_bytes", m.token_size_bytes.to_string());
    kv("marker_overhead_bytes", m.marker_overhead_bytes.to_string());
    kv("tokens_legacy", r.tokens_legacy.to_string());
    kv("tokens_new", r.tokens_new.to_string());
    kv("legacy_storage_bytes", r.legacy_storage_bytes.to_string());
    kv("new_storage_bytes", r.new_storage_bytes.to_string());
    kv("legacy_storage_kib_floor", r.legacy_storage_kib_floor.to_string());
    kv("new_storage_kib_floor", r.new_storage_kib_floor.to_string());
    if let (Some(l), Some(n)) = (r.legacy_cost, r.new_cost) {
        kv("legacy_cost", l.to_string());
        kv("new_cost", n.to_string());
    }
    kv("storage_ratio", format!("{:.6}", r.storage_ratio));
    if let Some(c) = r.cost_ratio {
        kv("cost_ratio", format!("{c:.6}"));
    }
    kv("savings", r.has_savings().to_string());
    out
}

// ---------------------------------------------------------------------------
// Brute-force feasibility
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct AttackFeasibility {
    pub hash_bits: u32,
    pub retention_seconds: Option<u64>,
    pub handling_seconds: Option<u64>,
    pub window_log2: f64,
    pub attacker_rate_hps: f64,
    /// Accumulated log₂ of KDF repetitions applied via [`kdf_adjusted_margin`].
    pub kdf_repetitions_log2: f64,
    /// Expected collision-search tries, log₂ (birthday bound).
    pub tries_log2: f64,
    pub required_rate_log2: f64,
    pub available_rate_log2: f64,
    pub gap_log2: f64,
    pub feasible: bool,
}

impl AttackFeasibility {
    fn recompute(mut self) -> Self {
        self.tries_log2 = self.hash_bits as f64 / 2.0;
        self.required_rate_log2 = self.tries_log2 - self.window_log2;
        self.gap_log2 = self.required_rate_log2 - self.available_rate_log2;
        self.feasible = self.gap_log2 <= 0.0;
        self
    }

    /// log₂ of the expected seconds the attacker needs at the available rate.
    pub fn expected_attack_seconds_log2(&self) -> f64 {
        self.tries_log2 - self.available_rate_log2
    }
}

/// Feasibility with the window and attacker rate already in log₂ form.
pub fn security_margin_log2(hash_bits: u32, window_log2: f64, rate_log2: f64) -> AttackFeasibility {
    AttackFeasibility {
        hash_bits,
        retention_seconds: None,
        handling_seconds: None,
        window_log2,
        attacker_rate_hps: rate_log2.exp2(),
        kdf_repetitions_log2: 0.0,
        tries_log2: 0.0,
        required_rate_log2: 0.0,
        available_rate_log2: rate_log2,
        gap_log2: 0.0,
        feasible: false,
    }
    .recompute()
}

/// Can an attacker with `attacker_rate_hps` find a collision within
/// `retention_seconds + handling_seconds`?
pub fn security_margin(
    hash_bits: u32,
    retention_seconds: u64,
    handling_seconds: u64,
    attacker_rate_hps: f64,
) -> AttackFeasibility {
    let window = retention_seconds as f64 + handling_seconds as f64;
    let mut f = security_margin_log2(hash_bits, window.log2(), attacker_rate_hps.log2());
    f.retention_seconds = Some(retention_seconds);
    f.handling_seconds = Some(handling_seconds);
    f.attacker_rate_hps = attacker_rate_hps;
    f
}

/// Every candidate now costs `repetitions` hash evaluations.
pub fn kdf_adjusted_margin(base: &AttackFeasibility, repetitions: u64) -> AttackFeasibility {
    let r = (repetitions.max(1) as f64).log2();
    let mut f = base.clone();
    f.available_rate_log2 -= r;
    f.kdf_repetitions_log2 += r;
    f.recompute()
}

pub fn render_margin_kv(f: &AttackFeasibility) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k}={v}");
    };
    kv("hash_bits", f.hash_bits.to_string());
    if let Some(s) = f.retention_seconds {
        kv("retention_seconds", s.to_string());
    }
    if let Some(s) = f.handling_seconds {
        kv("handling_seconds", s.to_string());
    }
    kv("window_log2", format!("{:.3}", f.window_log2));
    kv("tries_log2", format!("{:.3}", f.tries_log2));
    kv("kdf_repetitions_log2", format!("{:.3}", f.kdf_repetitions_log2));
    kv("required_rate_log2", format!("{:.3}", f.required_rate_log2));
    kv("available_rate_log2", format!("{:.3}", f.available_rate_log2));
    kv("gap_log2", format!("{:.3}", f.gap_log2));
    kv("expected_attack_seconds_log2", format!("{:.3}", f.expected_attack_seconds_log2()));
    kv("feasible", f.feasible.to_string());
    kv("verdict", if f.feasible { "FEASIBLE" } else { "INFEASIBLE" }.to_string());
    out
}

pub fn render_margin_table(f: &AttackFeasibility) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "hash bits             {}", f.hash_bits);
    let _ = writeln!(out, "expected tries        2^{:.2}", f.tries_log2);
    let _ = writeln!(out, "attack window         2^{:.2} s", f.window_log2);
    let _ = writeln!(out, "required rate         2^{:.2} tries/s", f.required_rate_log2);
    if f.kdf_repetitions_log2 > 0.0 {
        let _ = writeln!(out, "kdf repetitions       2^{:.2}", f.kdf_repetitions_log2);
    }
    let _ = writeln!(out, "attacker rate         2^{:.2} tries/s", f.available_rate_log2);
    let _ = writeln!(out, "gap                   2^{:.2}", f.gap_log2);
    let _ = writeln!(
        out,
        "verdict               {}",
        if f.feasible { "FEASIBLE" } else { "INFEASIBLE" }
    );
    out
}
