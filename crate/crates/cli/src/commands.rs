use std::collections::BTreeSet;
use std::fs::{self, File};
use std::io::BufReader;
use std::sync::Arc;

use logstamp::estimator::{self, CostModel};
use logstamp::kdf::Salt;
use logstamp::marker::{VerificationReport, DEFAULT_MAX_VERIFY_REPETITIONS};
use logstamp::merkle::ExecMode;
use logstamp::pipeline::{self, KdfSetting, PipelineError, StampOptions, StampOutcome};
use logstamp::splitter::{self, DirSink, SplitError};
use logstamp::tsa::{
    ExternalTsaClient, HttpTransport, LedgerBackend, SystemClock, TimestampBackend, DEFAULT_POLICY_OID,
    TSA_ENDPOINT_ENV,
};

use crate::config::Config;
use crate::{BackendKind, BackendArgs, EstimateArgs, Failure, Format, MarginArgs, SplitArgs, StampArgs, VerifyArgs};

/// Used when neither explicit repetitions nor a calibration pair is given.
pub const DEFAULT_REPETITIONS: u64 = 100_000;

fn pipeline_failure(e: PipelineError) -> Failure {
    match e {
        PipelineError::Backend(e) => Failure::backend(e.to_string()),
        PipelineError::Io { .. } => Failure::io(e.to_string()),
        PipelineError::Marker(_) | PipelineError::Merkle(_) | PipelineError::Kdf(_) => Failure::usage(e.to_string()),
    }
}

fn required<T>(v: Option<T>, what: &str) -> Result<T, Failure> {
    v.ok_or_else(|| Failure::usage(format!("missing required option --{what}")))
}

pub fn split(a: SplitArgs, cfg: &Config) -> Result<u8, Failure> {
    let input = required(cfg.path(a.input, "input"), "input")?;
    let rules_path = required(cfg.path(a.rules, "rules"), "rules")?;
    let out_dir = required(cfg.path(a.out_dir, "out_dir"), "out-dir")?;

    let rules_text = fs::read_to_string(&rules_path)
        .map_err(|e| Failure::usage(format!("rules {}: {e}", rules_path.display())))?;
    let ruleset = splitter::compile_rules(&rules_text)
        .map_err(|e| Failure::usage(format!("rules {}: {e}", rules_path.display())))?;
    let reader = File::open(&input).map_err(|e| Failure::io(format!("{}: {e}", input.display())))?;
    fs::create_dir_all(&out_dir).map_err(|e| Failure::io(format!("{}: {e}", out_dir.display())))?;

    let mut sink = DirSink::new(&out_dir);
    let stats = splitter::split_stream(BufReader::new(reader), &ruleset, &mut sink).map_err(|e| match e {
        SplitError::RuleSyntax { .. } | SplitError::RuleDuplicate { .. } => Failure::usage(e.to_string()),
        SplitError::IoSink { .. } | SplitError::IoInput(_) => Failure::io(e.to_string()),
    })?;
    for (class, count) in &stats.lines_per_class {
        let days = ruleset.retention_days(class).unwrap_or_default();
        println!("class={class} lines={count} retention_days={days}");
    }
    println!("total={}", stats.total);
    for p in sink.written_paths() {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn make_backend(a: &BackendArgs, cfg: &Config) -> Result<Box<dyn TimestampBackend>, Failure> {
    let kind = match a.backend {
        Some(k) => k,
        None => match cfg.get::<String>("backend")?.as_deref() {
            None | Some("ledger") => BackendKind::Ledger,
            Some("external") => BackendKind::External,
            Some(other) => return Err(Failure::usage(format!("unknown backend `{other}`"))),
        },
    };
    let clock = Arc::new(SystemClock);
    match kind {
        BackendKind::Ledger => {
            let path = cfg
                .path(a.ledger.clone(), "ledger")
                .ok_or_else(|| Failure::usage("the ledger backend needs --ledger <path>"))?;
            Ok(Box::new(LedgerBackend::new(path, clock)))
        }
        BackendKind::External => {
            let endpoint = match cfg.or(a.tsa_endpoint.clone(), "tsa_endpoint")? {
                Some(e) => e,
                None => std::env::var(TSA_ENDPOINT_ENV).map_err(|_| {
                    Failure::usage(format!("the external backend needs --tsa-endpoint or {TSA_ENDPOINT_ENV}"))
                })?,
            };
            let policy = cfg
                .or(a.policy_oid.clone(), "policy_oid")?
                .unwrap_or_else(|| DEFAULT_POLICY_OID.to_string());
            Ok(Box::new(ExternalTsaClient::new(endpoint, policy, clock, HttpTransport)))
        }
    }
}

fn kdf_setting(a: &StampArgs, cfg: &Config) -> Result<KdfSetting, Failure> {
    let reps = cfg.or(a.repetitions, "repetitions")?;
    let target = cfg.or(a.target_seconds, "target_seconds")?;
    let max = cfg.or(a.max_allowed_seconds, "max_allowed_seconds")?;
    match (reps, target, max) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => Err(Failure::usage(
            "give either --repetitions or --target-seconds/--max-allowed-seconds, not both",
        )),
        (Some(r), None, None) => Ok(KdfSetting::Repetitions(r)),
        (None, Some(t), Some(m)) => Ok(KdfSetting::Calibrate {
            target_seconds: t,
            max_allowed_seconds: m,
        }),
        (None, Some(_), None) | (None, None, Some(_)) => Err(Failure::usage(
            "--target-seconds and --max-allowed-seconds must be given together",
        )),
        (None, None, None) => Ok(KdfSetting::Repetitions(DEFAULT_REPETITIONS)),
    }
}

fn print_outcome(o: &StampOutcome) {
    println!("root={}", o.root);
    println!("n_files={}", o.kdf_params.n_files);
    println!("repetitions={}", o.kdf_params.repetitions);
    println!("commitment={}", o.commitment.digest);
    println!("token_backend={}", o.token.backend_id);
    println!("token_time={}", o.token.attested_time);
}

pub fn stamp(a: StampArgs, cfg: &Config) -> Result<u8, Failure> {
    let out_dir = required(cfg.path(a.out_dir.clone(), "out_dir"), "out-dir")?;
    let kdf = kdf_setting(&a, cfg)?;
    let salt = match cfg.or(a.salt.clone(), "salt")? {
        None => None,
        Some(h) => Some(
            hex::decode(&h)
                .ok()
                .and_then(|b| Salt::from_slice(&b))
                .ok_or_else(|| Failure::usage("--salt must be 32 hex characters"))?,
        ),
    };

    let mut paths = a.files.clone();
    paths.sort();
    paths.dedup();
    let names = paths
        .iter()
        .map(|p| {
            p.file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .ok_or_else(|| Failure::usage(format!("{} has no file name", p.display())))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut seen = BTreeSet::new();
    for n in &names {
        if !seen.insert(n) {
            return Err(Failure::usage(format!("two inputs share the file name `{n}`")));
        }
    }

    let backend = make_backend(&a.backend, cfg)?;
    fs::create_dir_all(&out_dir).map_err(|e| Failure::io(format!("{}: {e}", out_dir.display())))?;
    // calibrate once, even in legacy mode
    let repetitions = kdf.resolve().map_err(|e| Failure::usage(e.to_string()))?;
    let opts = StampOptions {
        kdf: KdfSetting::Repetitions(repetitions),
        salt,
        mode: ExecMode::default(),
    };
    let digests = pipeline::hash_files(&paths, opts.mode).map_err(pipeline_failure)?;
    let clock = SystemClock;

    let outcomes = if a.legacy {
        pipeline::stamp_legacy(&names, &digests, backend.as_ref(), &clock, &opts).map_err(pipeline_failure)?
    } else {
        vec![pipeline::stamp_digests(&names, digests, backend.as_ref(), &clock, &opts).map_err(pipeline_failure)?]
    };
    let markers: Vec<_> = outcomes.iter().flat_map(|o| o.markers.iter().cloned()).collect();
    let written = pipeline::write_markers_atomic(&out_dir, &markers).map_err(pipeline_failure)?;

    if a.legacy {
        println!("mode=legacy");
    } else {
        print_outcome(&outcomes[0]);
    }
    println!("tokens={}", outcomes.len());
    println!("markers={}", written.len());
    for p in written {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn print_report(r: &VerificationReport) {
    println!("path_ok={}", r.path_ok);
    println!("commitment_ok={}", r.commitment_ok);
    println!("token_ok={}", r.token_ok);
    println!("overall={}", r.overall);
    if let Some(d) = &r.failure_detail {
        println!("detail={d}");
    }
}

pub fn verify(a: VerifyArgs, cfg: &Config) -> Result<u8, Failure> {
    let marker = pipeline::read_marker(&a.marker).map_err(pipeline_failure)?;
    let backend = make_backend(&a.backend, cfg)?;
    let limit = cfg
        .or(a.max_repetitions, "max_repetitions")?
        .unwrap_or(DEFAULT_MAX_VERIFY_REPETITIONS);
    let report = pipeline::verify_file(&a.file, &marker, backend.as_ref(), limit).map_err(pipeline_failure)?;
    println!("file={}", a.file.display());
    println!("marker={}", a.marker.display());
    print_report(&report);
    Ok(if report.overall { 0 } else { 1 })
}

pub fn estimate(a: EstimateArgs, cfg: &Config) -> Result<u8, Failure> {
    let n = required(cfg.or(a.n, "n")?, "n")?;
    let mut model = CostModel::new(n);
    if let Some(v) = cfg.or(a.rotations_per_day, "rotations_per_day")? {
        model.rotations_per_day = v;
    }
    if let Some(v) = cfg.or(a.days, "days")? {
        model.days = v;
    }
    if let Some(v) = cfg.or(a.hash_size, "hash_size")? {
        model.hash_size_bytes = v;
    }
    if let Some(v) = cfg.or(a.token_size, "token_size")? {
        model.token_size_bytes = v;
    }
    // timestamps and Merkle paths only, unless asked otherwise
    model.marker_overhead_bytes = if a.tsm_overhead {
        estimator::DEFAULT_MARKER_OVERHEAD_BYTES
    } else {
        cfg.or(a.overhead, "overhead")?.unwrap_or(0)
    };
    model.price_per_timestamp = cfg.or(a.price, "price")?;
    if a.costs && model.price_per_timestamp.is_none() {
        return Err(Failure::usage("cost columns need --price (there is no default price)"));
    }
    model.validate().map_err(Failure::usage)?;
    let report = estimator::savings_report(&model);
    match a.format {
        Format::Table => print!("{}", estimator::render_savings_table(&report)),
        Format::Kv => print!("{}", estimator::render_savings_kv(&report)),
    }
    Ok(0)
}

pub fn margin(a: MarginArgs, cfg: &Config) -> Result<u8, Failure> {
    let hash_bits = cfg.or(a.hash_bits, "hash_bits")?.unwrap_or(256);
    if hash_bits == 0 {
        return Err(Failure::usage("--hash-bits must be positive"));
    }
    let window_log2 = cfg.or(a.window_log2, "window_log2")?;
    let retention = cfg.or(a.retention_seconds, "retention_seconds")?;
    let handling = cfg.or(a.handling_seconds, "handling_seconds")?;
    let rate_log2 = cfg.or(a.rate_log2, "rate_log2")?;
    let rate_hps = cfg.or(a.rate_hps, "rate_hps")?;

    let rate_log2 = match (rate_log2, rate_hps) {
        (Some(_), Some(_)) => return Err(Failure::usage("give --rate-log2 or --rate-hps, not both")),
        (Some(l), None) => l,
        (None, Some(h)) if h >= 0.0 => h.log2(),
        (None, Some(_)) => return Err(Failure::usage("--rate-hps must be non-negative")),
        (None, None) => return Err(Failure::usage("missing attacker rate: --rate-log2 or --rate-hps")),
    };
    let mut f = match (window_log2, retention, handling) {
        (Some(w), None, None) => estimator::security_margin_log2(hash_bits, w, rate_log2),
        (None, Some(r), Some(h)) if r + h > 0 => {
            estimator::security_margin(hash_bits, r, h, rate_log2.exp2())
        }
        (None, None, None) => {
            return Err(Failure::usage(
                "missing attack window: --window-log2 or --retention-seconds with --handling-seconds",
            ))
        }
        _ => {
            return Err(Failure::usage(
                "give either --window-log2 or a positive --retention-seconds/--handling-seconds pair",
            ))
        }
    };
    if let Some(r) = cfg.or(a.repetitions, "repetitions")? {
        if r == 0 {
            return Err(Failure::usage("--repetitions must be at least 1"));
        }
        f = estimator::kdf_adjusted_margin(&f, r);
    }
    match a.format {
        Format::Table => print!("{}", estimator::render_margin_table(&f)),
        Format::Kv => print!("{}", estimator::render_margin_kv(&f)),
    }
    Ok(0)
}
