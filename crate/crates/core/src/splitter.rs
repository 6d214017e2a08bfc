//! Retention-class disaggregation of a log stream.
//!
//! Every line is routed, byte for byte, to exactly one class output so each
//! timestamped file only holds events sharing one retention policy.
//!
//! Rules file format, one rule per line:
//!
//! ```text
//! # comment
//! 3650<TAB>auth<TAB>.*sshd\[\d+\]: Accepted .*
//! 90<TAB>link<TAB>.*%LINK-3-UPDOWN.*
//! default<TAB>365<TAB>misc
//! ```
//!
//! Patterns are matched against the whole line (implicitly anchored). The
//! first matching rule wins; lines matching nothing go to the default class.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufRead, BufWriter, Write};
use std::path::{Path, PathBuf};

use regex::bytes::RegexSet;
use thiserror::Error;

/// Used when a rules file declares no `default` line.
pub const DEFAULT_CLASS_NAME: &str = "default";
pub const DEFAULT_RETENTION_DAYS: u32 = 365;

#[derive(Debug, Error)]
pub enum SplitError {
    #[error("rules line {line}: {detail}")]
    RuleSyntax { line: usize, detail: String },
    #[error("rules line {line}: class `{class}` declared twice")]
    RuleDuplicate { line: usize, class: String },
    #[error("writing class `{class}`: {source}")]
    IoSink {
        class: String,
        #[source]
        source: io::Error,
    },
    #[error("reading input: {0}")]
    IoInput(#[source] io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetentionRule {
    pub pattern: String,
    pub class_name: String,
    pub retention_days: u32,
}

#[derive(Debug, Clone)]
pub struct RetentionRuleSet {
    rules: Vec<RetentionRule>,
    default_class: String,
    default_retention_days: u32,
    matcher: RegexSet,
}

fn valid_class_name(name: &str) -> bool {
    let mut bytes = name.bytes();
    bytes.next().is_some_and(|b| b.is_ascii_alphanumeric())
        && bytes.all(|b| b.is_ascii_alphanumeric() || matches!(b, b'.' | b'_' | b'-'))
}

fn parse_days(line: usize, s: &str) -> Result<u32, SplitError> {
    match s.trim().parse::<u32>() {
        Ok(d) if d >= 1 => Ok(d),
        _ => Err(SplitError::RuleSyntax {
            line,
            detail: format!("retention days {s:?} is not a positive integer"),
        }),
    }
}

fn check_class(line: usize, name: &str) -> Result<(), SplitError> {
    if valid_class_name(name) {
        Ok(())
    } else {
        Err(SplitError::RuleSyntax {
            line,
            detail: format!("class name {name:?} must match [A-Za-z0-9][A-Za-z0-9._-]*"),
        })
    }
}

fn anchored(pattern: &str) -> String {
    format!("^(?:{pattern})$")
}

/// Parses a rules file.
pub fn compile_rules(spec_text: &str) -> Result<RetentionRuleSet, SplitError> {
    let mut rules: Vec<RetentionRule> = Vec::new();
    let mut default: Option<(String, u32, usize)> = None;
    let mut seen: BTreeMap<String, usize> = BTreeMap::new();

    for (i, raw) in spec_text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let mut fields = line.splitn(3, '\t');
        let (first, second, third) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => {
                return Err(SplitError::RuleSyntax {
                    line: line_no,
                    detail: "expected three TAB-separated fields".into(),
                })
            }
        };
        let class = if first == "default" {
            let class = third.trim();
            if default.is_some() {
                return Err(SplitError::RuleSyntax {
                    line: line_no,
                    detail: "more than one default declaration".into(),
                });
            }
            check_class(line_no, class)?;
            let days = parse_days(line_no, second)?;
            default = Some((class.to_string(), days, line_no));
            class.to_string()
        } else {
            let days = parse_days(line_no, first)?;
            let class = second.trim();
            check_class(line_no, class)?;
            regex::bytes::Regex::new(&anchored(third)).map_err(|e| SplitError::RuleSyntax {
                line: line_no,
                detail: format!("bad pattern: {e}"),
            })?;
            rules.push(RetentionRule {
                pattern: third.to_string(),
                class_name: class.to_string(),
                retention_days: days,
            });
            class.to_string()
        };
        if seen.insert(class.clone(), line_no).is_some() {
            return Err(SplitError::RuleDuplicate { line: line_no, class });
        }
    }

    let (default_class, default_retention_days) = match default {
        Some((c, d, _)) => (c, d),
        None => {
            if let Some(&line) = seen.get(DEFAULT_CLASS_NAME) {
                return Err(SplitError::RuleDuplicate {
                    line,
                    class: DEFAULT_CLASS_NAME.into(),
                });
            }
            (DEFAULT_CLASS_NAME.to_string(), DEFAULT_RETENTION_DAYS)
        }
    };
    let matcher = RegexSet::new(rules.iter().map(|r| anchored(&r.pattern))).map_err(|e| SplitError::RuleSyntax {
        line: 0,
        detail: format!("pattern set: {e}"),
    })?;
    Ok(RetentionRuleSet {
        rules,
        default_class,
        default_retention_days,
        matcher,
    })
}

impl RetentionRuleSet {
    pub fn rules(&self) -> &[RetentionRule] {
        &self.rules
    }

    pub fn default_class(&self) -> &str {
        &self.default_class
    }

    pub fn default_retention_days(&self) -> u32 {
        self.default_retention_days
    }

    /// Rule classes in precedence order, then the default.
    pub fn classes(&self) -> impl Iterator<Item = &str> {
        self.rules
            .iter()
            .map(|r| r.class_name.as_str())
            .chain(std::iter::once(self.default_class.as_str()))
    }

    pub fn retention_days(&self, class: &str) -> Option<u32> {
        if class == self.default_class {
            return Some(self.default_retention_days);
        }
        self.rules.iter().find(|r| r.class_name == class).map(|r| r.retention_days)
    }

    /// Class of the first rule matching the whole record, or the default.
    pub fn classify(&self, record: &[u8]) -> &str {
        match self.matcher.matches(record).iter().next() {
            Some(i) => &self.rules[i].class_name,
            None => &self.default_class,
        }
    }
}

pub fn classify_record<'a>(record: &[u8], ruleset: &'a RetentionRuleSet) -> &'a str {
    ruleset.classify(record)
}

/// Destination for classified lines.
pub trait ClassSink {
    /// `line` includes its terminating LF, if it had one.
    fn append(&mut self, class: &str, line: &[u8]) -> io::Result<()>;

    fn finish(&mut self) -> io::Result<()> {
        Ok(())
    }
}

/// Collects class outputs in memory.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct MemorySink {
    pub outputs: BTreeMap<String, Vec<u8>>,
}

impl ClassSink for MemorySink {
    fn append(&mut self, class: &str, line: &[u8]) -> io::Result<()> {
        self.outputs.entry(class.to_string()).or_default().extend_from_slice(line);
        Ok(())
    }
}

/// Writes `<class>.log` files into a directory. Output goes to
/// `<class>.log.partial` and is renamed into place by [`ClassSink::finish`].
#[derive(Debug)]
pub struct DirSink {
    dir: PathBuf,
    open: BTreeMap<String, BufWriter<File>>,
}

impl DirSink {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        DirSink {
            dir: dir.into(),
            open: BTreeMap::new(),
        }
    }

    pub fn class_path(&self, class: &str) -> PathBuf {
        self.dir.join(format!("{class}.log"))
    }

    fn partial_path(&self, class: &str) -> PathBuf {
        self.dir.join(format!("{class}.log.partial"))
    }

    pub fn written_paths(&self) -> Vec<PathBuf> {
        self.open.keys().map(|c| self.class_path(c)).collect()
    }
}

impl ClassSink for DirSink {
    fn append(&mut self, class: &str, line: &[u8]) -> io::Result<()> {
        if !self.open.contains_key(class) {
            let f = File::create(self.partial_path(class))?;
            self.open.insert(class.to_string(), BufWriter::new(f));
        }
        self.open.get_mut(class).unwrap().write_all(line)
    }

    fn finish(&mut self) -> io::Result<()> {
        let classes: Vec<String> = self.open.keys().cloned().collect();
        for class in classes {
            let w = self.open.get_mut(&class).unwrap();
            w.flush()?;
            w.get_ref().sync_all()?;
            fs::rename(self.partial_path(&class), self.class_path(&class))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SplitStats {
    /// Every declared class, including those that received no lines.
    pub lines_per_class: BTreeMap<String, u64>,
    pub total: u64,
}

/// Routes every line of `input` to its class in `sink`.
///
/// Lines are split on LF only and passed through untouched (LF included).
/// Classification sees the line without its LF.
pub fn split_stream<R: BufRead, S: ClassSink + ?Sized>(
    mut input: R,
    ruleset: &RetentionRuleSet,
    sink: &mut S,
) -> Result<SplitStats, SplitError> {
    let mut stats = SplitStats {
        lines_per_class: ruleset.classes().map(|c| (c.to_string(), 0)).collect(),
        total: 0,
    };
    let mut buf = Vec::with_capacity(512);
    loop {
        buf.clear();
        let n = input.read_until(b'\n', &mut buf).map_err(SplitError::IoInput)?;
        if n == 0 {
            break;
        }
        let record = buf.strip_suffix(b"\n").unwrap_or(&buf);
        let class = ruleset.classify(record);
        sink.append(class, &buf).map_err(|source| SplitError::IoSink {
            class: class.to_string(),
            source,
        })?;
        *stats.lines_per_class.get_mut(class).expect("declared class") += 1;
        stats.total += 1;
    }
    sink.finish().map_err(|source| SplitError::IoSink {
        class: "<finish>".into(),
        source,
    })?;
    Ok(stats)
}

/// Reads a rules file from disk.
pub fn load_rules(path: &Path) -> io::Result<String> {
    fs::read_to_string(path)
}
