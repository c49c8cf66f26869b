//! The end-to-end check: parse, type, and check the consistency of the
//! generated constraints.

use std::fmt;
use std::time::Instant;

use serde::Serialize;

use crate::bityper::{check_process_with, type_replicated, TypeFailure, TypingOptions};
use crate::consistency::{check_const_diag, check_replicated_diag, replicated_set, ConstFailure};
use crate::constraints::ConstraintSet;
use crate::parser::{parse, ParseError, ProtocolFile, Query};
use crate::process::{prefix_env, split_replication};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA: u32 = 1;

/// Entries beyond this count are dumped factor by factor.
pub const DUMP_LIMIT: u128 = 4096;

/// Why equivalence could not be established.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum Unknown {
    /// No typing derivation was found.
    TypeFailure(String),
    /// The generated constraints failed the consistency check.
    InconsistentConstraints(String),
    /// The process lies outside the supported fragment.
    OutOfFragment(String),
}

impl fmt::Display for Unknown {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Unknown::TypeFailure(d) => write!(f, "type failure: {d}"),
            Unknown::InconsistentConstraints(d) => write!(f, "inconsistent constraints: {d}"),
            Unknown::OutOfFragment(d) => write!(f, "out of fragment: {d}"),
        }
    }
}

impl From<TypeFailure> for Unknown {
    fn from(e: TypeFailure) -> Self {
        Unknown::TypeFailure(e.to_string())
    }
}

impl From<ConstFailure> for Unknown {
    fn from(e: ConstFailure) -> Self {
        Unknown::InconsistentConstraints(e.to_string())
    }
}

/// The outcome of a run.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "result", content = "reason", rename_all = "kebab-case")]
pub enum Verdict {
    /// Typing succeeded and the constraints are consistent.
    ProvenEquivalent,
    /// Nothing can be concluded.
    Unknown(Unknown),
}

impl Verdict {
    /// True for [`Verdict::ProvenEquivalent`].
    pub fn is_proven(&self) -> bool {
        matches!(self, Verdict::ProvenEquivalent)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::ProvenEquivalent => write!(f, "proven equivalent"),
            Verdict::Unknown(u) => write!(f, "unknown ({u})"),
        }
    }
}

/// Wall-clock time per phase, in milliseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct Timing {
    pub parse_ms: f64,
    pub typing_ms: f64,
    pub consistency_ms: f64,
    pub total_ms: f64,
}

/// The result of checking one protocol file.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Report {
    pub schema: u32,
    pub verdict: Verdict,
    /// Constraints over all stored entries.
    pub constraint_count: usize,
    /// Entries of the checked constraint set.
    pub entry_count: u128,
    pub timing: Timing,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constraints: Option<String>,
}

/// Options for [`run`].
#[derive(Clone, Copy, Debug)]
pub struct RunOptions {
    /// Include the constraint dump in the report.
    pub dump_constraints: bool,
    /// Use the rayon pool inside typing and consistency checking.
    pub parallel: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            dump_constraints: false,
            parallel: true,
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1000.0
}

/// Parses and checks a protocol file.
pub fn run(source: &str, opts: RunOptions) -> Result<Report, ParseError> {
    let start = Instant::now();
    let file = parse(source)?;
    let parse_ms = ms(start);
    let mut report = check_file(&file, opts);
    report.timing.parse_ms = parse_ms;
    report.timing.total_ms = ms(start);
    Ok(report)
}

/// Checks an already parsed protocol file.
pub fn check_file(file: &ProtocolFile, opts: RunOptions) -> Report {
    let start = Instant::now();
    let mut report = Report {
        schema: REPORT_SCHEMA,
        verdict: Verdict::ProvenEquivalent,
        constraint_count: 0,
        entry_count: 0,
        timing: Timing::default(),
        constraints: None,
    };
    let typing = Instant::now();
    let typed = type_file(file, opts);
    report.timing.typing_ms = ms(typing);
    let (checked, verdict) = match typed {
        Err(u) => (None, Verdict::Unknown(u)),
        Ok(Typed::Plain(c)) => {
            let t = Instant::now();
            let v = check_const_diag(&c);
            report.timing.consistency_ms = ms(t);
            (
                Some(c),
                v.map_or_else(
                    |e| Verdict::Unknown(e.into()),
                    |_| Verdict::ProvenEquivalent,
                ),
            )
        }
        Ok(Typed::Replicated(c, c_seq)) => {
            let t = Instant::now();
            let v = check_replicated_diag(&c, &c_seq);
            report.timing.consistency_ms = ms(t);
            let set = replicated_set(&c, &c_seq);
            (
                Some(set),
                v.map_or_else(
                    |e| Verdict::Unknown(e.into()),
                    |_| Verdict::ProvenEquivalent,
                ),
            )
        }
    };
    if let Some(c) = &checked {
        report.constraint_count = c.stored_constraint_count();
        report.entry_count = c.entry_count();
        if opts.dump_constraints {
            report.constraints = Some(c.dump(DUMP_LIMIT));
        }
    }
    report.verdict = verdict;
    report.timing.total_ms = ms(start);
    report
}

/// Constraint sets produced by typing a file.
#[derive(Clone, Debug)]
pub enum Typed {
    /// The set for a replication-free process.
    Plain(ConstraintSet),
    /// The sets for the replicated body and the sequential part.
    Replicated(ConstraintSet, ConstraintSet),
}

/// Types the file's process according to its query.
pub fn type_file(file: &ProtocolFile, opts: RunOptions) -> Result<Typed, Unknown> {
    let topts = TypingOptions {
        parallel: opts.parallel,
    };
    match file.query {
        Query::Equivalence => {
            if file.process.has_replication() {
                return Err(Unknown::OutOfFragment(
                    "replication requires `query equivalence replicated`".into(),
                ));
            }
            Ok(Typed::Plain(check_process_with(
                &file.key_env(),
                &file.process,
                topts,
            )?))
        }
        Query::Replicated => {
            let split = split_replication(&file.process)
                .map_err(|e| Unknown::OutOfFragment(e.to_string()))?;
            let mut env = file.key_env();
            for (a, t) in prefix_env(&split.prefix).iter() {
                env.insert(a.clone(), t.clone());
            }
            let (c, c_seq) = type_replicated(&env, &split.replicated, &split.sequential, topts)?;
            Ok(Typed::Replicated(c, c_seq))
        }
    }
}
