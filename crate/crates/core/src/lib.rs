//! Bi-process type checking and constraint consistency for proving trace
//! equivalence of cryptographic protocols.

pub mod bityper;
pub mod consistency;
pub mod constraints;
pub mod oracle;
pub mod parser;
pub mod pipeline;
pub mod process;
pub mod term;
pub mod types;

pub use bityper::{
    check_process, check_process_with, check_term, refinements, type_destructor, type_replicated,
    TypeFailure, TypingOptions,
};
pub use consistency::{
    check_const, check_const_diag, check_replicated, check_replicated_diag, mgu, ConstFailure,
};
pub use constraints::{Constraint, ConstraintEntry, ConstraintSet, Constraints};
pub use oracle::{
    check_file_bounded, parse_recipe, parse_trace, replay, static_equiv, trace_equiv_bounded,
    Action, AttackTrace, Bounds, Direction, OracleInput, OracleReport, OracleVerdict,
    ReplayOutcome, StaticVerdict, Test,
};
pub use parser::{parse, ParseError, ProtocolFile, Query};
pub use pipeline::{
    check_file, run, type_file, Report, RunOptions, Timing, Typed, Unknown, Verdict, REPORT_SCHEMA,
};
pub use process::{
    pair, split_replication, BiProcess, DestApp, Proc, Process, ReplicationSplit, ShapeMismatch,
    UnsupportedShape,
};
pub use term::{
    apply, evaluate, exchange_indices, is_message, Atom, AtomKind, Failure, Frame, Subst, Sym, Term,
};
pub use types::{
    branches, expand_env, expand_type, rename_env, subtype, well_formed, Label, Mult, NonceType,
    Type, TypeEnv,
};
