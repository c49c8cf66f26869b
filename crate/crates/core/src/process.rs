//! Processes and bi-processes: the AST, structural pairing, session renaming
//! and the replication split.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::term::{Atom, Sym, Term};
use crate::types::{Mult, NonceType, Type, TypeEnv};

/// A destructor application `d(y)` or `d(y, key)` as it appears in a `let`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct DestApp {
    /// One of `dec`, `adec`, `checksign`, `fst`, `snd`.
    pub sym: Sym,
    /// The variable the destructor is applied to.
    pub arg: Atom,
    /// The key for `dec` and `adec`, or the signing key whose verification
    /// key is used by `checksign`.
    pub key: Option<Atom>,
}

impl DestApp {
    /// The destructor application as a term.
    pub fn to_term(&self) -> Term {
        let y = Term::Atom(self.arg.clone());
        match (self.sym, &self.key) {
            (Sym::CheckSign, Some(k)) => Term::checksign(y, Term::vk(k.clone().into())),
            (s, Some(k)) => Term::app(s, vec![y, k.clone().into()]),
            (s, None) => Term::app(s, vec![y]),
        }
    }

    fn renamed(&self, f: &impl Fn(&Atom) -> Atom) -> DestApp {
        DestApp {
            sym: self.sym,
            arg: f(&self.arg),
            key: self.key.clone(),
        }
    }
}

impl fmt::Display for DestApp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_term())
    }
}

/// A process whose messages have type `M`.
///
/// [`Process`] instantiates `M` with a single term; [`BiProcess`] with a pair
/// of terms, one for each side, so that all control structure is shared.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Proc<M> {
    Zero,
    /// `new n : τ . P`; the bound atom is the annotation's atom.
    New(NonceType, Box<Proc<M>>),
    Out(M, Box<Proc<M>>),
    In(Atom, Box<Proc<M>>),
    Par(Box<Proc<M>>, Box<Proc<M>>),
    /// `let x = d(y) in P else Q`.
    Let(Atom, DestApp, Box<Proc<M>>, Box<Proc<M>>),
    /// `if M = N then P else Q`.
    If(M, M, Box<Proc<M>>, Box<Proc<M>>),
    Repl(Box<Proc<M>>),
}

/// A single process.
pub type Process = Proc<Term>;
/// A bi-process: left and right terms over shared structure.
pub type BiProcess = Proc<(Term, Term)>;

impl<M: Clone> Proc<M> {
    /// `new n : τ . p`.
    pub fn new_nonce(nt: NonceType, p: Proc<M>) -> Self {
        Proc::New(nt, Box::new(p))
    }

    /// `out(m) . p`.
    pub fn out(m: M, p: Proc<M>) -> Self {
        Proc::Out(m, Box::new(p))
    }

    /// `in(x) . p`.
    pub fn input(x: Atom, p: Proc<M>) -> Self {
        Proc::In(x, Box::new(p))
    }

    /// `p | q`.
    pub fn par(p: Proc<M>, q: Proc<M>) -> Self {
        Proc::Par(Box::new(p), Box::new(q))
    }

    /// `let x = d in p else q`.
    pub fn let_in(x: Atom, d: DestApp, p: Proc<M>, q: Proc<M>) -> Self {
        Proc::Let(x, d, Box::new(p), Box::new(q))
    }

    /// `if a = b then p else q`.
    pub fn if_eq(a: M, b: M, p: Proc<M>, q: Proc<M>) -> Self {
        Proc::If(a, b, Box::new(p), Box::new(q))
    }

    /// `!p`.
    pub fn repl(p: Proc<M>) -> Self {
        Proc::Repl(Box::new(p))
    }

    /// Maps every message, keeping the structure.
    pub fn map_messages<N: Clone>(&self, f: &impl Fn(&M) -> N) -> Proc<N> {
        self.map_all(f, &|a: &Atom| a.clone(), &|nt: &NonceType| nt.clone())
    }

    pub(crate) fn map_all<N: Clone>(
        &self,
        f: &impl Fn(&M) -> N,
        binder: &impl Fn(&Atom) -> Atom,
        nonce: &impl Fn(&NonceType) -> NonceType,
    ) -> Proc<N> {
        let rec = |p: &Proc<M>| Box::new(p.map_all(f, binder, nonce));
        match self {
            Proc::Zero => Proc::Zero,
            Proc::New(nt, p) => Proc::New(nonce(nt), rec(p)),
            Proc::Out(m, p) => Proc::Out(f(m), rec(p)),
            Proc::In(x, p) => Proc::In(binder(x), rec(p)),
            Proc::Par(p, q) => Proc::Par(rec(p), rec(q)),
            Proc::Let(x, d, p, q) => Proc::Let(binder(x), d.renamed(binder), rec(p), rec(q)),
            Proc::If(a, b, p, q) => Proc::If(f(a), f(b), rec(p), rec(q)),
            Proc::Repl(p) => Proc::Repl(rec(p)),
        }
    }

    /// True when the process contains a replication.
    pub fn has_replication(&self) -> bool {
        match self {
            Proc::Zero => false,
            Proc::Repl(_) => true,
            Proc::New(_, p) | Proc::Out(_, p) | Proc::In(_, p) => p.has_replication(),
            Proc::Par(p, q) | Proc::Let(_, _, p, q) | Proc::If(_, _, p, q) => {
                p.has_replication() || q.has_replication()
            }
        }
    }

    /// The variables bound by inputs and lets.
    pub fn bound_vars(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.visit(&mut |p| match p {
            Proc::In(x, _) | Proc::Let(x, ..) => {
                out.insert(x.clone());
            }
            _ => {}
        });
        out
    }

    /// The nonce annotations of all `new` binders, in pre-order.
    pub fn nonce_binders(&self) -> Vec<NonceType> {
        let mut out = Vec::new();
        self.visit(&mut |p| {
            if let Proc::New(nt, _) = p {
                out.push(nt.clone());
            }
        });
        out
    }

    /// Visits every sub-process in pre-order.
    pub fn visit(&self, f: &mut impl FnMut(&Proc<M>)) {
        f(self);
        match self {
            Proc::Zero => {}
            Proc::New(_, p) | Proc::Out(_, p) | Proc::In(_, p) | Proc::Repl(p) => p.visit(f),
            Proc::Par(p, q) | Proc::Let(_, _, p, q) | Proc::If(_, _, p, q) => {
                p.visit(f);
                q.visit(f);
            }
        }
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |_| n += 1);
        n
    }
}

impl BiProcess {
    /// The left process.
    pub fn erase_left(&self) -> Process {
        self.map_messages(&|(l, _)| l.clone())
    }

    /// The right process.
    pub fn erase_right(&self) -> Process {
        self.map_messages(&|(_, r)| r.clone())
    }

    /// Renames the bi-process for session `i`.
    ///
    /// Nonces bound with infinite multiplicity, and nonces typed with
    /// infinite multiplicity in `env`, get index `i` and multiplicity one;
    /// every variable `x` becomes `x#i`.
    pub fn rename_session(&self, i: u32, env: &TypeEnv) -> BiProcess {
        let mut infinite: BTreeSet<Atom> = self
            .nonce_binders()
            .into_iter()
            .filter(|nt| nt.mult == Mult::Inf)
            .map(|nt| nt.atom)
            .collect();
        for (a, _) in env.iter() {
            if env.nonce_type(a).is_some_and(|nt| nt.mult == Mult::Inf) {
                infinite.insert(a.clone());
            }
        }
        let atom = |a: &Atom| {
            if a.is_var() || infinite.contains(a) {
                a.with_index(Some(i))
            } else {
                a.clone()
            }
        };
        let term = |t: &Term| t.map_atoms(&mut |a| Term::Atom(atom(a)));
        self.map_all(&|(l, r)| (term(l), term(r)), &atom, &|nt: &NonceType| {
            if nt.mult == Mult::Inf {
                nt.for_session(i)
            } else {
                nt.clone()
            }
        })
    }
}

/// Shape mismatch while pairing two processes.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("processes differ in shape at {position}: {detail}")]
pub struct ShapeMismatch {
    /// Path from the root to the first divergent node.
    pub position: String,
    /// What differs.
    pub detail: String,
}

/// Zips a left and a right process into a bi-process.
pub fn pair(left: &Process, right: &Process) -> Result<BiProcess, ShapeMismatch> {
    pair_at(left, right, "root")
}

fn pair_at(left: &Process, right: &Process, pos: &str) -> Result<BiProcess, ShapeMismatch> {
    let err = |detail: String| ShapeMismatch {
        position: pos.to_string(),
        detail,
    };
    let sub = |a: &Process, b: &Process, step: &str| {
        pair_at(a, b, &format!("{pos}.{step}")).map(Box::new)
    };
    Ok(match (left, right) {
        (Proc::Zero, Proc::Zero) => Proc::Zero,
        (Proc::New(a, p), Proc::New(b, q)) => {
            if a != b {
                return Err(err(format!("binder {} vs {}", a, b)));
            }
            Proc::New(a.clone(), sub(p, q, "new")?)
        }
        (Proc::Out(m, p), Proc::Out(n, q)) => Proc::Out((m.clone(), n.clone()), sub(p, q, "out")?),
        (Proc::In(x, p), Proc::In(y, q)) => {
            if x != y {
                return Err(err(format!("input variable {x} vs {y}")));
            }
            Proc::In(x.clone(), sub(p, q, "in")?)
        }
        (Proc::Par(p1, p2), Proc::Par(q1, q2)) => {
            Proc::Par(sub(p1, q1, "par0")?, sub(p2, q2, "par1")?)
        }
        (Proc::Let(x, d, p1, p2), Proc::Let(y, e, q1, q2)) => {
            if x != y || d != e {
                return Err(err(format!("let {x} = {d} vs let {y} = {e}")));
            }
            Proc::Let(
                x.clone(),
                d.clone(),
                sub(p1, q1, "then")?,
                sub(p2, q2, "else")?,
            )
        }
        (Proc::If(a, b, p1, p2), Proc::If(c, d, q1, q2)) => Proc::If(
            (a.clone(), c.clone()),
            (b.clone(), d.clone()),
            sub(p1, q1, "then")?,
            sub(p2, q2, "else")?,
        ),
        (Proc::Repl(p), Proc::Repl(q)) => Proc::Repl(sub(p, q, "repl")?),
        (l, r) => return Err(err(format!("{} vs {}", head_name(l), head_name(r)))),
    })
}

fn head_name<M>(p: &Proc<M>) -> &'static str {
    match p {
        Proc::Zero => "0",
        Proc::New(..) => "new",
        Proc::Out(..) => "out",
        Proc::In(..) => "in",
        Proc::Par(..) => "|",
        Proc::Let(..) => "let",
        Proc::If(..) => "if",
        Proc::Repl(..) => "!",
    }
}

/// The result of splitting `new n̄.((!P) | P')`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReplicationSplit {
    /// The shared `new` prefix.
    pub prefix: Vec<NonceType>,
    /// The body of the replication (`Zero` when there is none).
    pub replicated: BiProcess,
    /// The unreplicated part.
    pub sequential: BiProcess,
}

/// The bi-process is outside the supported replication fragment.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("unsupported process shape: {0}")]
pub struct UnsupportedShape(pub String);

/// Splits a bi-process into its replicated body and its sequential part.
pub fn split_replication(p: &BiProcess) -> Result<ReplicationSplit, UnsupportedShape> {
    let mut prefix = Vec::new();
    let mut cur = p;
    while let Proc::New(nt, q) = cur {
        prefix.push(nt.clone());
        cur = q;
    }
    let mut components = Vec::new();
    flatten_par(cur, &mut components);
    let mut replicated = None;
    let mut sequential: Vec<BiProcess> = Vec::new();
    for c in components {
        match c {
            Proc::Repl(body) => {
                if replicated.is_some() {
                    return Err(UnsupportedShape(
                        "more than one replicated component".into(),
                    ));
                }
                replicated = Some((**body).clone());
            }
            other => sequential.push(other.clone()),
        }
    }
    let replicated = replicated.unwrap_or(Proc::Zero);
    if replicated.has_replication() {
        return Err(UnsupportedShape("nested replication".into()));
    }
    if sequential.iter().any(Proc::has_replication) {
        return Err(UnsupportedShape("replication below a prefix".into()));
    }
    if let Some(nt) = prefix.iter().find(|nt| nt.mult != Mult::One) {
        return Err(UnsupportedShape(format!(
            "shared nonce {} must have multiplicity 1",
            nt.atom
        )));
    }
    if let Some(nt) = replicated
        .nonce_binders()
        .into_iter()
        .find(|nt| nt.mult != Mult::Inf)
    {
        return Err(UnsupportedShape(format!(
            "replicated nonce {} must have multiplicity inf",
            nt.atom
        )));
    }
    let sequential = sequential
        .into_iter()
        .reduce(Proc::par)
        .unwrap_or(Proc::Zero);
    if let Some(nt) = sequential
        .nonce_binders()
        .into_iter()
        .find(|nt| nt.mult != Mult::One)
    {
        return Err(UnsupportedShape(format!(
            "unreplicated nonce {} must have multiplicity 1",
            nt.atom
        )));
    }
    if !replicated
        .bound_vars()
        .is_disjoint(&sequential.bound_vars())
    {
        return Err(UnsupportedShape(
            "replicated and unreplicated parts share variables".into(),
        ));
    }
    Ok(ReplicationSplit {
        prefix,
        replicated,
        sequential,
    })
}

fn flatten_par<'a, M>(p: &'a Proc<M>, out: &mut Vec<&'a Proc<M>>) {
    match p {
        Proc::Par(a, b) => {
            flatten_par(a, out);
            flatten_par(b, out);
        }
        other => out.push(other),
    }
}

/// Environment binding every nonce of a `new` prefix to its own type.
pub fn prefix_env(prefix: &[NonceType]) -> TypeEnv {
    TypeEnv::from_pairs(
        prefix
            .iter()
            .map(|nt| (nt.atom.clone(), Type::nonce(nt.clone()))),
    )
}

/// Message printing for the concrete syntax.
pub trait MessageSyntax {
    /// Writes the message.
    fn write_message(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result;
}

impl MessageSyntax for Term {
    fn write_message(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl MessageSyntax for (Term, Term) {
    fn write_message(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0 == self.1 {
            write!(f, "{}", self.0)
        } else {
            write!(f, "choice[{},{}]", self.0, self.1)
        }
    }
}

struct Msg<'a, M>(&'a M);

impl<M: MessageSyntax> fmt::Display for Msg<'_, M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.write_message(f)
    }
}

impl<M: MessageSyntax> fmt::Display for Proc<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Proc::Zero => write!(f, "0"),
            Proc::New(nt, p) => write!(f, "new {} : {}^{} . {}", nt.atom, nt.label, nt.mult, p),
            Proc::Out(m, p) => write!(f, "out({}) . {}", Msg(m), p),
            Proc::In(x, p) => write!(f, "in({x}) . {p}"),
            Proc::Par(p, q) => write!(f, "({p} | {q})"),
            Proc::Let(x, d, p, q) => write!(f, "let {x} = {d} in ({p}) else ({q})"),
            Proc::If(a, b, p, q) => {
                write!(f, "if {} = {} then ({}) else ({})", Msg(a), Msg(b), p, q)
            }
            Proc::Repl(p) => write!(f, "!({p})"),
        }
    }
}
