//! The message algebra: atoms, terms, substitutions, frames and evaluation.
//!
//! Terms are immutable trees whose leaves are kind-tagged [`Atom`]s and whose
//! inner nodes are constructor or destructor symbols ([`Sym`]). Evaluation
//! applies the destructor table and reports failure as [`Failure`], which is a
//! value rather than an error.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

/// The sort of an atom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AtomKind {
    /// A nonce created by a process (`new n`).
    BoundNonce,
    /// A nonce available to the attacker.
    FreeNonce,
    /// A long-term key.
    Key,
    /// A process variable bound by an input or a `let`.
    Var,
    /// A frame variable `ax_n`; its ordinal is stored in the index slot.
    FrameVar,
    /// A public constant.
    Const,
}

/// A kind-tagged name, optionally indexed by a session number.
///
/// The `fresh` counter distinguishes binders that share a user-facing name;
/// it never appears in printed output.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Atom {
    kind: AtomKind,
    name: Arc<str>,
    index: Option<u32>,
    fresh: u32,
}

impl Atom {
    /// Builds an atom of the given kind with no index.
    pub fn new(kind: AtomKind, name: &str) -> Self {
        Atom {
            kind,
            name: Arc::from(name),
            index: None,
            fresh: 0,
        }
    }

    /// A bound nonce.
    pub fn nonce(name: &str) -> Self {
        Self::new(AtomKind::BoundNonce, name)
    }

    /// An attacker nonce.
    pub fn free(name: &str) -> Self {
        Self::new(AtomKind::FreeNonce, name)
    }

    /// A key.
    pub fn key(name: &str) -> Self {
        Self::new(AtomKind::Key, name)
    }

    /// A process variable.
    pub fn var(name: &str) -> Self {
        Self::new(AtomKind::Var, name)
    }

    /// A public constant.
    pub fn constant(name: &str) -> Self {
        Self::new(AtomKind::Const, name)
    }

    /// The frame variable `ax_ordinal` (ordinals start at 1).
    pub fn frame(ordinal: u32) -> Self {
        Atom {
            kind: AtomKind::FrameVar,
            name: Arc::from("ax"),
            index: Some(ordinal),
            fresh: 0,
        }
    }

    /// The sort of this atom.
    pub fn kind(&self) -> AtomKind {
        self.kind
    }

    /// The user-facing base name.
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The session index (or the ordinal of a frame variable).
    pub fn index(&self) -> Option<u32> {
        self.index
    }

    /// The freshening counter (0 for the first binder of a name).
    pub fn fresh(&self) -> u32 {
        self.fresh
    }

    /// This atom with the given session index.
    pub fn with_index(&self, index: Option<u32>) -> Self {
        Atom {
            index,
            ..self.clone()
        }
    }

    /// This atom with the given freshening counter.
    pub fn with_fresh(&self, fresh: u32) -> Self {
        Atom {
            fresh,
            ..self.clone()
        }
    }

    /// The same atom without any session index.
    pub fn base(&self) -> Self {
        self.with_index(None)
    }

    /// True for bound and free nonces.
    pub fn is_nonce(&self) -> bool {
        matches!(self.kind, AtomKind::BoundNonce | AtomKind::FreeNonce)
    }

    /// True for process variables.
    pub fn is_var(&self) -> bool {
        self.kind == AtomKind::Var
    }

    /// True for keys.
    pub fn is_key(&self) -> bool {
        self.kind == AtomKind::Key
    }

    /// True for constants.
    pub fn is_const(&self) -> bool {
        self.kind == AtomKind::Const
    }

    /// True for frame variables.
    pub fn is_frame_var(&self) -> bool {
        self.kind == AtomKind::FrameVar
    }

    /// Ordinal of a frame variable.
    pub fn ordinal(&self) -> Option<u32> {
        if self.is_frame_var() {
            self.index
        } else {
            None
        }
    }

    /// True when the atom may carry a session index.
    pub fn is_indexable(&self) -> bool {
        matches!(self.kind, AtomKind::BoundNonce | AtomKind::Var)
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.kind, self.index) {
            (AtomKind::FrameVar, Some(n)) => write!(f, "ax_{n}"),
            (_, Some(i)) => write!(f, "{}#{}", self.name, i),
            (_, None) => write!(f, "{}", self.name),
        }
    }
}

/// Function symbols: constructors followed by destructors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sym {
    Pk,
    Vk,
    Enc,
    Aenc,
    Sign,
    Pair,
    H,
    Dec,
    Adec,
    CheckSign,
    Fst,
    Snd,
}

impl Sym {
    /// All constructor symbols.
    pub const CONSTRUCTORS: [Sym; 7] = [
        Sym::Pk,
        Sym::Vk,
        Sym::Enc,
        Sym::Aenc,
        Sym::Sign,
        Sym::Pair,
        Sym::H,
    ];
    /// All destructor symbols.
    pub const DESTRUCTORS: [Sym; 5] = [Sym::Dec, Sym::Adec, Sym::CheckSign, Sym::Fst, Sym::Snd];

    /// Number of arguments.
    pub fn arity(self) -> usize {
        match self {
            Sym::Pk | Sym::Vk | Sym::H | Sym::Fst | Sym::Snd => 1,
            _ => 2,
        }
    }

    /// True for constructor symbols.
    pub fn is_constructor(self) -> bool {
        matches!(
            self,
            Sym::Pk | Sym::Vk | Sym::Enc | Sym::Aenc | Sym::Sign | Sym::Pair | Sym::H
        )
    }

    /// Concrete syntax name (pairs print with angle brackets instead).
    pub fn name(self) -> &'static str {
        match self {
            Sym::Pk => "pk",
            Sym::Vk => "vk",
            Sym::Enc => "enc",
            Sym::Aenc => "aenc",
            Sym::Sign => "sign",
            Sym::Pair => "pair",
            Sym::H => "h",
            Sym::Dec => "dec",
            Sym::Adec => "adec",
            Sym::CheckSign => "checksign",
            Sym::Fst => "fst",
            Sym::Snd => "snd",
        }
    }

    /// Looks a symbol up by its concrete name.
    pub fn from_name(name: &str) -> Option<Sym> {
        Some(match name {
            "pk" => Sym::Pk,
            "vk" => Sym::Vk,
            "enc" => Sym::Enc,
            "aenc" => Sym::Aenc,
            "sign" => Sym::Sign,
            "pair" => Sym::Pair,
            "h" => Sym::H,
            "dec" => Sym::Dec,
            "adec" => Sym::Adec,
            "checksign" => Sym::CheckSign,
            "fst" => Sym::Fst,
            "snd" => Sym::Snd,
            _ => return None,
        })
    }
}

/// A term: an atom or a function symbol applied to arguments.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Term {
    Atom(Atom),
    App(Sym, Arc<[Term]>),
}

/// The evaluation failure `⊥`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Failure;

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "evaluation failure")
    }
}

impl From<Atom> for Term {
    fn from(a: Atom) -> Self {
        Term::Atom(a)
    }
}

impl Term {
    /// Applies `sym` to `args`.
    ///
    /// # Panics
    /// Panics when the number of arguments differs from the arity of `sym`.
    pub fn app(sym: Sym, args: Vec<Term>) -> Term {
        assert_eq!(args.len(), sym.arity(), "arity mismatch for {}", sym.name());
        Term::App(sym, Arc::from(args))
    }

    /// `pk(t)`.
    pub fn pk(t: Term) -> Term {
        Term::app(Sym::Pk, vec![t])
    }

    /// `vk(t)`.
    pub fn vk(t: Term) -> Term {
        Term::app(Sym::Vk, vec![t])
    }

    /// `enc(t, k)`.
    pub fn enc(t: Term, k: Term) -> Term {
        Term::app(Sym::Enc, vec![t, k])
    }

    /// `aenc(t, k)`.
    pub fn aenc(t: Term, k: Term) -> Term {
        Term::app(Sym::Aenc, vec![t, k])
    }

    /// `sign(t, k)`.
    pub fn sign(t: Term, k: Term) -> Term {
        Term::app(Sym::Sign, vec![t, k])
    }

    /// `<a, b>`.
    pub fn pair(a: Term, b: Term) -> Term {
        Term::app(Sym::Pair, vec![a, b])
    }

    /// `h(t)`.
    pub fn h(t: Term) -> Term {
        Term::app(Sym::H, vec![t])
    }

    /// `dec(t, k)`.
    pub fn dec(t: Term, k: Term) -> Term {
        Term::app(Sym::Dec, vec![t, k])
    }

    /// `adec(t, k)`.
    pub fn adec(t: Term, k: Term) -> Term {
        Term::app(Sym::Adec, vec![t, k])
    }

    /// `checksign(t, k)`.
    pub fn checksign(t: Term, k: Term) -> Term {
        Term::app(Sym::CheckSign, vec![t, k])
    }

    /// `fst(t)`.
    pub fn fst(t: Term) -> Term {
        Term::app(Sym::Fst, vec![t])
    }

    /// `snd(t)`.
    pub fn snd(t: Term) -> Term {
        Term::app(Sym::Snd, vec![t])
    }

    /// Right-nested tuple `<t1, <t2, ... tn>>`.
    ///
    /// # Panics
    /// Panics on an empty slice.
    pub fn tuple(items: Vec<Term>) -> Term {
        let mut it = items.into_iter().rev();
        let mut acc = it.next().expect("empty tuple");
        for t in it {
            acc = Term::pair(t, acc);
        }
        acc
    }

    /// The atom at the root, if any.
    pub fn as_atom(&self) -> Option<&Atom> {
        match self {
            Term::Atom(a) => Some(a),
            Term::App(..) => None,
        }
    }

    /// The root symbol and arguments, if any.
    pub fn as_app(&self) -> Option<(Sym, &[Term])> {
        match self {
            Term::App(s, args) => Some((*s, args)),
            Term::Atom(_) => None,
        }
    }

    /// The root symbol, if any.
    pub fn head(&self) -> Option<Sym> {
        self.as_app().map(|(s, _)| s)
    }

    /// True when the root is a variable.
    pub fn is_var(&self) -> bool {
        matches!(self, Term::Atom(a) if a.is_var())
    }

    /// True when the root is a key atom.
    pub fn is_key(&self) -> bool {
        matches!(self, Term::Atom(a) if a.is_key())
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        match self {
            Term::Atom(_) => 1,
            Term::App(_, args) => 1 + args.iter().map(Term::size).sum::<usize>(),
        }
    }

    /// Nesting depth of function symbols (atoms have depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Term::Atom(_) => 0,
            Term::App(_, args) => 1 + args.iter().map(Term::depth).max().unwrap_or(0),
        }
    }

    /// Visits every atom occurrence.
    pub fn for_each_atom(&self, f: &mut impl FnMut(&Atom)) {
        match self {
            Term::Atom(a) => f(a),
            Term::App(_, args) => args.iter().for_each(|t| t.for_each_atom(f)),
        }
    }

    /// The set of atoms occurring in the term.
    pub fn atoms(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            out.insert(a.clone());
        });
        out
    }

    /// The set of process variables occurring in the term.
    pub fn vars(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.for_each_atom(&mut |a| {
            if a.is_var() {
                out.insert(a.clone());
            }
        });
        out
    }

    /// True when some atom satisfies `pred`.
    pub fn any_atom(&self, pred: &impl Fn(&Atom) -> bool) -> bool {
        match self {
            Term::Atom(a) => pred(a),
            Term::App(_, args) => args.iter().any(|t| t.any_atom(pred)),
        }
    }

    /// True when the term contains no process or frame variable.
    pub fn is_ground(&self) -> bool {
        !self.any_atom(&|a| a.is_var() || a.is_frame_var())
    }

    /// True when `x` occurs in the term.
    pub fn contains(&self, x: &Atom) -> bool {
        self.any_atom(&|a| a == x)
    }

    /// True when the term contains a destructor symbol.
    pub fn has_destructor(&self) -> bool {
        match self {
            Term::Atom(_) => false,
            Term::App(s, args) => !s.is_constructor() || args.iter().any(Term::has_destructor),
        }
    }

    /// Rebuilds the term by mapping every atom to a term.
    pub fn map_atoms(&self, f: &mut impl FnMut(&Atom) -> Term) -> Term {
        match self {
            Term::Atom(a) => f(a),
            Term::App(s, args) => {
                let new: Vec<Term> = args.iter().map(|t| t.map_atoms(f)).collect();
                Term::App(*s, Arc::from(new))
            }
        }
    }

    /// The subterms of the term, including itself.
    pub fn subterms(&self) -> Vec<Term> {
        let mut out = Vec::new();
        fn go(t: &Term, out: &mut Vec<Term>) {
            out.push(t.clone());
            if let Term::App(_, args) = t {
                args.iter().for_each(|a| go(a, out));
            }
        }
        go(self, &mut out);
        out
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Atom(a) => write!(f, "{a}"),
            Term::App(Sym::Pair, args) => write!(f, "<{},{}>", args[0], args[1]),
            Term::App(s, args) => {
                write!(f, "{}(", s.name())?;
                for (i, a) in args.iter().enumerate() {
                    if i > 0 {
                        write!(f, ",")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

/// Evaluates `t`, returning `t↓` or [`Failure`].
pub fn evaluate(t: &Term) -> Result<Term, Failure> {
    let (sym, args) = match t {
        Term::Atom(_) => return Ok(t.clone()),
        Term::App(s, args) => (*s, args),
    };
    let vals: Vec<Term> = args.iter().map(evaluate).collect::<Result<_, _>>()?;
    reduce(sym, vals)
}

/// Applies `sym` to already evaluated arguments.
pub fn reduce(sym: Sym, vals: Vec<Term>) -> Result<Term, Failure> {
    match sym {
        Sym::Pk | Sym::Vk => {
            if vals[0].is_key() {
                Ok(Term::app(sym, vals))
            } else {
                Err(Failure)
            }
        }
        Sym::H | Sym::Pair => Ok(Term::app(sym, vals)),
        Sym::Enc | Sym::Sign => {
            if vals[1].is_key() {
                Ok(Term::app(sym, vals))
            } else {
                Err(Failure)
            }
        }
        Sym::Aenc => match vals[1].as_app() {
            Some((Sym::Pk, k)) if k[0].is_key() => Ok(Term::app(sym, vals)),
            _ => Err(Failure),
        },
        Sym::Fst | Sym::Snd => match vals[0].as_app() {
            Some((Sym::Pair, p)) => Ok(p[usize::from(sym == Sym::Snd)].clone()),
            _ => Err(Failure),
        },
        Sym::Dec => match vals[0].as_app() {
            Some((Sym::Enc, c)) if c[1] == vals[1] => Ok(c[0].clone()),
            _ => Err(Failure),
        },
        Sym::Adec => match vals[0].as_app() {
            Some((Sym::Aenc, c)) => match c[1].as_app() {
                Some((Sym::Pk, k)) if k[0] == vals[1] => Ok(c[0].clone()),
                _ => Err(Failure),
            },
            _ => Err(Failure),
        },
        Sym::CheckSign => match (vals[0].as_app(), vals[1].as_app()) {
            (Some((Sym::Sign, s)), Some((Sym::Vk, k))) if s[1] == k[0] => Ok(s[0].clone()),
            _ => Err(Failure),
        },
    }
}

/// True when `t` is a message: built from constructors only, with an atomic
/// key in every key position.
pub fn is_message(t: &Term) -> bool {
    match t {
        Term::Atom(_) => true,
        Term::App(s, args) => match s {
            Sym::Pk | Sym::Vk => args[0].is_key(),
            Sym::Enc | Sym::Sign => args[1].is_key() && is_message(&args[0]),
            Sym::Aenc => {
                matches!(args[1].as_app(), Some((Sym::Pk, k)) if k[0].is_key())
                    && is_message(&args[0])
            }
            Sym::Pair | Sym::H => args.iter().all(is_message),
            _ => false,
        },
    }
}

/// A finite mapping from variables (process or frame) to terms.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Subst {
    map: IndexMap<Atom, Term>,
}

impl Subst {
    /// The empty substitution.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a substitution from pairs; later bindings win.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Atom, Term)>) -> Self {
        Subst {
            map: pairs.into_iter().collect(),
        }
    }

    /// Binds `x` to `t`.
    pub fn insert(&mut self, x: Atom, t: Term) {
        self.map.insert(x, t);
    }

    /// The image of `x`, if bound.
    pub fn get(&self, x: &Atom) -> Option<&Term> {
        self.map.get(x)
    }

    /// True when `x` is bound.
    pub fn contains(&self, x: &Atom) -> bool {
        self.map.contains_key(x)
    }

    /// Removes the binding of `x`.
    pub fn remove(&mut self, x: &Atom) -> Option<Term> {
        self.map.shift_remove(x)
    }

    /// Number of bindings.
    pub fn len(&self) -> usize {
        self.map.len()
    }

    /// True when there are no bindings.
    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Iterates over bindings in insertion order.
    pub fn iter(&self) -> impl Iterator<Item = (&Atom, &Term)> {
        self.map.iter()
    }

    /// The domain of the substitution.
    pub fn domain(&self) -> impl Iterator<Item = &Atom> {
        self.map.keys()
    }

    /// True when every image is ground.
    pub fn is_ground(&self) -> bool {
        self.map.values().all(Term::is_ground)
    }

    /// Simultaneous application to `t`.
    pub fn apply(&self, t: &Term) -> Term {
        if self.map.is_empty() {
            return t.clone();
        }
        t.map_atoms(&mut |a| {
            self.map
                .get(a)
                .cloned()
                .unwrap_or_else(|| Term::Atom(a.clone()))
        })
    }
}

impl fmt::Display for Subst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (x, t)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}/{x}")?;
        }
        write!(f, "}}")
    }
}

/// Applies `sigma` to `t`.
pub fn apply(sigma: &Subst, t: &Term) -> Term {
    sigma.apply(t)
}

/// Swaps session indices `i` and `j` on every indexable atom of `t`.
pub fn exchange_indices(t: &Term, i: u32, j: u32) -> Term {
    if i == j {
        return t.clone();
    }
    t.map_atoms(&mut |a| Term::Atom(exchange_atom(a, i, j)))
}

/// Swaps session indices `i` and `j` on a single atom.
pub fn exchange_atom(a: &Atom, i: u32, j: u32) -> Atom {
    if !a.is_indexable() {
        return a.clone();
    }
    match a.index() {
        Some(k) if k == i => a.with_index(Some(j)),
        Some(k) if k == j => a.with_index(Some(i)),
        _ => a.clone(),
    }
}

/// A frame `new E. {M1/ax_1, ..., Mn/ax_n}`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct Frame {
    /// The restricted names `E`.
    pub restricted: BTreeSet<Atom>,
    /// Images of `ax_1 .. ax_n`, in order.
    pub terms: Vec<Term>,
}

impl Frame {
    /// A frame with no restricted names.
    pub fn from_terms(terms: Vec<Term>) -> Self {
        Frame {
            restricted: BTreeSet::new(),
            terms,
        }
    }

    /// Number of frame variables.
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    /// True when the frame is empty.
    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Appends a term and returns its frame variable.
    pub fn push(&mut self, t: Term) -> Atom {
        self.terms.push(t);
        Atom::frame(self.terms.len() as u32)
    }

    /// The bindings as a substitution over frame variables.
    pub fn as_subst(&self) -> Subst {
        Subst::from_pairs(
            self.terms
                .iter()
                .enumerate()
                .map(|(i, t)| (Atom::frame(i as u32 + 1), t.clone())),
        )
    }

    /// Replaces the frame variables of `recipe` by their images.
    pub fn instantiate(&self, recipe: &Term) -> Term {
        recipe.map_atoms(&mut |a| match a.ordinal() {
            Some(n) if (n as usize) >= 1 && (n as usize) <= self.terms.len() => {
                self.terms[n as usize - 1].clone()
            }
            _ => Term::Atom(a.clone()),
        })
    }
}

impl fmt::Display for Frame {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{t}/ax_{}", i + 1)?;
        }
        write!(f, "}}")
    }
}
