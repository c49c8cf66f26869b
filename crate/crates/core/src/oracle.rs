//! A bounded trace-equivalence oracle.
//!
//! The oracle explores the traces of one side up to a number of visible
//! actions and looks for a matching trace of the other side with a
//! statically equivalent frame. It is a refutation tool: an attack it reports
//! is a genuine distinguishing trace, while the absence of attacks only holds
//! within the bounds.
//!
//! Static equivalence is decided by saturating the attacker knowledge of both
//! frames in lockstep: destructors are applied to every known pair, and
//! constructors are applied only when the result is a subterm of a frame.
//! Two recipes that agree on one side and disagree on the other, or a recipe
//! that fails on exactly one side, distinguish the frames.
//!
//! The trace search uses eager internal reduction, unfolds each replication
//! into a bounded number of renamed copies, and draws input recipes from the
//! way the receiving process destructures its input. Sleep sets prune
//! interleavings of actions by different parallel components.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::constraints::attacker_knowledge;
use crate::parser::ProtocolFile;
use crate::process::{DestApp, Proc, Process};
use crate::term::{evaluate, reduce, Atom, Failure, Frame, Subst, Sym, Term};
use crate::types::NonceType;

/// Largest number of input recipes tried for a single input.
const MAX_RECIPES: usize = 32;
/// Largest number of recipes kept for each part of a pair pattern.
const MAX_PAIR_PART: usize = 6;

/// Exploration bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Bounds {
    /// Visible actions per trace.
    pub trace_depth: usize,
    /// Nesting depth of attacker recipes.
    pub recipe_depth: usize,
    /// Copies made of each replication.
    pub repl_bound: u32,
    /// Fresh attacker names added to the public atoms.
    pub fresh_names: usize,
}

impl Default for Bounds {
    fn default() -> Self {
        Bounds {
            trace_depth: 6,
            recipe_depth: 3,
            repl_bound: 2,
            fresh_names: 2,
        }
    }
}

/// A test telling two frames apart.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Test {
    /// The recipe evaluates on exactly one side.
    Fails(Term),
    /// The two recipes yield equal values on exactly one side.
    Equal(Term, Term),
}

impl fmt::Display for Test {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Test::Fails(r) => write!(f, "{r} evaluates on one side only"),
            Test::Equal(r, s) => write!(f, "{r} = {s} holds on one side only"),
        }
    }
}

/// Outcome of a static-equivalence check.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum StaticVerdict {
    Equivalent,
    Distinguished(Test),
}

impl StaticVerdict {
    /// True for [`StaticVerdict::Equivalent`].
    pub fn is_equivalent(&self) -> bool {
        matches!(self, StaticVerdict::Equivalent)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
enum Side {
    Left,
    Right,
}

#[derive(Clone, Debug)]
struct Item {
    recipe: Term,
    left: Term,
    right: Term,
    depth: usize,
    /// Built from public atoms and the initial knowledge only.
    public: bool,
}

fn is_public_key(t: &Term) -> bool {
    matches!(t.as_app(), Some((Sym::Pk, k)) if k[0].is_key())
}

fn is_verification_key(t: &Term) -> bool {
    matches!(t.as_app(), Some((Sym::Vk, k)) if k[0].is_key())
}

/// Saturated knowledge over a pair of frames.
#[derive(Clone, Debug, Default)]
struct Knowledge {
    items: Vec<Item>,
    by_left: HashMap<Term, usize>,
    by_right: HashMap<Term, usize>,
    /// Constructor subterms of the frames not yet known.
    pending: Vec<(Term, Side)>,
    seen: HashSet<(Term, Side)>,
    frame_len: u32,
    depth: usize,
}

impl Knowledge {
    fn new(pool: &[Term], depth: usize) -> Self {
        let mut k = Knowledge {
            depth,
            ..Knowledge::default()
        };
        for t in pool {
            let _ = k.insert(t.clone(), Ok(t.clone()), Ok(t.clone()), 0, true);
        }
        k
    }

    /// Knowledge over a frame paired with itself.
    fn diagonal(pool: &[Term], depth: usize, frame: &[Term], public: usize) -> Self {
        let mut k = Knowledge::new(pool, depth);
        for (i, t) in frame.iter().enumerate() {
            let _ = k.add_frame(t, t, i < public);
        }
        k
    }

    fn add_frame(&mut self, left: &Term, right: &Term, public: bool) -> Result<(), Test> {
        self.frame_len += 1;
        let recipe = Term::Atom(Atom::frame(self.frame_len));
        let (l, r) = (evaluate(left), evaluate(right));
        for (t, side) in [(&l, Side::Left), (&r, Side::Right)] {
            if let Ok(t) = t {
                for s in t.subterms() {
                    if s.head().is_some() && self.seen.insert((s.clone(), side)) {
                        self.pending.push((s, side));
                    }
                }
            }
        }
        let start = self.items.len();
        self.insert(recipe, l, r, 0, public)?;
        self.saturate(start)
    }

    fn insert(
        &mut self,
        recipe: Term,
        l: Result<Term, Failure>,
        r: Result<Term, Failure>,
        depth: usize,
        public: bool,
    ) -> Result<bool, Test> {
        let (l, r) = match (l, r) {
            (Err(_), Err(_)) => return Ok(false),
            (Ok(l), Ok(r)) => (l, r),
            _ => return Err(Test::Fails(recipe)),
        };
        if let Some(&i) = self.by_left.get(&l) {
            if self.items[i].right != r {
                return Err(Test::Equal(recipe, self.items[i].recipe.clone()));
            }
            return Ok(false);
        }
        if let Some(&j) = self.by_right.get(&r) {
            return Err(Test::Equal(recipe, self.items[j].recipe.clone()));
        }
        if l.is_key() != r.is_key() {
            return Err(Test::Fails(Term::pk(recipe)));
        }
        if is_public_key(&l) != is_public_key(&r) {
            return Err(Test::Fails(Term::aenc(recipe.clone(), recipe)));
        }
        let idx = self.items.len();
        self.by_left.insert(l.clone(), idx);
        self.by_right.insert(r.clone(), idx);
        self.items.push(Item {
            recipe,
            left: l,
            right: r,
            depth,
            public,
        });
        Ok(true)
    }

    fn saturate(&mut self, mut next: usize) -> Result<(), Test> {
        loop {
            while next < self.items.len() {
                self.decompose(next)?;
                next += 1;
            }
            if !self.compose()? {
                return Ok(());
            }
        }
    }

    fn apply(&mut self, sym: Sym, args: &[usize]) -> Result<(), Test> {
        let depth = 1 + args.iter().map(|&a| self.items[a].depth).max().unwrap_or(0);
        if depth > self.depth {
            return Ok(());
        }
        let recipe = Term::app(
            sym,
            args.iter().map(|&a| self.items[a].recipe.clone()).collect(),
        );
        let l = evaluate(&Term::app(
            sym,
            args.iter().map(|&a| self.items[a].left.clone()).collect(),
        ));
        let r = evaluate(&Term::app(
            sym,
            args.iter().map(|&a| self.items[a].right.clone()).collect(),
        ));
        let public = args.iter().all(|&a| self.items[a].public);
        self.insert(recipe, l, r, depth, public).map(|_| ())
    }

    fn decompose(&mut self, i: usize) -> Result<(), Test> {
        let heads = [self.items[i].left.head(), self.items[i].right.head()];
        let has = |s: Sym| heads.contains(&Some(s));
        if has(Sym::Pair) {
            self.apply(Sym::Fst, &[i])?;
            self.apply(Sym::Snd, &[i])?;
        }
        let keyish = |it: &Item| it.left.is_key() || it.right.is_key();
        let vkish = |it: &Item| is_verification_key(&it.left) || is_verification_key(&it.right);
        let heads_of = |it: &Item, s: Sym| it.left.head() == Some(s) || it.right.head() == Some(s);
        let i_key = keyish(&self.items[i]);
        let i_vk = vkish(&self.items[i]);
        let n = self.items.len();
        for j in 0..n {
            let other = self.items[j].clone();
            if has(Sym::Enc) && keyish(&other) {
                self.apply(Sym::Dec, &[i, j])?;
            }
            if has(Sym::Aenc) && keyish(&other) {
                self.apply(Sym::Adec, &[i, j])?;
            }
            if has(Sym::Sign) && vkish(&other) {
                self.apply(Sym::CheckSign, &[i, j])?;
            }
            if j != i {
                if i_key && heads_of(&other, Sym::Enc) {
                    self.apply(Sym::Dec, &[j, i])?;
                }
                if i_key && heads_of(&other, Sym::Aenc) {
                    self.apply(Sym::Adec, &[j, i])?;
                }
                if i_vk && heads_of(&other, Sym::Sign) {
                    self.apply(Sym::CheckSign, &[j, i])?;
                }
            }
        }
        Ok(())
    }

    fn lookup(&self, t: &Term, side: Side) -> Option<usize> {
        match side {
            Side::Left => self.by_left.get(t).copied(),
            Side::Right => self.by_right.get(t).copied(),
        }
    }

    /// Builds the pending frame subterms whose arguments are all known, which
    /// also compares them with any recipe already reaching the same value.
    fn compose(&mut self) -> Result<bool, Test> {
        let mut progress = false;
        let pending = std::mem::take(&mut self.pending);
        let mut keep = Vec::new();
        for (s, side) in pending {
            let Some((sym, args)) = s.as_app() else {
                continue;
            };
            let idx: Option<Vec<usize>> = args.iter().map(|a| self.lookup(a, side)).collect();
            match idx {
                Some(idx)
                    if idx.iter().map(|&a| self.items[a].depth).max().unwrap_or(0) < self.depth =>
                {
                    self.apply(sym, &idx)?;
                    progress = true;
                }
                _ => keep.push((s, side)),
            }
        }
        self.pending.extend(keep);
        Ok(progress)
    }
}

/// Decides static equivalence of two frames up to the recipe depth, given
/// the public atoms available to the attacker.
pub fn static_equiv(left: &Frame, right: &Frame, pool: &[Term], depth: usize) -> StaticVerdict {
    if left.len() != right.len() {
        let n = left.len().min(right.len()) as u32 + 1;
        return StaticVerdict::Distinguished(Test::Fails(Term::Atom(Atom::frame(n))));
    }
    let mut k = Knowledge::new(pool, depth);
    for (l, r) in left.terms.iter().zip(&right.terms) {
        if let Err(t) = k.add_frame(l, r, false) {
            return StaticVerdict::Distinguished(t);
        }
    }
    StaticVerdict::Equivalent
}

/// A visible action.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Action {
    /// An input of the value of the recipe.
    In(Term),
    /// An output bound to the frame variable with this ordinal.
    Out(u32),
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Action::In(r) => write!(f, "in({r})"),
            Action::Out(n) => write!(f, "out(ax_{n})"),
        }
    }
}

/// The side whose trace is replayed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    Left,
    Right,
}

impl Direction {
    fn other(self) -> Direction {
        match self {
            Direction::Left => Direction::Right,
            Direction::Right => Direction::Left,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Direction::Left => write!(f, "left"),
            Direction::Right => write!(f, "right"),
        }
    }
}

/// A trace of one side that no trace of the other side matches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttackTrace {
    /// The side performing the trace.
    pub side: Direction,
    pub actions: Vec<Action>,
    /// The frame reached by the trace, initial knowledge included.
    pub frame: Vec<Term>,
    /// A test separating the frame from the one reached by the other side
    /// along the same components, when that execution exists.
    pub test: Option<Test>,
}

impl fmt::Display for AttackTrace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "# side: {}", self.side)?;
        for a in &self.actions {
            writeln!(f, "{a}")?;
        }
        match &self.test {
            Some(t) => write!(f, "# test: {t}"),
            None => write!(
                f,
                "# the {} process cannot follow this trace",
                self.side.other()
            ),
        }
    }
}

/// Outcome of a bounded search.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    NoAttackFound,
    Attack(AttackTrace),
}

/// The result of running the oracle.
#[derive(Clone, Debug)]
pub struct OracleReport {
    pub verdict: OracleVerdict,
    /// Search nodes visited, over both directions.
    pub explored: u64,
    pub elapsed_ms: f64,
}

/// A parallel component waiting on an input or an output.
#[derive(Clone, Debug)]
struct Comp<'a> {
    id: Arc<str>,
    proc: &'a Process,
}

/// A configuration after internal reduction.
#[derive(Clone, Debug)]
struct Config<'a> {
    comps: Vec<Comp<'a>>,
    frame: Vec<Term>,
    store: Subst,
}

/// A copy of a replicated body with the names it binds indexed by `i`.
fn replica(p: &Process, i: u32) -> Process {
    let vars = p.bound_vars();
    let nonces: HashSet<Atom> = p.nonce_binders().into_iter().map(|nt| nt.atom).collect();
    let rename = |a: &Atom| {
        if vars.contains(a) || nonces.contains(a) {
            a.with_index(Some(a.index().unwrap_or(0) * 64 + i))
        } else {
            a.clone()
        }
    };
    p.map_all(
        &|t: &Term| t.map_atoms(&mut |a| Term::Atom(rename(a))),
        &rename,
        &|nt: &NonceType| NonceType {
            atom: rename(&nt.atom),
            ..nt.clone()
        },
    )
}

/// Replaces each replication by `n` renamed copies of its body.
fn unroll(p: &Process, n: u32) -> Process {
    match p {
        Proc::Zero => Proc::Zero,
        Proc::New(nt, q) => Proc::New(nt.clone(), Box::new(unroll(q, n))),
        Proc::Out(m, q) => Proc::Out(m.clone(), Box::new(unroll(q, n))),
        Proc::In(x, q) => Proc::In(x.clone(), Box::new(unroll(q, n))),
        Proc::Par(a, b) => Proc::Par(Box::new(unroll(a, n)), Box::new(unroll(b, n))),
        Proc::Let(x, d, t, e) => Proc::Let(
            x.clone(),
            d.clone(),
            Box::new(unroll(t, n)),
            Box::new(unroll(e, n)),
        ),
        Proc::If(a, b, t, e) => Proc::If(
            a.clone(),
            b.clone(),
            Box::new(unroll(t, n)),
            Box::new(unroll(e, n)),
        ),
        Proc::Repl(q) => {
            let body = unroll(q, n);
            (1..=n)
                .map(|i| replica(&body, i))
                .reduce(|a, b| Proc::Par(Box::new(a), Box::new(b)))
                .unwrap_or(Proc::Zero)
        }
    }
}

/// Evaluates `t` with its variables bound by `store`, whose values are
/// already messages.
fn eval_under(store: &Subst, t: &Term) -> Result<Term, Failure> {
    match t {
        Term::Atom(a) => Ok(store.get(a).cloned().unwrap_or_else(|| t.clone())),
        Term::App(sym, args) => {
            let vals = args
                .iter()
                .map(|a| eval_under(store, a))
                .collect::<Result<Vec<_>, _>>()?;
            reduce(*sym, vals)
        }
    }
}

fn spawn<'a>(id: String, p: &'a Process, store: &mut Subst, out: &mut Vec<Comp<'a>>) {
    let mut p = p;
    loop {
        match p {
            Proc::Zero => return,
            Proc::New(_, q) => p = q,
            Proc::Par(a, b) => {
                spawn(format!("{id}.0"), a, store, out);
                spawn(format!("{id}.1"), b, store, out);
                return;
            }
            Proc::Let(x, d, t, e) => match eval_under(store, &d.to_term()) {
                Ok(v) => {
                    store.insert(x.clone(), v);
                    p = t;
                }
                Err(_) => p = e,
            },
            Proc::If(a, b, t, e) => {
                let equal = matches!((eval_under(store, a), eval_under(store, b)), (Ok(x), Ok(y)) if x == y);
                p = if equal { t } else { e };
            }
            Proc::Repl(_) => unreachable!("replications are unrolled before the search"),
            Proc::In(..) | Proc::Out(..) => {
                out.push(Comp {
                    id: id.into(),
                    proc: p,
                });
                return;
            }
        }
    }
}

fn instantiate(frame: &[Term], recipe: &Term) -> Result<Term, Failure> {
    let mut bad = false;
    let t = recipe.map_atoms(&mut |a| match a.ordinal() {
        Some(n) if n >= 1 && (n as usize) <= frame.len() => frame[n as usize - 1].clone(),
        Some(_) => {
            bad = true;
            Term::Atom(a.clone())
        }
        None => Term::Atom(a.clone()),
    });
    if bad {
        return Err(Failure);
    }
    evaluate(&t)
}

impl<'a> Config<'a> {
    /// The initial configuration of an unrolled process.
    fn initial(p: &'a Process, knowledge: &[Term]) -> Config<'a> {
        let mut store = Subst::new();
        let mut comps = Vec::new();
        spawn("0".into(), p, &mut store, &mut comps);
        Config {
            comps,
            frame: knowledge.to_vec(),
            store,
        }
    }

    fn find(&self, id: &str) -> Option<usize> {
        self.comps.iter().position(|c| &*c.id == id)
    }

    fn output_value(&self, i: usize) -> Option<Term> {
        match self.comps[i].proc {
            Proc::Out(m, _) => eval_under(&self.store, m).ok(),
            _ => None,
        }
    }

    fn is_input(&self, i: usize) -> bool {
        matches!(self.comps[i].proc, Proc::In(..))
    }

    fn replace(&self, i: usize, store: Subst, cont: &'a Process) -> Config<'a> {
        let mut store = store;
        let mut spawned = Vec::new();
        spawn(self.comps[i].id.to_string(), cont, &mut store, &mut spawned);
        let mut comps = Vec::with_capacity(self.comps.len() + spawned.len());
        comps.extend_from_slice(&self.comps[..i]);
        comps.extend(spawned);
        comps.extend_from_slice(&self.comps[i + 1..]);
        Config {
            comps,
            frame: self.frame.clone(),
            store,
        }
    }

    fn output(&self, i: usize) -> Option<(Config<'a>, Term)> {
        let v = self.output_value(i)?;
        let Proc::Out(_, cont) = self.comps[i].proc else {
            return None;
        };
        let mut next = self.replace(i, self.store.clone(), cont);
        next.frame.push(v.clone());
        Some((next, v))
    }

    fn input(&self, i: usize, value: Term) -> Option<Config<'a>> {
        let Proc::In(x, cont) = self.comps[i].proc else {
            return None;
        };
        let mut store = self.store.clone();
        store.insert(x.clone(), value);
        Some(self.replace(i, store, cont))
    }

    fn alive(&self, id: &str) -> bool {
        self.comps
            .iter()
            .any(|c| &*c.id == id || c.id.strip_prefix(id).is_some_and(|r| r.starts_with('.')))
    }
}

/// How a process uses an input.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
enum Shape {
    Any,
    Value(Term),
    Cons(Sym, Option<Term>, Vec<Shape>),
}

fn wrap(d: &DestApp, s: Shape) -> Shape {
    let key = d.key.clone().map(Term::Atom);
    match d.sym {
        Sym::Dec => Shape::Cons(Sym::Enc, key, vec![s]),
        Sym::Adec => Shape::Cons(Sym::Aenc, key.map(Term::pk), vec![s]),
        _ => Shape::Cons(Sym::Sign, key, vec![s]),
    }
}

/// Uses of an input variable, with projections kept apart so that both
/// halves of a pair pattern can be combined.
#[derive(Default)]
struct Uses {
    whole: Vec<Shape>,
    fst: Vec<Shape>,
    snd: Vec<Shape>,
}

fn shapes_of(x: &Atom, p: &Process) -> Vec<Shape> {
    let mut local = p.bound_vars();
    local.insert(x.clone());
    shapes_within(x, p, &local)
}

/// Shapes of `x`, ignoring tests against terms over the variables `local`,
/// which are not yet bound when the input happens.
fn shapes_within(x: &Atom, p: &Process, local: &BTreeSet<Atom>) -> Vec<Shape> {
    let mut uses = Uses::default();
    collect_shapes(x, p, local, &mut uses);
    let mut out = uses.whole;
    if !uses.fst.is_empty() || !uses.snd.is_empty() {
        let or_any = |v: Vec<Shape>| if v.is_empty() { vec![Shape::Any] } else { v };
        let (fst, snd) = (or_any(uses.fst), or_any(uses.snd));
        for a in &fst {
            for b in &snd {
                out.push(Shape::Cons(Sym::Pair, None, vec![a.clone(), b.clone()]));
            }
        }
    }
    if out.is_empty() {
        out.push(Shape::Any);
    }
    let mut seen = HashSet::new();
    out.retain(|s| seen.insert(s.clone()));
    out.truncate(MAX_RECIPES);
    out
}

fn collect_shapes(x: &Atom, p: &Process, local: &BTreeSet<Atom>, uses: &mut Uses) {
    match p {
        Proc::Zero => {}
        Proc::New(_, q) | Proc::Out(_, q) | Proc::In(_, q) | Proc::Repl(q) => {
            collect_shapes(x, q, local, uses)
        }
        Proc::Par(a, b) => {
            collect_shapes(x, a, local, uses);
            collect_shapes(x, b, local, uses);
        }
        Proc::Let(z, d, t, e) => {
            if &d.arg == x {
                let inner = shapes_within(z, t, local);
                match d.sym {
                    Sym::Fst => uses.fst.extend(inner),
                    Sym::Snd => uses.snd.extend(inner),
                    _ => uses.whole.extend(inner.into_iter().map(|s| wrap(d, s))),
                }
            }
            collect_shapes(x, t, local, uses);
            collect_shapes(x, e, local, uses);
        }
        Proc::If(a, b, t, e) => {
            let xt = Term::Atom(x.clone());
            for (u, v) in [(a, b), (b, a)] {
                if *u == xt && v.vars().is_disjoint(local) {
                    uses.whole.push(Shape::Value(v.clone()));
                }
            }
            collect_shapes(x, t, local, uses);
            collect_shapes(x, e, local, uses);
        }
    }
}

fn node_key(p: &Process) -> usize {
    p as *const Process as usize
}

fn input_shapes(p: &Process, out: &mut HashMap<usize, Vec<Shape>>) {
    match p {
        Proc::Zero => {}
        Proc::In(x, q) => {
            out.insert(node_key(p), shapes_of(x, q));
            input_shapes(q, out);
        }
        Proc::New(_, q) | Proc::Out(_, q) | Proc::Repl(q) => input_shapes(q, out),
        Proc::Par(a, b) | Proc::Let(_, _, a, b) | Proc::If(_, _, a, b) => {
            input_shapes(a, out);
            input_shapes(b, out);
        }
    }
}

/// Shared state of one search direction.
struct Search<'a> {
    /// Input patterns of the input nodes of the explored side.
    shapes: HashMap<usize, Vec<Shape>>,
    p_init: Config<'a>,
    q_init: Config<'a>,
    pool: &'a [Term],
    junk: Option<Term>,
    public: usize,
    bounds: Bounds,
    explored: &'a AtomicU64,
    side: Direction,
}

struct Node<'a> {
    p: Config<'a>,
    /// The other side along the same components, while it keeps up.
    q: Option<Config<'a>>,
    /// Knowledge over the two frames, or over `p` alone when `q` is gone.
    know: Knowledge,
    word: Vec<Action>,
}

#[derive(Clone, Debug)]
enum Move {
    Out(usize),
    /// An input of a recipe and its value.
    In(usize, Term, Term),
}

type Key = (Arc<str>, Option<Term>);

enum Step<'a> {
    Next(Box<Node<'a>>),
    Pruned,
    Attack(AttackTrace),
}

impl<'a> Search<'a> {
    fn root(&self) -> Node<'a> {
        let mut know = Knowledge::new(self.pool, self.bounds.recipe_depth);
        for t in &self.p_init.frame {
            let _ = know.add_frame(t, t, true);
        }
        Node {
            p: self.p_init.clone(),
            q: Some(self.q_init.clone()),
            know,
            word: Vec::new(),
        }
    }

    fn synth(&self, v: &Term, know: &Knowledge, budget: usize) -> Option<Term> {
        if let Some(&i) = know.by_left.get(v) {
            return Some(know.items[i].recipe.clone());
        }
        match v.as_app() {
            Some((f, args)) if budget > 0 && f.is_constructor() => {
                let rs: Option<Vec<Term>> = args
                    .iter()
                    .map(|a| self.synth(a, know, budget - 1))
                    .collect();
                Some(Term::app(f, rs?))
            }
            _ => None,
        }
    }

    fn realize(&self, shape: &Shape, know: &Knowledge, store: &Subst, budget: usize) -> Vec<Term> {
        let observed = || know.items.iter().filter(|it| !it.public);
        match shape {
            Shape::Any => self
                .junk
                .iter()
                .cloned()
                .chain(observed().map(|it| it.recipe.clone()))
                .collect(),
            Shape::Value(v) => {
                let v = store.apply(v);
                if v.is_ground() {
                    self.synth(&v, know, budget).into_iter().collect()
                } else {
                    Vec::new()
                }
            }
            Shape::Cons(sym, key, kids) => {
                let matches_key = |t: &Term| match (t.as_app(), key) {
                    (Some((s, args)), Some(k)) => s == *sym && args[1] == *k,
                    (Some((s, _)), None) => s == *sym,
                    _ => false,
                };
                let mut out: Vec<Term> = observed()
                    .filter(|it| matches_key(&it.left))
                    .map(|it| it.recipe.clone())
                    .collect();
                if budget == 0 {
                    return out;
                }
                let key_recipe = match key {
                    Some(k) => match self.synth(k, know, budget - 1) {
                        Some(r) => Some(r),
                        None => return out,
                    },
                    None => None,
                };
                if *sym == Sym::Pair {
                    let mut a = self.realize(&kids[0], know, store, budget - 1);
                    let mut b = self.realize(&kids[1], know, store, budget - 1);
                    a.truncate(MAX_PAIR_PART);
                    b.truncate(MAX_PAIR_PART);
                    for x in &a {
                        for y in &b {
                            out.push(Term::pair(x.clone(), y.clone()));
                        }
                    }
                } else if let Some(kr) = key_recipe {
                    for m in self.realize(&kids[0], know, store, budget - 1) {
                        out.push(Term::app(*sym, vec![m, kr.clone()]));
                    }
                }
                out
            }
        }
    }

    fn input_recipes(&self, cfg: &Config<'a>, know: &Knowledge, i: usize) -> Vec<(Term, Term)> {
        let node = cfg.comps[i].proc;
        let Proc::In(x, cont) = node else {
            return Vec::new();
        };
        let mut out = Vec::new();
        let mut values = HashSet::new();
        let mut candidates: Vec<Term> = self.junk.iter().cloned().collect();
        let computed;
        let shapes = match self.shapes.get(&node_key(node)) {
            Some(s) => s,
            None => {
                computed = shapes_of(x, cont);
                &computed
            }
        };
        for s in shapes {
            candidates.extend(self.realize(s, know, &cfg.store, self.bounds.recipe_depth));
        }
        for r in candidates {
            if out.len() >= MAX_RECIPES {
                break;
            }
            if r.depth() > self.bounds.recipe_depth {
                continue;
            }
            if let Ok(v) = instantiate(&cfg.frame, &r) {
                if values.insert(v.clone()) {
                    out.push((r, v));
                }
            }
        }
        out
    }

    fn moves(&self, node: &Node<'a>) -> Vec<(Move, Key)> {
        let mut out = Vec::new();
        for (i, c) in node.p.comps.iter().enumerate() {
            if node.p.is_input(i) {
                for (r, v) in self.input_recipes(&node.p, &node.know, i) {
                    out.push((Move::In(i, r.clone(), v), (c.id.clone(), Some(r))));
                }
            } else if node.p.output_value(i).is_some() {
                out.push((Move::Out(i), (c.id.clone(), None)));
            }
        }
        out
    }

    fn step(&self, node: &Node<'a>, mv: &Move) -> Step<'a> {
        let (i, action, p2) = match mv {
            Move::Out(i) => match node.p.output(*i) {
                Some((c, _)) => (*i, Action::Out(c.frame.len() as u32), c),
                None => return Step::Pruned,
            },
            Move::In(i, r, v) => match node.p.input(*i, v.clone()) {
                Some(c) => (*i, Action::In(r.clone()), c),
                None => return Step::Pruned,
            },
        };
        let id = node.p.comps[i].id.clone();
        let mut word = node.word.clone();
        word.push(action.clone());
        let mut know = node.know.clone();
        let mut test = None;
        let q2 = node.q.as_ref().and_then(|q| {
            let j = q.find(&id)?;
            match &action {
                Action::Out(_) => {
                    let (q2, qv) = q.output(j)?;
                    let pv = p2.frame.last().expect("an output extends the frame");
                    match know.add_frame(pv, &qv, false) {
                        Ok(()) => Some(q2),
                        Err(t) => {
                            test = Some(t);
                            None
                        }
                    }
                }
                Action::In(r) => {
                    if !q.is_input(j) {
                        return None;
                    }
                    q.input(j, instantiate(&q.frame, r).ok()?)
                }
            }
        });
        if let Some(q2) = q2 {
            if matches!(action, Action::In(_)) && !p2.alive(&id) && !q2.alive(&id) {
                return Step::Pruned;
            }
            return Step::Next(Box::new(Node {
                p: p2,
                q: Some(q2),
                know,
                word,
            }));
        }
        if self.exists_match(&word, &p2.frame) {
            let know =
                Knowledge::diagonal(self.pool, self.bounds.recipe_depth, &p2.frame, self.public);
            return Step::Next(Box::new(Node {
                p: p2,
                q: None,
                know,
                word,
            }));
        }
        Step::Attack(AttackTrace {
            side: self.side,
            actions: word,
            frame: p2.frame,
            test,
        })
    }

    fn exists_match(&self, word: &[Action], target: &[Term]) -> bool {
        let mut know = Knowledge::new(self.pool, self.bounds.recipe_depth);
        for t in &self.q_init.frame {
            let _ = know.add_frame(t, t, true);
        }
        self.match_from(&self.q_init, &know, word, target)
    }

    fn match_from(
        &self,
        q: &Config<'a>,
        know: &Knowledge,
        word: &[Action],
        target: &[Term],
    ) -> bool {
        let Some((first, rest)) = word.split_first() else {
            return true;
        };
        match first {
            Action::Out(n) => {
                let pv = &target[*n as usize - 1];
                (0..q.comps.len()).any(|j| {
                    let Some((q2, qv)) = q.output(j) else {
                        return false;
                    };
                    let mut k2 = know.clone();
                    k2.add_frame(pv, &qv, false).is_ok() && self.match_from(&q2, &k2, rest, target)
                })
            }
            Action::In(r) => {
                let Ok(v) = instantiate(&q.frame, r) else {
                    return false;
                };
                (0..q.comps.len()).any(|j| {
                    q.is_input(j)
                        && q.input(j, v.clone())
                            .is_some_and(|q2| self.match_from(&q2, know, rest, target))
                })
            }
        }
    }

    fn explore(&self, node: &Node<'a>, sleep: &[Key]) -> Option<AttackTrace> {
        self.explored.fetch_add(1, Ordering::Relaxed);
        if node.word.len() >= self.bounds.trace_depth {
            return None;
        }
        let mut done: Vec<Key> = Vec::new();
        for (mv, key) in self.moves(node) {
            if sleep.contains(&key) {
                continue;
            }
            let child_sleep: Vec<Key> = sleep
                .iter()
                .chain(&done)
                .filter(|k| k.0 != key.0)
                .cloned()
                .collect();
            done.push(key);
            match self.step(node, &mv) {
                Step::Attack(a) => return Some(a),
                Step::Pruned => {}
                Step::Next(child) => {
                    if let Some(a) = self.explore(&child, &child_sleep) {
                        return Some(a);
                    }
                }
            }
        }
        None
    }

    fn run(&self, parallel: bool) -> Option<AttackTrace> {
        let root = self.root();
        self.explored.fetch_add(1, Ordering::Relaxed);
        if self.bounds.trace_depth == 0 {
            return None;
        }
        let moves = self.moves(&root);
        let mut tasks = Vec::with_capacity(moves.len());
        let mut done: Vec<Key> = Vec::new();
        for (mv, key) in moves {
            let sleep: Vec<Key> = done.iter().filter(|k| k.0 != key.0).cloned().collect();
            done.push(key);
            tasks.push((mv, sleep));
        }
        let visit = |(mv, sleep): &(Move, Vec<Key>)| match self.step(&root, mv) {
            Step::Attack(a) => Some(a),
            Step::Pruned => None,
            Step::Next(child) => self.explore(&child, sleep),
        };
        if parallel {
            tasks.par_iter().find_map_first(visit)
        } else {
            tasks.iter().find_map(visit)
        }
    }
}

/// Public atoms of a file: its constants, its free names and `fresh` fresh
/// attacker names. The first fresh name serves as a junk input.
pub fn attacker_pool(file: &ProtocolFile, fresh: usize) -> Vec<Term> {
    let mut pool: Vec<Term> = file
        .constants
        .iter()
        .chain(&file.free_names)
        .cloned()
        .map(Term::Atom)
        .collect();
    let taken: HashSet<String> = pool.iter().map(|t| t.to_string()).collect();
    let mut n = 0;
    let mut added = 0;
    while added < fresh {
        n += 1;
        let name = format!("adv{n}");
        if !taken.contains(&name) {
            pool.push(Term::Atom(Atom::free(&name)));
            added += 1;
        }
    }
    pool
}

/// The input to a bounded equivalence check.
#[derive(Clone, Debug)]
pub struct OracleInput {
    pub left: Process,
    pub right: Process,
    /// The initial frame, known to the attacker.
    pub knowledge: Vec<Term>,
    /// Public atoms.
    pub pool: Vec<Term>,
    /// The junk input, if any.
    pub junk: Option<Term>,
}

impl OracleInput {
    /// The check for a parsed file.
    pub fn from_file(file: &ProtocolFile, bounds: &Bounds) -> OracleInput {
        let pool = attacker_pool(file, bounds.fresh_names);
        let n_public = file.constants.len() + file.free_names.len();
        OracleInput {
            left: file.process.erase_left(),
            right: file.process.erase_right(),
            knowledge: attacker_knowledge(&file.key_env()),
            junk: pool.get(n_public).cloned(),
            pool,
        }
    }

    /// Both sides with their replications unrolled.
    fn unrolled(&self, bounds: &Bounds) -> (Process, Process) {
        (
            unroll(&self.left, bounds.repl_bound),
            unroll(&self.right, bounds.repl_bound),
        )
    }

    fn search<'a>(
        &'a self,
        (left, right): &'a (Process, Process),
        side: Direction,
        bounds: Bounds,
        explored: &'a AtomicU64,
    ) -> Search<'a> {
        let (p, q) = match side {
            Direction::Left => (left, right),
            Direction::Right => (right, left),
        };
        let mut shapes = HashMap::new();
        input_shapes(p, &mut shapes);
        Search {
            shapes,
            p_init: Config::initial(p, &self.knowledge),
            q_init: Config::initial(q, &self.knowledge),
            pool: &self.pool,
            junk: self.junk.clone(),
            public: self.knowledge.len(),
            bounds,
            explored,
            side,
        }
    }
}

/// Looks for a trace of either side that the other side cannot match.
pub fn trace_equiv_bounded(input: &OracleInput, bounds: &Bounds, parallel: bool) -> OracleReport {
    let start = Instant::now();
    let explored = AtomicU64::new(0);
    let sides = input.unrolled(bounds);
    let mut verdict = OracleVerdict::NoAttackFound;
    for side in [Direction::Left, Direction::Right] {
        if let Some(a) = input.search(&sides, side, *bounds, &explored).run(parallel) {
            verdict = OracleVerdict::Attack(a);
            break;
        }
    }
    OracleReport {
        verdict,
        explored: explored.load(Ordering::Relaxed),
        elapsed_ms: start.elapsed().as_secs_f64() * 1000.0,
    }
}

/// Runs the oracle on a parsed file.
pub fn check_file_bounded(file: &ProtocolFile, bounds: &Bounds, parallel: bool) -> OracleReport {
    trace_equiv_bounded(&OracleInput::from_file(file, bounds), bounds, parallel)
}

/// Outcome of replaying a trace.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ReplayOutcome {
    /// The replaying side cannot perform the trace.
    NotExecutable,
    /// The other side matches every execution of the trace.
    Matched,
    /// Some execution of the trace is not matched.
    Attack(AttackTrace),
}

/// Replays a trace on one side and checks that the other side matches it.
pub fn replay(
    input: &OracleInput,
    bounds: &Bounds,
    side: Direction,
    actions: &[Action],
) -> ReplayOutcome {
    let explored = AtomicU64::new(0);
    let sides = input.unrolled(bounds);
    let search = input.search(&sides, side, *bounds, &explored);
    let mut executions = Vec::new();
    run_word(&search.p_init, actions, &mut executions);
    if executions.is_empty() {
        return ReplayOutcome::NotExecutable;
    }
    for frame in executions {
        if !search.exists_match(actions, &frame) {
            return ReplayOutcome::Attack(AttackTrace {
                side,
                actions: actions.to_vec(),
                frame,
                test: None,
            });
        }
    }
    ReplayOutcome::Matched
}

fn run_word(cfg: &Config<'_>, word: &[Action], out: &mut Vec<Vec<Term>>) {
    let Some((first, rest)) = word.split_first() else {
        out.push(cfg.frame.clone());
        return;
    };
    match first {
        Action::Out(n) => {
            if *n as usize != cfg.frame.len() + 1 {
                return;
            }
            for j in 0..cfg.comps.len() {
                if let Some((c, _)) = cfg.output(j) {
                    run_word(&c, rest, out);
                }
            }
        }
        Action::In(r) => {
            let Ok(v) = instantiate(&cfg.frame, r) else {
                return;
            };
            for j in 0..cfg.comps.len() {
                if cfg.is_input(j) {
                    if let Some(c) = cfg.input(j, v.clone()) {
                        run_word(&c, rest, out);
                    }
                }
            }
        }
    }
}

/// Errors in a trace file.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum TraceError {
    #[error("line {0}: expected `in(recipe)` or `out(ax_n)`")]
    BadAction(usize),
    #[error("line {line}: {msg}")]
    BadRecipe { line: usize, msg: String },
    #[error("line {0}: unknown side, expected `left` or `right`")]
    BadSide(usize),
}

/// Parses a trace in the format printed for attacks. Lines starting with `#`
/// are comments, except `# side: left|right`.
pub fn parse_trace(src: &str, pool: &[Term]) -> Result<(Direction, Vec<Action>), TraceError> {
    let mut side = Direction::Left;
    let mut actions = Vec::new();
    for (n, line) in src.lines().enumerate() {
        let line_no = n + 1;
        let line = line.trim();
        if let Some(c) = line.strip_prefix('#') {
            if let Some(s) = c.trim().strip_prefix("side:") {
                side = match s.trim() {
                    "left" => Direction::Left,
                    "right" => Direction::Right,
                    _ => return Err(TraceError::BadSide(line_no)),
                };
            }
            continue;
        }
        if line.is_empty() {
            continue;
        }
        let inner = |p: &str| line.strip_prefix(p).and_then(|r| r.strip_suffix(')'));
        if let Some(r) = inner("in(") {
            let t = parse_recipe(r, pool)
                .map_err(|msg| TraceError::BadRecipe { line: line_no, msg })?;
            actions.push(Action::In(t));
        } else if let Some(r) = inner("out(") {
            let n = r
                .trim()
                .strip_prefix("ax_")
                .and_then(|d| d.parse().ok())
                .ok_or(TraceError::BadAction(line_no))?;
            actions.push(Action::Out(n));
        } else {
            return Err(TraceError::BadAction(line_no));
        }
    }
    Ok((side, actions))
}

/// Parses a recipe over frame variables, public atoms and function symbols.
pub fn parse_recipe(src: &str, pool: &[Term]) -> Result<Term, String> {
    let chars: Vec<char> = src.chars().filter(|c| !c.is_whitespace()).collect();
    let mut pos = 0;
    let t = recipe_term(&chars, &mut pos, pool)?;
    if pos != chars.len() {
        return Err(format!("unexpected `{}`", chars[pos]));
    }
    Ok(t)
}

fn expect(chars: &[char], pos: &mut usize, c: char) -> Result<(), String> {
    if chars.get(*pos) == Some(&c) {
        *pos += 1;
        Ok(())
    } else {
        Err(format!("expected `{c}`"))
    }
}

fn recipe_term(chars: &[char], pos: &mut usize, pool: &[Term]) -> Result<Term, String> {
    if chars.get(*pos) == Some(&'<') {
        *pos += 1;
        let a = recipe_term(chars, pos, pool)?;
        expect(chars, pos, ',')?;
        let b = recipe_term(chars, pos, pool)?;
        expect(chars, pos, '>')?;
        return Ok(Term::pair(a, b));
    }
    let start = *pos;
    while chars
        .get(*pos)
        .is_some_and(|c| c.is_ascii_alphanumeric() || *c == '_' || *c == '\'' || *c == '#')
    {
        *pos += 1;
    }
    let name: String = chars[start..*pos].iter().collect();
    if name.is_empty() {
        return Err("expected a recipe".into());
    }
    if chars.get(*pos) == Some(&'(') {
        let sym = Sym::from_name(&name).ok_or_else(|| format!("unknown function `{name}`"))?;
        *pos += 1;
        let mut args = vec![recipe_term(chars, pos, pool)?];
        while chars.get(*pos) == Some(&',') {
            *pos += 1;
            args.push(recipe_term(chars, pos, pool)?);
        }
        expect(chars, pos, ')')?;
        if args.len() != sym.arity() {
            return Err(format!("`{name}` expects {} arguments", sym.arity()));
        }
        return Ok(Term::app(sym, args));
    }
    if let Some(n) = name.strip_prefix("ax_").and_then(|d| d.parse::<u32>().ok()) {
        return Ok(Term::Atom(Atom::frame(n)));
    }
    pool.iter()
        .find(|t| t.to_string() == name)
        .cloned()
        .ok_or_else(|| format!("`{name}` is not a public name"))
}
