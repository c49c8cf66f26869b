//! The bi-typing engine: goal-directed term typing with constraint output,
//! destructor typing, and process typing producing constraint sets.

use std::cell::RefCell;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintEntry, ConstraintSet, Constraints};
use crate::process::{pair, BiProcess, Proc};
use crate::term::{Atom, AtomKind, Sym, Term};
use crate::types::{
    branches, subtype, type_branches, well_formed, Label, Mult, NonceType, Type, TypeEnv,
};

/// A typing derivation could not be found.
///
/// This never means that the processes are distinguishable: the type system
/// is sound but incomplete.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub struct TypeFailure {
    /// Path from the root of the bi-process to the failing node.
    pub position: String,
    /// The rule, or family of rules, that could not be applied.
    pub rule: String,
    /// What went wrong.
    pub reason: String,
    /// The deepest term-typing subgoal that failed, if any.
    pub subgoal: Option<String>,
}

impl fmt::Display for TypeFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} at {}: {}", self.rule, self.position, self.reason)?;
        if let Some(g) = &self.subgoal {
            write!(f, " (deepest failing subgoal: {g})")?;
        }
        Ok(())
    }
}

/// Types `M ~ N : T`, returning the generated constraints.
pub fn check_term(env: &TypeEnv, m: &Term, n: &Term, t: &Type) -> Result<Constraints, TypeFailure> {
    let checker = TermChecker::new(env);
    checker.check(m, n, t, 0).ok_or_else(|| TypeFailure {
        position: "term".into(),
        rule: "message typing".into(),
        reason: format!("no derivation for {}", goal(m, n, t)),
        subgoal: checker.deepest(),
    })
}

/// The refinement types derivable for `M ~ N` without constraints.
pub fn refinements(env: &TypeEnv, m: &Term, n: &Term) -> Vec<(NonceType, NonceType)> {
    let mut out: Vec<(NonceType, NonceType)> = Vec::new();
    let (Some(a), Some(b)) = (m.as_atom(), n.as_atom()) else {
        return out;
    };
    let mut push = |p: (NonceType, NonceType)| {
        if !out.contains(&p) {
            out.push(p);
        }
    };
    if let (Some(l), Some(r)) = (finite_nonce(env, a), finite_nonce(env, b)) {
        push((l, r));
    }
    if let (Some(l), Some(r)) = (env.nonce_type(a), env.nonce_type(b)) {
        if l.mult == Mult::Inf && r.mult == Mult::Inf {
            push((l.clone(), r.clone()));
        }
    }
    if a.is_var() && b.is_var() {
        if a == b {
            if let Some((l, r)) = env.get(a).and_then(Type::as_refine) {
                push((l.clone(), r.clone()));
            }
        }
        let fa = env.get(a).and_then(Type::as_finite_refine);
        let fb = env.get(b).and_then(Type::as_finite_refine);
        if let (Some((l, _)), Some((_, r))) = (fa, fb) {
            push((l.clone(), r.clone()));
        }
    }
    out
}

fn finite_nonce(env: &TypeEnv, a: &Atom) -> Option<NonceType> {
    match a.kind() {
        AtomKind::Const | AtomKind::FreeNonce => {
            Some(NonceType::new(Label::LL, Mult::One, a.clone()))
        }
        AtomKind::BoundNonce => env.nonce_type(a).filter(|nt| nt.mult == Mult::One).cloned(),
        _ => None,
    }
}

fn goal(m: &Term, n: &Term, t: &Type) -> String {
    if m == n {
        format!("{m} : {t}")
    } else {
        format!("{m} ~ {n} : {t}")
    }
}

struct TermChecker<'a> {
    env: &'a TypeEnv,
    deepest: RefCell<Option<(usize, String)>>,
}

impl<'a> TermChecker<'a> {
    fn new(env: &'a TypeEnv) -> Self {
        TermChecker {
            env,
            deepest: RefCell::new(None),
        }
    }

    fn deepest(&self) -> Option<String> {
        self.deepest.borrow().as_ref().map(|(_, g)| g.clone())
    }

    fn check(&self, m: &Term, n: &Term, t: &Type, depth: usize) -> Option<Constraints> {
        let r = self.check_inner(m, n, t, depth);
        if r.is_none() {
            let mut d = self.deepest.borrow_mut();
            if d.as_ref().is_none_or(|(k, _)| depth >= *k) {
                *d = Some((depth, goal(m, n, t)));
            }
        }
        r
    }

    fn known(&self, t: &Term) -> bool {
        !t.any_atom(&|a| match a.kind() {
            AtomKind::Const | AtomKind::FreeNonce => false,
            _ => !self.env.contains(a),
        })
    }

    fn key_type(&self, k: &Term) -> Option<(Label, &Type)> {
        match k.as_atom().and_then(|a| self.env.get(a)) {
            Some(Type::Key(l, t)) => Some((*l, t.as_ref())),
            _ => None,
        }
    }

    fn check_inner(&self, m: &Term, n: &Term, t: &Type, d: usize) -> Option<Constraints> {
        if m == n {
            if let Some(ty) = m.as_atom().and_then(|a| self.env.get(a)) {
                if subtype(ty, t) {
                    return Some(Constraints::new());
                }
            }
        }
        match t {
            Type::Union(a, b) => self
                .check(m, n, a, d + 1)
                .or_else(|| self.check(m, n, b, d + 1)),
            Type::Label(Label::HL) => (self.known(m) && self.known(n)).then(Constraints::new),
            Type::Label(Label::LL) => self.check_low(m, n, d),
            Type::Label(Label::HH) => self.check_high(m, n, d),
            Type::Pair(a, b) => match (m.as_app(), n.as_app()) {
                (Some((Sym::Pair, xs)), Some((Sym::Pair, ys))) => {
                    let mut c = self.check(&xs[0], &ys[0], a, d + 1)?;
                    c.extend(self.check(&xs[1], &ys[1], b, d + 1)?);
                    Some(c)
                }
                _ => None,
            },
            Type::Enc(payload, k) => match (m.as_app(), n.as_app()) {
                (Some((Sym::Enc, xs)), Some((Sym::Enc, ys)))
                    if xs[1] == ys[1] && xs[1].as_atom() == Some(k) =>
                {
                    self.check(&xs[0], &ys[0], payload, d + 1)
                }
                _ => None,
            },
            Type::Aenc(payload, k) => match (m.as_app(), n.as_app()) {
                (Some((Sym::Aenc, xs)), Some((Sym::Aenc, ys)))
                    if xs[1] == ys[1] && xs[1] == Term::pk(k.clone().into()) =>
                {
                    self.check(&xs[0], &ys[0], payload, d + 1)
                }
                _ => None,
            },
            Type::Key(..) => None,
            Type::Refine(l, r) => {
                let want = (l.clone(), r.clone());
                refinements(self.env, m, n)
                    .contains(&want)
                    .then(Constraints::new)
            }
        }
    }

    /// The key of an encryption-like term: its own key or the key recorded
    /// in a variable's type.
    fn enc_key(&self, sym: Sym, m: &Term, n: &Term) -> Option<Atom> {
        match (m.as_app(), n.as_app()) {
            (Some((f, xs)), Some((g, ys))) if f == sym && g == sym && xs[1] == ys[1] => match sym {
                Sym::Aenc => xs[1]
                    .as_app()
                    .filter(|(h, _)| *h == Sym::Pk)
                    .and_then(|(_, k)| k[0].as_atom().cloned()),
                _ => xs[1].as_atom().cloned(),
            },
            _ if m == n => match (sym, m.as_atom().and_then(|a| self.env.get(a))) {
                (Sym::Enc, Some(Type::Enc(_, k))) | (Sym::Aenc, Some(Type::Aenc(_, k))) => {
                    Some(k.clone())
                }
                _ => None,
            },
            _ => None,
        }
    }

    fn check_low(&self, m: &Term, n: &Term, d: usize) -> Option<Constraints> {
        let low = |a: &NonceType, b: &NonceType| a == b && a.label == Label::LL;
        if refinements(self.env, m, n).iter().any(|(a, b)| low(a, b)) {
            return Some(Constraints::new());
        }
        if let Some(k) = self.enc_key(Sym::Enc, m, n) {
            let kt: Term = k.clone().into();
            return match self.key_type(&kt)? {
                (Label::HH, payload) => {
                    let mut c = self.check(m, n, &Type::enc(payload.clone(), k), d + 1)?;
                    c.insert(Constraint::new(m.clone(), n.clone()));
                    Some(c)
                }
                (Label::LL, _) => self.check(m, n, &Type::enc(Type::LL, k), d + 1),
                _ => None,
            };
        }
        if let Some(k) = self.enc_key(Sym::Aenc, m, n) {
            let kt: Term = k.clone().into();
            if let Some((Label::HH, payload)) = self.key_type(&kt) {
                if let Some(mut c) =
                    self.check(m, n, &Type::aenc(payload.clone(), k.clone()), d + 1)
                {
                    c.insert(Constraint::new(m.clone(), n.clone()));
                    return Some(c);
                }
            }
            return match self.env.contains(&k) {
                true => self.check(m, n, &Type::aenc(Type::LL, k), d + 1),
                false => None,
            };
        }
        let (Some((f, xs)), Some((g, ys))) = (m.as_app(), n.as_app()) else {
            return None;
        };
        if f != g {
            return None;
        }
        match f {
            Sym::Pair => {
                let mut c = self.check(&xs[0], &ys[0], &Type::LL, d + 1)?;
                c.extend(self.check(&xs[1], &ys[1], &Type::LL, d + 1)?);
                Some(c)
            }
            Sym::Pk | Sym::Vk => (xs == ys
                && xs[0].as_atom().is_some_and(|k| self.env.contains(k)))
            .then(Constraints::new),
            Sym::Sign if xs[1] == ys[1] => match self.key_type(&xs[1])? {
                (Label::HH, payload) => {
                    let mut c = self.check(&xs[0], &ys[0], payload, d + 1)?;
                    c.extend(self.check(&xs[0], &ys[0], &Type::LL, d + 1)?);
                    c.insert(Constraint::new(m.clone(), n.clone()));
                    Some(c)
                }
                (Label::LL, _) => self.check(&xs[0], &ys[0], &Type::LL, d + 1),
                _ => None,
            },
            Sym::H => self.check(&xs[0], &ys[0], &Type::LL, d + 1).or_else(|| {
                (self.known(m) && self.known(n))
                    .then(|| Constraints::from([Constraint::new(m.clone(), n.clone())]))
            }),
            _ => None,
        }
    }

    fn check_high(&self, m: &Term, n: &Term, d: usize) -> Option<Constraints> {
        let high = |a: &NonceType, b: &NonceType| {
            a.label == Label::HH && b.label == Label::HH && a.mult == b.mult
        };
        if refinements(self.env, m, n).iter().any(|(a, b)| high(a, b)) {
            return Some(Constraints::new());
        }
        if m.head() != Some(Sym::Pair) || n.head() != Some(Sym::Pair) {
            return None;
        }
        let left = Type::pair(Type::HH, Type::HL);
        let right = Type::pair(Type::HL, Type::HH);
        self.check(m, n, &left, d + 1)
            .or_else(|| self.check(m, n, &right, d + 1))
    }
}

/// Types a destructor application `d(y)`.
pub fn type_destructor(
    env: &TypeEnv,
    sym: Sym,
    y: &Atom,
    key: Option<&Atom>,
) -> Result<Type, TypeFailure> {
    let fail = |reason: String| TypeFailure {
        position: "destructor".into(),
        rule: "destructor typing".into(),
        reason,
        subgoal: None,
    };
    let ty = env
        .get(y)
        .ok_or_else(|| fail(format!("{y} is not bound")))?;
    let key_ty = key.and_then(|k| env.get(k));
    let low = *ty == Type::LL;
    let res = match (sym, key_ty) {
        (Sym::Dec, Some(Type::Key(l, t))) if low => Some(if *l == Label::HH {
            (**t).clone()
        } else {
            Type::LL
        }),
        (Sym::Adec, Some(Type::Key(l, t))) if low => Some(if *l == Label::HH {
            Type::union((**t).clone(), Type::LL)
        } else {
            Type::LL
        }),
        (Sym::CheckSign, Some(Type::Key(l, t))) if low => Some(if *l == Label::HH {
            (**t).clone()
        } else {
            Type::LL
        }),
        (Sym::Dec, _) => match ty {
            Type::Enc(t, k) if Some(k) == key => Some((**t).clone()),
            _ => None,
        },
        (Sym::Adec, _) => match ty {
            Type::Aenc(t, k) if Some(k) == key => Some((**t).clone()),
            _ => None,
        },
        (Sym::Fst | Sym::Snd, _) if low => Some(Type::LL),
        (Sym::Fst, _) => match ty {
            Type::Pair(a, _) => Some((**a).clone()),
            _ => None,
        },
        (Sym::Snd, _) => match ty {
            Type::Pair(_, b) => Some((**b).clone()),
            _ => None,
        },
        _ => None,
    };
    res.ok_or_else(|| {
        let app = match key {
            Some(k) if sym == Sym::CheckSign => format!("checksign({y}, vk({k}))"),
            Some(k) => format!("{}({y}, {k})", sym.name()),
            None => format!("{}({y})", sym.name()),
        };
        fail(format!("no destructor rule types {app} with {y} : {ty}"))
    })
}

/// Options for process typing.
#[derive(Clone, Copy, Debug)]
pub struct TypingOptions {
    /// Type parallel components and union branches on the rayon pool.
    pub parallel: bool,
}

impl Default for TypingOptions {
    fn default() -> Self {
        TypingOptions { parallel: true }
    }
}

/// Types a replication-free bi-process, returning its constraint set.
pub fn check_process(env: &TypeEnv, p: &BiProcess) -> Result<ConstraintSet, TypeFailure> {
    check_process_with(env, p, TypingOptions::default())
}

/// [`check_process`] with explicit options.
pub fn check_process_with(
    env: &TypeEnv,
    p: &BiProcess,
    opts: TypingOptions,
) -> Result<ConstraintSet, TypeFailure> {
    if !well_formed(env) {
        return Err(TypeFailure {
            position: "root".into(),
            rule: "PZero".into(),
            reason: format!("environment {env} is not well formed"),
            subgoal: None,
        });
    }
    let typer = ProcessTyper { opts };
    typer.all(branches(env), |g| typer.proc(&g, p, "root"))
}

/// Types the replicated body and the sequential part under a shared
/// environment.
pub fn type_replicated(
    env: &TypeEnv,
    repl: &BiProcess,
    seq: &BiProcess,
    opts: TypingOptions,
) -> Result<(ConstraintSet, ConstraintSet), TypeFailure> {
    let c = check_process_with(env, repl, opts)?;
    let c_seq = check_process_with(env, seq, opts)?;
    Ok((c, c_seq))
}

struct ProcessTyper {
    opts: TypingOptions,
}

fn term_failure(pos: &str, rule: &str, env: &TypeEnv, m: &Term, n: &Term, t: &Type) -> TypeFailure {
    let checker = TermChecker::new(env);
    let _ = checker.check(m, n, t, 0);
    TypeFailure {
        position: pos.to_string(),
        rule: rule.to_string(),
        reason: format!("cannot type {}", goal(m, n, t)),
        subgoal: checker.deepest(),
    }
}

impl ProcessTyper {
    fn all<T: Send>(
        &self,
        items: Vec<T>,
        f: impl Fn(T) -> Result<ConstraintSet, TypeFailure> + Sync + Send,
    ) -> Result<ConstraintSet, TypeFailure> {
        let results: Vec<Result<ConstraintSet, TypeFailure>> =
            if self.opts.parallel && items.len() > 1 {
                items.into_par_iter().map(&f).collect()
            } else {
                items.into_iter().map(&f).collect()
            };
        let mut out = ConstraintSet::empty();
        for r in results {
            out = out.union(r?);
        }
        Ok(out)
    }

    fn term(&self, env: &TypeEnv, m: &Term, n: &Term, t: &Type) -> Option<Constraints> {
        TermChecker::new(env).check(m, n, t, 0)
    }

    /// Binds `x : t`, splitting union types eagerly.
    fn bind(
        &self,
        env: &TypeEnv,
        x: &Atom,
        t: &Type,
        p: &BiProcess,
        pos: &str,
    ) -> Result<ConstraintSet, TypeFailure> {
        self.all(type_branches(t), |b| {
            self.proc(&env.with(x.clone(), b), p, pos)
        })
    }

    fn proc(&self, env: &TypeEnv, p: &BiProcess, pos: &str) -> Result<ConstraintSet, TypeFailure> {
        match p {
            Proc::Zero => Ok(ConstraintSet::single(ConstraintEntry::new(
                Constraints::new(),
                env.clone(),
            ))),
            Proc::New(nt, q) => self.proc(
                &env.with(nt.atom.clone(), Type::nonce(nt.clone())),
                q,
                &format!("{pos}.new"),
            ),
            Proc::Out((m, n), q) => {
                let c = self
                    .term(env, m, n, &Type::LL)
                    .ok_or_else(|| term_failure(pos, "POut", env, m, n, &Type::LL))?;
                Ok(self.proc(env, q, &format!("{pos}.out"))?.union_forall(&c))
            }
            Proc::In(x, q) => self.proc(&env.with(x.clone(), Type::LL), q, &format!("{pos}.in")),
            Proc::Par(a, b) => {
                let (pa, pb) = (format!("{pos}.par0"), format!("{pos}.par1"));
                let (ca, cb) = if self.opts.parallel {
                    rayon::join(|| self.proc(env, a, &pa), || self.proc(env, b, &pb))
                } else {
                    (self.proc(env, a, &pa), self.proc(env, b, &pb))
                };
                Ok(ca?.union_times(&cb?))
            }
            Proc::Let(x, dest, then, els) => {
                let else_pos = format!("{pos}.else");
                if env.get(&dest.arg).and_then(Type::as_refine).is_some() {
                    return self.proc(env, els, &else_pos);
                }
                let t =
                    type_destructor(env, dest.sym, &dest.arg, dest.key.as_ref()).map_err(|e| {
                        TypeFailure {
                            position: pos.to_string(),
                            rule: "PLet".into(),
                            ..e
                        }
                    })?;
                let c = self.bind(env, x, &t, then, &format!("{pos}.then"))?;
                Ok(c.union(self.proc(env, els, &else_pos)?))
            }
            Proc::If(a, b, then, els) => self.conditional(env, a, b, then, els, pos),
            Proc::Repl(_) => Err(TypeFailure {
                position: pos.to_string(),
                rule: "process typing".into(),
                reason: "replication must be handled by the replicated query".into(),
                subgoal: None,
            }),
        }
    }

    fn conditional(
        &self,
        env: &TypeEnv,
        (m1, n1): &(Term, Term),
        (m2, n2): &(Term, Term),
        then: &BiProcess,
        els: &BiProcess,
        pos: &str,
    ) -> Result<ConstraintSet, TypeFailure> {
        let then_pos = format!("{pos}.then");
        let else_pos = format!("{pos}.else");
        let r1 = refinements(env, m1, n1);
        let r2 = refinements(env, m2, n2);
        let finite = |r: &&(NonceType, NonceType)| r.0.mult == Mult::One && r.1.mult == Mult::One;
        // PIfLR
        if let (Some(a), Some(b)) = (r1.iter().find(finite), r2.iter().find(finite)) {
            let bl = a.0 == b.0;
            let br = a.1 == b.1;
            let pick = |t: bool| if t { then } else { els };
            if bl == br {
                return self.proc(env, pick(bl), if bl { &then_pos } else { &else_pos });
            }
            let mixed =
                pair(&pick(bl).erase_left(), &pick(br).erase_right()).map_err(|e| TypeFailure {
                    position: pos.to_string(),
                    rule: "PIfLR".into(),
                    reason: format!("the branches taken on each side differ in shape: {e}"),
                    subgoal: None,
                })?;
            return self.proc(
                env,
                &mixed,
                &format!("{pos}.{}", if bl { "then|else" } else { "else|then" }),
            );
        }
        // PIfLR'*
        let same_mult = |r: &(NonceType, NonceType)| r.0.mult == r.1.mult;
        if r1
            .iter()
            .any(|a| same_mult(a) && r2.iter().any(|b| same_mult(b) && a.0 != b.0 && a.1 != b.1))
        {
            return self.proc(env, els, &else_pos);
        }
        // PIfLR*
        let infinite = |r: &(NonceType, NonceType)| r.0.mult == Mult::Inf && r.1.mult == Mult::Inf;
        if r1.iter().any(|a| infinite(a) && r2.contains(a)) {
            return self.both(env, then, els, &then_pos, &else_pos);
        }
        // PIfS
        if self.term(env, m1, n1, &Type::LL).is_some()
            && self.term(env, m2, n2, &Type::HH).is_some()
        {
            return self.proc(env, els, &else_pos);
        }
        // PIfI
        if r2.iter().any(same_mult)
            && self
                .term(env, m1, n1, &Type::pair(Type::HL, Type::HL))
                .is_some()
        {
            return self.proc(env, els, &else_pos);
        }
        // PIfP
        let c1 = self.term(env, m1, n1, &Type::LL);
        let c2 = self.term(env, m2, n2, &Type::LL);
        let atomic = m2 == n2
            && m2.as_atom().is_some_and(|t| {
                matches!(
                    t.kind(),
                    AtomKind::Key | AtomKind::BoundNonce | AtomKind::FreeNonce | AtomKind::Const
                )
            });
        if atomic && c1.is_some() && c2.is_some() {
            return self.both(env, then, els, &then_pos, &else_pos);
        }
        // PIfL
        let c1 = c1.ok_or_else(|| term_failure(pos, "PIfL", env, m1, n1, &Type::LL))?;
        let c2 = c2.ok_or_else(|| term_failure(pos, "PIfL", env, m2, n2, &Type::LL))?;
        let mut c = c1;
        c.extend(c2);
        Ok(self
            .both(env, then, els, &then_pos, &else_pos)?
            .union_forall(&c))
    }

    fn both(
        &self,
        env: &TypeEnv,
        p: &BiProcess,
        q: &BiProcess,
        pp: &str,
        qp: &str,
    ) -> Result<ConstraintSet, TypeFailure> {
        let (a, b) = if self.opts.parallel {
            rayon::join(|| self.proc(env, p, pp), || self.proc(env, q, qp))
        } else {
            (self.proc(env, p, pp), self.proc(env, q, qp))
        };
        Ok(a?.union(b?))
    }
}
