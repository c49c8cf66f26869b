//! The `check_const` procedure: instantiate finite refinements, open
//! constraints, check their shapes, and cross-check equalities through
//! unification.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use thiserror::Error;

use crate::constraints::{Constraint, ConstraintEntry, ConstraintSet, Constraints};
use crate::term::{Atom, Subst, Sym, Term};
use crate::types::{Label, Mult, NonceType, Type, TypeEnv};

/// Why a consistency check failed.
#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("step {step}: {detail}")]
pub struct ConstFailure {
    /// The failing step (3 or 4).
    pub step: u8,
    /// The offending constraints and unifier, in canonical syntax.
    pub detail: String,
}

/// Most general unifier of two terms; only process variables are bound.
pub fn mgu(a: &Term, b: &Term) -> Option<Subst> {
    let mut sigma = Subst::new();
    let mut work = vec![(a.clone(), b.clone())];
    while let Some((s, t)) = work.pop() {
        let s = sigma.apply(&s);
        let t = sigma.apply(&t);
        if s == t {
            continue;
        }
        match (&s, &t) {
            (Term::Atom(x), _) if x.is_var() => bind(&mut sigma, x, &t)?,
            (_, Term::Atom(y)) if y.is_var() => bind(&mut sigma, y, &s)?,
            (Term::App(f, xs), Term::App(g, ys)) if f == g => {
                work.extend(xs.iter().cloned().zip(ys.iter().cloned()));
            }
            _ => return None,
        }
    }
    Some(sigma)
}

fn bind(sigma: &mut Subst, x: &Atom, t: &Term) -> Option<()> {
    if t.contains(x) {
        return None;
    }
    let single = Subst::from_pairs([(x.clone(), t.clone())]);
    let updated: Vec<(Atom, Term)> = sigma
        .iter()
        .map(|(y, u)| (y.clone(), single.apply(u)))
        .collect();
    *sigma = Subst::from_pairs(updated);
    sigma.insert(x.clone(), t.clone());
    Some(())
}

/// Replaces variables with finite refinement types by their left and right
/// nonces, and records the nonce types occurring in the environment.
pub fn step1(c: &Constraints, env: &TypeEnv) -> (Constraints, TypeEnv) {
    let mut left = Subst::new();
    let mut right = Subst::new();
    let mut out_env = TypeEnv::new();
    for (a, t) in env.iter() {
        match t.as_finite_refine() {
            Some((l, r)) if a.is_var() => {
                left.insert(a.clone(), l.atom.clone().into());
                right.insert(a.clone(), r.atom.clone().into());
            }
            _ => out_env.insert(a.clone(), t.clone()),
        }
    }
    let mut nonce_types = Vec::new();
    for (_, t) in env.iter() {
        collect_nonce_types(t, &mut nonce_types);
    }
    for nt in nonce_types {
        if nt.mult == Mult::One && nt.atom.is_nonce() && !out_env.contains(&nt.atom) {
            out_env.insert(nt.atom.clone(), Type::nonce(nt));
        }
    }
    let c = c
        .iter()
        .map(|k| Constraint::new(left.apply(&k.left), right.apply(&k.right)))
        .collect();
    (c, out_env)
}

fn collect_nonce_types(t: &Type, out: &mut Vec<NonceType>) {
    match t {
        Type::Label(_) => {}
        Type::Refine(l, r) => {
            out.push(l.clone());
            out.push(r.clone());
        }
        Type::Pair(a, b) | Type::Union(a, b) => {
            collect_nonce_types(a, out);
            collect_nonce_types(b, out);
        }
        Type::Key(_, u) | Type::Enc(u, _) | Type::Aenc(u, _) => collect_nonce_types(u, out),
    }
}

fn key_label(env: &TypeEnv, k: &Term) -> Option<Label> {
    match k.as_atom().and_then(|a| env.get(a)) {
        Some(Type::Key(l, _)) => Some(*l),
        _ => None,
    }
}

fn aenc_key(t: &Term) -> Option<&Term> {
    match t.as_app() {
        Some((Sym::Aenc, args)) => match args[1].as_app() {
            Some((Sym::Pk, k)) => Some(&k[0]),
            _ => None,
        },
        _ => None,
    }
}

/// Opens pairs, and encryptions and signatures under LL keys; signatures
/// under HH keys are kept and also opened.
pub fn step2(c: &Constraints, env: &TypeEnv) -> Constraints {
    let mut out = Constraints::new();
    let mut work: Vec<Constraint> = c.iter().cloned().collect();
    while let Some(k) = work.pop() {
        let (Some((f, xs)), Some((g, ys))) = (k.left.as_app(), k.right.as_app()) else {
            out.insert(k);
            continue;
        };
        if f != g {
            out.insert(k);
            continue;
        }
        match f {
            Sym::Pair => {
                work.push(Constraint::new(xs[0].clone(), ys[0].clone()));
                work.push(Constraint::new(xs[1].clone(), ys[1].clone()));
            }
            Sym::Enc | Sym::Sign if xs[1] == ys[1] => match key_label(env, &xs[1]) {
                Some(Label::LL) => work.push(Constraint::new(xs[0].clone(), ys[0].clone())),
                Some(Label::HH) if f == Sym::Sign => {
                    work.push(Constraint::new(xs[0].clone(), ys[0].clone()));
                    out.insert(k);
                }
                _ => {
                    out.insert(k);
                }
            },
            Sym::Aenc => match (aenc_key(&k.left), aenc_key(&k.right)) {
                (Some(a), Some(b)) if a == b && key_label(env, a) == Some(Label::LL) => {
                    work.push(Constraint::new(xs[0].clone(), ys[0].clone()))
                }
                _ => {
                    out.insert(k);
                }
            },
            _ => {
                out.insert(k);
            }
        }
    }
    out
}

/// The nonce type an atom stands for on one side, if it is a nonce or a
/// variable with an infinite refinement type.
fn side_nonce<'a>(env: &'a TypeEnv, a: &Atom, left: bool) -> Option<&'a NonceType> {
    if a.is_var() {
        return env
            .get(a)
            .and_then(Type::as_infinite_refine)
            .map(|(l, r)| if left { l } else { r });
    }
    env.nonce_type(a)
}

fn is_secret_leaf(env: &TypeEnv, t: &Term, left: bool) -> bool {
    match t {
        Term::Atom(a) if a.is_key() => key_label(env, t) == Some(Label::HH),
        Term::Atom(a) => side_nonce(env, a, left).is_some_and(|nt| nt.label == Label::HH),
        Term::App(Sym::Pair, args) => args.iter().any(|u| is_secret_leaf(env, u, left)),
        Term::App(..) => false,
    }
}

fn shape_ok(env: &TypeEnv, m: &Term, n: &Term) -> bool {
    match (m, n) {
        (Term::Atom(a), Term::Atom(b)) => {
            if a.is_key() || b.is_key() {
                return a == b && key_label(env, m) == Some(Label::LL);
            }
            if a.is_const() || b.is_const() || a.kind() == crate::term::AtomKind::FreeNonce {
                return a == b;
            }
            match (side_nonce(env, a, true), side_nonce(env, b, false)) {
                (Some(x), Some(y)) => x == y && x.label == Label::LL,
                _ => false,
            }
        }
        (Term::App(f, xs), Term::App(g, ys)) if f == g => match f {
            Sym::Pk | Sym::Vk => xs == ys,
            Sym::Enc | Sym::Sign => xs[1] == ys[1] && key_label(env, &xs[1]) == Some(Label::HH),
            Sym::H => is_secret_leaf(env, &xs[0], true) && is_secret_leaf(env, &ys[0], false),
            Sym::Aenc => match (aenc_key(m), aenc_key(n)) {
                (Some(a), Some(b)) => {
                    a == b
                        && key_label(env, a) == Some(Label::HH)
                        && is_secret_leaf(env, &xs[0], true)
                        && is_secret_leaf(env, &ys[0], false)
                }
                _ => false,
            },
            _ => false,
        },
        _ => false,
    }
}

/// Checks that every constraint has one of the admitted shapes.
pub fn step3(c: &Constraints, env: &TypeEnv) -> Result<(), ConstFailure> {
    match c.iter().find(|k| !shape_ok(env, &k.left, &k.right)) {
        None => Ok(()),
        Some(k) => Err(ConstFailure {
            step: 3,
            detail: format!("constraint `{k}` has no admitted shape"),
        }),
    }
}

type Lookup<'a> = dyn Fn(&Atom) -> Option<&'a Type> + Sync + 'a;

/// One direction of the step-4 condition for a pair of constraints.
///
/// `m ~ m2` and `n ~ n2` are read left-to-right when `left` holds, and
/// right-to-left otherwise.
fn step4_pair(
    ty: &Lookup<'_>,
    m: &Term,
    m2: &Term,
    n: &Term,
    n2: &Term,
    left: bool,
) -> Result<(), String> {
    let Some(mu) = mgu(m, n) else { return Ok(()) };
    let mut theta = Subst::new();
    let mut alpha = Subst::new();
    for (x, v) in mu.iter() {
        let t = ty(x);
        if let Some((l, r)) = t.and_then(Type::as_infinite_refine) {
            let (own, other) = if left { (l, r) } else { (r, l) };
            match v {
                Term::Atom(b) if b.is_var() => {}
                Term::Atom(b) if b.base() == own.atom.base() => {
                    theta.insert(x.clone(), other.atom.with_index(b.index()).into());
                }
                _ => return Ok(()),
            }
        } else if t == Some(&Type::LL) && v.as_atom().is_some_and(Atom::is_nonce) {
            alpha.insert(x.clone(), v.clone());
        }
    }
    let a = theta.apply(&alpha.apply(m2));
    let b = theta.apply(&alpha.apply(n2));
    if a == b {
        Ok(())
    } else {
        let side = if left { "left" } else { "right" };
        Err(format!(
            "`{m} ~ {m2}` and `{n} ~ {n2}`: {side} sides unify with {mu} but the other sides differ ({a} vs {b})"
        ))
    }
}

fn step4_between(ty: &Lookup<'_>, a: &[Constraint], b: &[Constraint]) -> Result<(), ConstFailure> {
    for p in a {
        for q in b {
            for (x, y) in [(p, q), (q, p)] {
                step4_pair(ty, &x.left, &x.right, &y.left, &y.right, true)
                    .and_then(|_| step4_pair(ty, &x.right, &x.left, &y.right, &y.left, false))
                    .map_err(|detail| ConstFailure { step: 4, detail })?;
            }
        }
    }
    Ok(())
}

/// Checks that unifiable sides of two constraints have equal counterparts.
pub fn step4(c: &Constraints, env: &TypeEnv) -> Result<(), ConstFailure> {
    let items: Vec<Constraint> = c.iter().cloned().collect();
    step4_between(&|a| env.get(a), &items, &items)
}

/// An entry after steps 1 and 2.
#[derive(Clone, Debug)]
pub struct Prepared {
    /// The opened constraints.
    pub constraints: Vec<Constraint>,
    /// The environment after step 1.
    pub env: TypeEnv,
    /// The environment of the original entry.
    pub original_env: TypeEnv,
}

/// Runs steps 1 and 2 on an entry.
pub fn prepare(e: &ConstraintEntry) -> Prepared {
    let (c1, env) = step1(&e.constraints, &e.env);
    let c2 = step2(&c1, &env);
    Prepared {
        constraints: c2.into_iter().collect(),
        env,
        original_env: e.env.clone(),
    }
}

fn check_prepared(p: &Prepared) -> Result<(), ConstFailure> {
    let set: Constraints = p.constraints.iter().cloned().collect();
    step3(&set, &p.env)?;
    step4_between(&|a| p.env.get(a), &p.constraints, &p.constraints)
}

/// Checks a single entry.
pub fn check_entry(e: &ConstraintEntry) -> Result<(), ConstFailure> {
    check_prepared(&prepare(e))
}

/// Runs `check_const`, reporting the first failure.
///
/// Products are checked factor by factor: every entry on its own, then every
/// pair of entries with compatible environments taken from two distinct
/// factors. Since steps 1 to 3 act on single constraints and step 4 on pairs
/// of constraints, this covers every combination of the product.
pub fn check_const_diag(c: &ConstraintSet) -> Result<(), ConstFailure> {
    for p in c.products() {
        let factors: Vec<Vec<Prepared>> = p
            .factors()
            .map(|f| f.par_iter().map(prepare).collect::<Vec<_>>())
            .collect();
        factors.par_iter().flatten().try_for_each(check_prepared)?;
        let pairs: Vec<(usize, usize)> = (0..factors.len())
            .flat_map(|i| (i + 1..factors.len()).map(move |j| (i, j)))
            .collect();
        pairs.par_iter().try_for_each(|&(i, j)| {
            for a in &factors[i] {
                for b in &factors[j] {
                    if !a.original_env.compatible(&b.original_env) {
                        continue;
                    }
                    let look = |x: &Atom| a.env.get(x).or_else(|| b.env.get(x));
                    step4_between(&look, &a.constraints, &b.constraints)?;
                }
            }
            Ok(())
        })?;
    }
    Ok(())
}

/// `check_const(C)`.
pub fn check_const(c: &ConstraintSet) -> bool {
    check_const_diag(c).is_ok()
}

/// The set `[C]_1 ∪× [C]_2 ∪× [C']_1` checked for replicated processes.
pub fn replicated_set(c: &ConstraintSet, c_seq: &ConstraintSet) -> ConstraintSet {
    c.expand(1)
        .union_times(&c.expand(2))
        .union_times(&c_seq.expand(1))
}

/// `check_replicated(C, C')`, reporting the first failure.
pub fn check_replicated_diag(c: &ConstraintSet, c_seq: &ConstraintSet) -> Result<(), ConstFailure> {
    check_const_diag(&replicated_set(c, c_seq))
}

/// `check_replicated(C, C')`.
pub fn check_replicated(c: &ConstraintSet, c_seq: &ConstraintSet) -> bool {
    check_replicated_diag(c, c_seq).is_ok()
}

/// The variables bound by a substitution, for diagnostics.
pub fn unifier_domain(s: &Subst) -> BTreeSet<Atom> {
    s.domain().cloned().collect()
}

impl fmt::Display for Prepared {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let items: Vec<String> = self.constraints.iter().map(Constraint::to_string).collect();
        write!(f, "{{{}}}", items.join("; "))
    }
}
