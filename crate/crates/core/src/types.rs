//! Security types, subtyping, typing environments and session expansion.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::term::{Atom, AtomKind};

/// A security label: confidentiality and integrity, each high or low.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    /// Low confidentiality, low integrity: public.
    LL,
    /// High confidentiality, low integrity: the top of the lattice.
    HL,
    /// High confidentiality, high integrity: secret.
    HH,
}

impl Label {
    /// All labels.
    pub const ALL: [Label; 3] = [Label::LL, Label::HL, Label::HH];

    /// True when the attacker may not learn values of this label.
    pub fn high_confidentiality(self) -> bool {
        matches!(self, Label::HL | Label::HH)
    }

    /// True when the attacker may not forge values of this label.
    pub fn high_integrity(self) -> bool {
        self == Label::HH
    }

    /// Concrete syntax.
    pub fn as_str(self) -> &'static str {
        match self {
            Label::LL => "LL",
            Label::HL => "HL",
            Label::HH => "HH",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Nonce multiplicity: generated once, or once per replicated session.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Mult {
    One,
    Inf,
}

impl fmt::Display for Mult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mult::One => "1",
            Mult::Inf => "inf",
        })
    }
}

/// A nonce type `τ^{l,a}_n`: the label, multiplicity and the name it describes.
///
/// The atom is a bound nonce, or for constants and free names with label LL,
/// the constant or free name itself.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NonceType {
    pub label: Label,
    pub mult: Mult,
    pub atom: Atom,
}

impl NonceType {
    /// Builds a nonce type.
    pub fn new(label: Label, mult: Mult, atom: Atom) -> Self {
        NonceType { label, mult, atom }
    }

    /// The same nonce type for the given session index, with multiplicity one.
    pub fn for_session(&self, i: u32) -> Self {
        NonceType {
            label: self.label,
            mult: Mult::One,
            atom: self.atom.with_index(Some(i)),
        }
    }
}

impl fmt::Display for NonceType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "t{{{},{},{}}}", self.label, self.mult, self.atom)
    }
}

/// A security type.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Type {
    Label(Label),
    Pair(Arc<Type>, Arc<Type>),
    Key(Label, Arc<Type>),
    Enc(Arc<Type>, Atom),
    Aenc(Arc<Type>, Atom),
    Refine(NonceType, NonceType),
    Union(Arc<Type>, Arc<Type>),
}

impl Type {
    /// `LL`.
    pub const LL: Type = Type::Label(Label::LL);
    /// `HL`.
    pub const HL: Type = Type::Label(Label::HL);
    /// `HH`.
    pub const HH: Type = Type::Label(Label::HH);

    /// `a * b`.
    pub fn pair(a: Type, b: Type) -> Type {
        Type::Pair(Arc::new(a), Arc::new(b))
    }

    /// `key^l(t)`.
    pub fn key(l: Label, t: Type) -> Type {
        Type::Key(l, Arc::new(t))
    }

    /// `enc(t, k)`.
    pub fn enc(t: Type, k: Atom) -> Type {
        Type::Enc(Arc::new(t), k)
    }

    /// `aenc(t, k)`.
    pub fn aenc(t: Type, k: Atom) -> Type {
        Type::Aenc(Arc::new(t), k)
    }

    /// `a \/ b`.
    pub fn union(a: Type, b: Type) -> Type {
        Type::Union(Arc::new(a), Arc::new(b))
    }

    /// The refinement `[l ; r]`.
    pub fn refine(l: NonceType, r: NonceType) -> Type {
        Type::Refine(l, r)
    }

    /// The abbreviation `τ` for `[τ ; τ]`.
    pub fn nonce(t: NonceType) -> Type {
        Type::Refine(t.clone(), t)
    }

    /// Right-nested tuple type.
    ///
    /// # Panics
    /// Panics on an empty vector.
    pub fn tuple(items: Vec<Type>) -> Type {
        let mut it = items.into_iter().rev();
        let mut acc = it.next().expect("empty tuple type");
        for t in it {
            acc = Type::pair(t, acc);
        }
        acc
    }

    /// Right-nested union of the given disjuncts.
    ///
    /// # Panics
    /// Panics on an empty vector.
    pub fn union_of(items: Vec<Type>) -> Type {
        let mut it = items.into_iter().rev();
        let mut acc = it.next().expect("empty union");
        for t in it {
            acc = Type::union(t, acc);
        }
        acc
    }

    /// True for union types.
    pub fn is_union(&self) -> bool {
        matches!(self, Type::Union(..))
    }

    /// The label, for label types.
    pub fn as_label(&self) -> Option<Label> {
        match self {
            Type::Label(l) => Some(*l),
            _ => None,
        }
    }

    /// The two nonce types of a refinement.
    pub fn as_refine(&self) -> Option<(&NonceType, &NonceType)> {
        match self {
            Type::Refine(l, r) => Some((l, r)),
            _ => None,
        }
    }

    /// A refinement whose two sides have multiplicity one.
    pub fn as_finite_refine(&self) -> Option<(&NonceType, &NonceType)> {
        self.as_refine()
            .filter(|(l, r)| l.mult == Mult::One && r.mult == Mult::One)
    }

    /// A refinement whose two sides have infinite multiplicity.
    pub fn as_infinite_refine(&self) -> Option<(&NonceType, &NonceType)> {
        self.as_refine()
            .filter(|(l, r)| l.mult == Mult::Inf && r.mult == Mult::Inf)
    }

    /// Keys mentioned by ciphertext types inside this type.
    pub fn keys(&self) -> BTreeSet<Atom> {
        let mut out = BTreeSet::new();
        self.collect_keys(&mut out);
        out
    }

    fn collect_keys(&self, out: &mut BTreeSet<Atom>) {
        match self {
            Type::Label(_) | Type::Refine(..) => {}
            Type::Pair(a, b) | Type::Union(a, b) => {
                a.collect_keys(out);
                b.collect_keys(out);
            }
            Type::Key(_, t) => t.collect_keys(out),
            Type::Enc(t, k) | Type::Aenc(t, k) => {
                out.insert(k.clone());
                t.collect_keys(out);
            }
        }
    }

    /// Nesting depth of type constructors (labels and refinements have depth 0).
    pub fn depth(&self) -> usize {
        match self {
            Type::Label(_) | Type::Refine(..) => 0,
            Type::Pair(a, b) | Type::Union(a, b) => 1 + a.depth().max(b.depth()),
            Type::Key(_, t) | Type::Enc(t, _) | Type::Aenc(t, _) => 1 + t.depth(),
        }
    }

    /// True when some refinement inside has infinite multiplicity.
    pub fn has_infinite_refine(&self) -> bool {
        match self {
            Type::Label(_) => false,
            Type::Refine(l, r) => l.mult == Mult::Inf || r.mult == Mult::Inf,
            Type::Pair(a, b) | Type::Union(a, b) => {
                a.has_infinite_refine() || b.has_infinite_refine()
            }
            Type::Key(_, t) | Type::Enc(t, _) | Type::Aenc(t, _) => t.has_infinite_refine(),
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, prec: u8) -> fmt::Result {
        let needs = |p: u8| prec > p;
        match self {
            Type::Label(l) => write!(f, "{l}"),
            Type::Refine(l, r) if l == r => write!(f, "{l}"),
            Type::Refine(l, r) => write!(f, "[{l} ; {r}]"),
            Type::Key(l, t) => {
                write!(f, "key^{l}(")?;
                t.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Type::Enc(t, k) => {
                write!(f, "enc(")?;
                t.fmt_prec(f, 0)?;
                write!(f, ",{k})")
            }
            Type::Aenc(t, k) => {
                write!(f, "aenc(")?;
                t.fmt_prec(f, 0)?;
                write!(f, ",{k})")
            }
            Type::Pair(a, b) => {
                if needs(1) {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 2)?;
                write!(f, " * ")?;
                b.fmt_prec(f, 1)?;
                if needs(1) {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Type::Union(a, b) => {
                if needs(0) {
                    write!(f, "(")?;
                }
                a.fmt_prec(f, 1)?;
                write!(f, " \\/ ")?;
                b.fmt_prec(f, 0)?;
                if needs(0) {
                    write!(f, ")")?;
                }
                Ok(())
            }
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Decides `t1 <: t2`.
///
/// The relation is the reflexive-transitive closure of the axioms
/// `T <: HL`, `LL * LL <: LL`, `HH * T <: HH`, `T * HH <: HH`,
/// `key^l(T) <: l` and the congruences for pairs and ciphertexts.
pub fn subtype(t1: &Type, t2: &Type) -> bool {
    if t1 == t2 || *t2 == Type::HL {
        return true;
    }
    match t2 {
        Type::Label(Label::LL) => match t1 {
            Type::Key(Label::LL, _) => true,
            Type::Pair(a, b) => subtype(a, &Type::LL) && subtype(b, &Type::LL),
            _ => false,
        },
        Type::Label(Label::HH) => match t1 {
            Type::Key(Label::HH, _) => true,
            Type::Pair(a, b) => subtype(a, &Type::HH) || subtype(b, &Type::HH),
            _ => false,
        },
        Type::Pair(c, d) => match t1 {
            Type::Pair(a, b) => subtype(a, c) && subtype(b, d),
            _ => false,
        },
        Type::Enc(u, k) => match t1 {
            Type::Enc(t, k1) => k == k1 && subtype(t, u),
            _ => false,
        },
        Type::Aenc(u, k) => match t1 {
            Type::Aenc(t, k1) => k == k1 && subtype(t, u),
            _ => false,
        },
        _ => false,
    }
}

/// The disjuncts of the top-level union spine of `t`, without duplicates.
pub fn type_branches(t: &Type) -> Vec<Type> {
    fn go(t: &Type, out: &mut Vec<Type>) {
        match t {
            Type::Union(a, b) => {
                go(a, out);
                go(b, out);
            }
            _ => {
                if !out.contains(t) {
                    out.push(t.clone());
                }
            }
        }
    }
    let mut out = Vec::new();
    go(t, &mut out);
    out
}

/// Expands `t` to `n` sessions.
pub fn expand_type(t: &Type, n: u32) -> Type {
    match t {
        Type::Label(_) => t.clone(),
        Type::Pair(a, b) => Type::pair(expand_type(a, n), expand_type(b, n)),
        Type::Union(a, b) => Type::union(expand_type(a, n), expand_type(b, n)),
        Type::Key(l, u) => Type::key(*l, expand_type(u, n)),
        Type::Enc(u, k) => Type::enc(expand_type(u, n), k.clone()),
        Type::Aenc(u, k) => Type::aenc(expand_type(u, n), k.clone()),
        Type::Refine(l, r) if l.mult == Mult::Inf => {
            let n = n.max(1);
            Type::union_of(
                (1..=n)
                    .map(|j| Type::Refine(l.for_session(j), r.for_session(j)))
                    .collect(),
            )
        }
        Type::Refine(..) => t.clone(),
    }
}

/// A typing environment: an ordered mapping from nonces, keys and variables to types.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TypeEnv {
    map: IndexMap<Atom, Type>,
}

impl TypeEnv {
    /// The empty environment.
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds an environment from bindings; later bindings win.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Atom, Type)>) -> Self {
        TypeEnv {
            map: pairs.into_iter().collect(),
        }
    }

    /// The type of `a`, if bound.
    pub fn get(&self, a: &Atom) -> Option<&Type> {
        self.map.get(a)
    }

    /// True when `a` is bound.
    pub fn contains(&self, a: &Atom) -> bool {
        self.map.contains_key(a)
    }

    /// Binds `a` to `t`, replacing any previous binding.
    pub fn insert(&mut self, a: Atom, t: Type) {
        self.map.insert(a, t);
    }

    /// A copy with `a` bound to `t`.
    pub fn with(&self, a: Atom, t: Type) -> Self {
        let mut out = self.clone();
        out.insert(a, t);
        out
    }

    /// Removes the binding of `a`.
    pub fn remove(&mut self, a: &Atom) -> Option<Type> {
        self.map.shift_remove(a)
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
    pub fn iter(&self) -> impl Iterator<Item = (&Atom, &Type)> {
        self.map.iter()
    }

    /// The domain in insertion order.
    pub fn domain(&self) -> impl Iterator<Item = &Atom> {
        self.map.keys()
    }

    /// The nonce type bound to a nonce, if any.
    pub fn nonce_type(&self, n: &Atom) -> Option<&NonceType> {
        match self.map.get(n) {
            Some(Type::Refine(l, r)) if l == r && n.is_nonce() => Some(l),
            _ => None,
        }
    }

    /// True when no two shared bindings disagree.
    pub fn compatible(&self, other: &TypeEnv) -> bool {
        let (small, large) = if self.len() <= other.len() {
            (self, other)
        } else {
            (other, self)
        };
        small
            .map
            .iter()
            .all(|(a, t)| large.map.get(a).is_none_or(|u| u == t))
    }

    /// The union of two compatible environments.
    pub fn merge(&self, other: &TypeEnv) -> TypeEnv {
        let mut out = self.clone();
        for (a, t) in other.iter() {
            if !out.contains(a) {
                out.insert(a.clone(), t.clone());
            }
        }
        out
    }

    /// True when some binding has a top-level union type.
    pub fn has_union(&self) -> bool {
        self.map.values().any(Type::is_union)
    }

    /// True when `other` binds a superset of this environment's bindings.
    pub fn is_sub_env_of(&self, other: &TypeEnv) -> bool {
        self.map.iter().all(|(a, t)| other.get(a) == Some(t))
    }
}

impl fmt::Display for TypeEnv {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, (a, t)) in self.map.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{a}:{t}")?;
        }
        write!(f, "}}")
    }
}

/// Checks well-formedness of an environment.
///
/// Nonces must carry their own nonce type, keys a key type, and every key
/// mentioned inside a stored type must itself be bound.
pub fn well_formed(env: &TypeEnv) -> bool {
    env.iter().all(|(a, t)| {
        let shape_ok = match a.kind() {
            AtomKind::BoundNonce => matches!(t, Type::Refine(l, r) if l == r && l.atom == *a),
            AtomKind::Key => matches!(t, Type::Key(..)),
            AtomKind::Var => true,
            _ => false,
        };
        shape_ok
            && t.keys()
                .iter()
                .all(|k| env.get(k).is_some_and(|kt| matches!(kt, Type::Key(..))))
    })
}

/// All union-free environments obtained by choosing one disjunct per binding.
pub fn branches(env: &TypeEnv) -> Vec<TypeEnv> {
    let mut out = vec![TypeEnv::new()];
    for (a, t) in env.iter() {
        let opts = type_branches(t);
        if opts.len() == 1 {
            for e in &mut out {
                e.insert(a.clone(), opts[0].clone());
            }
            continue;
        }
        let mut next = Vec::with_capacity(out.len() * opts.len());
        for e in &out {
            for o in &opts {
                next.push(e.with(a.clone(), o.clone()));
            }
        }
        out = next;
    }
    out
}

/// The number of environments [`branches`] would return.
pub fn branch_count(env: &TypeEnv) -> u128 {
    env.iter()
        .map(|(_, t)| type_branches(t).len() as u128)
        .product()
}

/// Renames `env` for session `i`.
///
/// Variables gain index `i`, nonces of infinite multiplicity become their
/// index-`i` copy with multiplicity one, and keys and finite nonces stay.
pub fn rename_env(env: &TypeEnv, i: u32) -> TypeEnv {
    let mut out = TypeEnv::new();
    for (a, t) in env.iter() {
        match a.kind() {
            AtomKind::Var => out.insert(a.with_index(Some(i)), t.clone()),
            AtomKind::BoundNonce => match t {
                Type::Refine(l, r) if l == r && l.mult == Mult::Inf => {
                    let nt = l.for_session(i);
                    out.insert(nt.atom.clone(), Type::nonce(nt));
                }
                _ => out.insert(a.clone(), t.clone()),
            },
            _ => out.insert(a.clone(), t.clone()),
        }
    }
    out
}

/// Renames `env` for session `i` and expands all stored types to `n` sessions.
pub fn expand_env(env: &TypeEnv, i: u32, n: u32) -> TypeEnv {
    let renamed = rename_env(env, i);
    TypeEnv::from_pairs(renamed.iter().map(|(a, t)| {
        let t = match a.kind() {
            AtomKind::BoundNonce => t.clone(),
            _ => expand_type(t, n),
        };
        (a.clone(), t)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nt(l: Label, m: Mult, n: &str) -> NonceType {
        NonceType::new(l, m, Atom::nonce(n))
    }

    #[test]
    fn subtyping_examples() {
        assert!(subtype(&Type::pair(Type::LL, Type::LL), &Type::LL));
        assert!(subtype(&Type::HH, &Type::HL));
        assert!(subtype(&Type::key(Label::HH, Type::LL), &Type::HH));
        assert!(subtype(&Type::key(Label::HH, Type::LL), &Type::HL));
        assert!(!subtype(&Type::HH, &Type::LL));
        assert!(!subtype(&Type::HL, &Type::HH));
        assert!(subtype(
            &Type::pair(Type::LL, Type::key(Label::HH, Type::LL)),
            &Type::HH
        ));
        let k = Atom::key("k");
        let e1 = Type::enc(Type::pair(Type::LL, Type::LL), k.clone());
        assert!(subtype(&e1, &Type::enc(Type::LL, k.clone())));
        assert!(!subtype(&e1, &Type::enc(Type::LL, Atom::key("j"))));
        assert!(!subtype(&e1, &Type::aenc(Type::LL, k)));
    }

    #[test]
    fn wellformedness() {
        let k = Atom::key("k");
        assert!(well_formed(&TypeEnv::from_pairs([(
            k.clone(),
            Type::key(Label::HH, Type::LL)
        )])));
        assert!(!well_formed(&TypeEnv::from_pairs([(
            Atom::var("x"),
            Type::enc(Type::LL, k)
        )])));
        assert!(well_formed(&TypeEnv::new()));
        let n = Atom::nonce("n");
        let good = TypeEnv::from_pairs([(n.clone(), Type::nonce(nt(Label::HH, Mult::One, "n")))]);
        assert!(well_formed(&good));
        let bad = TypeEnv::from_pairs([(n, Type::nonce(nt(Label::HH, Mult::One, "m")))]);
        assert!(!well_formed(&bad));
    }

    #[test]
    fn branch_enumeration() {
        let x = Atom::var("x");
        let y = Atom::var("y");
        let k = Atom::key("k");
        let env = TypeEnv::from_pairs([(x.clone(), Type::union(Type::LL, Type::HH))]);
        let b = branches(&env);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].get(&x), Some(&Type::LL));
        assert_eq!(b[1].get(&x), Some(&Type::HH));
        let flat = TypeEnv::from_pairs([(x.clone(), Type::LL)]);
        assert_eq!(branches(&flat), vec![flat.clone()]);
        let two = TypeEnv::from_pairs([
            (x, Type::union(Type::LL, Type::HH)),
            (y, Type::union(Type::HL, Type::enc(Type::LL, k))),
        ]);
        assert_eq!(branches(&two).len(), 4);
        assert_eq!(branch_count(&two), 4);
    }

    #[test]
    fn expansion_of_infinite_refinement() {
        let t = Type::refine(nt(Label::LL, Mult::Inf, "m"), nt(Label::LL, Mult::Inf, "p"));
        let e = expand_type(&t, 2);
        let j = |i| {
            Type::refine(
                nt(Label::LL, Mult::Inf, "m").for_session(i),
                nt(Label::LL, Mult::Inf, "p").for_session(i),
            )
        };
        assert_eq!(e, Type::union(j(1), j(2)));
        assert_eq!(expand_type(&t, 1), j(1));
        assert_eq!(expand_type(&Type::LL, 7), Type::LL);
        let kt = Type::key(Label::HH, t.clone());
        assert_eq!(expand_type(&kt, 2), Type::key(Label::HH, e));
    }

    #[test]
    fn renaming_and_expanding_environments() {
        let m = Atom::nonce("m");
        let env = TypeEnv::from_pairs([(m.clone(), Type::nonce(nt(Label::HH, Mult::Inf, "m")))]);
        let m1 = m.with_index(Some(1));
        let r = rename_env(&env, 1);
        assert_eq!(
            r,
            TypeEnv::from_pairs([(
                m1.clone(),
                Type::nonce(NonceType::new(Label::HH, Mult::One, m1))
            )])
        );
        let k = TypeEnv::from_pairs([(Atom::key("k"), Type::key(Label::HH, Type::LL))]);
        assert_eq!(expand_env(&k, 2, 3), k);
        let x = Atom::var("x");
        let inf = Type::refine(nt(Label::HH, Mult::Inf, "m"), nt(Label::HH, Mult::Inf, "p"));
        let env = TypeEnv::from_pairs([(x.clone(), inf.clone())]);
        let e = expand_env(&env, 1, 2);
        assert_eq!(e.get(&x.with_index(Some(1))), Some(&expand_type(&inf, 2)));
        assert_eq!(branches(&e).len(), 2);
    }

    #[test]
    fn printing() {
        let k = Atom::key("ks");
        let t = Type::key(
            Label::HH,
            Type::union(
                Type::tuple(vec![
                    Type::LL,
                    Type::HL,
                    Type::nonce(nt(Label::HH, Mult::One, "r")),
                ]),
                Type::pair(Type::pair(Type::LL, Type::LL), Type::enc(Type::HH, k)),
            ),
        );
        assert_eq!(
            t.to_string(),
            "key^HH(LL * HL * t{HH,1,r} \\/ (LL * LL) * enc(HH,ks))"
        );
    }
}
