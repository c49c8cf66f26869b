//! Reference expansion and brute-force branches.

use std::collections::BTreeSet;

use bitype_core::{Atom, Label, Mult, NonceType, Type, TypeEnv};
use proptest::prelude::*;

pub type Flat = Vec<(Atom, Type)>;

pub fn inf(l: Label) -> NonceType {
    NonceType::new(l, Mult::Inf, Atom::nonce("m"))
}

pub fn fin(l: Label) -> NonceType {
    NonceType::new(l, Mult::One, Atom::nonce("p"))
}

pub fn leaf() -> impl Strategy<Value = Type> {
    let l = prop::sample::select(vec![Label::LL, Label::HH]);
    prop_oneof![
        2 => prop::sample::select(Label::ALL.to_vec()).prop_map(Type::Label),
        2 => (l.clone(), l.clone()).prop_map(|(a, b)| Type::refine(inf(a), inf(b))),
        1 => (l.clone(), l).prop_map(|(a, b)| Type::refine(fin(a), fin(b))),
    ]
}

pub fn binding_type() -> BoxedStrategy<Type> {
    leaf()
        .prop_recursive(2, 8, 2, |inner| {
            prop_oneof![
                3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::pair(a, b)),
                1 => inner.clone().prop_map(|t| Type::enc(t, Atom::key("k"))),
                2 => (inner.clone(), inner).prop_map(|(a, b)| Type::union(a, b)),
            ]
        })
        .boxed()
}

pub fn unions(t: &Type) -> usize {
    match t {
        Type::Label(_) | Type::Refine(..) => 0,
        Type::Union(a, b) => 1 + unions(a) + unions(b),
        Type::Pair(a, b) => unions(a) + unions(b),
        Type::Key(_, u) | Type::Enc(u, _) | Type::Aenc(u, _) => unions(u),
    }
}

/// Environments binding `k`, the nonces `m` (one per session) and `p`, and
/// one to three variables, with at most two union types overall.
pub fn environment() -> impl Strategy<Value = TypeEnv> {
    prop::collection::vec(binding_type(), 1..=3)
        .prop_filter("at most two unions", |ts| {
            ts.iter().map(unions).sum::<usize>() <= 2
        })
        .prop_map(|ts| {
            let mut env = TypeEnv::new();
            env.insert(Atom::key("k"), Type::key(Label::HH, Type::LL));
            env.insert(Atom::nonce("m"), Type::nonce(inf(Label::HH)));
            env.insert(Atom::nonce("p"), Type::nonce(fin(Label::HH)));
            for (x, t) in ["x", "y", "z"].iter().zip(ts) {
                env.insert(Atom::var(x), t);
            }
            env
        })
}

/// `[T]^n`, written directly from the definition.
pub fn expand_ref(t: &Type, n: u32) -> Type {
    match t {
        Type::Label(_) => t.clone(),
        Type::Pair(a, b) => Type::pair(expand_ref(a, n), expand_ref(b, n)),
        Type::Union(a, b) => Type::union(expand_ref(a, n), expand_ref(b, n)),
        Type::Key(l, u) => Type::key(*l, expand_ref(u, n)),
        Type::Enc(u, k) => Type::enc(expand_ref(u, n), k.clone()),
        Type::Aenc(u, k) => Type::aenc(expand_ref(u, n), k.clone()),
        Type::Refine(l, r) if l.mult == Mult::Inf => {
            let copies: Vec<Type> = (1..=n)
                .map(|j| {
                    let at = |nt: &NonceType| {
                        NonceType::new(nt.label, Mult::One, nt.atom.with_index(Some(j)))
                    };
                    Type::refine(at(l), at(r))
                })
                .collect();
            copies
                .into_iter()
                .rev()
                .reduce(|acc, t| Type::union(t, acc))
                .expect("n is positive")
        }
        Type::Refine(..) => t.clone(),
    }
}

/// `[Γ]_i^n`, written directly from the definition.
pub fn expand_env_ref(env: &TypeEnv, i: u32, n: u32) -> Flat {
    env.iter()
        .map(|(a, t)| match t {
            _ if a.is_var() => (a.with_index(Some(i)), expand_ref(t, n)),
            Type::Refine(l, _) if a.is_nonce() && l.mult == Mult::Inf => {
                let nt = NonceType::new(l.label, Mult::One, a.with_index(Some(i)));
                (nt.atom.clone(), Type::nonce(nt))
            }
            _ if a.is_nonce() => (a.clone(), t.clone()),
            _ => (a.clone(), expand_ref(t, n)),
        })
        .collect()
}

pub fn disjuncts(t: &Type, out: &mut Vec<Type>) {
    match t {
        Type::Union(a, b) => {
            disjuncts(a, out);
            disjuncts(b, out);
        }
        _ => out.push(t.clone()),
    }
}

/// Every choice of one top-level disjunct per binding, by odometer.
pub fn branches_ref(env: &[(Atom, Type)]) -> BTreeSet<Flat> {
    let choices: Vec<Vec<Type>> = env
        .iter()
        .map(|(_, t)| {
            let mut d = Vec::new();
            disjuncts(t, &mut d);
            d
        })
        .collect();
    let mut out = BTreeSet::new();
    let mut digits = vec![0usize; env.len()];
    loop {
        out.insert(
            env.iter()
                .zip(&digits)
                .zip(&choices)
                .map(|(((a, _), &d), c)| (a.clone(), c[d].clone()))
                .collect(),
        );
        let mut pos = 0;
        while pos < digits.len() {
            digits[pos] += 1;
            if digits[pos] < choices[pos].len() {
                break;
            }
            digits[pos] = 0;
            pos += 1;
        }
        if pos == digits.len() {
            return out;
        }
    }
}

pub fn flat(env: &TypeEnv) -> Flat {
    env.iter().map(|(a, t)| (a.clone(), t.clone())).collect()
}

pub fn env_of(f: &Flat) -> TypeEnv {
    TypeEnv::from_pairs(f.iter().cloned())
}
