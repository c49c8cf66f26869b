#![allow(dead_code)]

//! Generators shared by the property suites.

use bitype_core::{Atom, Label, Mult, NonceType, Term, Type};
use proptest::prelude::*;

pub mod expansion;
pub mod messages;
pub mod subtyping;

pub fn label() -> impl Strategy<Value = Label> {
    prop::sample::select(Label::ALL.to_vec())
}

pub fn mult() -> impl Strategy<Value = Mult> {
    prop_oneof![Just(Mult::One), Just(Mult::Inf)]
}

pub fn key_atom() -> impl Strategy<Value = Atom> {
    prop::sample::select(vec!["k1", "k2"]).prop_map(Atom::key)
}

/// Refinement types over the nonces `m`, `n`, `p`.
pub fn refinement() -> impl Strategy<Value = Type> {
    let names = prop::sample::select(vec!["m", "n", "p"]);
    (label(), label(), mult(), names.clone(), names).prop_map(|(l, r, m, a, b)| {
        Type::refine(
            NonceType::new(l, m, Atom::nonce(a)),
            NonceType::new(r, m, Atom::nonce(b)),
        )
    })
}

/// Security types with at most `depth` nested constructors.
pub fn security_type(depth: u32) -> BoxedStrategy<Type> {
    let leaf = prop_oneof![4 => label().prop_map(Type::Label), 1 => refinement()];
    leaf.prop_recursive(depth, 32, 2, |inner| {
        prop_oneof![
            4 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Type::pair(a, b)),
            2 => (label(), inner.clone()).prop_map(|(l, t)| Type::key(l, t)),
            1 => (inner.clone(), key_atom()).prop_map(|(t, k)| Type::enc(t, k)),
            1 => (inner.clone(), key_atom()).prop_map(|(t, k)| Type::aenc(t, k)),
            1 => (inner.clone(), inner).prop_map(|(a, b)| Type::union(a, b)),
        ]
    })
    .boxed()
}

pub fn constant(name: &str) -> Term {
    Atom::constant(name).into()
}

pub fn nonce(name: &str) -> Term {
    Atom::nonce(name).into()
}

pub fn key(name: &str) -> Term {
    Atom::key(name).into()
}

pub fn var(name: &str) -> Term {
    Atom::var(name).into()
}

/// Ground atoms: two constants, two nonces, two keys.
pub fn ground_atom() -> impl Strategy<Value = Term> {
    prop_oneof![
        Just(constant("a")),
        Just(constant("b")),
        Just(nonce("n")),
        Just(nonce("m")),
        Just(key("k1")),
        Just(key("k2")),
    ]
}

pub fn key_term() -> impl Strategy<Value = Term> {
    key_atom().prop_map(Term::from)
}

/// Ground messages of depth at most `depth`.
pub fn message(depth: u32) -> BoxedStrategy<Term> {
    ground_atom()
        .prop_recursive(depth, 32, 2, |inner| {
            prop_oneof![
                3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
                1 => inner.clone().prop_map(Term::h),
                2 => (inner.clone(), key_term()).prop_map(|(m, k)| Term::enc(m, k)),
                1 => (inner.clone(), key_term()).prop_map(|(m, k)| Term::aenc(m, Term::pk(k))),
                1 => (inner, key_term()).prop_map(|(m, k)| Term::sign(m, k)),
                1 => key_term().prop_map(Term::pk),
                1 => key_term().prop_map(Term::vk),
            ]
        })
        .boxed()
}

/// Terms over ground atoms and the variables `x`, `y`, `z`, using every
/// function symbol, with extra weight on destructor redexes.
pub fn open_term(depth: u32) -> BoxedStrategy<Term> {
    let leaf = prop_oneof![3 => ground_atom(), 2 => prop::sample::select(vec!["x", "y", "z"]).prop_map(var)];
    leaf.prop_recursive(depth, 48, 2, |inner| {
        let keyish = prop_oneof![
            6 => key_term(),
            1 => prop::sample::select(vec!["x", "y"]).prop_map(var),
            1 => inner.clone(),
        ];
        prop_oneof![
            4 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::pair(a, b)),
            2 => inner.clone().prop_map(Term::h),
            1 => keyish.clone().prop_map(Term::pk),
            1 => keyish.clone().prop_map(Term::vk),
            3 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::enc(m, k)),
            2 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::aenc(m, Term::pk(k))),
            2 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::sign(m, k)),
            1 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::dec(m, k)),
            1 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::adec(m, k)),
            1 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::checksign(m, Term::vk(k))),
            1 => inner.clone().prop_map(Term::fst),
            1 => inner.clone().prop_map(Term::snd),
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::fst(Term::pair(a, b))),
            3 => (inner.clone(), inner.clone()).prop_map(|(a, b)| Term::snd(Term::pair(a, b))),
            3 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::dec(Term::enc(m, k.clone()), k)),
            2 => (inner.clone(), keyish.clone()).prop_map(|(m, k)| Term::adec(Term::aenc(m, Term::pk(k.clone())), k)),
            2 => (inner, keyish).prop_map(|(m, k)| Term::checksign(Term::sign(m, k.clone()), Term::vk(k))),
        ]
    })
    .boxed()
}
