//! Message pairs for typing at LL.

use bitype_core::{Atom, Label, Mult, NonceType, Sym, Term, Type, TypeEnv};
use proptest::prelude::*;

use super::{constant, key, nonce};

pub fn env() -> TypeEnv {
    let mut env = TypeEnv::new();
    for (n, l) in [("nh1", Label::HH), ("nh2", Label::HH), ("nl", Label::LL)] {
        let a = Atom::nonce(n);
        env.insert(a.clone(), Type::nonce(NonceType::new(l, Mult::One, a)));
    }
    env.insert(Atom::key("kl"), Type::key(Label::LL, Type::LL));
    env.insert(Atom::key("kh"), Type::key(Label::HH, Type::HH));
    env.insert(
        Atom::key("kp"),
        Type::key(Label::HH, Type::pair(Type::LL, Type::HH)),
    );
    env
}

pub fn leaf() -> impl Strategy<Value = Term> {
    prop::sample::select(vec![
        constant("a"),
        constant("b"),
        nonce("nh1"),
        nonce("nh2"),
        nonce("nl"),
        key("kl"),
        key("kh"),
    ])
}

pub fn key_leaf() -> BoxedStrategy<Term> {
    prop::sample::select(vec![key("kl"), key("kh"), key("kp")]).boxed()
}

/// Pairs of ground messages that mostly share their structure, with
/// occasional divergence in atoms, keys and head symbols.
pub fn message_pair() -> BoxedStrategy<(Term, Term)> {
    let leaves = (leaf(), leaf(), 0u8..4)
        .prop_map(|(a, b, same)| if same > 0 { (a.clone(), a) } else { (a, b) });
    leaves
        .prop_recursive(3, 24, 2, |inner| {
            let keys = (key_leaf(), key_leaf(), 0u8..6).prop_map(|(k, k2, same)| if same > 0 { (k.clone(), k) } else { (k, k2) }).boxed();
            prop_oneof![
                3 => (inner.clone(), inner.clone()).prop_map(|((a, b), (c, d))| (Term::pair(a, c), Term::pair(b, d))),
                2 => inner.clone().prop_map(|(a, b)| (Term::h(a), Term::h(b))),
                3 => (inner.clone(), keys.clone()).prop_map(|((a, b), (k, k2))| (Term::enc(a, k), Term::enc(b, k2))),
                2 => (inner.clone(), keys.clone())
                    .prop_map(|((a, b), (k, k2))| (Term::aenc(a, Term::pk(k)), Term::aenc(b, Term::pk(k2)))),
                2 => (inner.clone(), keys.clone()).prop_map(|((a, b), (k, k2))| (Term::sign(a, k), Term::sign(b, k2))),
                1 => keys.clone().prop_map(|(k, k2)| (Term::pk(k), Term::pk(k2))),
                1 => keys.prop_map(|(k, k2)| (Term::vk(k), Term::vk(k2))),
                1 => (inner.clone(), inner).prop_map(|((a, b), (c, d))| (Term::pair(a, c), Term::h(Term::pair(b, d)))),
            ]
        })
        .boxed()
}

/// The head-symbol and key agreement for a pair typed at LL.
pub fn same_head(m: &Term, n: &Term) -> bool {
    match (m.as_app(), n.as_app()) {
        (Some((f, xs)), Some((g, ys))) => {
            f == g && (!matches!(f, Sym::Enc | Sym::Aenc | Sym::Sign) || xs[1] == ys[1])
        }
        (None, None) => m == n || (m.is_var() && n.is_var()),
        _ => false,
    }
}
