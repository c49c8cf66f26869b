//! Reference oracles for subtyping.

use std::collections::BTreeSet;

use bitype_core::{subtype, Atom, Label, Type};
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

/// Every supertype of `t`, computed as the closure of the subtyping axioms
/// under the pair and ciphertext congruences.
pub fn supertypes(t: &Type) -> BTreeSet<Type> {
    let mut out = BTreeSet::from([t.clone(), Type::HL]);
    match t {
        Type::Label(_) | Type::Refine(..) | Type::Union(..) => {}
        Type::Key(l, _) => {
            out.insert(Type::Label(*l));
        }
        Type::Pair(a, b) => {
            let (ua, ub) = (supertypes(a), supertypes(b));
            for x in &ua {
                for y in &ub {
                    out.insert(Type::pair(x.clone(), y.clone()));
                }
            }
            if ua.contains(&Type::LL) && ub.contains(&Type::LL) {
                out.insert(Type::LL);
            }
            if ua.contains(&Type::HH) || ub.contains(&Type::HH) {
                out.insert(Type::HH);
            }
        }
        Type::Enc(u, k) => out.extend(supertypes(u).into_iter().map(|v| Type::enc(v, k.clone()))),
        Type::Aenc(u, k) => out.extend(supertypes(u).into_iter().map(|v| Type::aenc(v, k.clone()))),
    }
    out
}

/// All types of depth at most two over a small alphabet.
pub fn small_types() -> Vec<Type> {
    let k = Atom::key("k");
    let mut all: Vec<Type> = Label::ALL.iter().map(|l| Type::Label(*l)).collect();
    for _ in 0..2 {
        let mut next = Vec::new();
        for a in &all {
            for b in &all {
                next.push(Type::pair(a.clone(), b.clone()));
            }
            next.push(Type::key(Label::LL, a.clone()));
            next.push(Type::key(Label::HH, a.clone()));
            next.push(Type::enc(a.clone(), k.clone()));
        }
        all.extend(next);
    }
    all.sort();
    all.dedup();
    all
}

/// A supertype of `t` reached by one round of axiom and congruence steps,
/// where `pick` selects among the applicable steps.
pub fn step_up(t: &Type, pick: &mut impl Iterator<Item = u8>) -> Type {
    let mut options = vec![t.clone(), Type::HL];
    match t {
        Type::Key(l, _) => options.push(Type::Label(*l)),
        Type::Pair(a, b) => {
            if **a == Type::LL && **b == Type::LL {
                options.push(Type::LL);
            }
            if **a == Type::HH || **b == Type::HH {
                options.push(Type::HH);
            }
            options.push(Type::pair(step_up(a, pick), step_up(b, pick)));
        }
        Type::Enc(u, k) => options.push(Type::enc(step_up(u, pick), k.clone())),
        Type::Aenc(u, k) => options.push(Type::aenc(step_up(u, pick), k.clone())),
        _ => {}
    }
    let i = usize::from(pick.next().unwrap_or(0)) % options.len();
    options.swap_remove(i)
}

/// The inversion facts for one related pair, with `HL` the top label, `LL`
/// the public label and `HH` the secret label.
pub fn inversions(t: &Type, u: &Type) -> Result<(), TestCaseError> {
    if !subtype(t, u) {
        return Ok(());
    }
    let is_label = |x: &Type, l: Label| *x == Type::Label(l);
    if is_label(t, Label::HL) {
        prop_assert_eq!(u, &Type::HL, "item 1");
    }
    if is_label(t, Label::LL) {
        prop_assert!(
            is_label(u, Label::LL) || is_label(u, Label::HL),
            "item 2: {}",
            u
        );
    }
    if is_label(t, Label::HH) {
        prop_assert!(
            is_label(u, Label::HH) || is_label(u, Label::HL),
            "item 3: {}",
            u
        );
    }
    if let Type::Pair(t1, t2) = t {
        prop_assert!(
            matches!(u, Type::Label(_) | Type::Pair(..)),
            "item 4: {}",
            u
        );
        if is_label(u, Label::LL) {
            prop_assert!(subtype(t1, &Type::LL) && subtype(t2, &Type::LL), "item 6");
        }
        if is_label(u, Label::HH) {
            prop_assert!(subtype(t1, &Type::HH) || subtype(t2, &Type::HH), "item 7");
        }
    }
    if let Type::Pair(u1, u2) = u {
        match t {
            Type::Pair(t1, t2) => prop_assert!(subtype(t1, u1) && subtype(t2, u2), "item 5"),
            _ => prop_assert!(false, "item 5: {} is not a pair", t),
        }
    }
    match (t, u) {
        (Type::Enc(a, k1), Type::Enc(b, k2)) | (Type::Aenc(a, k1), Type::Aenc(b, k2)) => {
            prop_assert!(k1 == k2 && subtype(a, b), "items 8 to 11");
        }
        (_, Type::Enc(..) | Type::Aenc(..)) => prop_assert!(false, "items 8 and 9: {} <: {}", t, u),
        (Type::Enc(..) | Type::Aenc(..), _) => prop_assert_eq!(u, &Type::HL, "items 10 and 11"),
        _ => {}
    }
    if matches!(u, Type::Refine(..) | Type::Key(..)) {
        prop_assert_eq!(t, u, "items 12 and 15");
    }
    if matches!(t, Type::Refine(..) | Type::Union(..)) || matches!(u, Type::Union(..)) {
        prop_assert!(t == u || *u == Type::HL, "items 13 and 14");
    }
    if is_label(u, Label::LL) {
        prop_assert!(
            matches!(
                t,
                Type::Pair(..) | Type::Key(Label::LL, _) | Type::Label(Label::LL)
            ),
            "item 16: {}",
            t
        );
    }
    if is_label(u, Label::HH) {
        prop_assert!(
            matches!(
                t,
                Type::Pair(..) | Type::Key(Label::HH, _) | Type::Label(Label::HH)
            ),
            "item 17: {}",
            t
        );
    }
    Ok(())
}
