//! Message typing at LL: both sides share their head symbol and key, and the
//! generated constraints behave monotonically under the consistency check.

mod common;

use std::cell::Cell;

use bitype_core::{
    check_const, check_term, ConstraintEntry, ConstraintSet, Constraints, Term, Type,
};
use common::constant;
use common::key;
use common::messages::{env, message_pair, same_head};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

#[test]
fn ll_typed_messages_share_their_head_symbol() {
    let env = env();
    let successes = Cell::new(0u32);
    let mut runner = TestRunner::new(Config {
        cases: 12_000,
        ..Config::default()
    });
    runner
        .run(&message_pair(), |(m, n)| {
            if check_term(&env, &m, &n, &Type::LL).is_ok() {
                successes.set(successes.get() + 1);
                prop_assert!(same_head(&m, &n), "{} ~ {} typed at LL", m, n);
            }
            Ok(())
        })
        .unwrap();
    assert!(
        successes.get() >= 1_000,
        "only {} pairs typed at LL",
        successes.get()
    );
}

#[test]
fn divergent_heads_are_rejected() {
    let env = env();
    let a = constant("a");
    assert!(check_term(
        &env,
        &Term::h(a.clone()),
        &Term::pair(a.clone(), a.clone()),
        &Type::LL
    )
    .is_err());
    assert!(check_term(&env, &a, &constant("b"), &Type::LL).is_err());
    assert!(check_term(
        &env,
        &Term::enc(a.clone(), key("kl")),
        &Term::enc(a, key("kh")),
        &Type::LL
    )
    .is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2_000))]

    /// Dropping constraints never turns a consistent entry inconsistent.
    #[test]
    fn consistency_is_antitone(pairs in prop::collection::vec(message_pair(), 1..5), mask in any::<u8>()) {
        let env = env();
        let mut all = Constraints::new();
        for (m, n) in &pairs {
            if let Ok(c) = check_term(&env, m, n, &Type::LL) {
                all.extend(c);
            }
        }
        let whole = ConstraintSet::single(ConstraintEntry::new(all.clone(), env.clone()));
        if check_const(&whole) {
            let part: Constraints = all.iter().enumerate().filter(|(i, _)| mask & (1 << (i % 8)) != 0).map(|(_, c)| c.clone()).collect();
            prop_assert!(check_const(&ConstraintSet::single(ConstraintEntry::new(part, env))));
        }
    }
}
