//! Evaluation: idempotence on successes and commutation with ground message
//! substitutions.

mod common;

use bitype_core::{apply, evaluate, is_message, Atom, Subst, Term};
use common::{message, open_term};
use proptest::prelude::*;

fn ground_substitution() -> impl Strategy<Value = Subst> {
    (message(3), message(3), message(3)).prop_map(|(x, y, z)| {
        Subst::from_pairs([
            (Atom::var("x"), x),
            (Atom::var("y"), y),
            (Atom::var("z"), z),
        ])
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 10_000, max_global_rejects: 100_000, ..ProptestConfig::default() })]

    #[test]
    fn substitution_commutes_with_evaluation(
        t in open_term(4).prop_filter("depth at most 5", |t| t.depth() <= 5),
        sigma in ground_substitution(),
    ) {
        for (_, m) in sigma.iter() {
            prop_assert!(is_message(m) && m.is_ground() && m.depth() <= 5);
        }
        if let Ok(u) = evaluate(&t) {
            prop_assert_eq!(evaluate(&apply(&sigma, &t)), Ok(apply(&sigma, &u)));
        }
    }

    #[test]
    fn evaluation_is_idempotent(t in open_term(4).prop_filter("depth at most 5", |t| t.depth() <= 5)) {
        if let Ok(u) = evaluate(&t) {
            prop_assert_eq!(evaluate(&u), Ok(u.clone()));
            prop_assert!(is_message(&u), "{} is not a message", u);
        }
    }

    #[test]
    fn messages_evaluate_to_themselves(m in message(5)) {
        prop_assert!(is_message(&m));
        prop_assert_eq!(evaluate(&m), Ok(m.clone()));
    }
}

#[test]
fn the_generators_reach_successful_evaluations() {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::TestRunner;
    let mut runner = TestRunner::deterministic();
    let strategy = open_term(4);
    let mut successes = 0;
    let mut with_destructors = 0;
    for _ in 0..2_000 {
        let t: Term = strategy.new_tree(&mut runner).unwrap().current();
        if evaluate(&t).is_ok() {
            successes += 1;
            with_destructors += usize::from(t.has_destructor());
        }
    }
    assert!(successes >= 200, "only {successes} successful evaluations");
    assert!(
        with_destructors >= 50,
        "only {with_destructors} successful destructor applications"
    );
}
