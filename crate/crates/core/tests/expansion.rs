//! Expansion to `n` sessions commutes with taking branches, checked against
//! a reference expansion and a brute-force enumeration of branches.

mod common;

use std::collections::BTreeSet;

use bitype_core::{branches, expand_env, expand_type};
use common::expansion::{
    branches_ref, env_of, environment, expand_env_ref, expand_ref, flat, Flat,
};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig { cases: 500, max_global_rejects: 10_000, ..ProptestConfig::default() })]

    #[test]
    fn branches_commute_with_expansion(env in environment(), i in 1u32..=3, n in 1u32..=3) {
        for (_, t) in env.iter() {
            prop_assert_eq!(expand_type(t, n), expand_ref(t, n));
        }
        let expanded = expand_env_ref(&env, i, n);
        prop_assert_eq!(flat(&expand_env(&env, i, n)), expanded.clone());

        let whole = branches_ref(&expanded);
        let library: BTreeSet<Flat> = branches(&env_of(&expanded)).iter().map(flat).collect();
        prop_assert_eq!(&library, &whole);

        let mut per_branch = BTreeSet::new();
        for b in branches_ref(&flat(&env)) {
            per_branch.extend(branches_ref(&expand_env_ref(&env_of(&b), i, n)));
        }
        prop_assert_eq!(&per_branch, &whole);

        let via_library: BTreeSet<Flat> = branches(&env)
            .iter()
            .flat_map(|b| branches(&expand_env(b, i, n)))
            .map(|e| flat(&e))
            .collect();
        prop_assert_eq!(&via_library, &whole);
    }
}
