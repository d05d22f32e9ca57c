mod common;

use common::replay::{paths, run_twice};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn replay_is_deterministic_and_snapshots_save_the_prefix((seed, prefix, suffix) in paths()) {
        let a = run_twice(seed, &prefix, &suffix, false);
        let b = run_twice(seed, &prefix, &suffix, false);
        prop_assert_eq!(&a.first, &b.first);
        prop_assert_eq!(&a.second, &b.second);

        let s = run_twice(seed, &prefix, &suffix, true);
        prop_assert_eq!(&s.first.records, &a.first.records);
        prop_assert_eq!(&s.second.records, &a.second.records);
        prop_assert_eq!(a.second.replayed_prefix_len, prefix.len());
        prop_assert_eq!(a.second_steps - s.second_steps, a.second.replayed_prefix_len as u64);
    }
}
