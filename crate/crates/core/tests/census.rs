mod common;

use corners_core::groups::{census, census_oracle, census_with, max_popular_difference, FiniteAbelianGroup, PlaneSet};
use corners_core::rng::{substream, Purpose};
use corners_core::Execution;
use proptest::prelude::*;

fn group_strategy() -> impl Strategy<Value = FiniteAbelianGroup> {
    prop_oneof![
        (4u64..=32).prop_map(|n| FiniteAbelianGroup::cyclic(n).unwrap()),
        (2u32..=5).prop_map(|k| FiniteAbelianGroup::vector(2, k).unwrap()),
        (2u32..=2).prop_map(|k| FiniteAbelianGroup::vector(3, k).unwrap()),
    ]
}

fn set_strategy() -> impl Strategy<Value = PlaneSet> {
    (group_strategy(), 0.05f64..0.95, any::<u64>())
        .prop_map(|(g, density, seed)| common::random_set(&mut substream(seed, Purpose::TestData, 5), g, density))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn census_matches_triple_loop(set in set_strategy()) {
        prop_assert_eq!(census(&set).to_csv(), census_oracle(&set).unwrap().to_csv());
    }

    #[test]
    fn census_is_translation_invariant(set in set_strategy(), a in any::<usize>(), b in any::<usize>()) {
        let n = set.order();
        let moved = set.translate(a % n, b % n);
        prop_assert_eq!(census(&moved).counts, census(&set).counts);
    }

    #[test]
    fn degenerate_difference_counts_the_set(set in set_strategy()) {
        let c = census(&set);
        prop_assert_eq!(c.counts[0], set.len());
        prop_assert!(c.counts.iter().all(|&v| v <= set.len()));
    }
}

#[test]
fn execution_modes_agree() {
    let mut rng = substream(1, Purpose::TestData, 6);
    let set = common::random_set(&mut rng, FiniteAbelianGroup::cyclic(200).unwrap(), 0.6);
    assert_eq!(census_with(&set, Execution::Sequential), census_with(&set, Execution::Parallel));
}

#[test]
fn full_set_has_every_corner() {
    let set = PlaneSet::full(FiniteAbelianGroup::cyclic(9).unwrap()).unwrap();
    let c = census(&set);
    assert!(c.counts.iter().all(|&v| v == 81));
    assert_eq!(max_popular_difference(&c).unwrap(), (1, 81));
}
