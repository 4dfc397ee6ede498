//! Property tests for the kernel invariants: symmetry, ranges, permutation
//! invariance, and agreement between independent computation routes.

use proptest::prelude::*;

use feedmatch_core::constraints::{sample_constraints, validate};
use feedmatch_core::eval::rand_index;
use feedmatch_core::featurize::featurize_pair;
use feedmatch_core::strsim::{
    edit_distance_sub2, jaccard_sim, levenshtein, numeric_jaccard, partial_ratio, ratio,
    token_set_ratio, tokenize,
};

fn title_strategy() -> impl Strategy<Value = String> {
    // Product-title-ish strings: short alphanumeric tokens with separators.
    proptest::collection::vec("[a-z0-9]{1,6}", 0..6).prop_map(|tokens| tokens.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn string_kernels_are_symmetric(a in title_strategy(), b in title_strategy()) {
        prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
        prop_assert_eq!(edit_distance_sub2(&a, &b), edit_distance_sub2(&b, &a));
        prop_assert_eq!(ratio(&a, &b), ratio(&b, &a));
        prop_assert_eq!(
            jaccard_sim(&tokenize(&a), &tokenize(&b)),
            jaccard_sim(&tokenize(&b), &tokenize(&a))
        );
        prop_assert_eq!(numeric_jaccard(&a, &b), numeric_jaccard(&b, &a));
    }

    #[test]
    fn levenshtein_triangle_inequality(
        a in "[abc]{0,8}",
        b in "[abc]{0,8}",
        c in "[abc]{0,8}",
    ) {
        prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
    }

    #[test]
    fn similarities_stay_in_unit_range(a in title_strategy(), b in title_strategy()) {
        for v in [
            ratio(&a, &b),
            partial_ratio(&a, &b),
            token_set_ratio(&a, &b),
            jaccard_sim(&tokenize(&a), &tokenize(&b)),
            numeric_jaccard(&a, &b),
        ] {
            prop_assert!((0.0..=1.0).contains(&v), "{v} out of range");
        }
    }

    #[test]
    fn equal_inputs_score_exactly_one(a in title_strategy()) {
        prop_assert_eq!(ratio(&a, &a), 1.0);
        prop_assert_eq!(partial_ratio(&a, &a), 1.0);
        prop_assert_eq!(token_set_ratio(&a, &a), 1.0);
        prop_assert_eq!(jaccard_sim(&tokenize(&a), &tokenize(&a)), 1.0);
        prop_assert_eq!(numeric_jaccard(&a, &a), 1.0);
    }

    #[test]
    fn partial_ratio_dominates_ratio_on_equal_lengths(a in "[a-z]{0,8}", b in "[a-z]{0,8}") {
        // Windows of the longer string include the whole string whenever the
        // lengths match.
        if a.chars().count() == b.chars().count() {
            prop_assert!(partial_ratio(&a, &b) >= ratio(&a, &b) - 1e-15);
        }
    }

    #[test]
    fn token_set_ratio_ignores_order_and_duplication(
        tokens in proptest::collection::vec("[a-z0-9]{1,5}", 1..5),
        seed in 0u64..1000,
    ) {
        let base = tokens.join(" ");
        // A deterministic shuffle-with-duplicates restatement.
        let mut rearranged = tokens.clone();
        rearranged.rotate_left((seed as usize) % tokens.len());
        rearranged.push(tokens[(seed as usize) % tokens.len()].clone());
        let restated = rearranged.join(" ");
        let direct = token_set_ratio(&base, &base);
        prop_assert_eq!(direct, 1.0);
        prop_assert_eq!(token_set_ratio(&base, &restated), 1.0);
    }

    #[test]
    fn feature_vector_is_symmetric_and_bounded(a in title_strategy(), b in title_strategy()) {
        let v = featurize_pair(&a, &b);
        let w = featurize_pair(&b, &a);
        prop_assert_eq!(v.0, w.0);
        for x in v.as_slice() {
            prop_assert!((0.0..=1.0).contains(x));
        }
    }

    #[test]
    fn constraint_counting_law(
        n_pos in 2usize..60,
        n_neg in 2usize..120,
        ml_pct in 0.0f64..1.0,
        cl_pct in 0.0f64..1.0,
        frac_11 in 0.0f64..1.0,
        seed in 0u64..500,
    ) {
        let mut labels = vec![0u8; n_pos + n_neg];
        let mut placed = 0usize;
        for (i, slot) in labels.iter_mut().enumerate() {
            if placed < n_pos && i % 2 == 0 {
                *slot = 1;
                placed += 1;
            }
        }
        for slot in labels.iter_mut().rev() {
            if placed >= n_pos { break; }
            if *slot == 0 {
                *slot = 1;
                placed += 1;
            }
        }
        assert_eq!(placed, n_pos);
        let ml_want = (ml_pct * n_pos as f64).floor() as usize;
        let cl_want = (cl_pct * n_pos as f64).floor() as usize;
        // Skip requests that exceed the distinct-pair pools.
        let pool = |n: usize| n * n.saturating_sub(1) / 2;
        let ml_11 = (frac_11 * ml_want as f64).floor() as usize;
        prop_assume!(ml_11 <= pool(n_pos));
        prop_assume!(ml_want - ml_11 <= pool(labels.len() - n_pos));

        let cs = sample_constraints(&labels, ml_pct, cl_pct, frac_11, seed).unwrap();
        prop_assert_eq!(cs.must_links().count(), ml_want);
        prop_assert_eq!(cs.cant_links().count(), cl_want);
        prop_assert!(validate(&cs, &labels).unwrap().is_empty());
    }

    #[test]
    fn rand_index_is_relabel_invariant(
        pairs in proptest::collection::vec((0usize..3, 0usize..3), 2..14),
    ) {
        let labels: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        let other: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        let swapped: Vec<usize> = labels.iter().map(|&l| [2usize, 0, 1][l]).collect();
        prop_assert_eq!(
            rand_index(&labels, &other).unwrap(),
            rand_index(&swapped, &other).unwrap()
        );
        prop_assert_eq!(
            rand_index(&labels, &other).unwrap(),
            rand_index(&other, &labels).unwrap()
        );
    }
}
