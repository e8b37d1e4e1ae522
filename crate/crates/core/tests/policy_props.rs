use std::collections::{BTreeMap, BTreeSet};

use proptest::collection::vec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tunekg::policy::{
    candidate_set, epsilon, filter_candidates, replay, score, select_arm, ContextStats,
    PolicyConfig,
};

fn y_and_counts() -> impl Strategy<Value = (Vec<f64>, Vec<u64>)> {
    (2usize..8).prop_flat_map(|k| (vec(0.1f64..1e4, k), vec(0u64..50, k)))
}

proptest! {
    #[test]
    fn more_samples_never_lower_the_score(
        (y, counts) in y_and_counts(),
        beta in 0.0f64..100.0,
        arm in 0usize..8,
        extra in 1u64..20,
    ) {
        let arm = arm % y.len();
        let before = score(&y, &counts, beta);
        let mut more = counts.clone();
        more[arm] += extra;
        let after = score(&y, &more, beta);
        prop_assert!(after[arm] >= before[arm]);
        for a in (0..y.len()).filter(|&a| a != arm) {
            prop_assert_eq!(after[a], before[a]);
        }
    }

    #[test]
    fn zero_beta_ignores_counts((y, counts) in y_and_counts()) {
        prop_assert_eq!(score(&y, &counts, 0.0), y.clone());
        let zeros = vec![0; y.len()];
        prop_assert_eq!(score(&y, &counts, 0.0), score(&y, &zeros, 0.0));
    }

    #[test]
    fn greedy_choice_is_shift_invariant(
        (y, counts) in y_and_counts(),
        beta in 0.0f64..10.0,
        shift in -0.05f64..1e3,
        seed in any::<u64>(),
    ) {
        let shifted: Vec<f64> = y.iter().map(|v| v + shift).collect();
        let banned = BTreeSet::new();
        let s1 = score(&y, &counts, beta);
        let s2 = score(&shifted, &counts, beta);
        // a shift can round distinct scores onto one float; only tie-free cases are comparable
        let mut sorted = s2.clone();
        sorted.sort_by(f64::total_cmp);
        prop_assume!(sorted.windows(2).all(|w| w[0] < w[1]));
        let c1 = candidate_set(&s1, &counts, &banned, 3.min(y.len()), 0);
        let c2 = candidate_set(&s2, &counts, &banned, 3.min(y.len()), 0);
        prop_assert_eq!(&c1, &c2);
        let mut r1 = ChaCha8Rng::seed_from_u64(seed);
        let mut r2 = ChaCha8Rng::seed_from_u64(seed);
        let d1 = select_arm(&c1, &s1, 0.0, &mut r1).unwrap();
        let d2 = select_arm(&c2, &s2, 0.0, &mut r2).unwrap();
        prop_assert_eq!(d1.chosen, d2.chosen);
    }

    #[test]
    fn candidates_respect_filters(
        (y, counts) in y_and_counts(),
        k_top in 1usize..8,
        n_min in 0u64..5,
        banned_mask in any::<u8>(),
    ) {
        let k = y.len();
        let k_top = k_top.min(k);
        let banned: BTreeSet<usize> = (0..k).filter(|a| banned_mask >> a & 1 == 1).collect();
        let s = score(&y, &counts, 0.0);
        let cand = filter_candidates(&s, &counts, &banned, k_top, n_min);
        prop_assert!(cand.len() <= k_top);
        for &a in &cand {
            prop_assert!(!banned.contains(&a));
            prop_assert!(counts[a] >= n_min);
            // nothing outside the top k_top beats a kept arm
            let better = (0..k).filter(|&b| s[b] < s[a] || (s[b] == s[a] && b < a)).count();
            prop_assert!(better < k_top);
        }
        let full = candidate_set(&s, &counts, &banned, k_top, n_min);
        if cand.is_empty() {
            prop_assert_eq!(full, vec![0]);
        } else {
            prop_assert_eq!(full, cand);
        }
    }

    #[test]
    fn epsilon_stays_in_unit_interval(
        total in 0u64..10_000,
        est in 0.0f64..10.0,
        eps0 in 0.0f64..1.0,
        eps_min_frac in 0.0f64..1.0,
    ) {
        let cfg = PolicyConfig { eps0, eps_min: eps0 * eps_min_frac, ..PolicyConfig::default() };
        let e = epsilon(total, est, &cfg);
        prop_assert!((0.0..=1.0).contains(&e));
        prop_assert!(e <= epsilon(total, 0.0, &cfg));
    }

    #[test]
    fn logged_decisions_replay(
        (y, counts) in y_and_counts(),
        eps in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        let s = score(&y, &counts, 0.1);
        let cand = candidate_set(&s, &counts, &BTreeSet::new(), 3.min(y.len()), 0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = select_arm(&cand, &s, eps, &mut rng).unwrap();
        prop_assert_eq!(replay(&d).unwrap(), d.chosen);
        prop_assert!(cand.contains(&d.chosen));
    }

    #[test]
    fn totals_equal_sum_of_counts(
        events in vec((0usize..3, 0usize..4, 0.5f64..100.0), 1..60),
    ) {
        let cfg = PolicyConfig::default();
        let mut stats = ContextStats::new(4);
        for (ctx, arm, y) in &events {
            stats.record(&format!("t{ctx}"), *arm, *y, &cfg).unwrap();
        }
        for (_, st) in stats.contexts() {
            prop_assert_eq!(st.total, st.counts().iter().sum::<u64>());
        }
    }
}

#[test]
fn bans_are_permanent() {
    let cfg = PolicyConfig::default();
    let mut stats = ContextStats::new(3);
    for _ in 0..3 {
        stats.record("t", 0, 1.0, &cfg).unwrap();
        stats.record("t", 2, 10.0, &cfg).unwrap();
    }
    assert!(stats.get("t").banned.contains(&2));
    for _ in 0..20 {
        stats.record("t", 0, 100.0, &cfg).unwrap();
    }
    assert!(stats.get("t").banned.contains(&2));
}

#[test]
fn est_cost_is_last_batch_mean_and_survives_absence() {
    let mut stats = ContextStats::new(2);
    let batch = |pairs: &[(&str, &[f64])]| -> BTreeMap<String, Vec<f64>> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_vec()))
            .collect()
    };
    stats.finish_batch(&batch(&[("a", &[0.2, 0.4]), ("b", &[0.5])]));
    assert!((stats.get("a").est_cost - 0.3).abs() < 1e-15);
    stats.finish_batch(&batch(&[("b", &[0.1])]));
    assert!((stats.get("a").est_cost - 0.3).abs() < 1e-15);
    assert_eq!(stats.get("b").est_cost, 0.1);
    assert_eq!(stats.get("never").est_cost, 0.0);
}
