use clickbb::clickstream::{ClickType, WeekSequence};
use clickbb::miner::{
    action_score, build_representation, exhaustive_top_symbols, hamming, mine_top_symbols, population_std,
    prefix_interval, spread_upper_bound, Action, BoundStrategy, PrefixInterval,
};
use proptest::prelude::*;

/// Every length-`n` word over `0..alphabet` with the given prefix.
fn completions(prefix: &[u8], alphabet: u8, n: usize) -> Vec<Vec<u8>> {
    let mut out = vec![prefix.to_vec()];
    for _ in prefix.len()..n {
        out = out
            .into_iter()
            .flat_map(|w| {
                (0..alphabet).map(move |c| {
                    let mut w = w.clone();
                    w.push(c);
                    w
                })
            })
            .collect();
    }
    out
}

fn instance(
    max_alphabet: u8,
    max_n: usize,
    max_seqs: usize,
    max_len: usize,
) -> impl Strategy<Value = (u8, usize, Vec<Vec<u8>>)> {
    (2..=max_alphabet, 1..=max_n).prop_flat_map(move |(c, n)| {
        let seq = prop::collection::vec(0..c, n..=max_len.max(n));
        (Just(c), Just(n), prop::collection::vec(seq, 1..=max_seqs))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn branch_and_bound_equals_exhaustive(
        (c, n, seqs) in instance(4, 3, 40, 30),
        m_pick in 1usize..=10,
    ) {
        let total = (c as usize).pow(n as u32);
        let m = m_pick.min(total);
        let bb = mine_top_symbols(&seqs, c as usize, n, m, BoundStrategy::Admissible).unwrap();
        let ex = exhaustive_top_symbols(&seqs, c as usize, n, m, 1 << 20).unwrap();
        prop_assert_eq!(&bb.actions, &ex.actions);
        prop_assert!(bb.stats.leaf_evaluations <= ex.stats.leaf_evaluations);
    }

    #[test]
    fn admissible_bound_covers_every_leaf((c, n, seqs) in instance(4, 3, 10, 12)) {
        for k in 0..=n {
            for prefix in completions(&[], c, k) {
                let intervals: Vec<PrefixInterval> = seqs
                    .iter()
                    .map(|s| prefix_interval(&prefix, s, n).unwrap())
                    .collect();
                let bound = spread_upper_bound(&intervals, BoundStrategy::Admissible);
                for leaf in completions(&prefix, c, n) {
                    let scores: Vec<f64> = seqs
                        .iter()
                        .map(|s| action_score(&leaf, s).unwrap().normalized)
                        .collect();
                    for (iv, s) in intervals.iter().zip(&scores) {
                        prop_assert!(iv.lower - 1e-12 <= *s && *s <= iv.upper + 1e-12);
                    }
                    prop_assert!(bound + 1e-12 >= population_std(&scores), "prefix {:?} leaf {:?}", prefix, leaf);
                }
            }
        }
    }

    #[test]
    fn hamming_is_a_metric(
        a in prop::collection::vec(0u8..7, 4),
        b in prop::collection::vec(0u8..7, 4),
        c in prop::collection::vec(0u8..7, 4),
    ) {
        prop_assert_eq!(hamming(&a, &a), 0);
        prop_assert_eq!(hamming(&a, &b), hamming(&b, &a));
        prop_assert!(hamming(&a, &c) <= hamming(&a, &b) + hamming(&b, &c));
        prop_assert_eq!(hamming(&a, &b) == 0, a == b);
    }

    #[test]
    fn scores_are_normalized(action in prop::collection::vec(0u8..7, 1..5), seq in prop::collection::vec(0u8..7, 5..60)) {
        let s = action_score(&action, &seq).unwrap();
        prop_assert!((0.0..=1.0).contains(&s.normalized));
        let self_score = action_score(&seq[..action.len()], &seq[..action.len()]).unwrap();
        prop_assert_eq!(self_score.normalized, 1.0);
    }

    #[test]
    fn representation_matches_direct_scores(
        clicks in prop::collection::vec(0u8..7, 4..80),
        actions in prop::collection::vec(prop::collection::vec(0u8..7, 4), 1..10),
    ) {
        let to_types = |v: &[u8]| v.iter().map(|&c| ClickType::from_code(c).unwrap()).collect::<Vec<_>>();
        let week = WeekSequence {
            user_id: "u".into(),
            week_index: 1,
            clicks: to_types(&clicks),
            dropout_label: false,
        };
        let actions: Vec<Action> = actions.iter().map(|a| Action(to_types(a))).collect();
        let rep = build_representation(&week, &actions).unwrap();
        for (a, &x) in actions.iter().zip(&rep.scores) {
            prop_assert_eq!(x, action_score(&a.0, &week.clicks).unwrap().normalized);
        }
    }

    #[test]
    fn result_is_sorted_and_unique((c, n, seqs) in instance(4, 3, 20, 20)) {
        let m = (c as usize).pow(n as u32).min(6);
        let out = mine_top_symbols(&seqs, c as usize, n, m, BoundStrategy::Admissible).unwrap();
        prop_assert_eq!(out.actions.len(), m);
        for w in out.actions.windows(2) {
            prop_assert!(w[0].1 > w[1].1 || (w[0].1 == w[1].1 && w[0].0 < w[1].0));
        }
    }
}

#[test]
fn optimistic_bound_underestimates_spread() {
    // normalized [0, 2/2] intervals on two sequences of the same length
    let intervals = [
        PrefixInterval { lower: 0.0, upper: 1.0 },
        PrefixInterval { lower: 0.0, upper: 1.0 },
    ];
    assert_eq!(spread_upper_bound(&intervals, BoundStrategy::Optimistic), 0.0);
    assert_eq!(spread_upper_bound(&intervals, BoundStrategy::Admissible), 0.5);
    // a leaf reaching opposite ends realizes the admissible value
    assert_eq!(population_std(&[0.0, 1.0]), 0.5);
}

#[test]
fn optimistic_bound_can_change_the_result() {
    let mut found = false;
    for seed in 0..500u64 {
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = |k: u64| {
            state = state
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            ((state >> 33) % k) as u8
        };
        let seqs: Vec<Vec<u8>> = (0..6).map(|_| (0..8).map(|_| next(3)).collect()).collect();
        let optimistic = mine_top_symbols(&seqs, 3, 3, 3, BoundStrategy::Optimistic).unwrap();
        let exact = exhaustive_top_symbols(&seqs, 3, 3, 3, 1 << 20).unwrap();
        if optimistic.actions != exact.actions {
            found = true;
            break;
        }
    }
    assert!(found, "no instance where the optimistic bound changes the top list");
}
