use std::collections::BTreeMap;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tarjama_core::ranking::{
    bt_fit, bt_prob, column_ranks, combine_scores, rank_scored, BtOptions, MetricTable,
    PreferenceRecord, Weights,
};
use tarjama_core::QualityScore;

/// Draws `draws` comparisons per unordered pair from known log-strengths.
fn sample_prefs(scores: &[(&str, f64)], draws: u64, seed: u64) -> Vec<PreferenceRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut prefs = Vec::new();
    for (i, (a, sa)) in scores.iter().enumerate() {
        for (b, sb) in &scores[i + 1..] {
            let p = bt_prob(*sa, *sb);
            let wins_a = (0..draws).filter(|_| rng.gen::<f64>() < p).count() as u64;
            if wins_a > 0 {
                prefs.push(PreferenceRecord::new(*a, *b, wins_a));
            }
            if draws - wins_a > 0 {
                prefs.push(PreferenceRecord::new(*b, *a, draws - wins_a));
            }
        }
    }
    prefs
}

fn order(scores: &BTreeMap<String, f64>) -> Vec<String> {
    let mut v: Vec<_> = scores.iter().collect();
    v.sort_by(|a, b| b.1.total_cmp(a.1));
    v.into_iter().map(|(k, _)| k.clone()).collect()
}

#[test]
fn monte_carlo_recovers_generating_ranking() {
    let truth = [("w", 1.2), ("x", 0.4), ("y", -0.3), ("z", -1.3)];
    let prefs = sample_prefs(&truth, 1000, 7);
    let fit = bt_fit(&prefs, &BtOptions { epsilon: 0.0, ..Default::default() }).unwrap();
    assert!(fit.converged);
    assert_eq!(order(&fit.scores), vec!["w", "x", "y", "z"]);
    let mean_truth = truth.iter().map(|t| t.1).sum::<f64>() / 4.0;
    for (name, s) in truth {
        assert!((fit.scores[name] - (s - mean_truth)).abs() < 0.2, "{name}: {}", fit.scores[name]);
    }
}

#[test]
fn log_likelihood_never_decreases() {
    let truth = [("a", 2.0), ("b", 0.5), ("c", 0.0), ("d", -0.7), ("e", -1.8)];
    for seed in 0..5 {
        let prefs = sample_prefs(&truth, 40, seed);
        for epsilon in [0.0, 0.5] {
            let Ok(fit) = bt_fit(&prefs, &BtOptions { epsilon, ..Default::default() }) else { continue };
            for w in fit.log_likelihood.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0), "{} -> {}", w[0], w[1]);
            }
        }
    }
}

#[test]
fn fitted_scores_sum_to_zero() {
    let prefs = sample_prefs(&[("a", 0.3), ("b", 0.1), ("c", -2.0)], 50, 3);
    let fit = bt_fit(&prefs, &BtOptions::default()).unwrap();
    assert!(fit.scores.values().sum::<f64>().abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn translation_gauge(shift in -5.0f64..5.0, seed in 0u64..1000) {
        let base = [("a", 0.9), ("b", 0.2), ("c", -0.4), ("d", -0.8)];
        let shifted: Vec<(&str, f64)> = base.iter().map(|(n, s)| (*n, s + shift)).collect();
        let f1 = bt_fit(&sample_prefs(&base, 200, seed), &BtOptions::default()).unwrap();
        let f2 = bt_fit(&sample_prefs(&shifted, 200, seed), &BtOptions::default()).unwrap();
        for (k, v) in &f1.scores {
            prop_assert!((v - f2.scores[k]).abs() < 1e-8);
        }
    }

    #[test]
    fn column_ranks_follow_row_permutation(
        values in prop::collection::vec(0u8..6, 1..12),
        seed in any::<u64>(),
        higher in any::<bool>(),
    ) {
        let rows: Vec<(String, f64)> = values.iter().enumerate().map(|(i, v)| (format!("s{i}"), *v as f64 / 5.0)).collect();
        let mut shuffled = rows.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..shuffled.len()).rev() {
            shuffled.swap(i, rng.gen_range(0..=i));
        }
        let t1 = MetricTable::from_pairs(rows.iter().map(|(s, v)| (s.clone(), vec![("m", *v)]))).unwrap();
        let t2 = MetricTable::from_pairs(shuffled.iter().map(|(s, v)| (s.clone(), vec![("m", *v)]))).unwrap();
        let r1 = column_ranks(&t1, "m", higher).unwrap();
        prop_assert_eq!(&r1, &column_ranks(&t2, "m", higher).unwrap());
        // Ranks always sum to n(n+1)/2.
        let n = rows.len() as f64;
        prop_assert!((r1.values().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn ranking_ignores_weight_scale(
        cands in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0, prop::option::of(0.0f64..=1.0)), 1..8),
        w in (0.0f64..3.0, 0.0f64..3.0, 0.1f64..3.0),
        factor in 0.1f64..100.0,
    ) {
        let weights = Weights::new(w.0, w.1, w.2).unwrap();
        let scored: Vec<_> = cands.iter().enumerate().map(|(i, (lr, scr, rm))| {
            (format!("t{i}"), QualityScore { lr: *lr, scr: *scr, tokens: 1, turns: 1 }, *rm)
        }).collect();
        let a = rank_scored("c", scored.clone(), &weights, vec![]).unwrap();
        let b = rank_scored("c", scored, &weights.scaled(factor), vec![]).unwrap();
        // Orders may only differ between entries whose combined scores are equal up to rounding.
        for (x, y) in a.entries.iter().zip(&b.entries) {
            if x.translator_id != y.translator_id {
                prop_assert!((x.combined - y.combined).abs() < 1e-12);
            }
        }
        prop_assert_eq!(&a.winner().translator_id, &b.winner().translator_id);
    }

    #[test]
    fn combined_score_in_unit_interval(
        lr in 0.0f64..=1.0, scr in 0.0f64..=1.0, rm in prop::option::of(0.0f64..=1.0),
        w in (0.0f64..3.0, 0.0f64..3.0, 0.0f64..3.0),
    ) {
        prop_assume!(w.0 + w.1 + w.2 > 0.0);
        let c = combine_scores(lr, scr, rm, &Weights::new(w.0, w.1, w.2).unwrap());
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&c));
    }
}
