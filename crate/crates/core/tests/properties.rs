mod common;

use std::collections::BTreeSet;

use ::efold::efold::mean;
use ::efold::models::cosine;
use ::efold::simulator::mean_std;
use ::efold::*;
use proptest::prelude::*;

fn dataset_from_pairs(pairs: &[(u32, u32)]) -> Dataset {
    Dataset::from_interactions(
        pairs
            .iter()
            .map(|(u, i)| Interaction::new(format!("u{u}"), format!("i{i}"), 1.0))
            .collect(),
        false,
    )
    .unwrap()
}

fn pairs_of(ds: &Dataset) -> Vec<(u32, u32)> {
    ds.interactions()
        .iter()
        .map(|i| {
            (
                i.user_id[1..].parse().unwrap(),
                i.item_id[1..].parse().unwrap(),
            )
        })
        .collect()
}

fn pairs_strategy() -> impl Strategy<Value = Vec<(u32, u32)>> {
    prop::collection::vec((0u32..8, 0u32..8), 1..100)
}

proptest! {
    #[test]
    fn kcore_matches_brute_force(pairs in pairs_strategy(), core in 1usize..5) {
        let ds = dataset_from_pairs(&pairs);
        let expected = common::brute_kcore(&pairs, core);
        match prune_kcore(&ds, core) {
            Ok(p) => prop_assert_eq!(pairs_of(&p), expected),
            Err(_) => prop_assert!(expected.is_empty()),
        }
    }

    #[test]
    fn kcore_is_idempotent(pairs in pairs_strategy(), core in 1usize..4) {
        if let Ok(once) = prune_kcore(&dataset_from_pairs(&pairs), core) {
            prop_assert_eq!(prune_kcore(&once, core).unwrap(), once);
        }
    }

    #[test]
    fn implicit_is_idempotent(pairs in pairs_strategy()) {
        let once = to_implicit(&dataset_from_pairs(&pairs));
        let distinct: BTreeSet<_> = pairs.iter().collect();
        prop_assert_eq!(once.len(), distinct.len());
        prop_assert_eq!(to_implicit(&once), once);
    }

    #[test]
    fn density_matches_recomputation(pairs in pairs_strategy()) {
        let ds = dataset_from_pairs(&pairs);
        let s = compute_stats(&ds).unwrap();
        let users: BTreeSet<_> = pairs.iter().map(|p| p.0).collect();
        let items: BTreeSet<_> = pairs.iter().map(|p| p.1).collect();
        let direct = pairs.len() as f64 / (users.len() * items.len()) as f64 * 100.0;
        prop_assert!((s.density_percent - direct).abs() <= 1e-9 * direct);
        prop_assert!(s.density_percent > 0.0 && s.density_percent <= 100.0 || pairs.len() > users.len() * items.len());
    }

    #[test]
    fn plans_partition_and_stratify(pairs in pairs_strategy(), k in 2usize..8, seed: u64) {
        let ds = dataset_from_pairs(&pairs);
        let plan = make_partition_plan(&ds, k, seed).unwrap();
        prop_assert_eq!(plan.partition_sizes().iter().sum::<usize>(), ds.len());
        for (user, positions) in ds.interactions_by_user().iter().enumerate() {
            let mut counts = vec![0usize; k];
            for &p in positions {
                counts[plan.assignment[p]] += 1;
            }
            let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
            if positions.len() >= k {
                prop_assert!(hi - lo <= 1, "user {} counts {:?}", user, counts);
            } else {
                prop_assert!(hi <= 1, "user {} counts {:?}", user, counts);
            }
        }
        prop_assert_eq!(make_partition_plan(&ds, k, seed).unwrap(), plan);
    }

    #[test]
    fn ndcg_bounds_and_perfection(ranked in Just((0usize..30).collect::<Vec<_>>()).prop_shuffle(),
                                  rel in prop::collection::btree_set(0usize..30, 1..12)) {
        let relevant: Vec<usize> = rel.iter().copied().collect();
        let v = ndcg_at_n(&ranked, &relevant, 10).unwrap();
        prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        let top_all_relevant = ranked.iter().take(relevant.len().min(10)).all(|i| rel.contains(i));
        prop_assert_eq!(top_all_relevant, (v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ndcg_moving_relevant_up_never_hurts(ranked in Just((0usize..25).collect::<Vec<_>>()).prop_shuffle(),
                                           rel in prop::collection::btree_set(0usize..25, 1..8),
                                           from in 1usize..25) {
        let relevant: Vec<usize> = rel.iter().copied().collect();
        if !rel.contains(&ranked[from]) { return Ok(()); }
        let before = ndcg_at_n(&ranked, &relevant, 10).unwrap();
        let mut moved = ranked.clone();
        moved.swap(from, from - 1);
        let after = ndcg_at_n(&moved, &relevant, 10).unwrap();
        prop_assert!(after >= before - 1e-15);
    }

    #[test]
    fn cosine_is_symmetric(a in prop::collection::btree_set(0usize..50, 0..50),
                           b in prop::collection::btree_set(0usize..50, 0..50)) {
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().collect();
        let (ab, ba) = (cosine(&a, &b), cosine(&b, &a));
        prop_assert!((ab - ba).abs() <= 1e-12);
        prop_assert!((0.0..=1.0).contains(&ab));
    }

    #[test]
    fn itemknn_full_neighborhood_equals_dense_scoring(
        rows in prop::collection::vec(prop::collection::btree_set(0usize..12, 0..8), 1..15),
        probe in prop::collection::btree_set(0usize..12, 0..6),
    ) {
        let user_items: Vec<Vec<usize>> = rows.iter().map(|s| s.iter().copied().collect()).collect();
        if user_items.iter().all(Vec::is_empty) { return Ok(()); }
        let m = TrainMatrix::from_user_items(user_items.clone(), 12);
        let knn = itemknn_train(&m, 12).unwrap();
        // Dense similarity matrix straight from the definition.
        let users_of = |i: usize| -> BTreeSet<usize> {
            (0..user_items.len()).filter(|&u| user_items[u].contains(&i)).collect()
        };
        let probe: Vec<usize> = probe.into_iter().collect();
        let scores = knn.scores(&probe);
        for (i, score) in scores.iter().enumerate() {
            let ui = users_of(i);
            let mut dense = 0.0;
            for &j in &probe {
                if j == i { continue; }
                let uj = users_of(j);
                if ui.is_empty() || uj.is_empty() { continue; }
                dense += ui.intersection(&uj).count() as f64 / ((ui.len() * uj.len()) as f64).sqrt();
            }
            prop_assert!((score - dense).abs() <= 1e-12, "item {}: {} vs {}", i, score, dense);
        }
    }

    #[test]
    fn pop_ranking_is_shared_across_users(rows in prop::collection::vec(prop::collection::btree_set(0usize..10, 1..6), 1..10),
                                          a in prop::collection::btree_set(0usize..10, 0..5)) {
        let user_items: Vec<Vec<usize>> = rows.iter().map(|s| s.iter().copied().collect()).collect();
        let pop = pop_train(&TrainMatrix::from_user_items(user_items, 10)).unwrap();
        let full = pop.top_n(0, &[], 10).unwrap();
        let a: Vec<usize> = a.into_iter().collect();
        let expected: Vec<usize> = full.iter().copied().filter(|i| !a.contains(i)).collect();
        prop_assert_eq!(pop.top_n(3, &a, 10).unwrap(), expected);
    }

    #[test]
    fn final_mean_is_mean_of_executed(scores in prop::collection::vec(0.0f64..1.0, 10),
                                      alpha in 1e-6f64..1.0) {
        let cfg = EfoldConfig::new(10).with_alpha(alpha);
        let order: Vec<usize> = (0..10).collect();
        let r = run_efold(|f| Ok(scores[f]), &order, &cfg).unwrap();
        let direct = scores[..r.stop_fold].iter().sum::<f64>() / r.stop_fold as f64;
        prop_assert!((r.final_mean - direct).abs() <= 1e-12);
        prop_assert!(r.stop_fold >= cfg.e_min && r.stop_fold <= 10);
        prop_assert_eq!(r.stopped_early, r.stop_fold < 10);
        for p in &r.trace {
            prop_assert!(p.ci_lower <= p.mean && p.mean <= p.ci_upper && p.width >= 0.0);
        }
    }

    #[test]
    fn tiny_alpha_runs_every_fold(mut scores in prop::collection::vec(0.0f64..1.0, 10)) {
        // Strictly increasing scores keep widths positive and varying.
        scores.sort_by(f64::total_cmp);
        for (i, s) in scores.iter_mut().enumerate() { *s = 0.05 * i as f64 + *s * 0.01; }
        let cfg = EfoldConfig::new(10).with_alpha(1e-12);
        let order: Vec<usize> = (0..10).collect();
        prop_assert_eq!(run_efold(|f| Ok(scores[f]), &order, &cfg).unwrap().stop_fold, 10);
    }

    #[test]
    fn percentage_diff_symmetric_and_scale_free(x in 0.0f64..1e3, y in 0.0f64..1e3, c in 1e-3f64..1e3) {
        let d = percentage_diff(x, y).unwrap();
        prop_assert!((d - percentage_diff(y, x).unwrap()).abs() <= 1e-12);
        prop_assert!((d - percentage_diff(c * x, c * y).unwrap()).abs() <= 1e-12 * d.max(1.0));
        prop_assert!((0.0..=200.0).contains(&d));
    }

    #[test]
    fn kcv_mean_is_order_free(scores in prop::collection::vec(0.0f64..1.0, 6), seed: u64) {
        let seq = ScoreSequence::new("d", "a", scores.clone(), 0).unwrap();
        let perms = sample_permutations(6, 10, seed).unwrap();
        let rep = simulate_all(std::slice::from_ref(&seq), &perms, &EfoldConfig::new(6)).unwrap();
        prop_assert!(rep.rows.iter().all(|r| r.kcv_mean == seq.kcv_mean()));
        // Aggregates are recomputable from the raw rows.
        let d: Vec<f64> = rep.rows.iter().map(|r| r.percent_diff).collect();
        let e: Vec<f64> = rep.rows.iter().map(|r| r.stop_fold as f64).collect();
        prop_assert_eq!(mean_std(&d), (rep.cells[0].mean_percent_diff, rep.cells[0].std_percent_diff));
        prop_assert_eq!(mean_std(&e).0, rep.cells[0].mean_stop_fold);
        prop_assert_eq!(rep.cells[0].mean_energy_fraction, rep.cells[0].mean_stop_fold / 6.0);
        let permuted: Vec<f64> = perms.perms[0].iter().map(|&f| scores[f]).collect();
        prop_assert!((mean(&permuted) - seq.kcv_mean()).abs() <= 1e-15);
    }

    #[test]
    fn simulator_matches_live_run(scores in prop::collection::vec(0.0f64..1.0, 8),
                                  alpha in 1e-5f64..0.5, seed: u64) {
        let seq = ScoreSequence::new("d", "a", scores.clone(), 0).unwrap();
        let cfg = EfoldConfig::new(8).with_alpha(alpha);
        let perm = &sample_permutations(8, 1, seed).unwrap().perms[0];
        let live = run_efold(|f| Ok(scores[f]), perm, &cfg).unwrap();
        prop_assert_eq!(simulate_one(&seq, perm, &cfg).unwrap(), live);
    }
}

#[test]
fn distinct_seeds_give_distinct_plans() {
    let mut rng = common::seeded(5);
    let mut distinct = 0;
    for trial in 0..100u64 {
        let pairs = common::random_pairs(&mut rng, 80, 6, 20);
        let ds = dataset_from_pairs(&pairs);
        if ds.len() < 10 {
            distinct += 1;
            continue;
        }
        let a = make_partition_plan(&ds, 5, trial).unwrap();
        let b = make_partition_plan(&ds, 5, trial + 1000).unwrap();
        if a.assignment != b.assignment {
            distinct += 1;
        }
    }
    assert!(distinct > 99, "{distinct}/100 distinct");
}
